#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "glyphlm/data.hpp"
#include "glyphlm/encoder.hpp"
#include "glyphlm/ops.hpp"
#include "glyphlm/rng.hpp"

namespace glyphlm {

struct DecoderConfig {
    int layers = 4;
    int d_model = 128;
    int heads = 4;
    int max_seq = 64;
    int vocab = 0;
    bool tie_output = false;

    int head_dim() const { return d_model / heads; }
    int mlp_hidden() const { return 4 * d_model; }

    void validate() const {
        if (layers < 1) throw ConfigError("decoder: layers must be >= 1");
        if (heads < 1 || d_model % heads != 0) throw ConfigError("decoder: d_model must divide by heads");
        if (max_seq < 2) throw ConfigError("decoder: max_seq must be >= 2");
        if (vocab < 2) throw ConfigError("decoder: vocab must include PAD/UNK");
    }
};

struct DecoderParamCount {
    std::int64_t embedding = 0;
    std::int64_t pos_embedding = 0;
    std::int64_t blocks = 0;
    std::int64_t final_norm = 0;
    std::int64_t out_proj = 0;
    std::int64_t shared() const { return pos_embedding + blocks + final_norm + out_proj; }
};

inline DecoderParamCount decoder_param_count(const DecoderConfig& cfg) {
    cfg.validate();
    const std::int64_t d = cfg.d_model, v = cfg.vocab, h = cfg.mlp_hidden();
    DecoderParamCount out;
    out.embedding = v * d;
    out.pos_embedding = std::int64_t(cfg.max_seq) * d;
    const std::int64_t per_block = 2 * (2 * d)                    // two layer norms
                                   + 4 * (d * d + d)              // q, k, v, output projections
                                   + (d * h + h) + (h * d + d);   // mlp
    out.blocks = per_block * cfg.layers;
    out.final_norm = 2 * d;
    out.out_proj = cfg.tie_output ? 0 : v * d + v;
    return out;
}

struct TokenDistribution {
    std::vector<double> probs;                 // over the full vocabulary
    std::vector<std::pair<int, double>> top;   // k best (id, prob), ties by ascending id
};

/// Both input paths plus the shared causal decoder. The decoder tensors are
/// the same objects regardless of the active input mode; switching modes
/// swaps only the producer of the input embeddings. Parameter creation order
/// is fixed so one seed pins the full initialization (and two models built
/// with the same seed share identical decoder init across modes).
template <typename T>
class Model {
  public:
    Model(const DecoderConfig& dc, const EncoderConfig& ec, std::uint64_t seed, bool no_adapter = false)
        : dc_(dc), ec_(ec), seed_(seed), no_adapter_(no_adapter), rng_(seed), encoder_(make_encoder()) {}

    const DecoderConfig& decoder_config() const { return dc_; }
    const EncoderConfig& encoder_config() const { return ec_; }
    std::uint64_t seed() const { return seed_; }
    bool no_adapter() const { return no_adapter_; }

    /// All parameters (both input paths + shared decoder), creation order.
    std::vector<Param<T>> parameters() const {
        std::vector<Param<T>> all = decoder_params_;
        const auto& enc = encoder_.params();
        all.insert(all.end(), enc.begin(), enc.end());
        return all;
    }

    /// Parameters updated when training in `mode`: the active input path and,
    /// unless frozen, the shared decoder. The ablated adapter never trains.
    std::vector<Param<T>> trainable(InputMode mode, bool freeze_decoder) const {
        std::vector<Param<T>> out;
        for (const auto& p : decoder_params_) {
            if (p.name == "embedding") {
                // input producer in index mode; with tied output it doubles as
                // the output projection and follows the decoder freeze
                const bool as_input = mode == InputMode::kIndex;
                const bool as_output = dc_.tie_output && !freeze_decoder;
                if (as_input || as_output) out.push_back(p);
                continue;
            }
            if (!freeze_decoder) out.push_back(p);
        }
        if (mode == InputMode::kVision) {
            for (const auto& p : encoder_.params()) {
                if (no_adapter_ && p.name.rfind("adapter.", 0) == 0) continue;
                out.push_back(p);
            }
        }
        return out;
    }

    TensorPtr<T> get(const std::string& name) const {
        for (const auto& p : decoder_params_)
            if (p.name == name) return p.tensor;
        return encoder_.get(name);
    }

    const VisionEncoder<T>& encoder() const { return encoder_; }

    /// Batch images -> leaf tensor [N*T, 1, R, R].
    TensorPtr<T> images_tensor(const SequenceBatch& batch, bool requires_grad = false) const {
        if (batch.images.empty()) throw DataError("model: batch has no images");
        const int r = batch.resolution;
        auto t = make_tensor<T>({batch.n * batch.t, 1, r, r});
        for (std::size_t i = 0; i < batch.images.size(); ++i) t->value[i] = T(batch.images[i]);
        t->requires_grad = requires_grad;
        return t;
    }

    /// Embeddings for a prebuilt image tensor: [B,1,R,R] -> [B, d_model].
    TensorPtr<T> encode_images(const TensorPtr<T>& images) const { return encoder_.encode(images, !no_adapter_); }

    /// Next-token logits [N, T, V].
    TensorPtr<T> forward(const SequenceBatch& batch, InputMode mode, const TensorPtr<T>& images_leaf = nullptr) const {
        const int n = batch.n, t = batch.t;
        if (t > dc_.max_seq)
            throw ShapeError("forward: sequence length " + std::to_string(t) + " exceeds max_seq " +
                             std::to_string(dc_.max_seq));

        TensorPtr<T> x;
        if (mode == InputMode::kIndex) {
            x = embedding_lookup(get("embedding"), batch.input_ids, {n, t});
        } else {
            TensorPtr<T> imgs = images_leaf ? images_leaf : images_tensor(batch);
            x = reshape(encode_images(imgs), {n, t, dc_.d_model});
        }

        std::vector<int> pos_ids(static_cast<std::size_t>(t));
        for (int i = 0; i < t; ++i) pos_ids[std::size_t(i)] = i;
        x = add(x, embedding_lookup(get("pos_embedding"), pos_ids, {1, t}));

        const TensorPtr<T> mask = causal_mask(t);
        const T scale_factor = T(1) / std::sqrt(T(dc_.head_dim()));
        for (int l = 0; l < dc_.layers; ++l) {
            const std::string b = "block" + std::to_string(l) + ".";
            auto h = layer_norm(x, get(b + "ln1.gain"), get(b + "ln1.bias"));
            auto q = split_heads(linear(h, get(b + "attn.wq"), get(b + "attn.bq")), dc_.heads);
            auto k = split_heads(linear(h, get(b + "attn.wk"), get(b + "attn.bk")), dc_.heads);
            auto v = split_heads(linear(h, get(b + "attn.wv"), get(b + "attn.bv")), dc_.heads);
            auto scores = add(scale(matmul(q, k, /*trans_b=*/true), scale_factor), mask);
            auto ctx = merge_heads(matmul(softmax(scores), v));
            x = add(x, linear(ctx, get(b + "attn.wo"), get(b + "attn.bo")));
            auto h2 = layer_norm(x, get(b + "ln2.gain"), get(b + "ln2.bias"));
            auto m = linear(gelu(linear(h2, get(b + "mlp.w_in"), get(b + "mlp.b_in"))), get(b + "mlp.w_out"),
                            get(b + "mlp.b_out"));
            x = add(x, m);
        }
        x = layer_norm(x, get("ln_f.gain"), get("ln_f.bias"));

        if (dc_.tie_output) {
            auto flat = reshape(x, {n * t, dc_.d_model});
            return reshape(matmul(flat, get("embedding"), /*trans_b=*/true), {n, t, dc_.vocab});
        }
        return linear(x, get("out_proj.w"), get("out_proj.b"));
    }

    DecoderParamCount param_count() const { return decoder_param_count(dc_); }

    /// Trainable scalars for one input mode (active input path + shared decoder).
    std::int64_t total_params(InputMode mode) const {
        const auto d = decoder_param_count(dc_);
        if (mode == InputMode::kIndex) return d.embedding + d.shared();
        const auto e = encoder_param_count(ec_);
        return d.shared() + e.encoder + (no_adapter_ ? 0 : e.adapter);
    }

  private:
    VisionEncoder<T> make_encoder() {
        using detail::init_ones;
        using detail::init_weight;
        using detail::init_zeros;
        dc_.validate();
        ec_.output_dim = dc_.d_model;
        const int d = dc_.d_model, v = dc_.vocab, h = dc_.mlp_hidden();
        auto addp = [&](std::string name, TensorPtr<T> t, bool decay) {
            decoder_params_.push_back({std::move(name), std::move(t), decay});
        };
        addp("embedding", init_weight<T>({v, d}, rng_), true);
        addp("pos_embedding", init_weight<T>({dc_.max_seq, d}, rng_), true);
        for (int l = 0; l < dc_.layers; ++l) {
            const std::string b = "block" + std::to_string(l) + ".";
            addp(b + "ln1.gain", init_ones<T>({d}), false);
            addp(b + "ln1.bias", init_zeros<T>({d}), false);
            for (const char* w : {"wq", "wk", "wv", "wo"}) addp(b + "attn." + w, init_weight<T>({d, d}, rng_), true);
            for (const char* bn : {"bq", "bk", "bv", "bo"}) addp(b + "attn." + bn, init_zeros<T>({d}), false);
            addp(b + "ln2.gain", init_ones<T>({d}), false);
            addp(b + "ln2.bias", init_zeros<T>({d}), false);
            addp(b + "mlp.w_in", init_weight<T>({d, h}, rng_), true);
            addp(b + "mlp.b_in", init_zeros<T>({h}), false);
            addp(b + "mlp.w_out", init_weight<T>({h, d}, rng_), true);
            addp(b + "mlp.b_out", init_zeros<T>({d}), false);
        }
        addp("ln_f.gain", init_ones<T>({d}), false);
        addp("ln_f.bias", init_zeros<T>({d}), false);
        if (!dc_.tie_output) {
            addp("out_proj.w", init_weight<T>({d, v}, rng_), true);
            addp("out_proj.b", init_zeros<T>({v}), false);
        }
        return VisionEncoder<T>(ec_, rng_);
    }

    TensorPtr<T> causal_mask(int t) const {
        auto mask = make_tensor<T>({t, t});
        for (int i = 0; i < t; ++i)
            for (int j = i + 1; j < t; ++j) mask->value[std::size_t(i) * std::size_t(t) + std::size_t(j)] = T(-1e30);
        return mask;
    }

    DecoderConfig dc_;
    EncoderConfig ec_;
    std::uint64_t seed_;
    bool no_adapter_;
    Rng rng_;
    std::vector<Param<T>> decoder_params_;
    VisionEncoder<T> encoder_;
};

/// Distribution over the vocabulary from the last position of a context.
/// Unknown context characters map to UNK in index mode; in vision mode every
/// character renders normally through the glyph path.
template <typename T>
TokenDistribution predict_next(const Model<T>& model, const Vocabulary& vocab, GlyphCache* cache,
                               const std::u32string& context, InputMode mode, int k) {
    if (context.empty()) throw EmptyInputError("predict_next: empty context");
    const int t = int(context.size());
    if (t > model.decoder_config().max_seq)
        throw ShapeError("predict_next: context longer than max_seq");

    NoGradGuard ng;
    SequenceBatch batch;
    batch.n = 1;
    batch.t = t;
    batch.input_ids = vocab.encode(context);
    batch.target_ids.assign(std::size_t(t), Vocabulary::kPad);
    if (mode == InputMode::kVision) {
        if (!cache) throw DataError("predict_next: vision mode needs a glyph cache");
        const int r = cache->renderer().spec().resolution;
        batch.resolution = r;
        batch.images.resize(std::size_t(t) * std::size_t(r) * std::size_t(r));
        for (int j = 0; j < t; ++j) {
            const GlyphImage& g = cache->get(context[std::size_t(j)]);
            std::copy(g.pixels.begin(), g.pixels.end(), batch.images.begin() + std::ptrdiff_t(j) * std::ptrdiff_t(r * r));
        }
    }

    auto logits = model.forward(batch, mode);
    const int v = model.decoder_config().vocab;
    const T* last = logits->data() + std::size_t(t - 1) * std::size_t(v);

    // softmax in double for a stable, mode-independent probability readout
    double mx = double(last[0]);
    for (int i = 1; i < v; ++i) mx = std::max(mx, double(last[i]));
    TokenDistribution dist;
    dist.probs.resize(std::size_t(v));
    double denom = 0.0;
    for (int i = 0; i < v; ++i) {
        dist.probs[std::size_t(i)] = std::exp(double(last[i]) - mx);
        denom += dist.probs[std::size_t(i)];
    }
    for (auto& p : dist.probs) p /= denom;

    k = std::min(k, v);
    std::vector<int> idx(static_cast<std::size_t>(v));
    for (int i = 0; i < v; ++i) idx[std::size_t(i)] = i;
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (dist.probs[std::size_t(a)] != dist.probs[std::size_t(b)]) return dist.probs[std::size_t(a)] > dist.probs[std::size_t(b)];
        return a < b;
    });
    for (int i = 0; i < k; ++i) dist.top.emplace_back(idx[std::size_t(i)], dist.probs[std::size_t(idx[std::size_t(i)])]);
    return dist;
}

}  // namespace glyphlm
