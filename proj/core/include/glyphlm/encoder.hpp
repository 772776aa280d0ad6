#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyphlm/ops.hpp"
#include "glyphlm/rng.hpp"

namespace glyphlm {

enum class EncoderVariant { kSimp, kOpt, kOrig };

inline const char* to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::kSimp: return "simp";
        case EncoderVariant::kOpt: return "opt";
        default: return "orig";
    }
}

EncoderVariant encoder_variant_from(const std::string& name);

enum class AdapterKind { kSimple, kDeep };

/// Small conv encoders mapping one glyph image to a d_model vector.
///   simp: conv(C) -> pool 4x4 -> linear adapter
///   opt:  conv(2C) -> residual block -> pool 4x4 -> linear adapter
///   orig: bilinear upsample to 64x64 -> three strided stages (16/32/64
///         channels, each with a residual block) -> pool 4x4 -> deep adapter
/// Residual blocks are x + conv(gelu(conv(x))) with no trailing activation,
/// so zero weights make them exact identities.
struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::kSimp;
    int input_resolution = 8;
    int channels = 8;  // base plan for simp/opt; orig uses a fixed 16/32/64 plan
    int output_dim = 128;

    AdapterKind adapter() const {
        return variant == EncoderVariant::kOrig ? AdapterKind::kDeep : AdapterKind::kSimple;
    }
    int deep_adapter_hidden() const { return 256; }

    /// Flattened feature width entering the adapter.
    int feature_dim() const {
        switch (variant) {
            case EncoderVariant::kSimp: return channels * 16;
            case EncoderVariant::kOpt: return 2 * channels * 16;
            default: return 64 * 16;
        }
    }

    void validate() const {
        if (input_resolution < 2) throw ConfigError("encoder: input_resolution must be >= 2");
        if (channels < 1) throw ConfigError("encoder: channels must be >= 1");
        if (output_dim < 1) throw ConfigError("encoder: output_dim must be >= 1");
    }
};

struct ParamCountBreakdown {
    std::int64_t encoder = 0;
    std::int64_t adapter = 0;
    std::int64_t total() const { return encoder + adapter; }
};

/// Exact trainable-scalar count, by construction from the config arithmetic.
ParamCountBreakdown encoder_param_count(const EncoderConfig& cfg);

template <typename T>
struct Param {
    std::string name;
    TensorPtr<T> tensor;
    bool decay = true;  // weight decay applies (false for biases and norm gains)
};

namespace detail {

template <typename T>
TensorPtr<T> init_weight(std::vector<int> shape, Rng& rng, double stddev = 0.02) {
    auto t = make_tensor<T>(std::move(shape));
    for (auto& v : t->value) v = T(rng.truncated_normal(stddev));
    t->requires_grad = true;
    return t;
}

template <typename T>
TensorPtr<T> init_zeros(std::vector<int> shape) {
    auto t = make_tensor<T>(std::move(shape));
    t->requires_grad = true;
    return t;
}

template <typename T>
TensorPtr<T> init_ones(std::vector<int> shape) {
    auto t = make_tensor<T>(std::move(shape));
    for (auto& v : t->value) v = T(1);
    t->requires_grad = true;
    return t;
}

}  // namespace detail

/// When the adapter is ablated, encoder features reach the decoder through
/// this fixed, unlearned reshaping map: truncate when wider than d_model,
/// repeat cyclically when narrower. Linear with constant coefficients, so
/// gradients still flow to the encoder.
template <typename T>
TensorPtr<T> fixed_feature_resize(const TensorPtr<T>& x, int out_dim) {
    const int in_dim = x->dim(x->rank() - 1);
    const std::int64_t rows = x->numel() / in_dim;
    std::vector<int> shape = x->shape;
    shape.back() = out_dim;
    auto out = make_tensor<T>(shape);
    for (std::int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < out_dim; ++i)
            out->value[std::size_t(r) * std::size_t(out_dim) + std::size_t(i)] =
                x->value[std::size_t(r) * std::size_t(in_dim) + std::size_t(i % in_dim)];
    if (NoGradGuard::grad_enabled() && x->needs_grad()) {
        out->parents = {x};
        out->backward_fn = [x, rows, in_dim, out_dim](Tensor<T>& self) {
            x->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < out_dim; ++i)
                    x->grad[std::size_t(r) * std::size_t(in_dim) + std::size_t(i % in_dim)] +=
                        self.grad[std::size_t(r) * std::size_t(out_dim) + std::size_t(i)];
        };
    }
    return out;
}

/// Parameters and forward pass for one encoder variant. Construction order of
/// parameters is fixed, so a seed fully determines the initialization.
template <typename T>
class VisionEncoder {
  public:
    VisionEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        using detail::init_weight;
        using detail::init_zeros;
        // fan-in scaled init: keeps glyph contrast through conv/pool/adapter,
        // so untrained encoders already map distinct glyphs to distinct
        // embeddings (a flat 0.02 here attenuates the image signal below the
        // positional noise floor and visibly stalls early vision training)
        auto conv = [&](const std::string& name, int out_c, int in_c) {
            add(name + ".w", init_weight<T>({out_c, in_c, 3, 3}, rng, std::sqrt(2.0 / (9.0 * in_c))), true);
            add(name + ".b", init_zeros<T>({out_c}), false);
        };
        switch (cfg_.variant) {
            case EncoderVariant::kSimp:
                conv("encoder.conv1", cfg_.channels, 1);
                break;
            case EncoderVariant::kOpt:
                conv("encoder.conv1", 2 * cfg_.channels, 1);
                conv("encoder.res1.conv_a", 2 * cfg_.channels, 2 * cfg_.channels);
                conv("encoder.res1.conv_b", 2 * cfg_.channels, 2 * cfg_.channels);
                break;
            case EncoderVariant::kOrig:
                conv("encoder.stage1.conv", 16, 1);
                conv("encoder.stage1.res.conv_a", 16, 16);
                conv("encoder.stage1.res.conv_b", 16, 16);
                conv("encoder.stage2.conv", 32, 16);
                conv("encoder.stage2.res.conv_a", 32, 32);
                conv("encoder.stage2.res.conv_b", 32, 32);
                conv("encoder.stage3.conv", 64, 32);
                conv("encoder.stage3.res.conv_a", 64, 64);
                conv("encoder.stage3.res.conv_b", 64, 64);
                break;
        }
        const int feat = cfg_.feature_dim();
        if (cfg_.adapter() == AdapterKind::kSimple) {
            add("adapter.w", init_weight<T>({feat, cfg_.output_dim}, rng, std::sqrt(1.0 / feat)), true);
            add("adapter.b", init_zeros<T>({cfg_.output_dim}), false);
        } else {
            const int hidden = cfg_.deep_adapter_hidden();
            add("adapter.w1", init_weight<T>({feat, hidden}, rng, std::sqrt(2.0 / feat)), true);
            add("adapter.b1", init_zeros<T>({hidden}), false);
            add("adapter.w2", init_weight<T>({hidden, cfg_.output_dim}, rng, std::sqrt(1.0 / hidden)), true);
            add("adapter.b2", init_zeros<T>({cfg_.output_dim}), false);
        }
    }

    const EncoderConfig& config() const { return cfg_; }
    const std::vector<Param<T>>& params() const { return params_; }

    /// images [B, 1, R, R] -> features [B, feature_dim]
    TensorPtr<T> features(const TensorPtr<T>& images) const {
        if (images->rank() != 4 || images->dim(1) != 1) throw ShapeError("encoder: expected [B,1,R,R]");
        if (images->dim(2) != cfg_.input_resolution || images->dim(3) != cfg_.input_resolution)
            throw ShapeError("encoder: image resolution " + std::to_string(images->dim(2)) + " does not match configured " +
                             std::to_string(cfg_.input_resolution));
        TensorPtr<T> x = images;
        auto conv = [&](const std::string& name, const TensorPtr<T>& in, int stride) {
            return conv2d(in, get(name + ".w"), get(name + ".b"), stride, 1);
        };
        auto res_block = [&](const std::string& name, const TensorPtr<T>& in) {
            auto f = conv(name + ".conv_b", gelu(conv(name + ".conv_a", in, 1)), 1);
            return glyphlm::add(in, f);
        };
        switch (cfg_.variant) {
            case EncoderVariant::kSimp:
                x = gelu(conv("encoder.conv1", x, 1));
                break;
            case EncoderVariant::kOpt:
                x = gelu(conv("encoder.conv1", x, 1));
                x = res_block("encoder.res1", x);
                break;
            case EncoderVariant::kOrig:
                if (cfg_.input_resolution < 64) x = upsample_bilinear(x, 64, 64);
                x = gelu(conv("encoder.stage1.conv", x, 2));
                x = res_block("encoder.stage1.res", x);
                x = gelu(conv("encoder.stage2.conv", x, 2));
                x = res_block("encoder.stage2.res", x);
                x = gelu(conv("encoder.stage3.conv", x, 2));
                x = res_block("encoder.stage3.res", x);
                break;
        }
        x = adaptive_avg_pool2d(x, 4, 4);
        return reshape(x, {x->dim(0), cfg_.feature_dim()});
    }

    /// images [B, 1, R, R] -> embeddings [B, output_dim]
    TensorPtr<T> encode(const TensorPtr<T>& images, bool use_adapter = true) const {
        TensorPtr<T> f = features(images);
        if (!use_adapter) return fixed_feature_resize(f, cfg_.output_dim);
        if (cfg_.adapter() == AdapterKind::kSimple) return linear(f, get("adapter.w"), get("adapter.b"));
        return linear(gelu(linear(f, get("adapter.w1"), get("adapter.b1"))), get("adapter.w2"), get("adapter.b2"));
    }

    TensorPtr<T> get(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.tensor;
        throw Error("encoder: no parameter named " + name);
    }

  private:
    void add(std::string name, TensorPtr<T> t, bool decay) { params_.push_back({std::move(name), std::move(t), decay}); }

    EncoderConfig cfg_;
    std::vector<Param<T>> params_;
};

inline ParamCountBreakdown encoder_param_count(const EncoderConfig& cfg) {
    cfg.validate();
    auto conv_params = [](int out_c, int in_c) { return std::int64_t(out_c) * in_c * 9 + out_c; };
    ParamCountBreakdown out;
    switch (cfg.variant) {
        case EncoderVariant::kSimp:
            out.encoder = conv_params(cfg.channels, 1);
            break;
        case EncoderVariant::kOpt: {
            const int c = 2 * cfg.channels;
            out.encoder = conv_params(c, 1) + 2 * conv_params(c, c);
            break;
        }
        case EncoderVariant::kOrig:
            out.encoder = conv_params(16, 1) + 2 * conv_params(16, 16) + conv_params(32, 16) + 2 * conv_params(32, 32) +
                          conv_params(64, 32) + 2 * conv_params(64, 64);
            break;
    }
    const std::int64_t feat = cfg.feature_dim();
    if (cfg.adapter() == AdapterKind::kSimple) {
        out.adapter = feat * cfg.output_dim + cfg.output_dim;
    } else {
        const std::int64_t hidden = cfg.deep_adapter_hidden();
        out.adapter = feat * hidden + hidden + hidden * cfg.output_dim + cfg.output_dim;
    }
    return out;
}

inline EncoderVariant encoder_variant_from(const std::string& name) {
    if (name == "simp") return EncoderVariant::kSimp;
    if (name == "opt") return EncoderVariant::kOpt;
    if (name == "orig") return EncoderVariant::kOrig;
    throw ConfigError("unknown encoder variant: " + name);
}

}  // namespace glyphlm
