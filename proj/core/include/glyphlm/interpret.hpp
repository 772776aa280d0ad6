#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "glyphlm/metrics.hpp"
#include "glyphlm/model.hpp"
#include "glyphlm/rng.hpp"

namespace glyphlm {

// ---------------------------------------------------------------------------
// embedding-space geometry
// ---------------------------------------------------------------------------

/// Unit-normalized copy; a zero vector is an error, never silently normalized.
std::vector<double> unit_normalize(const std::vector<double>& v);

struct PairGeometry {
    double euclidean;  // ||a_hat - b_hat||
    double cosine;     // a_hat . b_hat
};

/// Distance and cosine on unit-normalized vectors; d^2 = 2(1-cos) holds.
PairGeometry pair_geometry(const std::vector<double>& a, const std::vector<double>& b);

struct BootstrapCi {
    double mean, lo95, hi95;
};

/// Percentile bootstrap of the mean over per-pair values.
BootstrapCi group_ci(const std::vector<double>& values, int resamples, std::uint64_t seed);

struct PcaResult {
    std::vector<std::vector<double>> coords;  // n x dims
    std::vector<double> explained;            // eigenvalues, descending
};

/// Mean-centered PCA from the covariance eigendecomposition. Sign convention:
/// the largest-magnitude loading of each component is positive.
PcaResult pca_project(const std::vector<std::vector<double>>& vectors, int dims = 2);

double quantile_type7(std::vector<double> values, double q);
double median_of(std::vector<double> values);
double iqr_of(std::vector<double> values);

/// The character's input representation: its embedding-table row in index
/// mode, the encoder+adapter output for its rendered glyph in vision mode.
template <typename T>
std::vector<double> embedding_view(const Model<T>& model, const Vocabulary& vocab, GlyphCache* cache, char32_t cp,
                                   InputMode mode) {
    const int d = model.decoder_config().d_model;
    std::vector<double> out(static_cast<std::size_t>(d));
    if (mode == InputMode::kIndex) {
        const int id = vocab.id_of(cp);
        const auto table = model.get("embedding");
        for (int i = 0; i < d; ++i) out[std::size_t(i)] = double(table->value[std::size_t(id) * std::size_t(d) + std::size_t(i)]);
        return out;
    }
    if (!cache) throw DataError("embedding_view: vision mode needs a glyph cache");
    NoGradGuard ng;
    const GlyphImage& g = cache->get(cp);
    const int r = g.resolution;
    auto imgs = make_tensor<T>({1, 1, r, r});
    for (std::size_t i = 0; i < g.pixels.size(); ++i) imgs->value[i] = T(g.pixels[i]);
    auto emb = model.encode_images(imgs);
    for (int i = 0; i < d; ++i) out[std::size_t(i)] = double(emb->value[std::size_t(i)]);
    return out;
}

// ---------------------------------------------------------------------------
// weak-context probes
// ---------------------------------------------------------------------------

struct ProbeRecord {
    char32_t candidate_a, candidate_b;
    double p_a, p_b;
    std::int64_t rank_a, rank_b;  // 0-based rank in the full distribution
    int choice;                   // 0 = a, 1 = b, 2 = tie
};

template <typename T>
ProbeRecord probe_pair(const Model<T>& model, const Vocabulary& vocab, GlyphCache* cache,
                       const std::u32string& sentence, char32_t a, char32_t b, InputMode mode) {
    if (!vocab.contains(a) || !vocab.contains(b))
        throw DataError("probe_pair: both candidates must be in the output vocabulary");
    TokenDistribution dist = predict_next(model, vocab, cache, sentence, mode, 1);
    const int ida = vocab.id_of(a), idb = vocab.id_of(b);
    ProbeRecord rec;
    rec.candidate_a = a;
    rec.candidate_b = b;
    rec.p_a = dist.probs[std::size_t(ida)];
    rec.p_b = dist.probs[std::size_t(idb)];
    auto rank_of = [&](int id) {
        const double p = dist.probs[std::size_t(id)];
        std::int64_t rank = 0;
        for (std::size_t i = 0; i < dist.probs.size(); ++i)
            if (dist.probs[i] > p || (dist.probs[i] == p && int(i) < id)) ++rank;
        return rank;
    };
    rec.rank_a = rank_of(ida);
    rec.rank_b = rank_of(idb);
    rec.choice = rec.p_a > rec.p_b ? 0 : rec.p_a < rec.p_b ? 1 : 2;
    return rec;
}

// ---------------------------------------------------------------------------
// gradient saliency
// ---------------------------------------------------------------------------

/// Absolute input-pixel gradients of the target's pre-softmax logit at the
/// last context position, one grid per context character. S_k is the grid
/// sum; H_k is the grid min-max normalized per position. all_zero flags
/// degenerate attributions (H undefined).
struct SaliencyMap {
    int resolution = 0;
    int positions = 0;
    int target_id = 0;
    bool all_zero = false;
    std::vector<std::vector<double>> grids;  // |d y / d I_k|
    std::vector<double> s;                   // S_k
    std::vector<std::vector<double>> h;      // normalized maps (zeros when degenerate)
};

template <typename T>
SaliencyMap saliency(const Model<T>& model, const Vocabulary& vocab, GlyphCache* cache, const std::u32string& context,
                     char32_t target) {
    if (context.empty()) throw EmptyInputError("saliency: empty context");
    if (!vocab.contains(target)) throw DataError("saliency: target character not in vocabulary");
    if (!cache) throw DataError("saliency: needs a glyph cache");

    const int t = int(context.size());
    const int r = cache->renderer().spec().resolution;
    SequenceBatch batch;
    batch.n = 1;
    batch.t = t;
    batch.resolution = r;
    batch.input_ids = vocab.encode(context);
    batch.target_ids.assign(std::size_t(t), Vocabulary::kPad);
    batch.images.resize(std::size_t(t) * std::size_t(r) * std::size_t(r));
    for (int j = 0; j < t; ++j) {
        const GlyphImage& g = cache->get(context[std::size_t(j)]);
        std::copy(g.pixels.begin(), g.pixels.end(), batch.images.begin() + std::ptrdiff_t(j) * std::ptrdiff_t(r * r));
    }

    auto leaf = model.images_tensor(batch, /*requires_grad=*/true);
    auto logits = model.forward(batch, InputMode::kVision, leaf);
    const int v = model.decoder_config().vocab;
    const int target_id = vocab.id_of(target);
    auto y = select_scalar(logits, std::int64_t(t - 1) * v + target_id);
    backward(y);

    SaliencyMap map;
    map.resolution = r;
    map.positions = t;
    map.target_id = target_id;
    map.all_zero = true;
    const std::size_t grid_size = std::size_t(r) * std::size_t(r);
    for (int k = 0; k < t; ++k) {
        std::vector<double> grid(grid_size);
        double total = 0.0;
        for (std::size_t i = 0; i < grid_size; ++i) {
            grid[i] = std::fabs(double(leaf->grad[std::size_t(k) * grid_size + i]));
            total += grid[i];
        }
        if (total > 0.0) map.all_zero = false;
        map.s.push_back(total);
        map.grids.push_back(std::move(grid));
    }
    for (int k = 0; k < t; ++k) {
        const auto& grid = map.grids[std::size_t(k)];
        double lo = grid[0], hi = grid[0];
        for (double g : grid) {
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
        std::vector<double> h(grid_size, 0.0);
        if (hi > lo)
            for (std::size_t i = 0; i < grid_size; ++i) h[i] = (grid[i] - lo) / (hi - lo);
        map.h.push_back(std::move(h));
    }
    return map;
}

/// Mean H over the four half-planes. With odd resolution the middle row and
/// column belong to both opposing halves.
struct RegionStats {
    double upper, lower, left, right;
};

RegionStats region_stats(const std::vector<double>& h, int resolution);

/// Attribution mass fraction inside the centered ceil(0.7 R) square window.
double center_mass_ratio(const std::vector<double>& grid, int resolution);

/// Entropy in nats of the grid normalized to sum 1.
double attribution_entropy(const std::vector<double>& grid, int resolution);

// ---------------------------------------------------------------------------
// masking / gap metric
// ---------------------------------------------------------------------------

struct Probe {
    std::u32string context;
    char32_t target;
};

enum class MaskPolicy { kImportant, kRandom };

struct GapSummary {
    double median = 0.0;
    double iqr = 0.0;
    std::vector<double> gaps;  // per probe
};

/// Per probe: rank pixels of each context image by H, blank the top
/// mask_fraction (round half away from zero; ties by pixel index), re-read
/// the target probability, gap = (p_orig - p_masked) / max(p_orig, 1e-9).
/// kRandom masks the same number of seeded random pixels instead.
template <typename T>
GapSummary gap_metric(const Model<T>& model, const Vocabulary& vocab, GlyphCache* cache,
                      const std::vector<Probe>& probes, double mask_fraction, MaskPolicy policy,
                      std::uint64_t seed = 1234) {
    if (probes.empty()) throw DataError("gap_metric: no probes");
    const int r = cache->renderer().spec().resolution;
    const std::size_t grid_size = std::size_t(r) * std::size_t(r);
    const auto n_mask = std::min<std::int64_t>(std::llround(mask_fraction * double(grid_size)), std::int64_t(grid_size));
    const float background = float(cache->renderer().spec().background);

    Rng rng(seed);
    GapSummary out;
    for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        const Probe& probe = probes[pi];
        const int t = int(probe.context.size());
        const int target_id = vocab.id_of(probe.target);

        SaliencyMap map = saliency(model, vocab, cache, probe.context, probe.target);

        SequenceBatch batch;
        batch.n = 1;
        batch.t = t;
        batch.resolution = r;
        batch.input_ids = vocab.encode(probe.context);
        batch.target_ids.assign(std::size_t(t), Vocabulary::kPad);
        batch.images.resize(std::size_t(t) * grid_size);
        for (int j = 0; j < t; ++j) {
            const GlyphImage& g = cache->get(probe.context[std::size_t(j)]);
            std::copy(g.pixels.begin(), g.pixels.end(), batch.images.begin() + std::ptrdiff_t(j) * std::ptrdiff_t(grid_size));
        }

        auto prob_of_target = [&](const SequenceBatch& b) {
            NoGradGuard ng;
            auto logits = model.forward(b, InputMode::kVision);
            const int v = model.decoder_config().vocab;
            const T* last = logits->data() + std::size_t(t - 1) * std::size_t(v);
            double mx = double(last[0]);
            for (int i = 1; i < v; ++i) mx = std::max(mx, double(last[i]));
            double denom = 0.0;
            for (int i = 0; i < v; ++i) denom += std::exp(double(last[i]) - mx);
            return std::exp(double(last[target_id]) - mx) / denom;
        };
        const double p_orig = prob_of_target(batch);

        Rng probe_rng = rng.fork(pi + 1);
        SequenceBatch masked = batch;
        for (int k = 0; k < t; ++k) {
            std::vector<std::size_t> picked;
            if (policy == MaskPolicy::kImportant) {
                std::vector<std::size_t> idx(grid_size);
                for (std::size_t i = 0; i < grid_size; ++i) idx[i] = i;
                const auto& h = map.h[std::size_t(k)];
                std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return h[x] > h[y]; });
                picked.assign(idx.begin(), idx.begin() + std::ptrdiff_t(n_mask));
            } else {
                std::vector<std::size_t> idx(grid_size);
                for (std::size_t i = 0; i < grid_size; ++i) idx[i] = i;
                for (std::int64_t i = 0; i < n_mask; ++i) {
                    const std::size_t j = i + std::size_t(probe_rng.below(grid_size - std::size_t(i)));
                    std::swap(idx[std::size_t(i)], idx[j]);
                    picked.push_back(idx[std::size_t(i)]);
                }
            }
            for (std::size_t p : picked) masked.images[std::size_t(k) * grid_size + p] = background;
        }
        const double p_masked = n_mask == 0 ? p_orig : prob_of_target(masked);
        out.gaps.push_back((p_orig - p_masked) / std::max(p_orig, 1e-9));
    }
    out.median = median_of(out.gaps);
    out.iqr = iqr_of(out.gaps);
    return out;
}

/// Weak-context probes drawn from validation sequences: a short context
/// ending just before a target character.
std::vector<Probe> make_probes(const SequenceDataset& dataset, const Vocabulary& vocab, int count, int context_len,
                               std::uint64_t seed);

/// A visually confusable counterpart: another vocabulary character from the
/// same 64-codepoint block (the renderer's shared-stroke group), or a seeded
/// random character when the block has no other member.
char32_t confusable_candidate(const Vocabulary& vocab, char32_t target, Rng& rng);

}  // namespace glyphlm
