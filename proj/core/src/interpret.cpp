#include "glyphlm/interpret.hpp"

#include <algorithm>

namespace glyphlm {

std::vector<double> unit_normalize(const std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq <= 0.0) throw DataError("cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv;
    return out;
}

PairGeometry pair_geometry(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("pair_geometry: dimension mismatch");
    const auto ah = unit_normalize(a);
    const auto bh = unit_normalize(b);
    double d2 = 0.0, cos = 0.0;
    for (std::size_t i = 0; i < ah.size(); ++i) {
        const double diff = ah[i] - bh[i];
        d2 += diff * diff;
        cos += ah[i] * bh[i];
    }
    return {std::sqrt(d2), cos};
}

double quantile_type7(std::vector<double> values, double q) {
    if (values.empty()) throw DataError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = q * double(values.size() - 1);
    const auto lo = std::size_t(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - double(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double median_of(std::vector<double> values) { return quantile_type7(std::move(values), 0.5); }

double iqr_of(std::vector<double> values) {
    const double q1 = quantile_type7(values, 0.25);
    const double q3 = quantile_type7(std::move(values), 0.75);
    return q3 - q1;
}

BootstrapCi group_ci(const std::vector<double>& values, int resamples, std::uint64_t seed) {
    if (values.size() < 2) throw DataError("group_ci: need at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= double(values.size());

    Rng rng(seed);
    std::vector<double> means(static_cast<std::size_t>(resamples));
    for (int b = 0; b < resamples; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) acc += values[std::size_t(rng.below(values.size()))];
        means[std::size_t(b)] = acc / double(values.size());
    }
    const double lo = quantile_type7(means, 0.025);
    const double hi = quantile_type7(std::move(means), 0.975);
    return {mean, lo, hi};
}

namespace {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major, n x n).
/// Eigenvectors come back as columns of v. Deterministic sweep order.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& vals, std::vector<double>& vecs) {
    vecs.assign(std::size_t(n) * std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) vecs[std::size_t(i) * std::size_t(n) + std::size_t(i)] = 1.0;
    auto at = [&](std::vector<double>& m, int r, int c) -> double& { return m[std::size_t(r) * std::size_t(n) + std::size_t(c)]; };

    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(a, p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(a, k, p), akq = at(a, k, q);
                    at(a, k, p) = c * akp - s * akq;
                    at(a, k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(a, p, k), aqk = at(a, q, k);
                    at(a, p, k) = c * apk - s * aqk;
                    at(a, q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = at(vecs, k, p), vkq = at(vecs, k, q);
                    at(vecs, k, p) = c * vkp - s * vkq;
                    at(vecs, k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    vals.assign(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) vals[std::size_t(i)] = at(a, i, i);
}

}  // namespace

PcaResult pca_project(const std::vector<std::vector<double>>& vectors, int dims) {
    const int n = int(vectors.size());
    if (n < dims + 1) throw DataError("pca_project: need at least dims+1 vectors");
    const int d = int(vectors[0].size());
    for (const auto& v : vectors)
        if (int(v.size()) != d) throw ShapeError("pca_project: inconsistent dimensions");

    std::vector<double> mean(std::size_t(d), 0.0);
    for (const auto& v : vectors)
        for (int i = 0; i < d; ++i) mean[std::size_t(i)] += v[std::size_t(i)];
    for (auto& m : mean) m /= double(n);

    std::vector<std::vector<double>> centered(vectors.size(), std::vector<double>(std::size_t(d)));
    double total_var = 0.0;
    for (std::size_t r = 0; r < vectors.size(); ++r)
        for (int i = 0; i < d; ++i) {
            centered[r][std::size_t(i)] = vectors[r][std::size_t(i)] - mean[std::size_t(i)];
            total_var += centered[r][std::size_t(i)] * centered[r][std::size_t(i)];
        }
    if (total_var <= 0.0) throw DataError("pca_project: zero total variance");

    std::vector<double> cov(std::size_t(d) * std::size_t(d), 0.0);
    for (const auto& row : centered)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) cov[std::size_t(i) * std::size_t(d) + std::size_t(j)] += row[std::size_t(i)] * row[std::size_t(j)];
    for (auto& c : cov) c /= double(n - 1);

    std::vector<double> vals, vecs;
    jacobi_eigen(cov, d, vals, vecs);

    std::vector<int> order(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) order[std::size_t(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return vals[std::size_t(x)] > vals[std::size_t(y)]; });

    PcaResult out;
    out.explained.resize(std::size_t(dims));
    std::vector<std::vector<double>> comps(static_cast<std::size_t>(dims), std::vector<double>(static_cast<std::size_t>(d)));
    for (int c = 0; c < dims; ++c) {
        const int src = order[std::size_t(c)];
        out.explained[std::size_t(c)] = std::max(vals[std::size_t(src)], 0.0);
        for (int i = 0; i < d; ++i) comps[std::size_t(c)][std::size_t(i)] = vecs[std::size_t(i) * std::size_t(d) + std::size_t(src)];
        // sign convention: largest-magnitude loading positive (first on ties)
        int arg = 0;
        for (int i = 1; i < d; ++i)
            if (std::fabs(comps[std::size_t(c)][std::size_t(i)]) > std::fabs(comps[std::size_t(c)][std::size_t(arg)])) arg = i;
        if (comps[std::size_t(c)][std::size_t(arg)] < 0.0)
            for (auto& x : comps[std::size_t(c)]) x = -x;
    }

    out.coords.assign(vectors.size(), std::vector<double>(std::size_t(dims), 0.0));
    for (std::size_t r = 0; r < centered.size(); ++r)
        for (int c = 0; c < dims; ++c) {
            double acc = 0.0;
            for (int i = 0; i < d; ++i) acc += centered[r][std::size_t(i)] * comps[std::size_t(c)][std::size_t(i)];
            out.coords[r][std::size_t(c)] = acc;
        }
    return out;
}

RegionStats region_stats(const std::vector<double>& h, int resolution) {
    const int r = resolution;
    if (int(h.size()) != r * r) throw ShapeError("region_stats: grid size mismatch");
    const int half_lo = r / 2;             // first row/col of the lower/right half
    const int half_hi = (r + 1) / 2;       // one past the upper/left half
    auto mean_rows = [&](int r0, int r1) {
        double acc = 0.0;
        int count = 0;
        for (int y = r0; y < r1; ++y)
            for (int x = 0; x < r; ++x) {
                acc += h[std::size_t(y) * std::size_t(r) + std::size_t(x)];
                ++count;
            }
        return acc / double(count);
    };
    auto mean_cols = [&](int c0, int c1) {
        double acc = 0.0;
        int count = 0;
        for (int y = 0; y < r; ++y)
            for (int x = c0; x < c1; ++x) {
                acc += h[std::size_t(y) * std::size_t(r) + std::size_t(x)];
                ++count;
            }
        return acc / double(count);
    };
    return {mean_rows(0, half_hi), mean_rows(half_lo, r), mean_cols(0, half_hi), mean_cols(half_lo, r)};
}

double center_mass_ratio(const std::vector<double>& grid, int resolution) {
    const int r = resolution;
    if (int(grid.size()) != r * r) throw ShapeError("center_mass_ratio: grid size mismatch");
    double total = 0.0;
    for (double g : grid) total += g;
    if (total <= 0.0) throw DataError("center_mass_ratio: zero-mass map");
    const int w = int(std::ceil(0.7 * r));
    const int start = (r - w) / 2;
    double inside = 0.0;
    for (int y = start; y < start + w; ++y)
        for (int x = start; x < start + w; ++x) inside += grid[std::size_t(y) * std::size_t(r) + std::size_t(x)];
    return inside / total;
}

double attribution_entropy(const std::vector<double>& grid, int resolution) {
    const int r = resolution;
    if (int(grid.size()) != r * r) throw ShapeError("attribution_entropy: grid size mismatch");
    double total = 0.0;
    for (double g : grid) total += g;
    if (total <= 0.0) throw DataError("attribution_entropy: zero-mass map");
    double ent = 0.0;
    for (double g : grid) {
        if (g <= 0.0) continue;
        const double p = g / total;
        ent -= p * std::log(p);
    }
    return ent;
}

std::vector<Probe> make_probes(const SequenceDataset& dataset, const Vocabulary& vocab, int count, int context_len,
                               std::uint64_t seed) {
    if (dataset.val_count() == 0) throw DataError("make_probes: empty validation split");
    if (context_len + 1 > dataset.seq_len()) throw DataError("make_probes: context_len too long for sequences");
    Rng rng(seed);
    std::vector<Probe> probes;
    int guard = 0;
    while (int(probes.size()) < count && guard < count * 50) {
        ++guard;
        const auto s = std::int64_t(rng.below(std::uint64_t(dataset.val_count())));
        const auto& seq = dataset.val_sequence(s);
        const auto start = std::size_t(rng.below(std::uint64_t(dataset.seq_len() - context_len - 1)));
        Probe p;
        bool ok = true;
        for (int j = 0; j < context_len; ++j) {
            const int id = seq[start + std::size_t(j)];
            if (id < Vocabulary::kReserved) {
                ok = false;
                break;
            }
            p.context.push_back(vocab.char_of(id));
        }
        const int target_id = seq[start + std::size_t(context_len)];
        if (!ok || target_id < Vocabulary::kReserved) continue;
        p.target = vocab.char_of(target_id);
        probes.push_back(std::move(p));
    }
    if (int(probes.size()) < count) throw DataError("make_probes: could not assemble enough probes");
    return probes;
}

char32_t confusable_candidate(const Vocabulary& vocab, char32_t target, Rng& rng) {
    const char32_t base = target & ~char32_t(63);
    std::vector<char32_t> same_block;
    for (char32_t cp = base; cp < base + 64; ++cp)
        if (cp != target && vocab.contains(cp)) same_block.push_back(cp);
    if (!same_block.empty()) return same_block[std::size_t(rng.below(same_block.size()))];
    // fall back to any other vocabulary character
    for (int tries = 0; tries < 64; ++tries) {
        const int id = int(Vocabulary::kReserved + rng.below(std::uint64_t(vocab.size() - Vocabulary::kReserved)));
        const char32_t cp = vocab.char_of(id);
        if (cp != target) return cp;
    }
    throw DataError("confusable_candidate: vocabulary too small");
}

}  // namespace glyphlm
