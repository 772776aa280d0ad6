#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "glyphlm/data.hpp"
#include "glyphlm/model.hpp"

namespace glyphlm {

struct EvalReport {
    std::map<int, double> topk;  // k -> hit fraction
    double ce = 0.0;             // mean cross-entropy over scored positions (nats)
    double ppl = 1.0;            // exp(ce)
    std::int64_t n_positions = 0;
    std::int64_t n_sequences = 0;
    double deff = 1.0;
    double n_eff = 0.0;
    double se_adjusted = 0.0;

    double top1() const {
        auto it = topk.find(1);
        return it == topk.end() ? 0.0 : it->second;
    }
    double top5() const {
        auto it = topk.find(5);
        return it == topk.end() ? 0.0 : it->second;
    }
};

/// Kish design effect for cluster size m and intra-cluster correlation rho.
inline double design_effect(double m, double rho) { return 1.0 + (m - 1.0) * rho; }
inline double effective_n(double n, double deff) { return n / deff; }
inline double adjusted_se(double p, double n_eff) { return std::sqrt(p * (1.0 - p) / n_eff); }

/// Accuracy of always predicting the most frequent training character
/// (lowest id wins count ties) at every scored validation position.
double unigram_baseline(const std::vector<std::int64_t>& train_counts, const SequenceDataset& dataset);

/// Next-character evaluation over explicit sequence indices of one split.
/// Positions t in [1, seq_len) are scored: the logits at t-1 predict the
/// character at t. A top-k hit means the target is among the k highest
/// logits with ties broken by ascending id. PPL = exp(mean CE).
template <typename T>
EvalReport evaluate_on(const Model<T>& model, const SequenceDataset& dataset, Split split,
                       const std::vector<std::int64_t>& indices, InputMode mode, const Vocabulary& vocab,
                       GlyphCache* cache, const std::vector<int>& k_list = {1, 5}, double rho = 0.15,
                       int eval_batch = 64) {
    if (indices.empty()) throw DataError("evaluate: empty sequence set");
    NoGradGuard ng;
    const int v = model.decoder_config().vocab;
    const int t_len = dataset.seq_len();

    std::map<int, std::int64_t> hits;
    for (int k : k_list) hits[k] = 0;
    double ce_total = 0.0;
    std::int64_t scored = 0;

    for (std::size_t start = 0; start < indices.size(); start += std::size_t(eval_batch)) {
        const std::size_t stop = std::min(indices.size(), start + std::size_t(eval_batch));
        std::vector<std::int64_t> chunk(indices.begin() + std::ptrdiff_t(start), indices.begin() + std::ptrdiff_t(stop));
        SequenceBatch batch = make_batch(dataset, split, chunk, mode, vocab, cache);
        auto logits = model.forward(batch, mode);
        const T* data = logits->data();
        for (int i = 0; i < batch.n; ++i) {
            for (int j = 0; j + 1 < t_len; ++j) {
                const int target = batch.target_ids[std::size_t(i) * std::size_t(t_len) + std::size_t(j)];
                if (target == Vocabulary::kPad) continue;
                const T* row = data + (std::size_t(i) * std::size_t(t_len) + std::size_t(j)) * std::size_t(v);
                double mx = double(row[0]);
                for (int c = 1; c < v; ++c) mx = std::max(mx, double(row[c]));
                double denom = 0.0;
                for (int c = 0; c < v; ++c) denom += std::exp(double(row[c]) - mx);
                ce_total += -(double(row[target]) - mx - std::log(denom));
                std::int64_t rank = 0;
                const double tv = double(row[target]);
                for (int c = 0; c < v; ++c) {
                    if (double(row[c]) > tv || (double(row[c]) == tv && c < target)) ++rank;
                }
                for (int k : k_list)
                    if (rank < k) ++hits[k];
                ++scored;
            }
        }
    }

    EvalReport report;
    report.n_sequences = std::int64_t(indices.size());
    report.n_positions = scored;
    report.ce = ce_total / double(scored);
    report.ppl = std::exp(report.ce);
    for (int k : k_list) report.topk[k] = double(hits[k]) / double(scored);
    const double m = double(scored) / double(report.n_sequences);  // scored positions per sequence
    report.deff = design_effect(m, rho);
    report.n_eff = effective_n(double(scored), report.deff);
    report.se_adjusted = adjusted_se(report.top1(), report.n_eff);
    return report;
}

/// Full fixed validation set.
template <typename T>
EvalReport evaluate(const Model<T>& model, const SequenceDataset& dataset, InputMode mode, const Vocabulary& vocab,
                    GlyphCache* cache, const std::vector<int>& k_list = {1, 5}, double rho = 0.15) {
    std::vector<std::int64_t> idx(std::size_t(dataset.val_count()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = std::int64_t(i);
    return evaluate_on(model, dataset, Split::kVal, idx, mode, vocab, cache, k_list, rho);
}

}  // namespace glyphlm
