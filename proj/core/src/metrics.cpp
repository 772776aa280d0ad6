#include "glyphlm/metrics.hpp"

namespace glyphlm {

double unigram_baseline(const std::vector<std::int64_t>& train_counts, const SequenceDataset& dataset) {
    if (train_counts.empty()) throw DataError("unigram_baseline: empty counts");
    int best_id = 0;
    std::int64_t best = -1;
    for (std::size_t i = 0; i < train_counts.size(); ++i) {
        if (train_counts[i] > best) {
            best = train_counts[i];
            best_id = int(i);
        }
    }
    std::int64_t hits = 0, scored = 0;
    for (std::int64_t s = 0; s < dataset.val_count(); ++s) {
        const auto& seq = dataset.val_sequence(s);
        for (std::size_t j = 1; j < seq.size(); ++j) {
            ++scored;
            if (seq[j] == best_id) ++hits;
        }
    }
    if (!scored) throw DataError("unigram_baseline: empty validation set");
    return double(hits) / double(scored);
}

}  // namespace glyphlm
