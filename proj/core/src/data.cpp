#include "glyphlm/data.hpp"

#include <algorithm>
#include <cmath>

#include "glyphlm/rng.hpp"

namespace glyphlm {

std::int64_t CurriculumSchedule::size_at(std::int64_t epoch) const {
    const double e = double(epoch);
    const double raw = a + b * e + c * e * e;
    auto n = std::int64_t(std::floor(raw));
    if (n < 0) n = 0;
    if (cap > 0 && n > cap) n = cap;
    return n;
}

std::int64_t CurriculumSchedule::total_instances(std::int64_t epochs) const {
    std::int64_t total = 0;
    for (std::int64_t e = 0; e < epochs; ++e) total += size_at(e);
    return total;
}

SequenceDataset SequenceDataset::pack(const std::u32string& corpus, const Vocabulary& vocab, int seq_len,
                                      std::int64_t val_count, std::uint64_t seed) {
    if (seq_len < 2) throw DataError("pack_sequences: seq_len must be >= 2");
    if (val_count < 0) throw DataError("pack_sequences: negative val_count");
    const std::int64_t n_seq = std::int64_t(corpus.size()) / seq_len;
    if (n_seq < val_count + 1)
        throw DataError("pack_sequences: corpus of " + std::to_string(corpus.size()) + " chars yields " +
                        std::to_string(n_seq) + " sequences, need more than " + std::to_string(val_count));

    std::vector<std::vector<int>> all;
    all.reserve(std::size_t(n_seq));
    for (std::int64_t s = 0; s < n_seq; ++s) {
        std::vector<int> ids(static_cast<std::size_t>(seq_len));
        for (int j = 0; j < seq_len; ++j) ids[std::size_t(j)] = vocab.id_of(corpus[std::size_t(s * seq_len + j)]);
        all.push_back(std::move(ids));
    }

    std::vector<std::int64_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = std::int64_t(i);
    Rng rng(seed);
    rng.shuffle(order);

    SequenceDataset ds;
    ds.seq_len_ = seq_len;
    ds.seed_ = seed;
    for (std::int64_t i = 0; i < val_count; ++i) ds.val_.push_back(all[std::size_t(order[std::size_t(i)])]);
    for (std::int64_t i = val_count; i < n_seq; ++i) ds.train_.push_back(all[std::size_t(order[std::size_t(i)])]);
    return ds;
}

std::vector<std::int64_t> SequenceDataset::train_char_counts(int vocab_size) const {
    std::vector<std::int64_t> counts(std::size_t(vocab_size), 0);
    for (const auto& seq : train_)
        for (int id : seq) ++counts[std::size_t(id)];
    return counts;
}

const GlyphImage& GlyphCache::get(char32_t cp) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(cp);
    if (it == cache_.end()) it = cache_.emplace(cp, renderer_.render(cp)).first;
    return it->second;
}

SequenceBatch make_batch(const SequenceDataset& dataset, Split split, const std::vector<std::int64_t>& indices,
                         InputMode mode, const Vocabulary& vocab, GlyphCache* cache) {
    SequenceBatch batch;
    batch.n = int(indices.size());
    batch.t = dataset.seq_len();
    batch.input_ids.resize(std::size_t(batch.n) * std::size_t(batch.t));
    batch.target_ids.resize(std::size_t(batch.n) * std::size_t(batch.t));

    const bool vision = mode == InputMode::kVision;
    if (vision) {
        if (!cache) throw DataError("make_batch: vision mode needs a glyph cache");
        batch.resolution = cache->renderer().spec().resolution;
        batch.images.resize(std::size_t(batch.n) * std::size_t(batch.t) * std::size_t(batch.resolution) *
                            std::size_t(batch.resolution));
    }

    for (int i = 0; i < batch.n; ++i) {
        const std::int64_t si = indices[std::size_t(i)];
        const auto& seq = split == Split::kTrain ? dataset.train_sequence(si) : dataset.val_sequence(si);
        for (int j = 0; j < batch.t; ++j) {
            const std::size_t off = std::size_t(i) * std::size_t(batch.t) + std::size_t(j);
            batch.input_ids[off] = seq[std::size_t(j)];
            batch.target_ids[off] = j + 1 < batch.t ? seq[std::size_t(j + 1)] : Vocabulary::kPad;
            if (vision) {
                const GlyphImage& glyph = cache->get(vocab.char_of(seq[std::size_t(j)]));
                std::copy(glyph.pixels.begin(), glyph.pixels.end(),
                          batch.images.begin() + std::ptrdiff_t(off * glyph.pixels.size()));
            }
        }
    }
    return batch;
}

}  // namespace glyphlm
