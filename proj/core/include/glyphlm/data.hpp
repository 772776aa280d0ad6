#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "glyphlm/glyph.hpp"
#include "glyphlm/vocab.hpp"

namespace glyphlm {

enum class InputMode { kIndex, kVision };

inline const char* to_string(InputMode m) { return m == InputMode::kIndex ? "index" : "vision"; }

/// Quadratic growth of the per-epoch training subset, clamped to the dataset.
struct CurriculumSchedule {
    double a = 5000.0;
    double b = 918.37;
    double c = 18.74;
    std::int64_t cap = 0;

    std::int64_t size_at(std::int64_t epoch) const;

    /// Total instances presented over the first `epochs` epochs (counting
    /// repeats, the "samples seen" accounting).
    std::int64_t total_instances(std::int64_t epochs) const;
};

/// Fixed-length id sequences with a seeded, disjoint train/validation split.
/// Train order is the seeded shuffle order, so curriculum prefixes nest.
class SequenceDataset {
  public:
    static SequenceDataset pack(const std::u32string& corpus, const Vocabulary& vocab, int seq_len,
                                std::int64_t val_count, std::uint64_t seed);

    int seq_len() const { return seq_len_; }
    std::int64_t train_count() const { return std::int64_t(train_.size()); }
    std::int64_t val_count() const { return std::int64_t(val_.size()); }
    const std::vector<int>& train_sequence(std::int64_t i) const { return train_[std::size_t(i)]; }
    const std::vector<int>& val_sequence(std::int64_t i) const { return val_[std::size_t(i)]; }

    /// Character occurrence counts (by id) over the train split only.
    std::vector<std::int64_t> train_char_counts(int vocab_size) const;

    std::uint64_t seed() const { return seed_; }

  private:
    int seq_len_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<std::vector<int>> train_;
    std::vector<std::vector<int>> val_;
};

/// A training/eval batch. Targets are the next character at each position;
/// the final position of every sequence is padded (it has no target inside
/// the window). Images are attached only in vision mode, one R*R grid per
/// position, row-major [n, t, R*R].
struct SequenceBatch {
    int n = 0;
    int t = 0;
    int resolution = 0;
    std::vector<int> input_ids;   // n*t
    std::vector<int> target_ids;  // n*t, Vocabulary::kPad where unscored
    std::vector<float> images;    // empty in index mode
};

/// Per-spec glyph memoization used by batch assembly. Cache hits return the
/// same pixels a fresh render would (rendering is pure), so caching cannot
/// change model behavior. Thread-safe.
class GlyphCache {
  public:
    explicit GlyphCache(const GlyphRenderer& renderer) : renderer_(renderer) {}

    const GlyphImage& get(char32_t cp);
    const GlyphRenderer& renderer() const { return renderer_; }

  private:
    const GlyphRenderer& renderer_;
    std::unordered_map<char32_t, GlyphImage> cache_;
    std::mutex mu_;
};

enum class Split { kTrain, kVal };

SequenceBatch make_batch(const SequenceDataset& dataset, Split split, const std::vector<std::int64_t>& indices,
                         InputMode mode, const Vocabulary& vocab, GlyphCache* cache);

}  // namespace glyphlm
