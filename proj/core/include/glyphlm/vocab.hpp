#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "glyphlm/errors.hpp"

namespace glyphlm {

/// Character vocabulary with reserved PAD=0 and UNK=1. Real characters get
/// ids in order of first appearance in the build corpus, which makes the
/// mapping a pure function of the corpus bytes.
class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kReserved = 2;

    static Vocabulary build(const std::u32string& corpus);

    int size() const { return int(chars_.size()) + kReserved; }

    bool contains(char32_t cp) const { return ids_.count(cp) != 0; }

    /// UNK for unseen characters.
    int id_of(char32_t cp) const {
        auto it = ids_.find(cp);
        return it == ids_.end() ? kUnk : it->second;
    }

    /// U+FFFD for the reserved ids.
    char32_t char_of(int id) const {
        if (id < kReserved) return 0xFFFD;
        if (id >= size()) throw DataError("vocab: id " + std::to_string(id) + " out of range");
        return chars_[std::size_t(id - kReserved)];
    }

    std::vector<int> encode(const std::u32string& text) const;
    std::u32string decode(const std::vector<int>& ids) const;

    /// Occurrence counts per id over the build corpus (index = id).
    const std::vector<std::int64_t>& corpus_counts() const { return counts_; }

    /// One "<char>\t<id>" line per real character; \t, \n, \\ escaped.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

  private:
    std::vector<char32_t> chars_;  // index = id - kReserved
    std::unordered_map<char32_t, int> ids_;
    std::vector<std::int64_t> counts_;
};

}  // namespace glyphlm
