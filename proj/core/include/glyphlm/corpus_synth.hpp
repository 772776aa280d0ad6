#pragma once

#include <cstdint>
#include <string>

namespace glyphlm {

/// Deterministic synthetic logographic corpus. Characters live in CJK
/// codepoint blocks arranged so that the 64-codepoint block (the glyph
/// renderer's stroke "radical" group) coincides with a character family, and
/// the generated language gives same-family characters correlated
/// continuation statistics: a fixed word lexicon built over family-aligned
/// word classes, a Markov chain over classes, Zipf word frequencies, plus
/// punctuation and occasional ASCII tokens.
struct SyntheticCorpusConfig {
    std::int64_t target_chars = 360000;
    std::uint64_t seed = 7;
    int families = 24;          // one codepoint block each
    int members_per_family = 48;
    int classes = 8;            // families are partitioned evenly over classes
    int words_per_class = 80;
};

std::u32string generate_synthetic_corpus(const SyntheticCorpusConfig& config);

}  // namespace glyphlm
