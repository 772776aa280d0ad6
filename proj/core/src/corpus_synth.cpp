#include "glyphlm/corpus_synth.hpp"

#include <cmath>
#include <vector>

#include "glyphlm/errors.hpp"
#include "glyphlm/rng.hpp"

namespace glyphlm {

namespace {

constexpr char32_t kBaseCodepoint = 0x4E00;

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Cumulative Zipf weights for ranks 0..n-1, exponent s.
std::vector<double> zipf_cdf(int n, double s) {
    std::vector<double> cdf(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
        acc += 1.0 / std::pow(double(r + 1), s);
        cdf[std::size_t(r)] = acc;
    }
    for (auto& v : cdf) v /= acc;
    return cdf;
}

int sample_cdf(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.next_double();
    int lo = 0, hi = int(cdf.size()) - 1;
    while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (cdf[std::size_t(mid)] < u) lo = mid + 1;
        else hi = mid;
    }
    return lo;
}

}  // namespace

std::u32string generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
    if (cfg.families % cfg.classes != 0)
        throw ConfigError("synthetic corpus: families must divide evenly into classes");
    if (cfg.members_per_family < 2 || cfg.members_per_family > 64)
        throw ConfigError("synthetic corpus: members_per_family must be in [2,64]");
    const int fams_per_class = cfg.families / cfg.classes;

    Rng rng(cfg.seed);
    Rng lex_rng = rng.fork(1);
    Rng emit_rng = rng.fork(2);

    auto codepoint = [&](int family, int member) {
        return char32_t(kBaseCodepoint + std::uint32_t(family) * 64u + std::uint32_t(member));
    };

    const auto member_cdf = zipf_cdf(cfg.members_per_family, 1.1);
    const auto word_cdf = zipf_cdf(cfg.words_per_class, 0.95);

    // word-internal member choice: a fixed function of the adjacent family
    // pair, so the next character is predictable from the previous
    // character's family alone, while the identity of any single character
    // stays context-dependent and its corpus frequency thin
    const std::uint64_t pair_salt = mix64(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    auto pair_member = [&](int prev_family, int family) {
        return int(mix64(pair_salt ^ (std::uint64_t(prev_family) * 64u + std::uint64_t(family))) %
                   std::uint64_t(cfg.members_per_family));
    };

    // Words are fixed FAMILY chains; the concrete member of each family is
    // drawn fresh per occurrence. Transition structure therefore lives
    // entirely at the family level, which is exactly what the shared-stroke
    // glyphs expose, while individual character identities stay thin.
    // Each family has a concentrated successor distribution inside its class.
    std::vector<std::vector<double>> succ_cdf(std::size_t(cfg.families));
    for (int f = 0; f < cfg.families; ++f) {
        const int c = f / fams_per_class;
        const int base = c * fams_per_class;
        std::vector<double> w(std::size_t(fams_per_class), 0.0);
        const int primary = base + (f - base + 1) % fams_per_class;
        const int secondary = base + int(lex_rng.below(std::uint64_t(fams_per_class)));
        for (int g = 0; g < fams_per_class; ++g) w[std::size_t(g)] = 0.015;
        w[std::size_t(primary - base)] += 0.78;
        w[std::size_t(secondary - base)] += 0.12;
        double total = 0.0;
        for (double x : w) total += x;
        double run = 0.0;
        std::vector<double> cdf(static_cast<std::size_t>(fams_per_class));
        for (int g = 0; g < fams_per_class; ++g) {
            run += w[std::size_t(g)] / total;
            cdf[std::size_t(g)] = run;
        }
        succ_cdf[std::size_t(f)] = std::move(cdf);
    }

    std::vector<std::vector<std::vector<int>>> lexicon(std::size_t(cfg.classes));  // family chains
    for (int c = 0; c < cfg.classes; ++c) {
        for (int w = 0; w < cfg.words_per_class; ++w) {
            const double lu = lex_rng.next_double();
            const int len = lu < 0.15 ? 1 : lu < 0.70 ? 2 : lu < 0.90 ? 3 : 4;
            std::vector<int> chain;
            int family = c * fams_per_class + int(lex_rng.below(std::uint64_t(fams_per_class)));
            chain.push_back(family);
            for (int k = 1; k < len; ++k) {
                const int base = c * fams_per_class;
                family = base + sample_cdf(succ_cdf[std::size_t(family)], lex_rng);
                chain.push_back(family);
            }
            lexicon[std::size_t(c)].push_back(std::move(chain));
        }
    }

    // concentrated Markov chain over classes
    std::vector<std::vector<double>> markov_cdf(static_cast<std::size_t>(cfg.classes));
    for (int c = 0; c < cfg.classes; ++c) {
        std::vector<double> w(static_cast<std::size_t>(cfg.classes));
        double acc = 0.0;
        for (int c2 = 0; c2 < cfg.classes; ++c2) {
            w[std::size_t(c2)] = std::exp(1.8 * lex_rng.gaussian());
            acc += w[std::size_t(c2)];
        }
        double run = 0.0;
        for (int c2 = 0; c2 < cfg.classes; ++c2) {
            run += w[std::size_t(c2)] / acc;
            w[std::size_t(c2)] = run;
        }
        markov_cdf[std::size_t(c)] = std::move(w);
    }

    static const char32_t kComma = 0xFF0C;       // fullwidth comma
    static const char32_t kFullStop = 0x3002;    // ideographic full stop
    static const std::u32string kAscii = U"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

    std::u32string out;
    out.reserve(std::size_t(cfg.target_chars) + 64);
    int cls = 0;
    int words_in_sentence = 0;
    int sentence_budget = 5 + int(emit_rng.below(5));
    int sentences_in_paragraph = 0;
    int paragraph_budget = 4 + int(emit_rng.below(4));

    while (std::int64_t(out.size()) < cfg.target_chars) {
        if (emit_rng.next_double() < 0.025) {
            const int len = 1 + int(emit_rng.below(2));
            for (int k = 0; k < len; ++k) out.push_back(kAscii[std::size_t(emit_rng.below(kAscii.size()))]);
        } else {
            const auto& chain = lexicon[std::size_t(cls)][std::size_t(sample_cdf(word_cdf, emit_rng))];
            for (std::size_t k = 0; k < chain.size(); ++k) {
                const int member = k == 0 ? sample_cdf(member_cdf, emit_rng) : pair_member(chain[k - 1], chain[k]);
                out.push_back(codepoint(chain[std::size_t(k)], member));
            }
        }
        ++words_in_sentence;
        cls = sample_cdf(markov_cdf[std::size_t(cls)], emit_rng);

        if (words_in_sentence >= sentence_budget) {
            out.push_back(kFullStop);
            words_in_sentence = 0;
            sentence_budget = 5 + int(emit_rng.below(5));
            if (++sentences_in_paragraph >= paragraph_budget) {
                out.push_back(U'\n');
                sentences_in_paragraph = 0;
                paragraph_budget = 4 + int(emit_rng.below(4));
            }
        } else if (emit_rng.next_double() < 0.10) {
            out.push_back(kComma);
        }
    }
    out.resize(std::size_t(cfg.target_chars));
    return out;
}

}  // namespace glyphlm
