#include "glyphlm/vocab.hpp"

#include <fstream>

#include "glyphlm/glyph.hpp"

namespace glyphlm {

Vocabulary Vocabulary::build(const std::u32string& corpus) {
    Vocabulary v;
    v.counts_.assign(kReserved, 0);
    for (char32_t cp : corpus) {
        auto [it, inserted] = v.ids_.try_emplace(cp, int(v.chars_.size()) + kReserved);
        if (inserted) {
            v.chars_.push_back(cp);
            v.counts_.push_back(0);
        }
        ++v.counts_[std::size_t(it->second)];
    }
    return v;
}

std::vector<int> Vocabulary::encode(const std::u32string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char32_t cp : text) out.push_back(id_of(cp));
    return out;
}

std::u32string Vocabulary::decode(const std::vector<int>& ids) const {
    std::u32string out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(char_of(id));
    return out;
}

namespace {
std::string escape_char(char32_t cp) {
    if (cp == U'\n') return "\\n";
    if (cp == U'\t') return "\\t";
    if (cp == U'\\') return "\\\\";
    if (cp == U'\r') return "\\r";
    return encode_utf8(cp);
}

char32_t unescape_entry(const std::string& field, const std::string& path) {
    std::u32string decoded = decode_utf8(field);
    if (decoded.size() == 1) return decoded[0];
    if (decoded.size() == 2 && decoded[0] == U'\\') {
        switch (decoded[1]) {
            case U'n': return U'\n';
            case U't': return U'\t';
            case U'r': return U'\r';
            case U'\\': return U'\\';
            default: break;
        }
    }
    throw DataError("vocab file " + path + ": bad character field '" + field + "'");
}
}  // namespace

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab file: " + path);
    for (std::size_t i = 0; i < chars_.size(); ++i)
        out << escape_char(chars_[i]) << '\t' << (i + kReserved) << '\n';
    if (!out) throw IoError("failed writing vocab file: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocab file: " + path);
    Vocabulary v;
    v.counts_.assign(kReserved, 0);
    std::string line;
    int expect = kReserved;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("vocab file " + path + ": missing tab");
        const char32_t cp = unescape_entry(line.substr(0, tab), path);
        const int id = std::stoi(line.substr(tab + 1));
        if (id != expect) throw DataError("vocab file " + path + ": ids must be dense from 2, got " + std::to_string(id));
        ++expect;
        if (!v.ids_.try_emplace(cp, id).second) throw DataError("vocab file " + path + ": duplicate character");
        v.chars_.push_back(cp);
        v.counts_.push_back(0);
    }
    return v;
}

}  // namespace glyphlm
