#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace glyphlm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidSpecError : Error {
    using Error::Error;
};

struct MissingGlyphError : Error {
    char32_t codepoint;
    std::size_t index;  // position in the source text, 0 for single-char renders
    explicit MissingGlyphError(char32_t cp, std::size_t idx = 0)
        : Error("font has no glyph for codepoint U+" + to_hex(cp) +
                (idx ? " at index " + std::to_string(idx) : std::string{})),
          codepoint(cp),
          index(idx) {}

  private:
    static std::string to_hex(char32_t cp) {
        static const char* digits = "0123456789ABCDEF";
        std::string s;
        for (int shift = 28; shift >= 0; shift -= 4) {
            int d = int(cp >> shift) & 0xF;
            if (!s.empty() || d || shift < 16) s.push_back(digits[d]);
        }
        return s;
    }
};

struct EmptyInputError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NonFiniteError : Error {
    using Error::Error;
};

struct NonFiniteGradientError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace glyphlm
