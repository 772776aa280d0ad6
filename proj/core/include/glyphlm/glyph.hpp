#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "glyphlm/errors.hpp"

namespace glyphlm {

/// How to turn a codepoint into pixels. Identical spec + codepoint always
/// produces bit-identical output.
struct RenderSpec {
    int resolution = 8;       // pixels per side, >= 2
    double occupancy = 0.8;   // fraction of the side the glyph box fills, (0,1]
    double crop_keep = 1.0;   // fraction of top rows kept, (0,1]
    std::string font_source = "builtin-synthetic";  // path to a .ttf, or the builtin sentinel
    double background = 0.0;
    double ink = 1.0;         // luminance scale, (0,1]

    void validate() const;
    bool operator==(const RenderSpec&) const = default;
};

struct GlyphImage {
    char32_t codepoint = 0;
    int resolution = 0;
    std::vector<float> pixels;  // row-major R*R luminance in [0,1]
    RenderSpec spec;

    float at(int row, int col) const {
        return pixels[std::size_t(row) * std::size_t(resolution) + std::size_t(col)];
    }
};

/// Inclusive bounds of pixels above a threshold.
struct ActiveBox {
    int row_min = 0, row_max = 0, col_min = 0, col_max = 0;
    int height() const { return row_max - row_min + 1; }
    int width() const { return col_max - col_min + 1; }
};

std::optional<ActiveBox> active_bbox(const GlyphImage& image, double ink_threshold = 0.05);

/// Number of top rows kept by a crop: the rows that lie entirely inside the
/// top crop_keep fraction of the image (floor, so an 0.8 crop of 8 rows keeps
/// 6). Rows at or beyond this index are background.
int crop_kept_rows(double crop_keep, int resolution);

class TtfFont;

/// Renderer for one RenderSpec. Stateless after construction; safe to share
/// across threads. The font face is parsed once here and only read afterwards.
class GlyphRenderer {
  public:
    explicit GlyphRenderer(RenderSpec spec);
    ~GlyphRenderer();
    GlyphRenderer(GlyphRenderer&&) noexcept;
    GlyphRenderer& operator=(GlyphRenderer&&) noexcept;

    const RenderSpec& spec() const { return spec_; }

    GlyphImage render(char32_t codepoint) const;

    /// One image per character of the UTF-8 text, same path as render().
    std::vector<GlyphImage> render_sequence(std::string_view utf8) const;
    std::vector<GlyphImage> render_sequence(const std::u32string& text) const;

  private:
    RenderSpec spec_;
    std::unique_ptr<TtfFont> font_;  // null when using the builtin stroke set
};

/// Glyph cache file ("GLY1"): per record a 4-byte codepoint, 2-byte
/// resolution (both little-endian) and R*R luminance bytes quantized to 0-255
/// with round-half-up. Quantization applies only to this file; the in-memory
/// pipeline stays floating point.
void write_glyph_cache(const std::string& path, const std::vector<GlyphImage>& glyphs);

struct CachedGlyph {
    char32_t codepoint;
    int resolution;
    std::vector<unsigned char> pixels;
};

std::vector<CachedGlyph> read_glyph_cache(const std::string& path);

/// Strict UTF-8 decoding; throws DataError naming the byte offset on invalid
/// input (overlongs and surrogates rejected).
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(const std::u32string& text);
std::string encode_utf8(char32_t cp);

bool is_blank_codepoint(char32_t cp);

}  // namespace glyphlm
