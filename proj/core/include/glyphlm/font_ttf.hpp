#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glyphlm {

/// Minimal TrueType reader: cmap (formats 4/12), glyf/loca outlines including
/// composites. Enough to rasterize ordinary outline fonts; no hinting, no CFF.
class TtfFont {
  public:
    explicit TtfFont(const std::string& path);

    bool has_glyph(char32_t cp) const;

    /// Outline of the glyph for cp as a closed line-segment soup in font
    /// units (quadratics flattened). Empty for blank glyphs like space.
    struct Segment {
        double x0, y0, x1, y1;
    };
    std::vector<Segment> outline(char32_t cp) const;

    int units_per_em() const { return units_per_em_; }
    int ascender() const { return ascender_; }
    int descender() const { return descender_; }

  private:
    struct Table {
        std::uint32_t offset = 0, length = 0;
    };

    std::uint16_t glyph_index(char32_t cp) const;
    void append_glyph(std::uint16_t gid, std::vector<Segment>& out, double dx, double dy, double a, double b,
                      double c, double d, int depth) const;

    std::uint32_t u32(std::size_t off) const;
    std::uint16_t u16(std::size_t off) const;
    std::int16_t s16(std::size_t off) const;
    std::uint8_t u8(std::size_t off) const;

    std::vector<unsigned char> data_;
    Table cmap_, loca_, glyf_, head_, maxp_, hhea_;
    std::size_t cmap_subtable_ = 0;  // offset of the chosen unicode subtable
    int cmap_format_ = 0;
    int units_per_em_ = 1000;
    int ascender_ = 800;
    int descender_ = -200;
    bool long_loca_ = false;
    int num_glyphs_ = 0;
};

}  // namespace glyphlm
