#include "glyphlm/glyph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "glyphlm/font_ttf.hpp"

namespace glyphlm {

namespace {

constexpr int kSuper = 4;  // supersampling factor per axis (box filter)

struct Rect {
    double x0, y0, x1, y1;  // design coords in [0,1], y down
    bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

Rect hbar(double y, double x0, double x1, double t) { return {x0, y - t / 2, x1, y + t / 2}; }
Rect vbar(double x, double y0, double y1, double t) { return {x - t / 2, y0, x + t / 2, y1}; }

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Builtin stroke-grid glyphs. Codepoints in the same 64-codepoint block
/// share their long "radical" strokes (placed in the upper half or spanning
/// full height, so they survive top crops); the low bits select two short
/// distinguishing strokes. Deterministic, axis-aligned, collision-free within
/// a block.
std::vector<Rect> synthetic_strokes(char32_t cp) {
    if (cp == U'█') return {{0.0, 0.0, 1.0, 1.0}};  // FULL BLOCK fills the design box

    const std::uint64_t group = std::uint64_t(cp) >> 6;
    const std::uint64_t member = std::uint64_t(cp) & 63;
    const std::uint64_t h = mix64(group);

    std::vector<Rect> strokes;
    const double thick_long = 0.17, thick_short = 0.14;

    // group strokes: one horizontal bar in the top half, one full-height
    // vertical bar, plus one of five accent variants. 4 x 5 x 5 = 100
    // distinct patterns before the cycle repeats, all carrying their
    // identity in the top half so top crops keep the group readable.
    const int hy_slot = int(group % 4);
    const int vx_slot = int((group / 4) % 5);
    const int accent = int((group / 20) % 5);
    const double hy = 0.08 + 0.14 * hy_slot;                  // 0.08 / 0.22 / 0.36 / 0.50
    const double vx = 0.08 + 0.21 * vx_slot;                  // five column slots
    strokes.push_back(hbar(hy, 0.02, 0.98, thick_long));
    strokes.push_back(vbar(vx, 0.0, 1.0, thick_long));
    switch (accent) {
        case 1: strokes.push_back(hbar(0.40, 0.28, 0.72, thick_short)); break;
        case 2: strokes.push_back(vbar(0.08 + 0.21 * ((vx_slot + 2) % 5), 0.0, 0.48, thick_long)); break;
        case 3: strokes.push_back(hbar(0.40, 0.02, 0.40, thick_short)); break;
        case 4: strokes.push_back(hbar(0.40, 0.60, 0.98, thick_short)); break;
        default: break;
    }

    // member strokes, mixed with the group hash so far-apart blocks that
    // share a group pattern still get different glyphs
    const std::uint64_t m = (member + h) & 63;
    const std::uint64_t a = m & 7, b = (m >> 3) & 7;
    const double ya = 0.125 + 0.25 * double(a & 3);
    if (a < 4) strokes.push_back(hbar(ya, 0.06, 0.46, thick_short));
    else strokes.push_back(hbar(ya, 0.54, 0.94, thick_short));
    const double xb = 0.08 + 0.28 * double(b & 3);
    if (b < 4) strokes.push_back(vbar(xb, 0.04, 0.46, thick_short));
    else strokes.push_back(vbar(xb, 0.54, 0.96, thick_short));

    for (auto& r : strokes) {
        r.x0 = std::max(r.x0, 0.0);
        r.y0 = std::max(r.y0, 0.0);
        r.x1 = std::min(r.x1, 1.0);
        r.y1 = std::min(r.y1, 1.0);
    }
    return strokes;
}

}  // namespace

bool is_blank_codepoint(char32_t cp) {
    return cp < 0x21 || cp == 0x00A0 || cp == 0x3000 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x7F;
}

void RenderSpec::validate() const {
    if (resolution < 2) throw InvalidSpecError("render spec: resolution must be >= 2");
    if (!(occupancy > 0.0 && occupancy <= 1.0)) throw InvalidSpecError("render spec: occupancy must be in (0,1]");
    if (!(crop_keep > 0.0 && crop_keep <= 1.0)) throw InvalidSpecError("render spec: crop_keep must be in (0,1]");
    if (!(ink > 0.0 && ink <= 1.0)) throw InvalidSpecError("render spec: ink must be in (0,1]");
    if (background != 0.0) throw InvalidSpecError("render spec: background must be 0.0");
    if (font_source.empty()) throw InvalidSpecError("render spec: font_source empty");
}

int crop_kept_rows(double crop_keep, int resolution) {
    int kept = int(std::floor(crop_keep * resolution + 1e-9));
    return std::clamp(kept, 0, resolution);
}

GlyphRenderer::GlyphRenderer(RenderSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.font_source != "builtin-synthetic") font_ = std::make_unique<TtfFont>(spec_.font_source);
}

GlyphRenderer::~GlyphRenderer() = default;
GlyphRenderer::GlyphRenderer(GlyphRenderer&&) noexcept = default;
GlyphRenderer& GlyphRenderer::operator=(GlyphRenderer&&) noexcept = default;

GlyphImage GlyphRenderer::render(char32_t cp) const {
    const int r = spec_.resolution;
    GlyphImage img;
    img.codepoint = cp;
    img.resolution = r;
    img.spec = spec_;
    img.pixels.assign(std::size_t(r) * std::size_t(r), float(spec_.background));
    if (is_blank_codepoint(cp)) return img;

    const int sr = r * kSuper;
    const double offset = (1.0 - spec_.occupancy) * r / 2.0;  // pixels
    const double box = spec_.occupancy * r;

    std::vector<int> counts(std::size_t(r) * std::size_t(r), 0);

    if (!font_) {
        const auto strokes = synthetic_strokes(cp);
        for (int sy = 0; sy < sr; ++sy) {
            const double py = (sy + 0.5) / kSuper;
            const double v = (py - offset) / box;
            if (v < 0.0 || v >= 1.0) continue;
            for (int sx = 0; sx < sr; ++sx) {
                const double px = (sx + 0.5) / kSuper;
                const double u = (px - offset) / box;
                if (u < 0.0 || u >= 1.0) continue;
                for (const Rect& rect : strokes) {
                    if (rect.contains(u, v)) {
                        ++counts[std::size_t(sy / kSuper) * std::size_t(r) + std::size_t(sx / kSuper)];
                        break;
                    }
                }
            }
        }
    } else {
        if (!font_->has_glyph(cp)) throw MissingGlyphError(cp);
        const auto segs = font_->outline(cp);
        if (!segs.empty()) {
            // uniform font-unit -> pixel scale centered in the occupancy box
            const double upem = font_->units_per_em();
            const double span_y = double(font_->ascender()) - double(font_->descender());
            const double s = box / std::max(upem, span_y);
            const double cx = upem / 2.0;
            const double cy = (double(font_->ascender()) + double(font_->descender())) / 2.0;
            const double half = r / 2.0;

            struct Edge {
                double x0, y0, x1, y1;  // pixel coords, y down
            };
            std::vector<Edge> edges;
            edges.reserve(segs.size());
            for (const auto& sg : segs) {
                edges.push_back({half + (sg.x0 - cx) * s, half - (sg.y0 - cy) * s,
                                 half + (sg.x1 - cx) * s, half - (sg.y1 - cy) * s});
            }

            std::vector<std::pair<double, int>> crossings;
            for (int sy = 0; sy < sr; ++sy) {
                const double py = (sy + 0.5) / kSuper;
                if (py < offset || py >= offset + box) continue;
                crossings.clear();
                for (const Edge& e : edges) {
                    if (e.y0 == e.y1) continue;
                    if (e.y0 <= py && py < e.y1) {
                        crossings.emplace_back(e.x0 + (py - e.y0) * (e.x1 - e.x0) / (e.y1 - e.y0), +1);
                    } else if (e.y1 <= py && py < e.y0) {
                        crossings.emplace_back(e.x0 + (py - e.y0) * (e.x1 - e.x0) / (e.y1 - e.y0), -1);
                    }
                }
                std::sort(crossings.begin(), crossings.end());
                int winding = 0;
                for (std::size_t ci = 0; ci < crossings.size(); ++ci) {
                    const int prev = winding;
                    winding += crossings[ci].second;
                    if (prev == 0 && winding != 0) continue;
                    if (prev != 0 && winding == 0) {
                        // span from the x where winding became nonzero to here
                        double xa = 0;
                        int w = 0;
                        for (std::size_t cj = 0; cj <= ci; ++cj) {  // find span start
                            const int p2 = w;
                            w += crossings[cj].second;
                            if (p2 == 0 && w != 0) xa = crossings[cj].first;
                        }
                        const double xb = crossings[ci].first;
                        const double lo = std::max(xa, offset), hi = std::min(xb, offset + box);
                        if (hi <= lo) continue;
                        // samples with center (sx + 0.5)/kSuper in [lo, hi)
                        int sx0 = int(std::ceil(lo * kSuper - 0.5));
                        int sx1 = int(std::ceil(hi * kSuper - 0.5)) - 1;
                        sx0 = std::max(sx0, 0);
                        sx1 = std::min(sx1, sr - 1);
                        for (int sx = sx0; sx <= sx1; ++sx)
                            ++counts[std::size_t(sy / kSuper) * std::size_t(r) + std::size_t(sx / kSuper)];
                    }
                }
            }
        }
    }

    const float scale = float(spec_.ink) / float(kSuper * kSuper);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = counts[i] * scale;

    // crop last: rows not fully inside the kept top fraction become background
    const int kept = crop_kept_rows(spec_.crop_keep, r);
    for (int row = kept; row < r; ++row)
        for (int col = 0; col < r; ++col) img.pixels[std::size_t(row) * std::size_t(r) + std::size_t(col)] = float(spec_.background);

    return img;
}

std::vector<GlyphImage> GlyphRenderer::render_sequence(const std::u32string& text) const {
    if (text.empty()) throw EmptyInputError("render_sequence: empty text");
    std::vector<GlyphImage> out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        try {
            out.push_back(render(text[i]));
        } catch (const MissingGlyphError& e) {
            throw MissingGlyphError(e.codepoint, i);
        }
    }
    return out;
}

std::vector<GlyphImage> GlyphRenderer::render_sequence(std::string_view utf8) const {
    return render_sequence(decode_utf8(utf8));
}

std::optional<ActiveBox> active_bbox(const GlyphImage& image, double ink_threshold) {
    const int r = image.resolution;
    ActiveBox box{r, -1, r, -1};
    for (int row = 0; row < r; ++row)
        for (int col = 0; col < r; ++col)
            if (double(image.at(row, col)) > ink_threshold) {
                box.row_min = std::min(box.row_min, row);
                box.row_max = std::max(box.row_max, row);
                box.col_min = std::min(box.col_min, col);
                box.col_max = std::max(box.col_max, col);
            }
    if (box.row_max < 0) return std::nullopt;
    return box;
}

// --------------------------------------------------------------------------
// glyph cache file
// --------------------------------------------------------------------------

void write_glyph_cache(const std::string& path, const std::vector<GlyphImage>& glyphs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write glyph cache: " + path);
    out.write("GLY1", 4);
    for (const auto& g : glyphs) {
        unsigned char head[6];
        const std::uint32_t cp = std::uint32_t(g.codepoint);
        const std::uint16_t res = std::uint16_t(g.resolution);
        head[0] = cp & 0xFF;
        head[1] = (cp >> 8) & 0xFF;
        head[2] = (cp >> 16) & 0xFF;
        head[3] = (cp >> 24) & 0xFF;
        head[4] = res & 0xFF;
        head[5] = (res >> 8) & 0xFF;
        out.write(reinterpret_cast<const char*>(head), 6);
        std::vector<unsigned char> q(g.pixels.size());
        for (std::size_t i = 0; i < g.pixels.size(); ++i) {
            const double v = std::clamp(double(g.pixels[i]), 0.0, 1.0);
            q[i] = static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));  // round half up
        }
        out.write(reinterpret_cast<const char*>(q.data()), std::streamsize(q.size()));
    }
    if (!out) throw IoError("failed writing glyph cache: " + path);
}

std::vector<CachedGlyph> read_glyph_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open glyph cache: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "GLY1", 4) != 0)
        throw IoError("not a glyph cache file: " + path);
    std::vector<CachedGlyph> out;
    while (true) {
        unsigned char head[6];
        if (!in.read(reinterpret_cast<char*>(head), 6)) {
            if (in.eof() && in.gcount() == 0) break;
            throw IoError("truncated glyph cache record: " + path);
        }
        CachedGlyph g;
        g.codepoint = char32_t(std::uint32_t(head[0]) | (std::uint32_t(head[1]) << 8) |
                               (std::uint32_t(head[2]) << 16) | (std::uint32_t(head[3]) << 24));
        g.resolution = int(std::uint32_t(head[4]) | (std::uint32_t(head[5]) << 8));
        g.pixels.resize(std::size_t(g.resolution) * std::size_t(g.resolution));
        if (!in.read(reinterpret_cast<char*>(g.pixels.data()), std::streamsize(g.pixels.size())))
            throw IoError("truncated glyph cache pixels: " + path);
        out.push_back(std::move(g));
    }
    return out;
}

// --------------------------------------------------------------------------
// UTF-8
// --------------------------------------------------------------------------

std::u32string decode_utf8(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    const auto bad = [&](std::size_t at) {
        throw DataError("invalid UTF-8 at byte offset " + std::to_string(at));
    };
    while (i < text.size()) {
        const unsigned char b0 = static_cast<unsigned char>(text[i]);
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        }
        int len;
        char32_t cp;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            bad(i);
            return out;
        }
        if (i + std::size_t(len) > text.size()) bad(i);
        for (int k = 1; k < len; ++k) {
            const unsigned char b = static_cast<unsigned char>(text[i + std::size_t(k)]);
            if ((b & 0xC0) != 0x80) bad(i + std::size_t(k));
            cp = (cp << 6) | (b & 0x3F);
        }
        static const char32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMin[len]) bad(i);                       // overlong
        if (cp >= 0xD800 && cp <= 0xDFFF) bad(i);         // surrogate
        if (cp > 0x10FFFF) bad(i);
        out.push_back(cp);
        i += std::size_t(len);
    }
    return out;
}

std::string encode_utf8(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(char(cp));
    } else if (cp < 0x800) {
        out.push_back(char(0xC0 | (cp >> 6)));
        out.push_back(char(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(char(0xE0 | (cp >> 12)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(char(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(char(0xF0 | (cp >> 18)));
        out.push_back(char(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(char(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::string encode_utf8(const std::u32string& text) {
    std::string out;
    out.reserve(text.size() * 3);
    for (char32_t cp : text) out += encode_utf8(cp);
    return out;
}

}  // namespace glyphlm
