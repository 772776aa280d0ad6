#include "glyphlm/font_ttf.hpp"

#include <cstring>
#include <fstream>

#include "glyphlm/errors.hpp"

namespace glyphlm {

namespace {
constexpr std::uint32_t tag(const char* s) {
    return (std::uint32_t(std::uint8_t(s[0])) << 24) | (std::uint32_t(std::uint8_t(s[1])) << 16) |
           (std::uint32_t(std::uint8_t(s[2])) << 8) | std::uint32_t(std::uint8_t(s[3]));
}
}  // namespace

std::uint32_t TtfFont::u32(std::size_t off) const {
    if (off + 4 > data_.size()) throw IoError("font file truncated");
    return (std::uint32_t(data_[off]) << 24) | (std::uint32_t(data_[off + 1]) << 16) |
           (std::uint32_t(data_[off + 2]) << 8) | std::uint32_t(data_[off + 3]);
}
std::uint16_t TtfFont::u16(std::size_t off) const {
    if (off + 2 > data_.size()) throw IoError("font file truncated");
    return std::uint16_t((data_[off] << 8) | data_[off + 1]);
}
std::int16_t TtfFont::s16(std::size_t off) const { return std::int16_t(u16(off)); }
std::uint8_t TtfFont::u8(std::size_t off) const {
    if (off >= data_.size()) throw IoError("font file truncated");
    return data_[off];
}

TtfFont::TtfFont(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open font file: " + path);
    data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (data_.size() < 12) throw IoError("not a TrueType font: " + path);

    const std::uint32_t scaler = u32(0);
    if (scaler != 0x00010000u && scaler != tag("true"))
        throw IoError("unsupported font format (need TrueType outlines): " + path);

    const int num_tables = u16(4);
    for (int i = 0; i < num_tables; ++i) {
        const std::size_t rec = 12 + std::size_t(i) * 16;
        const std::uint32_t t = u32(rec);
        Table tbl{u32(rec + 8), u32(rec + 12)};
        if (t == tag("cmap")) cmap_ = tbl;
        else if (t == tag("loca")) loca_ = tbl;
        else if (t == tag("glyf")) glyf_ = tbl;
        else if (t == tag("head")) head_ = tbl;
        else if (t == tag("maxp")) maxp_ = tbl;
        else if (t == tag("hhea")) hhea_ = tbl;
    }
    if (!cmap_.offset || !loca_.offset || !glyf_.offset || !head_.offset || !maxp_.offset)
        throw IoError("font missing required tables (cmap/loca/glyf/head/maxp): " + path);

    units_per_em_ = u16(head_.offset + 18);
    long_loca_ = s16(head_.offset + 50) != 0;
    num_glyphs_ = u16(maxp_.offset + 4);
    if (hhea_.offset) {
        ascender_ = s16(hhea_.offset + 4);
        descender_ = s16(hhea_.offset + 6);
    } else {
        ascender_ = units_per_em_;
        descender_ = 0;
    }

    // choose a unicode cmap subtable: prefer format 12, fall back to 4
    const int n_sub = u16(cmap_.offset + 2);
    std::size_t best4 = 0, best12 = 0;
    for (int i = 0; i < n_sub; ++i) {
        const std::size_t rec = cmap_.offset + 4 + std::size_t(i) * 8;
        const int platform = u16(rec);
        const int encoding = u16(rec + 2);
        const std::size_t sub = cmap_.offset + u32(rec + 4);
        const bool unicode = (platform == 0) || (platform == 3 && (encoding == 1 || encoding == 10));
        if (!unicode) continue;
        const int fmt = u16(sub);
        if (fmt == 12) best12 = sub;
        if (fmt == 4 && !best4) best4 = sub;
    }
    if (best12) {
        cmap_subtable_ = best12;
        cmap_format_ = 12;
    } else if (best4) {
        cmap_subtable_ = best4;
        cmap_format_ = 4;
    } else {
        throw IoError("font has no usable unicode cmap: " + path);
    }
}

std::uint16_t TtfFont::glyph_index(char32_t cp) const {
    if (cmap_format_ == 12) {
        const std::uint32_t n_groups = u32(cmap_subtable_ + 12);
        std::uint32_t lo = 0, hi = n_groups;
        while (lo < hi) {
            const std::uint32_t mid = (lo + hi) / 2;
            const std::size_t rec = cmap_subtable_ + 16 + std::size_t(mid) * 12;
            const std::uint32_t start = u32(rec), end = u32(rec + 4);
            if (cp < start) hi = mid;
            else if (cp > end) lo = mid + 1;
            else return std::uint16_t(u32(rec + 8) + (std::uint32_t(cp) - start));
        }
        return 0;
    }
    // format 4 covers the BMP only
    if (cp > 0xFFFF) return 0;
    const std::uint16_t seg_x2 = u16(cmap_subtable_ + 6);
    const std::size_t ends = cmap_subtable_ + 14;
    const std::size_t starts = ends + seg_x2 + 2;
    const std::size_t deltas = starts + seg_x2;
    const std::size_t ranges = deltas + seg_x2;
    const std::uint16_t c = std::uint16_t(cp);
    for (std::size_t i = 0; i < seg_x2; i += 2) {
        if (u16(ends + i) < c) continue;
        if (u16(starts + i) > c) return 0;
        const std::uint16_t range_off = u16(ranges + i);
        if (range_off == 0) return std::uint16_t(c + u16(deltas + i));
        const std::size_t addr = ranges + i + range_off + 2u * (c - u16(starts + i));
        const std::uint16_t g = u16(addr);
        if (g == 0) return 0;
        return std::uint16_t(g + u16(deltas + i));
    }
    return 0;
}

bool TtfFont::has_glyph(char32_t cp) const { return glyph_index(cp) != 0; }

namespace {
void flatten_quad(double x0, double y0, double cx, double cy, double x1, double y1,
                  std::vector<TtfFont::Segment>& out) {
    constexpr int kSteps = 8;
    double px = x0, py = y0;
    for (int i = 1; i <= kSteps; ++i) {
        const double t = double(i) / kSteps;
        const double u = 1.0 - t;
        const double x = u * u * x0 + 2 * u * t * cx + t * t * x1;
        const double y = u * u * y0 + 2 * u * t * cy + t * t * y1;
        out.push_back({px, py, x, y});
        px = x;
        py = y;
    }
}
}  // namespace

void TtfFont::append_glyph(std::uint16_t gid, std::vector<Segment>& out, double dx, double dy, double a, double b,
                           double c, double d, int depth) const {
    if (depth > 6 || gid >= num_glyphs_) return;
    std::size_t off, next;
    if (long_loca_) {
        off = u32(loca_.offset + std::size_t(gid) * 4);
        next = u32(loca_.offset + std::size_t(gid) * 4 + 4);
    } else {
        off = 2u * u16(loca_.offset + std::size_t(gid) * 2);
        next = 2u * u16(loca_.offset + std::size_t(gid) * 2 + 2);
    }
    if (next <= off) return;  // empty glyph
    const std::size_t g = glyf_.offset + off;
    const int n_contours = s16(g);
    const std::size_t first_seg = out.size();

    if (n_contours >= 0) {
        std::size_t p = g + 10;
        std::vector<int> contour_ends(static_cast<std::size_t>(n_contours));
        for (int i = 0; i < n_contours; ++i) {
            contour_ends[std::size_t(i)] = u16(p);
            p += 2;
        }
        const int n_pts = n_contours ? contour_ends.back() + 1 : 0;
        const int instr = u16(p);
        p += 2 + std::size_t(instr);

        std::vector<std::uint8_t> flags;
        flags.reserve(std::size_t(n_pts));
        while (int(flags.size()) < n_pts) {
            const std::uint8_t f = u8(p++);
            flags.push_back(f);
            if (f & 8) {  // repeat
                int reps = u8(p++);
                while (reps-- > 0 && int(flags.size()) < n_pts) flags.push_back(f);
            }
        }
        std::vector<double> xs(static_cast<std::size_t>(n_pts));
        std::vector<double> ys(static_cast<std::size_t>(n_pts));
        int v = 0;
        for (int i = 0; i < n_pts; ++i) {
            const std::uint8_t f = flags[std::size_t(i)];
            if (f & 2) {
                const int delta = u8(p++);
                v += (f & 16) ? delta : -delta;
            } else if (!(f & 16)) {
                v += s16(p);
                p += 2;
            }
            xs[std::size_t(i)] = v;
        }
        v = 0;
        for (int i = 0; i < n_pts; ++i) {
            const std::uint8_t f = flags[std::size_t(i)];
            if (f & 4) {
                const int delta = u8(p++);
                v += (f & 32) ? delta : -delta;
            } else if (!(f & 32)) {
                v += s16(p);
                p += 2;
            }
            ys[std::size_t(i)] = v;
        }

        int start = 0;
        for (int ci = 0; ci < n_contours; ++ci) {
            const int end = contour_ends[std::size_t(ci)];
            const int n = end - start + 1;
            if (n < 2) {
                start = end + 1;
                continue;
            }
            auto on = [&](int i) { return (flags[std::size_t(start + ((i % n) + n) % n)] & 1) != 0; };
            auto px = [&](int i) { return xs[std::size_t(start + ((i % n) + n) % n)]; };
            auto py = [&](int i) { return ys[std::size_t(start + ((i % n) + n) % n)]; };

            // find a starting on-curve point (or synthesize a midpoint)
            int s0 = -1;
            for (int i = 0; i < n; ++i)
                if (on(i)) {
                    s0 = i;
                    break;
                }
            double curx, cury;
            if (s0 < 0) {  // all off-curve: start at midpoint of the first pair
                s0 = 0;
                curx = (px(0) + px(1)) / 2;
                cury = (py(0) + py(1)) / 2;
            } else {
                curx = px(s0);
                cury = py(s0);
            }
            const double firstx = curx, firsty = cury;

            int i = s0;
            int seen = 0;
            double pendingcx = 0, pendingcy = 0;
            bool have_ctrl = false;
            while (seen < n) {
                ++i;
                ++seen;
                const bool on_i = on(i);
                const double xi = px(i), yi = py(i);
                if (on_i) {
                    if (have_ctrl) {
                        flatten_quad(curx, cury, pendingcx, pendingcy, xi, yi, out);
                        have_ctrl = false;
                    } else {
                        out.push_back({curx, cury, xi, yi});
                    }
                    curx = xi;
                    cury = yi;
                } else {
                    if (have_ctrl) {  // implied on-curve midpoint between two controls
                        const double mx = (pendingcx + xi) / 2, my = (pendingcy + yi) / 2;
                        flatten_quad(curx, cury, pendingcx, pendingcy, mx, my, out);
                        curx = mx;
                        cury = my;
                    }
                    pendingcx = xi;
                    pendingcy = yi;
                    have_ctrl = true;
                }
            }
            if (have_ctrl) {
                flatten_quad(curx, cury, pendingcx, pendingcy, firstx, firsty, out);
            } else if (curx != firstx || cury != firsty) {
                out.push_back({curx, cury, firstx, firsty});
            }
            start = end + 1;
        }

        // segments above are in raw glyph coordinates; apply our transform
        if (a != 1 || b != 0 || c != 0 || d != 1 || dx != 0 || dy != 0) {
            for (std::size_t si = first_seg; si < out.size(); ++si) {
                Segment& s = out[si];
                const double x0 = a * s.x0 + c * s.y0 + dx, y0 = b * s.x0 + d * s.y0 + dy;
                const double x1 = a * s.x1 + c * s.y1 + dx, y1 = b * s.x1 + d * s.y1 + dy;
                s = {x0, y0, x1, y1};
            }
        }
    } else {
        // composite glyph
        std::size_t p = g + 10;
        while (true) {
            const std::uint16_t flags = u16(p);
            const std::uint16_t sub_gid = u16(p + 2);
            p += 4;
            double sdx = 0, sdy = 0;
            if (flags & 1) {  // words
                sdx = s16(p);
                sdy = s16(p + 2);
                p += 4;
            } else {
                sdx = std::int8_t(u8(p));
                sdy = std::int8_t(u8(p + 1));
                p += 2;
            }
            double sa = 1, sb = 0, sc = 0, sd = 1;
            if (flags & 8) {  // single scale (F2Dot14)
                sa = sd = s16(p) / 16384.0;
                p += 2;
            } else if (flags & 0x40) {  // x and y scale
                sa = s16(p) / 16384.0;
                sd = s16(p + 2) / 16384.0;
                p += 4;
            } else if (flags & 0x80) {  // 2x2
                sa = s16(p) / 16384.0;
                sb = s16(p + 2) / 16384.0;
                sc = s16(p + 4) / 16384.0;
                sd = s16(p + 6) / 16384.0;
                p += 8;
            }
            // compose child transform with ours
            const double na = a * sa + c * sb;
            const double nb = b * sa + d * sb;
            const double nc = a * sc + c * sd;
            const double nd = b * sc + d * sd;
            const double ndx = a * sdx + c * sdy + dx;
            const double ndy = b * sdx + d * sdy + dy;
            append_glyph(sub_gid, out, ndx, ndy, na, nb, nc, nd, depth + 1);
            if (!(flags & 0x20)) break;  // MORE_COMPONENTS
        }
    }
}

std::vector<TtfFont::Segment> TtfFont::outline(char32_t cp) const {
    const std::uint16_t gid = glyph_index(cp);
    std::vector<Segment> out;
    if (gid == 0) return out;
    append_glyph(gid, out, 0, 0, 1, 0, 0, 1, 0);
    return out;
}

}  // namespace glyphlm
