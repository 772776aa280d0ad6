#include <doctest.h>

#include <cstdio>
#include <cmath>
#include <filesystem>
#include <set>

#include "glyphlm/glyph.hpp"

using namespace glyphlm;

namespace {
RenderSpec spec8(double crop = 1.0) {
    RenderSpec s;
    s.resolution = 8;
    s.occupancy = 0.8;
    s.crop_keep = crop;
    return s;
}
}  // namespace

TEST_CASE("render spec validation") {
    RenderSpec bad = spec8();
    bad.resolution = 1;
    CHECK_THROWS_AS(GlyphRenderer{bad}, InvalidSpecError);
    bad = spec8();
    bad.occupancy = 0.0;
    CHECK_THROWS_AS(GlyphRenderer{bad}, InvalidSpecError);
    bad = spec8();
    bad.crop_keep = 1.5;
    CHECK_THROWS_AS(GlyphRenderer{bad}, InvalidSpecError);
}

TEST_CASE("whitespace renders blank") {
    GlyphRenderer r(spec8());
    for (char32_t cp : {U' ', U'\t', U'\n', char32_t(0x3000)}) {
        auto img = r.render(cp);
        for (float v : img.pixels) CHECK(v == 0.0f);
    }
}

TEST_CASE("FULL BLOCK geometry at R=8, occupancy 0.8") {
    GlyphRenderer r(spec8());
    auto img = r.render(U'█');

    // interior fully inked, boundary fractional, all within [0,1]
    for (int y = 1; y <= 6; ++y)
        for (int x = 1; x <= 6; ++x) CHECK(img.at(y, x) == doctest::Approx(1.0f));
    CHECK(img.at(0, 3) > 0.0f);
    CHECK(img.at(0, 3) < 1.0f);
    for (float v : img.pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    // analytic oracle: the glyph box is a centered 6.4px square, so at
    // threshold 0.5 the active box is rows/cols 1..6 and at the reporting
    // threshold the fringe keeps the full 7-8px extent
    auto tight = active_bbox(img, 0.5);
    REQUIRE(tight.has_value());
    CHECK(tight->width() == 6);
    CHECK(tight->height() == 6);
    auto fringe = active_bbox(img, 0.05);
    REQUIRE(fringe.has_value());
    CHECK(fringe->width() >= 7);
    CHECK(fringe->height() >= 7);
}

TEST_CASE("crop accounting matches the 6x6 / 6x5 / 6x3 ladder") {
    GlyphRenderer full(spec8(1.0)), c80(spec8(0.8)), c50(spec8(0.5));
    auto b1 = active_bbox(full.render(U'█'), 0.5);
    auto b2 = active_bbox(c80.render(U'█'), 0.5);
    auto b3 = active_bbox(c50.render(U'█'), 0.5);
    REQUIRE(b1.has_value());
    REQUIRE(b2.has_value());
    REQUIRE(b3.has_value());
    CHECK(b1->width() == 6);
    CHECK(b1->height() == 6);
    CHECK(b2->width() == 6);
    CHECK(b2->height() == 5);
    CHECK(b3->width() == 6);
    CHECK(b3->height() == 3);
}

TEST_CASE("crop zeroes the removed rows exactly") {
    GlyphRenderer r(spec8(0.5));
    auto img = r.render(char32_t(0x4E2D));
    for (int y = 4; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(img.at(y, x) == 0.0f);
    // spec invariant: rows >= ceil(crop*R) are background (here 4..7)
    CHECK(crop_kept_rows(0.5, 8) == 4);
    CHECK(crop_kept_rows(0.8, 8) == 6);
    CHECK(crop_kept_rows(1.0, 8) == 8);
}

TEST_CASE("monotone crop: 0.5 output equals 0.8 output on kept rows") {
    GlyphRenderer c80(spec8(0.8)), c50(spec8(0.5));
    for (char32_t cp : {char32_t(0x4E2D), char32_t(0x4E8C), char32_t(0x5927)}) {
        auto a = c80.render(cp);
        auto b = c50.render(cp);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 8; ++x) CHECK(b.at(y, x) == a.at(y, x));
        for (int y = 4; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(b.at(y, x) == 0.0f);
    }
}

TEST_CASE("crop is idempotent") {
    GlyphRenderer r(spec8(0.8));
    auto img = r.render(char32_t(0x4E09));
    auto again = img;
    const int kept = crop_kept_rows(0.8, 8);
    for (int y = kept; y < 8; ++y)
        for (int x = 0; x < 8; ++x) again.pixels[size_t(y * 8 + x)] = 0.0f;
    CHECK(again.pixels == img.pixels);
}

TEST_CASE("rendering is a pure function") {
    GlyphRenderer r1(spec8()), r2(spec8());
    for (char32_t cp = 0x4E00; cp < 0x4E00 + 40; ++cp) {
        auto a = r1.render(cp);
        auto b = r2.render(cp);
        CHECK(a.pixels == b.pixels);
    }
}

TEST_CASE("occupancy scaling: doubling R doubles the active box side") {
    for (char32_t cp : {char32_t(0x2588), char32_t(0x4E2D), char32_t(0x4E8D)}) {
        RenderSpec s8 = spec8();
        RenderSpec s16 = spec8();
        s16.resolution = 16;
        auto b8 = active_bbox(GlyphRenderer(s8).render(cp), 0.05);
        auto b16 = active_bbox(GlyphRenderer(s16).render(cp), 0.05);
        REQUIRE(b8.has_value());
        REQUIRE(b16.has_value());
        CHECK(std::abs(b16->width() - 2 * b8->width()) <= 2);
        CHECK(std::abs(b16->height() - 2 * b8->height()) <= 2);
    }
}

TEST_CASE("active_bbox corner cases") {
    GlyphImage img;
    img.resolution = 8;
    img.pixels.assign(64, 0.0f);
    CHECK_FALSE(active_bbox(img).has_value());
    img.pixels[size_t(2 * 8 + 3)] = 1.0f;
    auto box = active_bbox(img);
    REQUIRE(box.has_value());
    CHECK(box->row_min == 2);
    CHECK(box->row_max == 2);
    CHECK(box->col_min == 3);
    CHECK(box->col_max == 3);
}

TEST_CASE("render_sequence mirrors render and validates input") {
    GlyphRenderer r(spec8());
    auto seq = r.render_sequence(std::string_view("\xe6\x95\xb0\xe6\x8d\xae\xe6\x98\xbe\xe7\xa4\xba"));  // 4 CJK chars
    CHECK(seq.size() == 4);
    for (const auto& g : seq) CHECK(g.pixels.size() == 64);

    auto mixed = r.render_sequence(std::string_view("A1\xe3\x80\x82"));  // latin, digit, ideographic stop
    CHECK(mixed.size() == 3);
    CHECK(mixed[0].pixels == r.render(U'A').pixels);

    CHECK_THROWS_AS(r.render_sequence(std::u32string{}), EmptyInputError);
}

TEST_CASE("distinct codepoints give distinct glyphs over a synthetic charset") {
    GlyphRenderer r(spec8());
    std::set<std::vector<float>> seen;
    int n = 0;
    for (int f = 0; f < 24; ++f)
        for (int m = 0; m < 48; m += 3) {  // sample a third of each family
            auto img = r.render(char32_t(0x4E00 + f * 64 + m));
            seen.insert(img.pixels);
            ++n;
        }
    CHECK(int(seen.size()) == n);
}

TEST_CASE("same-family glyphs are closer in pixel space than cross-family") {
    GlyphRenderer r(spec8());
    auto l2 = [](const GlyphImage& a, const GlyphImage& b) {
        double acc = 0.0;
        for (size_t i = 0; i < a.pixels.size(); ++i) {
            const double d = double(a.pixels[i]) - double(b.pixels[i]);
            acc += d * d;
        }
        return acc;
    };
    double same = 0.0, cross = 0.0;
    int ns = 0, nc = 0;
    for (int f = 0; f < 8; ++f) {
        auto a = r.render(char32_t(0x4E00 + f * 64 + 0));
        auto b = r.render(char32_t(0x4E00 + f * 64 + 17));
        same += l2(a, b);
        ++ns;
        auto c = r.render(char32_t(0x4E00 + ((f + 3) % 24) * 64 + 17));
        cross += l2(a, c);
        ++nc;
    }
    CHECK(same / ns < cross / nc);
}

TEST_CASE("glyph cache file round-trips with round-half-up quantization") {
    GlyphRenderer r(spec8());
    std::vector<GlyphImage> glyphs;
    for (char32_t cp = 0x4E00; cp < 0x4E00 + 5; ++cp) glyphs.push_back(r.render(cp));
    const std::string path = (std::filesystem::temp_directory_path() / "glyphlm_cache_test.gly").string();
    write_glyph_cache(path, glyphs);
    auto cached = read_glyph_cache(path);
    REQUIRE(cached.size() == glyphs.size());
    for (size_t i = 0; i < cached.size(); ++i) {
        CHECK(cached[i].codepoint == glyphs[i].codepoint);
        CHECK(cached[i].resolution == 8);
        for (size_t j = 0; j < 64; ++j) {
            const auto expect = (unsigned char)(std::floor(double(glyphs[i].pixels[j]) * 255.0 + 0.5));
            CHECK(cached[i].pixels[j] == expect);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("utf8 decoding is strict and reports byte offsets") {
    CHECK(decode_utf8("abc").size() == 3);
    CHECK(decode_utf8("\xe4\xb8\xad") == std::u32string{char32_t(0x4E2D)});
    CHECK_THROWS_WITH_AS(decode_utf8(std::string_view("ab\xff")), doctest::Contains("offset 2"), DataError);
    CHECK_THROWS_AS(decode_utf8(std::string_view("\xc0\xaf")), DataError);          // overlong
    CHECK_THROWS_AS(decode_utf8(std::string_view("\xed\xa0\x80")), DataError);      // surrogate
    CHECK_THROWS_AS(decode_utf8(std::string_view("\xe4\xb8")), DataError);          // truncated
    CHECK(encode_utf8(decode_utf8("mixed\xe4\xb8\xad text")) == "mixed\xe4\xb8\xad text");
}

TEST_CASE("outline font path" * doctest::skip(!std::filesystem::exists("/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"))) {
    RenderSpec s = spec8();
    s.resolution = 16;
    s.font_source = "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf";
    GlyphRenderer r(s);

    auto a = r.render(U'A');
    auto box = active_bbox(a, 0.05);
    REQUIRE(box.has_value());
    // ink confined to the centered occupancy box (0.8 * 16 = 12.8px wide)
    CHECK(box->col_min >= 1);
    CHECK(box->col_max <= 14);
    CHECK(box->row_min >= 1);
    CHECK(box->row_max <= 14);

    auto space = r.render(U' ');
    for (float v : space.pixels) CHECK(v == 0.0f);

    // determinism through the font path too
    CHECK(r.render(U'g').pixels == r.render(U'g').pixels);

    // DejaVu has no CJK coverage
    CHECK_THROWS_AS(r.render(char32_t(0x4E2D)), MissingGlyphError);
    try {
        r.render_sequence(std::u32string(U"ab中"));
        FAIL("expected MissingGlyphError");
    } catch (const MissingGlyphError& e) {
        CHECK(e.codepoint == char32_t(0x4E2D));
        CHECK(e.index == 2);
    }
}
