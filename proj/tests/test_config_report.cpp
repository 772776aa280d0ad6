#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "glyphlm/config.hpp"
#include "glyphlm/report.hpp"
#include "glyphlm/version.hpp"

using namespace glyphlm;

namespace {
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}
}  // namespace

TEST_CASE("config defaults, strict keys, digest stability") {
    auto c = parse_config_json("{}");
    CHECK(c.render.resolution == 8);
    CHECK(c.render.occupancy == 0.8);
    CHECK(c.model.decoder.layers == 4);
    CHECK(c.model.decoder.d_model == 128);
    CHECK(c.train.base_lr == 2e-4);
    CHECK(c.train.max_lr == 1.5e-3);
    CHECK(c.train.weight_decay == 0.01);
    CHECK(c.train.clip_norm == 1.0);
    CHECK(c.train.patience == 7);

    CHECK_THROWS_WITH_AS(parse_config_json(R"({"nonsense": 1})"), doctest::Contains("unknown key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_json(R"({"train": {"lr": 1}})"), doctest::Contains("unknown key"), ConfigError);
    CHECK_THROWS_AS(parse_config_json("{"), ConfigError);
    // section validators surface their own typed errors
    CHECK_THROWS_AS(parse_config_json(R"({"render": {"resolution": 1}})"), InvalidSpecError);
    CHECK_THROWS_AS(parse_config_json(R"({"train": {"patience": 0}})"), ConfigError);

    auto c2 = parse_config_json("{}");
    CHECK(c.digest() == c2.digest());
    auto c3 = parse_config_json(R"({"train": {"seed": 43}})");
    CHECK(c.digest() != c3.digest());
    CHECK(c.digest().size() == 16);
}

TEST_CASE("config file round trip preserves canonical form") {
    auto c = parse_config_json(R"({"model": {"decoder": {"layers": 2, "d_model": 64}}, "train": {"batch_size": 8}})");
    const std::string path = (std::filesystem::temp_directory_path() / "glyphlm_cfg_test.json").string();
    save_config(c, path);
    auto back = load_config(path);
    CHECK(back.canonical_json() == c.canonical_json());
    CHECK(back.digest() == c.digest());
    std::filesystem::remove(path);
}

TEST_CASE("number formatting: six significant digits") {
    CHECK(format_number(0.0) == "0");
    CHECK(format_number(1.5) == "1.5");
    CHECK(format_number(0.123456789) == "0.123457");
    CHECK(format_number(123456789.0) == "1.23457e+08");
    CHECK(format_number(0.000012345678) == "1.23457e-05");
    CHECK(format_number(-3.25) == "-3.25");
}

TEST_CASE("csv writer emits meta comments, header, and rows byte-stably") {
    ArtifactMeta meta;
    meta.config_digest = "0123456789abcdef";
    meta.seed = 42;
    meta.version = kVersion;
    const std::string path = (std::filesystem::temp_directory_path() / "glyphlm_csv_test.csv").string();
    write_csv(path, meta, {"samples_seen", "mode", "top1"},
              {{"100", "index", format_number(0.05)}, {"200", "vision", format_number(0.125)}});
    const std::string expect = "# config_digest=0123456789abcdef\n# seed=42\n# version=" + std::string(kVersion) +
                               "\nsamples_seen,mode,top1\n100,index,0.05\n200,vision,0.125\n";
    CHECK(slurp(path) == expect);
    std::filesystem::remove(path);
}

TEST_CASE("svg emitters produce valid-looking files with embedded meta") {
    ArtifactMeta meta;
    meta.config_digest = "feedfacefeedface";
    meta.seed = 7;
    meta.version = kVersion;
    const auto dir = std::filesystem::temp_directory_path() / "glyphlm_svg_test";
    std::filesystem::create_directories(dir);

    std::vector<float> grid(64);
    for (size_t i = 0; i < 64; ++i) grid[i] = float(i) / 63.0f;
    write_heatmap_svg((dir / "heat.svg").string(), meta, grid, 8, "glyph");
    auto heat = slurp((dir / "heat.svg").string());
    CHECK(heat.find("<svg") != std::string::npos);
    CHECK(heat.find("feedfacefeedface") != std::string::npos);
    CHECK(heat.find("<rect") != std::string::npos);

    write_line_chart_svg((dir / "line.svg").string(), meta, "accuracy", "samples", "top1",
                         {{"vision r8", {{0, 0.01}, {500, 0.08}, {1000, 0.12}}},
                          {"index", {{0, 0.01}, {500, 0.03}, {1000, 0.06}}}});
    auto line = slurp((dir / "line.svg").string());
    CHECK(line.find("<polyline") != std::string::npos);
    CHECK(line.find("vision r8") != std::string::npos);

    write_scatter_svg((dir / "scatter.svg").string(), meta, "pca",
                      {{0.1, 0.2, "a"}, {-0.4, 0.9, "b"}, {0.0, 0.0, ""}});
    auto scatter = slurp((dir / "scatter.svg").string());
    CHECK(scatter.find("<circle") != std::string::npos);

    // identical inputs reproduce identical bytes
    write_heatmap_svg((dir / "heat2.svg").string(), meta, grid, 8, "glyph");
    CHECK(slurp((dir / "heat2.svg").string()) == heat);

    std::filesystem::remove_all(dir);
}
