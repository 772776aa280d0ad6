#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glyphlm {

/// Six significant digits, round-half-even (the %g path of the C runtime
/// under the default rounding mode). All CSV/SVG numbers go through this so
/// artifact bytes are reproducible.
std::string format_number(double v);

/// Key/value lines every artifact embeds (config digest, seed, version).
struct ArtifactMeta {
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string version;

    std::vector<std::string> comment_lines() const;
};

/// CSV with `# key=value` comment lines, then a header row, then data rows.
void write_csv(const std::string& path, const ArtifactMeta& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Grayscale heatmap of an R x R luminance grid.
void write_heatmap_svg(const std::string& path, const ArtifactMeta& meta, const std::vector<float>& grid,
                       int resolution, const std::string& title);
void write_heatmap_svg(const std::string& path, const ArtifactMeta& meta, const std::vector<double>& grid,
                       int resolution, const std::string& title);

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

void write_line_chart_svg(const std::string& path, const ArtifactMeta& meta, const std::string& title,
                          const std::string& x_label, const std::string& y_label, const std::vector<Series>& series);

struct ScatterPoint {
    double x, y;
    std::string label;  // drawn next to the point when non-empty
};

void write_scatter_svg(const std::string& path, const ArtifactMeta& meta, const std::string& title,
                       const std::vector<ScatterPoint>& points);

}  // namespace glyphlm
