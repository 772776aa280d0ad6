#include "glyphlm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "glyphlm/errors.hpp"

namespace glyphlm {

std::string format_number(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<std::string> ArtifactMeta::comment_lines() const {
    return {"# config_digest=" + config_digest, "# seed=" + std::to_string(seed), "# version=" + version};
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write artifact: " + path);
    return out;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

void svg_open(std::ofstream& out, const ArtifactMeta& meta, int w, int h) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
        << w << " " << h << "\">\n";
    out << "<!-- config_digest=" << meta.config_digest << " seed=" << meta.seed << " version=" << meta.version
        << " -->\n";
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

void write_csv(const std::string& path, const ArtifactMeta& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    auto out = open_out(path);
    for (const auto& line : meta.comment_lines()) out << line << '\n';
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
    if (!out) throw IoError("failed writing csv: " + path);
}

namespace {
template <typename F>
void heatmap_impl(const std::string& path, const ArtifactMeta& meta, const std::vector<F>& grid, int r,
                  const std::string& title) {
    if (int(grid.size()) != r * r) throw ShapeError("heatmap: grid size mismatch");
    const int cell = 24, margin = 28;
    const int w = r * cell + 2 * margin, h = r * cell + 2 * margin + 16;
    auto out = open_out(path);
    svg_open(out, meta, w, h);
    out << "<text x=\"" << margin << "\" y=\"18\" font-family=\"monospace\" font-size=\"12\">" << xml_escape(title)
        << "</text>\n";
    for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
            const double v = std::clamp(double(grid[std::size_t(y) * std::size_t(r) + std::size_t(x)]), 0.0, 1.0);
            const int lum = int(std::lround(v * 255.0));
            out << "<rect x=\"" << margin + x * cell << "\" y=\"" << margin + 16 + y * cell << "\" width=\"" << cell
                << "\" height=\"" << cell << "\" fill=\"rgb(" << lum << "," << lum << "," << lum
                << ")\" stroke=\"#333\" stroke-width=\"0.5\"/>\n";
        }
    out << "</svg>\n";
    if (!out) throw IoError("failed writing svg: " + path);
}
}  // namespace

void write_heatmap_svg(const std::string& path, const ArtifactMeta& meta, const std::vector<float>& grid,
                       int resolution, const std::string& title) {
    heatmap_impl(path, meta, grid, resolution, title);
}
void write_heatmap_svg(const std::string& path, const ArtifactMeta& meta, const std::vector<double>& grid,
                       int resolution, const std::string& title) {
    heatmap_impl(path, meta, grid, resolution, title);
}

void write_line_chart_svg(const std::string& path, const ArtifactMeta& meta, const std::string& title,
                          const std::string& x_label, const std::string& y_label, const std::vector<Series>& series) {
    const int w = 640, h = 420, ml = 64, mr = 150, mt = 36, mb = 48;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            }
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double px = (w - ml - mr) / (xmax - xmin);
    const double py = (h - mt - mb) / (ymax - ymin);
    auto sx = [&](double x) { return ml + (x - xmin) * px; };
    auto sy = [&](double y) { return h - mb - (y - ymin) * py; };

    auto out = open_out(path);
    svg_open(out, meta, w, h);
    out << "<text x=\"" << ml << "\" y=\"20\" font-family=\"monospace\" font-size=\"13\">" << xml_escape(title)
        << "</text>\n";
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\"" << h - mt - mb
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        out << "<text x=\"" << format_number(sx(xv)) << "\" y=\"" << h - mb + 16
            << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">" << format_number(xv)
            << "</text>\n";
        out << "<text x=\"" << ml - 6 << "\" y=\"" << format_number(sy(yv) + 3)
            << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">" << format_number(yv)
            << "</text>\n";
    }
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 10
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">" << xml_escape(x_label)
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << (mt + h - mb) / 2
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << (mt + h - mb) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

    int ci = 0;
    for (const auto& s : series) {
        const char* color = kPalette[ci % 8];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (auto [x, y] : s.points) out << format_number(sx(x)) << "," << format_number(sy(y)) << " ";
        out << "\"/>\n";
        for (auto [x, y] : s.points)
            out << "<circle cx=\"" << format_number(sx(x)) << "\" cy=\"" << format_number(sy(y))
                << "\" r=\"2.2\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << w - mr + 10 << "\" y=\"" << mt + 14 + 16 * ci
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\"" << color << "\">" << xml_escape(s.label)
            << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
    if (!out) throw IoError("failed writing svg: " + path);
}

void write_scatter_svg(const std::string& path, const ArtifactMeta& meta, const std::string& title,
                       const std::vector<ScatterPoint>& points) {
    const int w = 560, h = 560, margin = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& p : points) {
        if (first) {
            xmin = xmax = p.x;
            ymin = ymax = p.y;
            first = false;
        }
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (w - 2 * margin); };
    auto sy = [&](double y) { return h - margin - (y - ymin) / (ymax - ymin) * (h - 2 * margin); };

    auto out = open_out(path);
    svg_open(out, meta, w, h);
    out << "<text x=\"" << margin << "\" y=\"22\" font-family=\"monospace\" font-size=\"13\">" << xml_escape(title)
        << "</text>\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << w - 2 * margin << "\" height=\""
        << h - 2 * margin << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (const auto& p : points) {
        out << "<circle cx=\"" << format_number(sx(p.x)) << "\" cy=\"" << format_number(sy(p.y))
            << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
        if (!p.label.empty())
            out << "<text x=\"" << format_number(sx(p.x) + 4) << "\" y=\"" << format_number(sy(p.y) - 4)
                << "\" font-family=\"monospace\" font-size=\"10\">" << xml_escape(p.label) << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("failed writing svg: " + path);
}

}  // namespace glyphlm
