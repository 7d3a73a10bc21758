#include "coopercept/svg.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "coopercept/error.hpp"
#include "coopercept/util.hpp"

namespace coopercept::svg {

namespace {

const char* color_for(track::Source s) {
    switch (s) {
        case track::Source::gaze: return "#1f77b4";
        case track::Source::detector: return "#ff7f0e";
        case track::Source::fused: return "#2ca02c";
        case track::Source::ground_truth: return "#d62728";
    }
    return "#333333";
}

}  // namespace

void write_trajectory_svg(const std::filesystem::path& path,
                          const std::vector<track::Trajectory>& trajectories) {
    constexpr double kWidth = 800.0, kHeight = 500.0, kMargin = 40.0;

    double min_x = 0.0, max_x = 1.0, min_y = 0.0, max_y = 1.0;
    bool first = true;
    for (const auto& t : trajectories) {
        for (const auto& p : t.points) {
            if (first) {
                min_x = max_x = p.x;
                min_y = max_y = p.y;
                first = false;
            }
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    }
    const double span_x = std::max(1e-9, max_x - min_x);
    const double span_y = std::max(1e-9, max_y - min_y);
    const double scale = std::min((kWidth - 2 * kMargin) / span_x, (kHeight - 2 * kMargin) / span_y);
    auto sx = [&](double x) { return kMargin + (x - min_x) * scale; };
    auto sy = [&](double y) { return kMargin + (y - min_y) * scale; };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    int legend_row = 0;
    for (const auto& t : trajectories) {
        if (t.points.empty()) continue;
        out << "  <polyline fill=\"none\" stroke=\"" << color_for(t.source)
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < t.points.size(); ++i) {
            if (i) out << ' ';
            out << format_fixed(sx(t.points[i].x), 2) << ',' << format_fixed(sy(t.points[i].y), 2);
        }
        out << "\"/>\n";
        const double ly = kMargin / 2.0 + 14.0 * legend_row++;
        out << "  <line x1=\"" << kWidth - 170 << "\" y1=\"" << format_fixed(ly, 2) << "\" x2=\""
            << kWidth - 150 << "\" y2=\"" << format_fixed(ly, 2) << "\" stroke=\""
            << color_for(t.source) << "\" stroke-width=\"2\"/>\n";
        out << "  <text x=\"" << kWidth - 144 << "\" y=\"" << format_fixed(ly + 4.0, 2)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << track::source_name(t.source)
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace coopercept::svg
