#include "coopercept/gaze.hpp"

#include <algorithm>
#include <cmath>

#include "coopercept/error.hpp"

namespace coopercept::gaze {

int ScreenGeometry::crop_side() const { return static_cast<int>(std::lround(2.0 * marker_radius)); }

void ScreenGeometry::validate() const {
    if (source_w <= 0 || source_h <= 0 || target_w <= 0 || target_h <= 0 || x_offset < 0 ||
        y_offset < 0 || marker_radius <= 0)
        throw InvalidArgument("screen geometry values must be positive");
    if (source_w == target_w || source_h == target_h)
        throw InvalidArgument("telescoping denominators require source and target sizes to differ");
}

std::optional<GazeMapping> map_gaze(const GazePoint& g, const ScreenGeometry& geom) {
    geom.validate();
    if (g.x < 0 || g.x > geom.source_w || g.y < 0 || g.y > geom.source_h)
        throw InvalidArgument("gaze point outside the source screen");
    const double sx = geom.target_w / (geom.source_w - geom.target_w);
    const double sy = geom.target_h / (geom.source_h - geom.target_h);
    const double hx = geom.marker_radius * geom.target_w / (2.0 * geom.source_w);
    const double hy = geom.marker_radius * geom.target_h / (2.0 * geom.source_h);
    GazeMapping m;
    m.center_x = (g.x - geom.x_offset) * sx;
    m.center_y = (g.y - geom.y_offset) * sy;
    m.box = CropBox{m.center_x - hx, m.center_x + hx, m.center_y - hy, m.center_y + hy};
    const bool off_screen = m.box.x_max < 0.0 || m.box.x_min > geom.target_w ||
                            m.box.y_max < 0.0 || m.box.y_min > geom.target_h;
    if (off_screen) return std::nullopt;
    return m;
}

std::vector<GazePoint> resample_gaze(const std::vector<GazePoint>& series,
                                     const std::vector<double>& frame_times_ms) {
    if (series.size() < 2) throw InvalidArgument("gaze resampling needs at least 2 samples");
    for (std::size_t i = 1; i < series.size(); ++i)
        if (series[i].utc_ms <= series[i - 1].utc_ms)
            throw InvalidArgument("gaze series timestamps must be strictly increasing");
    for (std::size_t i = 1; i < frame_times_ms.size(); ++i)
        if (frame_times_ms[i] <= frame_times_ms[i - 1])
            throw InvalidArgument("frame timestamps must be strictly increasing");

    std::vector<GazePoint> out;
    out.reserve(frame_times_ms.size());
    std::size_t hi = 1;
    for (double t : frame_times_ms) {
        if (t < series.front().utc_ms || t > series.back().utc_ms) continue;
        while (series[hi].utc_ms < t) ++hi;
        const GazePoint& a = series[hi - 1];
        const GazePoint& b = series[hi];
        const double w = (t - a.utc_ms) / (b.utc_ms - a.utc_ms);
        out.push_back(GazePoint{t, a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)});
    }
    return out;
}

ImageBuffer crop_patch(const ImageBuffer& frame, const GazePoint& g, const ScreenGeometry& geom) {
    const int side = geom.crop_side();
    const int cx = static_cast<int>(std::lround(g.x));
    const int cy = static_cast<int>(std::lround(g.y));
    const int x0 = cx - side / 2;
    const int y0 = cy - side / 2;
    ImageBuffer out(side, side, frame.channels);
    for (int y = 0; y < side; ++y) {
        const int sy = std::clamp(y0 + y, 0, frame.height - 1);
        for (int x = 0; x < side; ++x) {
            const int sx = std::clamp(x0 + x, 0, frame.width - 1);
            for (int c = 0; c < frame.channels; ++c) out.at(x, y, c) = frame.at(sx, sy, c);
        }
    }
    return out;
}

}  // namespace coopercept::gaze
