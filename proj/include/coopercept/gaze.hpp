#pragma once

#include <optional>
#include <vector>

#include "coopercept/image.hpp"

namespace coopercept::gaze {

// Telescoping geometry between the eye-tracking screen (x0,y0) and the
// in-vehicle camera frame (x1,y1). Offsets and marker radius are the Eq-2
// constants, configurable.
struct ScreenGeometry {
    double source_w = 1920.0;
    double source_h = 1080.0;
    double target_w = 480.0;
    double target_h = 270.0;
    double x_offset = 480.0;
    double y_offset = 10.0;
    double marker_radius = 35.0;

    int crop_side() const;  // always 2 * marker_radius
    void validate() const;
};

struct GazePoint {
    double utc_ms = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct CropBox {
    double x_min = 0.0;
    double x_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double center_x() const { return (x_min + x_max) / 2.0; }
    double center_y() const { return (y_min + y_max) / 2.0; }
};

struct GazeMapping {
    double center_x = 0.0;
    double center_y = 0.0;
    CropBox box;
};

// x_j = (x_i - x_offset) * x1 / (x0 - x1) +- marker_radius * x1 / (2 * x0),
// same for y. Returns nullopt when the box lands fully outside the target
// frame; such frames are skipped, never clamped.
std::optional<GazeMapping> map_gaze(const GazePoint& g, const ScreenGeometry& geom);

// Linear interpolation of the gaze series at each frame time. Frames outside
// the gaze time range are dropped.
std::vector<GazePoint> resample_gaze(const std::vector<GazePoint>& series,
                                     const std::vector<double>& frame_times_ms);

// crop_side x crop_side patch centered at the rounded gaze position,
// edge-clamped so the patch is always full size.
ImageBuffer crop_patch(const ImageBuffer& frame, const GazePoint& g, const ScreenGeometry& geom);

}  // namespace coopercept::gaze
