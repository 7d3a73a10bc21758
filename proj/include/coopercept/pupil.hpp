#pragma once

#include "coopercept/gaze.hpp"
#include "coopercept/image.hpp"

namespace coopercept::pupil {

struct GuidedFilterParams {
    int window_radius = 4;
    double epsilon = 100.0;

    void validate() const;
};

struct CannyThresholds {
    double low = 50.0;
    double high = 150.0;
};

struct HoughCircle {
    int a = 0;
    int b = 0;
    int r = 0;
    long votes = 0;
};

struct PupilSample {
    double utc_ms = 0.0;
    double x = 0.0;
    double y = 0.0;
    double area = 0.0;  // pi * r^2
};

struct PupilDetectOptions {
    GuidedFilterParams filter;
    CannyThresholds canny;
    int r_min = 5;
    int r_max = 0;  // 0 = floor(min(width, height) / 2)
};

// Eq-1 style self-guided filter: per window a = var/(var+eps), b = (1-a)*mean,
// output averages a*I+b over every window covering the pixel. Windows are
// truncated at image borders.
ImageBuffer guided_filter(const ImageBuffer& img, const GuidedFilterParams& p);

// Sobel gradients, 4-direction non-maximum suppression, hysteresis linking.
// Thresholds apply to raw L2 gradient magnitude of a [0,255]-scale image.
EdgeMap canny_edges(const ImageBuffer& img, double low, double high);

// Exhaustive center/radius voting; an edge pixel votes for (a,b,r) when its
// rounded distance to (a,b) equals r. Ties: smaller r, then smaller a, then b.
HoughCircle hough_circle(const EdgeMap& edges, int r_min, int r_max);

PupilSample detect_pupil(const ImageBuffer& img, const PupilDetectOptions& opt, double utc_ms = 0.0);

// Averages both eyes' centers and timestamps; gap above max_gap_ms is a
// dropped-frame condition, not a pair.
gaze::GazePoint merge_eyes(const PupilSample& left, const PupilSample& right, double max_gap_ms = 117.0);

}  // namespace coopercept::pupil
