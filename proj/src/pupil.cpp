#include "coopercept/pupil.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "coopercept/error.hpp"

namespace coopercept::pupil {

namespace {

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

// Truncated-window box mean of a single-channel plane, via an integral image.
std::vector<double> box_mean(const std::vector<double>& src, int w, int h, int radius) {
    std::vector<double> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += src[static_cast<std::size_t>(y) * w + x];
            integral[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                integral[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    auto rect_sum = [&](int x0, int y0, int x1, int y1) {
        // inclusive corners
        return integral[static_cast<std::size_t>(y1 + 1) * (w + 1) + x1 + 1] -
               integral[static_cast<std::size_t>(y0) * (w + 1) + x1 + 1] -
               integral[static_cast<std::size_t>(y1 + 1) * (w + 1) + x0] +
               integral[static_cast<std::size_t>(y0) * (w + 1) + x0];
    };
    std::vector<double> out(src.size());
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            const double count = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
            out[static_cast<std::size_t>(y) * w + x] = rect_sum(x0, y0, x1, y1) / count;
        }
    }
    return out;
}

}  // namespace

void GuidedFilterParams::validate() const {
    if (window_radius < 1) throw InvalidArgument("guided filter window_radius must be >= 1");
    if (!(epsilon > 0.0)) throw InvalidArgument("guided filter epsilon must be > 0");
}

ImageBuffer guided_filter(const ImageBuffer& img, const GuidedFilterParams& p) {
    if (img.channels != 1) throw InvalidArgument("guided_filter expects a single-channel image");
    p.validate();
    const int w = img.width, h = img.height;
    const std::size_t n = img.data.size();
    std::vector<double> plane(n), plane_sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        plane[i] = img.data[i];
        plane_sq[i] = plane[i] * plane[i];
    }
    const std::vector<double> mean = box_mean(plane, w, h, p.window_radius);
    const std::vector<double> mean_sq = box_mean(plane_sq, w, h, p.window_radius);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double var = std::max(0.0, mean_sq[i] - mean[i] * mean[i]);
        a[i] = var / (var + p.epsilon);
        b[i] = (1.0 - a[i]) * mean[i];
    }
    const std::vector<double> mean_a = box_mean(a, w, h, p.window_radius);
    const std::vector<double> mean_b = box_mean(b, w, h, p.window_radius);
    ImageBuffer out(w, h, 1);
    for (std::size_t i = 0; i < n; ++i)
        out.data[i] = static_cast<float>(mean_a[i] * plane[i] + mean_b[i]);
    return out;
}

EdgeMap canny_edges(const ImageBuffer& img, double low, double high) {
    if (img.channels != 1) throw InvalidArgument("canny_edges expects a single-channel image");
    if (low < 0.0 || low >= high) throw InvalidArgument("canny thresholds require 0 <= low < high");
    const int w = img.width, h = img.height;
    auto px = [&](int x, int y) { return img.at(reflect101(x, w), reflect101(y, h)); };

    std::vector<float> mag(static_cast<std::size_t>(w) * h);
    std::vector<unsigned char> dir(mag.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float gx = -px(x - 1, y - 1) + px(x + 1, y - 1) - 2 * px(x - 1, y) +
                             2 * px(x + 1, y) - px(x - 1, y + 1) + px(x + 1, y + 1);
            const float gy = -px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1) +
                             px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1);
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            mag[i] = std::hypot(gx, gy);
            float angle = std::atan2(gy, gx) * 180.0f / std::numbers::pi_v<float>;
            if (angle < 0.0f) angle += 180.0f;
            dir[i] = static_cast<unsigned char>(static_cast<int>(angle / 45.0f + 0.5f) % 4);
        }
    }

    static constexpr int kNbr[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
    auto mag_at = [&](int x, int y) -> float {
        if (x < 0 || x >= w || y < 0 || y >= h) return 0.0f;
        return mag[static_cast<std::size_t>(y) * w + x];
    };

    EdgeMap out(w, h);
    std::vector<unsigned char> weak(mag.size(), 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const auto [dx, dy] = kNbr[dir[i]];
            const float m = mag[i];
            if (m < static_cast<float>(low)) continue;
            if (m < mag_at(x + dx, y + dy) || m < mag_at(x - dx, y - dy)) continue;
            if (m >= static_cast<float>(high)) {
                out.set(x, y, true);
                queue.emplace_back(x, y);
            } else {
                weak[i] = 1;
            }
        }
    }
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                if (weak[j] && !out.at(nx, ny)) {
                    out.set(nx, ny, true);
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    return out;
}

HoughCircle hough_circle(const EdgeMap& edges, int r_min, int r_max) {
    const int w = edges.width, h = edges.height;
    const int r_cap = std::min(w, h) / 2;
    if (r_min < 1 || r_min > r_max || r_max > r_cap)
        throw InvalidArgument("hough radius range requires 1 <= r_min <= r_max <= floor(min(w,h)/2)");

    std::vector<std::pair<int, int>> points;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (edges.at(x, y)) points.emplace_back(x, y);
    if (points.empty()) throw NoCircleFound("empty edge map");

    HoughCircle best;
    std::vector<long> acc(static_cast<std::size_t>(w) * h);
    std::vector<std::pair<int, int>> offsets;
    for (int r = r_min; r <= r_max; ++r) {
        offsets.clear();
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
                if (std::lround(std::hypot(static_cast<double>(dx), static_cast<double>(dy))) == r)
                    offsets.emplace_back(dx, dy);
        std::fill(acc.begin(), acc.end(), 0L);
        for (const auto& [ex, ey] : points) {
            for (const auto& [dx, dy] : offsets) {
                const int a = ex + dx, b = ey + dy;
                if (a >= 0 && a < w && b >= 0 && b < h) ++acc[static_cast<std::size_t>(b) * w + a];
            }
        }
        for (int b = 0; b < h; ++b) {
            for (int a = 0; a < w; ++a) {
                const long v = acc[static_cast<std::size_t>(b) * w + a];
                if (v > best.votes ||
                    (v == best.votes && r == best.r && (a < best.a || (a == best.a && b < best.b))))
                    best = HoughCircle{a, b, r, v};
            }
        }
    }
    if (best.votes == 0) throw NoCircleFound("no accumulator votes in radius range");
    return best;
}

PupilSample detect_pupil(const ImageBuffer& img, const PupilDetectOptions& opt, double utc_ms) {
    const ImageBuffer gray = img.channels == 1 ? img : to_gray(img);
    const ImageBuffer smooth = guided_filter(gray, opt.filter);
    const EdgeMap edges = canny_edges(smooth, opt.canny.low, opt.canny.high);
    const int r_max = opt.r_max > 0 ? opt.r_max : std::min(gray.width, gray.height) / 2;
    const HoughCircle c = hough_circle(edges, opt.r_min, r_max);
    return PupilSample{utc_ms, static_cast<double>(c.a), static_cast<double>(c.b),
                       std::numbers::pi * c.r * c.r};
}

gaze::GazePoint merge_eyes(const PupilSample& left, const PupilSample& right, double max_gap_ms) {
    if (std::abs(left.utc_ms - right.utc_ms) > max_gap_ms)
        throw TimestampGap("eye samples " + std::to_string(std::abs(left.utc_ms - right.utc_ms)) +
                           " ms apart exceed the " + std::to_string(max_gap_ms) + " ms sample period");
    return gaze::GazePoint{(left.utc_ms + right.utc_ms) / 2.0, (left.x + right.x) / 2.0,
                           (left.y + right.y) / 2.0};
}

}  // namespace coopercept::pupil
