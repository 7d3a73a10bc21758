#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "coopercept/error.hpp"
#include "coopercept/pupil.hpp"
#include "testutil.hpp"

using namespace coopercept;
using testutil::disc_image;
using testutil::flat_image;
using testutil::midpoint_circle;

namespace {

// Sliding-window evaluation of the filter on a 1-D strip, kept deliberately
// naive as an oracle.
std::vector<double> guided_strip_oracle(const std::vector<double>& v, int radius, double eps) {
    const int n = static_cast<int>(v.size());
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - radius), hi = std::min(n - 1, i + radius);
        double mean = 0.0, sq = 0.0;
        for (int j = lo; j <= hi; ++j) {
            mean += v[j];
            sq += v[j] * v[j];
        }
        const int count = hi - lo + 1;
        mean /= count;
        const double var = sq / count - mean * mean;
        a[i] = var / (var + eps);
        b[i] = (1.0 - a[i]) * mean;
    }
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - radius), hi = std::min(n - 1, i + radius);
        double ma = 0.0, mb = 0.0;
        for (int j = lo; j <= hi; ++j) {
            ma += a[j];
            mb += b[j];
        }
        const int count = hi - lo + 1;
        out[i] = (ma / count) * v[i] + mb / count;
    }
    return out;
}

ImageBuffer strip_image(const std::vector<double>& v) {
    ImageBuffer img = flat_image(static_cast<int>(v.size()), 1, 1, 0.0f);
    for (std::size_t i = 0; i < v.size(); ++i) img.data[i] = static_cast<float>(v[i]);
    return img;
}

EdgeMap edge_map_from_points(int w, int h, const std::vector<std::pair<int, int>>& pts) {
    EdgeMap e;
    e.width = w;
    e.height = h;
    e.bits.assign(static_cast<std::size_t>(w) * h, 0);
    for (const auto& [x, y] : pts)
        if (x >= 0 && x < w && y >= 0 && y < h) e.set(x, y, true);
    return e;
}

// Exhaustive vote count over every (a, b, r) cell, same tie-break contract.
pupil::HoughCircle hough_brute_force(const EdgeMap& e, int r_min, int r_max) {
    std::vector<std::pair<int, int>> edges;
    for (int y = 0; y < e.height; ++y)
        for (int x = 0; x < e.width; ++x)
            if (e.at(x, y)) edges.emplace_back(x, y);
    pupil::HoughCircle best{0, 0, 0, 0};
    for (int r = r_min; r <= r_max; ++r)
        for (int b = 0; b < e.height; ++b)
            for (int a = 0; a < e.width; ++a) {
                long votes = 0;
                for (const auto& [x, y] : edges)
                    if (std::lround(std::hypot(x - a, y - b)) == r) ++votes;
                if (votes > best.votes ||
                    (votes == best.votes && votes > 0 && r == best.r &&
                     (a < best.a || (a == best.a && b < best.b))))
                    best = pupil::HoughCircle{a, b, r, votes};
            }
    return best;
}

}  // namespace

TEST_SUITE("pupil") {

TEST_CASE("guided filter keeps a constant image unchanged") {
    const ImageBuffer img = flat_image(16, 12, 1, 128.0f);
    const ImageBuffer out = pupil::guided_filter(img, pupil::GuidedFilterParams{});
    for (float v : out.data) CHECK(v == doctest::Approx(128.0f).epsilon(0));
}

TEST_CASE("guided filter approaches identity as epsilon vanishes") {
    const ImageBuffer img = testutil::random_image(24, 20, 1, 7, 0.0f, 255.0f);
    pupil::GuidedFilterParams p;
    p.window_radius = 2;
    p.epsilon = 1e-9;
    const ImageBuffer out = pupil::guided_filter(img, p);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-4));
}

TEST_CASE("guided filter matches the sliding-window strip oracle") {
    const std::vector<double> strip = {10, 10, 90, 90};
    pupil::GuidedFilterParams p;
    p.window_radius = 1;
    p.epsilon = 100.0;
    const ImageBuffer out = pupil::guided_filter(strip_image(strip), p);
    const std::vector<double> expect = guided_strip_oracle(strip, 1, 100.0);
    REQUIRE(expect.size() == out.data.size());
    // Hand arithmetic for the first pixel: window {10,10} has zero variance so
    // a=0, b=10; window {10,10,90} has variance 1422.22 so a=0.934307.
    CHECK(expect[0] == doctest::Approx(10.8759124).epsilon(1e-6));
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(expect[i]).epsilon(1e-5));
}

TEST_CASE("guided filter output stays inside the input range") {
    for (std::uint32_t seed : {1u, 2u, 3u}) {
        const ImageBuffer img = testutil::random_image(31, 17, 1, seed, 0.0f, 255.0f);
        pupil::GuidedFilterParams p;
        p.window_radius = 3;
        p.epsilon = 50.0;
        const ImageBuffer out = pupil::guided_filter(img, p);
        const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
        for (float v : out.data) {
            CHECK(v >= *lo - 1e-4f);
            CHECK(v <= *hi + 1e-4f);
        }
    }
}

TEST_CASE("guided filter rejects multi-channel input") {
    const ImageBuffer rgb = flat_image(8, 8, 3, 1.0f);
    CHECK_THROWS_AS(pupil::guided_filter(rgb, pupil::GuidedFilterParams{}), InvalidArgument);
}

TEST_CASE("canny on a uniform image finds nothing") {
    const EdgeMap e = pupil::canny_edges(flat_image(20, 20, 1, 77.0f), 50, 150);
    CHECK(e.count() == 0);
}

TEST_CASE("canny rejects low >= high") {
    const ImageBuffer img = flat_image(8, 8, 1, 0.0f);
    CHECK_THROWS_AS(pupil::canny_edges(img, 150, 150), InvalidArgument);
    CHECK_THROWS_AS(pupil::canny_edges(img, -1, 150), InvalidArgument);
}

TEST_CASE("canny localizes a vertical step edge") {
    ImageBuffer img = flat_image(32, 16, 1, 50.0f);
    for (int y = 0; y < img.height; ++y)
        for (int x = 16; x < img.width; ++x) img.at(x, y) = 200.0f;
    const EdgeMap e = pupil::canny_edges(img, 50, 150);
    CHECK(e.count() > 0);
    for (int y = 0; y < e.height; ++y)
        for (int x = 0; x < e.width; ++x)
            if (e.at(x, y)) CHECK((x >= 15 && x <= 17));
}

TEST_CASE("canny is invariant under constant intensity offset") {
    const ImageBuffer base = disc_image(48, 40, 23.0, 19.0, 11.0, 220.0f, 30.0f);
    ImageBuffer shifted = base;
    for (float& v : shifted.data) v += 25.0f;
    const EdgeMap a = pupil::canny_edges(base, 50, 150);
    const EdgeMap b = pupil::canny_edges(shifted, 50, 150);
    CHECK(a.bits == b.bits);
}

TEST_CASE("canny disc edge forms a closed ring near the true circle") {
    const double cx = 31.0, cy = 27.0, r = 12.0;
    const EdgeMap e = pupil::canny_edges(disc_image(64, 56, cx, cy, r, 230.0f, 40.0f), 50, 150);
    REQUIRE(e.count() > 0);
    std::vector<bool> sector(36, false);
    for (int y = 0; y < e.height; ++y)
        for (int x = 0; x < e.width; ++x)
            if (e.at(x, y)) {
                const double d = std::hypot(x - cx, y - cy);
                CHECK(std::abs(d - r) <= 1.5);
                const double ang = std::atan2(y - cy, x - cx) + std::numbers::pi;
                sector[std::min<std::size_t>(35, static_cast<std::size_t>(ang / (2 * std::numbers::pi) * 36))] = true;
            }
    for (bool hit : sector) CHECK(hit);
}

TEST_CASE("hough matches an exhaustive vote-count oracle") {
    const auto pts = midpoint_circle(50, 40, 12);
    const EdgeMap e = edge_map_from_points(128, 96, pts);
    const pupil::HoughCircle got = pupil::hough_circle(e, 5, 20);
    const pupil::HoughCircle want = hough_brute_force(e, 5, 20);
    CHECK(got.a == want.a);
    CHECK(got.b == want.b);
    CHECK(got.r == want.r);
    CHECK(got.votes == want.votes);
    CHECK(std::abs(got.a - 50) <= 1);
    CHECK(std::abs(got.b - 40) <= 1);
    CHECK(std::abs(got.r - 12) <= 1);
}

TEST_CASE("hough prefers the circle with more boundary points") {
    auto pts = midpoint_circle(40, 40, 10);
    const auto inner = midpoint_circle(40, 40, 5);
    pts.insert(pts.end(), inner.begin(), inner.end());
    const pupil::HoughCircle got = pupil::hough_circle(edge_map_from_points(96, 96, pts), 3, 15);
    CHECK(got.r == 10);
    CHECK(got.a == 40);
    CHECK(got.b == 40);
}

TEST_CASE("hough tie-break picks minimal radius then lexicographic center") {
    EdgeMap e = edge_map_from_points(24, 24, {{10, 10}});
    const pupil::HoughCircle got = pupil::hough_circle(e, 2, 5);
    CHECK(got.votes == 1);
    CHECK(got.r == 2);
    CHECK(got.a == 8);
    CHECK(got.b == 9);
}

TEST_CASE("hough validates the radius range") {
    const EdgeMap e = edge_map_from_points(32, 32, {{5, 5}});
    CHECK_THROWS_AS(pupil::hough_circle(e, 0, 4), InvalidArgument);
    CHECK_THROWS_AS(pupil::hough_circle(e, 8, 4), InvalidArgument);
    CHECK_THROWS_AS(pupil::hough_circle(e, 1, 17), InvalidArgument);
}

TEST_CASE("hough reports no circle on an empty edge map") {
    EdgeMap e;
    e.width = 16;
    e.height = 16;
    e.bits.assign(256, 0);
    CHECK_THROWS_AS(pupil::hough_circle(e, 2, 6), NoCircleFound);
}

TEST_CASE("hough recovers random noiseless circles within 1 px") {
    std::mt19937 rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        const int r = std::uniform_int_distribution<int>(5, 40)(rng);
        const int cx = std::uniform_int_distribution<int>(r + 2, 157 - r)(rng);
        const int cy = std::uniform_int_distribution<int>(r + 2, 117 - r)(rng);
        const EdgeMap e = edge_map_from_points(160, 120, midpoint_circle(cx, cy, r));
        const pupil::HoughCircle got = pupil::hough_circle(e, 5, 40);
        CHECK(std::abs(got.a - cx) <= 1);
        CHECK(std::abs(got.b - cy) <= 1);
        CHECK(std::abs(got.r - r) <= 1);
    }
}

TEST_CASE("detect_pupil reproduces the logged sample row") {
    const ImageBuffer eye = disc_image(1920, 1080, 945.955, 350.986, 9.2, 25.0f, 190.0f);
    pupil::PupilDetectOptions opt;
    opt.r_min = 5;
    opt.r_max = 15;
    const pupil::PupilSample s = pupil::detect_pupil(eye, opt, 1620436346002.0);
    CHECK(std::abs(s.x - 945.955) <= 1.0);
    CHECK(std::abs(s.y - 350.986) <= 1.0);
    const double r_back = std::sqrt(s.area / std::numbers::pi);
    CHECK(std::abs(r_back - 9.2) <= 1.0);
    CHECK(s.utc_ms == 1620436346002.0);
}

TEST_CASE("detect_pupil area is exactly pi r^2 of the returned radius") {
    const ImageBuffer eye = disc_image(96, 80, 48.0, 40.0, 11.0, 20.0f, 200.0f);
    pupil::PupilDetectOptions opt;
    opt.r_min = 5;
    opt.r_max = 20;
    const pupil::PupilSample s = pupil::detect_pupil(eye, opt);
    const long r = std::lround(std::sqrt(s.area / std::numbers::pi));
    CHECK(s.area == std::numbers::pi * static_cast<double>(r) * static_cast<double>(r));
}

TEST_CASE("detect_pupil on a blank frame reports no circle") {
    pupil::PupilDetectOptions opt;
    CHECK_THROWS_AS(pupil::detect_pupil(flat_image(64, 64, 1, 128.0f), opt), NoCircleFound);
}

TEST_CASE("detect_pupil survives a half-clipped disc at the corner") {
    const ImageBuffer eye = disc_image(96, 80, 2.0, 2.0, 10.0, 25.0f, 200.0f);
    pupil::PupilDetectOptions opt;
    opt.r_min = 5;
    opt.r_max = 20;
    const pupil::PupilSample s = pupil::detect_pupil(eye, opt);
    CHECK(std::abs(s.x - 2.0) <= 2.0);
    CHECK(std::abs(s.y - 2.0) <= 2.0);
}

TEST_CASE("merge_eyes averages centers and timestamps") {
    pupil::PupilSample l{1000.0, 940.0, 350.0, 250.0};
    pupil::PupilSample r{1002.0, 950.0, 354.0, 260.0};
    const gaze::GazePoint g = pupil::merge_eyes(l, r);
    CHECK(g.x == doctest::Approx(945.0));
    CHECK(g.y == doctest::Approx(352.0));
    CHECK(g.utc_ms == doctest::Approx(1001.0));
}

TEST_CASE("merge_eyes is idempotent on identical samples") {
    pupil::PupilSample s{5.0, 480.0, 270.0, 100.0};
    const gaze::GazePoint g = pupil::merge_eyes(s, s);
    CHECK(g.x == 480.0);
    CHECK(g.y == 270.0);
    CHECK(g.utc_ms == 5.0);
}

TEST_CASE("merge_eyes midpoint example") {
    pupil::PupilSample l{0.0, 0.0, 0.0, 1.0};
    pupil::PupilSample r{0.0, 960.0, 540.0, 1.0};
    const gaze::GazePoint g = pupil::merge_eyes(l, r);
    CHECK(g.x == 480.0);
    CHECK(g.y == 270.0);
}

TEST_CASE("merge_eyes rejects a timestamp gap beyond one sample period") {
    pupil::PupilSample l{0.0, 1.0, 1.0, 1.0};
    pupil::PupilSample r{118.0, 2.0, 2.0, 1.0};
    CHECK_THROWS_AS(pupil::merge_eyes(l, r), TimestampGap);
    CHECK_NOTHROW(pupil::merge_eyes(l, pupil::PupilSample{117.0, 2.0, 2.0, 1.0}));
}

}  // TEST_SUITE
