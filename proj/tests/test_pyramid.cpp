#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "coopercept/error.hpp"
#include "coopercept/gaze.hpp"
#include "coopercept/pyramid.hpp"
#include "testutil.hpp"

using namespace coopercept;
using testutil::flat_image;
using testutil::random_image;

namespace {

// Straightforward double-precision pyramid, written independently of the
// library's separable float path.
struct NaiveImage {
    int w = 0, h = 0;
    std::vector<double> v;
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

NaiveImage naive_blur(const NaiveImage& in, double gain) {
    static const double tap[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    NaiveImage out{in.w, in.h, std::vector<double>(in.v.size())};
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    acc += tap[dx + 2] * tap[dy + 2] * in.at(reflect(x + dx, in.w), reflect(y + dy, in.h));
            out.at(x, y) = acc * gain;
        }
    return out;
}

NaiveImage naive_decimate(const NaiveImage& in) {
    NaiveImage out{(in.w + 1) / 2, (in.h + 1) / 2, {}};
    out.v.resize(static_cast<std::size_t>(out.w) * out.h);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(x, y) = in.at(2 * x, 2 * y);
    return out;
}

NaiveImage naive_upsample(const NaiveImage& in, int ow, int oh) {
    NaiveImage zeros{ow, oh, std::vector<double>(static_cast<std::size_t>(ow) * oh, 0.0)};
    for (int y = 0; y < in.h && 2 * y < oh; ++y)
        for (int x = 0; x < in.w && 2 * x < ow; ++x) zeros.at(2 * x, 2 * y) = in.at(x, y);
    return naive_blur(zeros, 4.0);
}

std::vector<NaiveImage> naive_gaussian(const NaiveImage& src) {
    std::vector<NaiveImage> levels = {src};
    do {
        levels.push_back(naive_decimate(naive_blur(levels.back(), 1.0)));
    } while (std::min(levels.back().w, levels.back().h) >= 8);
    return levels;
}

NaiveImage from_buffer(const ImageBuffer& img) {
    NaiveImage out{img.width, img.height, {}};
    out.v.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) out.v[i] = img.data[i];
    return out;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

}  // namespace

TEST_SUITE("pyramid") {

TEST_CASE("LoG continuous origin value is -1/(pi sigma^4)") {
    CHECK(pyr::log_continuous(0, 0, 1.0) == doctest::Approx(-1.0 / std::numbers::pi).margin(1e-12));
    for (double sigma : {0.8, 1.0, 1.4, 2.0})
        CHECK(pyr::log_continuous(0, 0, sigma) ==
              doctest::Approx(-1.0 / (std::numbers::pi * std::pow(sigma, 4))).margin(1e-12));
}

TEST_CASE("LoG continuous vanishes on the rho^2 = 2 sigma^2 circle") {
    const double sigma = 1.3;
    CHECK(pyr::log_continuous(sigma * std::numbers::sqrt2, 0.0, sigma) ==
          doctest::Approx(0.0).margin(1e-15));
    CHECK(pyr::log_continuous(sigma, sigma, sigma) == doctest::Approx(0.0).margin(1e-15));
}

TEST_CASE("discrete LoG table matches direct evaluation with mean subtraction") {
    const double sigma = 1.4;
    const int radius = 5;
    const pyr::LoGKernel k = pyr::log_kernel(sigma, radius);
    REQUIRE(k.side() == 11);
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) sum += pyr::log_continuous(dx, dy, sigma);
    const double mean = sum / 121.0;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            CHECK(k.at(dx, dy) ==
                  doctest::Approx(pyr::log_continuous(dx, dy, sigma) - mean).margin(1e-15));
}

TEST_CASE("LoG kernel rejects biasing truncation") {
    CHECK_THROWS_AS(pyr::log_kernel(1.4, 4), InvalidArgument);
    CHECK_THROWS_AS(pyr::log_kernel(0.0, 5), InvalidArgument);
    CHECK_NOTHROW(pyr::log_kernel(1.4, 5));
}

TEST_CASE("LoG kernel sums to nearly zero relative to its peak") {
    for (double sigma : {0.8, 1.0, 1.4, 2.0}) {
        const pyr::LoGKernel k =
            pyr::log_kernel(sigma, static_cast<int>(std::ceil(3.0 * sigma)));
        double sum = 0.0, peak = 0.0;
        for (double w : k.weights) {
            sum += w;
            peak = std::max(peak, std::abs(w));
        }
        CHECK(std::abs(sum) < 1e-6 * peak);
    }
}

TEST_CASE("smooth_patch of a constant image is zero") {
    const ImageBuffer img = flat_image(20, 16, 1, 200.0f);
    const ImageBuffer out = pyr::smooth_patch(img, pyr::log_kernel(1.4, 5));
    for (float v : out.data) CHECK(std::abs(v) < 1e-4f);
}

TEST_CASE("smooth_patch of an impulse reproduces the kernel") {
    ImageBuffer img = flat_image(13, 13, 1, 0.0f);
    img.at(6, 6) = 1.0f;
    const pyr::LoGKernel k = pyr::log_kernel(1.0, 3);
    const ImageBuffer out = pyr::smooth_patch(img, k);
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx)
            CHECK(out.at(6 + dx, 6 + dy) == doctest::Approx(k.at(dx, dy)).margin(1e-7));
}

TEST_CASE("smooth_patch step response crosses zero at the edge") {
    ImageBuffer img = flat_image(40, 9, 1, 50.0f);
    for (int y = 0; y < img.height; ++y)
        for (int x = 20; x < img.width; ++x) img.at(x, y) = 200.0f;
    const ImageBuffer out = pyr::smooth_patch(img, pyr::log_kernel(1.4, 5));
    const int row = 4;
    int flip = -1;
    for (int x = 14; x < 26; ++x)
        if (out.at(x, row) != 0.0f && out.at(x + 1, row) != 0.0f &&
            (out.at(x, row) > 0) != (out.at(x + 1, row) > 0)) {
            flip = x;
            break;
        }
    REQUIRE(flip >= 0);
    CHECK(std::abs(flip + 0.5 - 19.5) <= 1.0);
}

TEST_CASE("gaussian pyramid follows the ceil-halving schedule") {
    const auto p64 = pyr::build_gaussian_pyramid(flat_image(64, 64, 1, 1.0f));
    REQUIRE(p64.levels.size() == 5);
    const int want64[5] = {64, 32, 16, 8, 4};
    for (int i = 0; i < 5; ++i) {
        CHECK(p64.levels[i].width == want64[i]);
        CHECK(p64.levels[i].height == want64[i]);
    }
    const auto p70 = pyr::build_gaussian_pyramid(flat_image(70, 70, 1, 1.0f));
    REQUIRE(p70.levels.size() == 5);
    const int want70[5] = {70, 35, 18, 9, 5};
    for (int i = 0; i < 5; ++i) {
        CHECK(p70.levels[i].width == want70[i]);
        CHECK(p70.levels[i].height == want70[i]);
    }
}

TEST_CASE("gaussian pyramid preserves constants exactly") {
    const auto p = pyr::build_gaussian_pyramid(flat_image(48, 36, 3, 77.0f));
    for (const ImageBuffer& level : p.levels)
        for (float v : level.data) CHECK(v == 77.0f);
}

TEST_CASE("laplacian bands of a constant image vanish") {
    const auto p = pyr::build_laplacian_pyramid(flat_image(40, 40, 1, 123.0f));
    for (const ImageBuffer& band : p.bands)
        for (float v : band.data) CHECK(std::abs(v) < 1e-5f);
    for (float v : p.top.data) CHECK(v == doctest::Approx(123.0f).margin(1e-4));
}

TEST_CASE("round-trip reconstructs random unit-scale images within 1e-6") {
    const std::pair<int, int> dims[] = {{70, 70}, {480, 270}, {33, 51}, {97, 12}, {8, 8}};
    std::uint32_t seed = 1000;
    for (const auto& [w, h] : dims) {
        for (int ch : {1, 3}) {
            const ImageBuffer img = random_image(w, h, ch, seed++, 0.0f, 1.0f);
            const ImageBuffer back = pyr::reconstruct(pyr::build_laplacian_pyramid(img));
            CHECK(max_abs_diff(img, back) < 1e-6);
        }
    }
}

TEST_CASE("laplacian bands match an independent double-precision build") {
    const ImageBuffer img = random_image(33, 27, 1, 77, 0.0f, 1.0f);
    const auto lib = pyr::build_laplacian_pyramid(img);
    const auto gauss = naive_gaussian(from_buffer(img));
    REQUIRE(lib.bands.size() == gauss.size() - 1);
    for (std::size_t k = 0; k < lib.bands.size(); ++k) {
        const NaiveImage up = naive_upsample(gauss[k + 1], gauss[k].w, gauss[k].h);
        double max_diff = 0.0, lib_energy = 0.0, naive_energy = 0.0;
        for (int y = 0; y < gauss[k].h; ++y)
            for (int x = 0; x < gauss[k].w; ++x) {
                const double naive_band = gauss[k].at(x, y) - up.at(x, y);
                const double lib_band = lib.bands[k].at(x, y);
                max_diff = std::max(max_diff, std::abs(naive_band - lib_band));
                lib_energy += lib_band * lib_band;
                naive_energy += naive_band * naive_band;
            }
        CHECK(max_diff < 1e-5);
        CHECK(lib_energy == doctest::Approx(naive_energy).epsilon(1e-3));
    }
}

TEST_CASE("blend endpoints and midpoint follow the formula") {
    const ImageBuffer a = random_image(32, 24, 1, 1, 0.0f, 255.0f);
    const ImageBuffer b = random_image(32, 24, 1, 2, 0.0f, 255.0f);
    const auto la = pyr::build_laplacian_pyramid(a);
    const auto lb = pyr::build_laplacian_pyramid(b);
    for (float w : {1.0f, 0.0f, 0.5f}) {
        const auto gm = pyr::build_mask_pyramid(flat_image(32, 24, 1, w));
        const auto ls = pyr::blend_pyramids(la, lb, gm);
        for (std::size_t k = 0; k < ls.bands.size(); ++k)
            for (std::size_t i = 0; i < ls.bands[k].data.size(); ++i)
                CHECK(ls.bands[k].data[i] ==
                      doctest::Approx(w * la.bands[k].data[i] + (1 - w) * lb.bands[k].data[i])
                          .margin(1e-3));
        for (std::size_t i = 0; i < ls.top.data.size(); ++i)
            CHECK(ls.top.data[i] ==
                  doctest::Approx(w * la.top.data[i] + (1 - w) * lb.top.data[i]).margin(1e-3));
    }
}

TEST_CASE("blend rejects mismatched structures") {
    const auto la = pyr::build_laplacian_pyramid(flat_image(32, 24, 1, 1.0f));
    const auto lb = pyr::build_laplacian_pyramid(flat_image(24, 32, 1, 1.0f));
    const auto gm = pyr::build_mask_pyramid(flat_image(32, 24, 1, 0.5f));
    CHECK_THROWS_AS(pyr::blend_pyramids(la, lb, gm), ShapeMismatch);
}

TEST_CASE("reconstruct of zero bands returns the upsampled top") {
    auto p = pyr::build_laplacian_pyramid(flat_image(40, 30, 1, 99.0f));
    for (ImageBuffer& band : p.bands)
        for (float& v : band.data) v = 0.0f;
    const ImageBuffer out = pyr::reconstruct(p);
    for (float v : out.data) CHECK(v == doctest::Approx(99.0f).margin(1e-3));
}

TEST_CASE("reconstruct clamps to the display range at the end") {
    const ImageBuffer img = flat_image(32, 32, 1, 300.0f);
    const ImageBuffer out = pyr::reconstruct(pyr::build_laplacian_pyramid(img));
    for (float v : out.data) CHECK(v == 255.0f);
    const ImageBuffer neg = flat_image(32, 32, 1, -40.0f);
    const ImageBuffer out2 = pyr::reconstruct(pyr::build_laplacian_pyramid(neg));
    for (float v : out2.data) CHECK(v == 0.0f);
}

TEST_CASE("mask pyramid levels stay within [0,1]") {
    const ImageBuffer mask = testutil::disc_image(70, 70, 35.0, 35.0, 20.0, 1.0f, 0.0f);
    const auto gm = pyr::build_mask_pyramid(mask);
    for (const ImageBuffer& level : gm.levels)
        for (float v : level.data) {
            CHECK(v >= -1e-6f);
            CHECK(v <= 1.0f + 1e-6f);
        }
}

TEST_CASE("fuse_frame keeps far-field pixels within 2 intensity levels") {
    gaze::ScreenGeometry geom;
    geom.source_w = 320.0;
    geom.source_h = 240.0;
    geom.target_w = 160.0;
    geom.target_h = 120.0;
    geom.x_offset = 40.0;
    geom.y_offset = 10.0;
    geom.marker_radius = 35.0;

    ImageBuffer cam(160, 120, 3);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            cam.at(x, y, 0) = 60.0f + 0.5f * x;
            cam.at(x, y, 1) = 80.0f + 0.3f * y;
            cam.at(x, y, 2) = 90.0f + 0.2f * (x + y);
        }
    const double cx = 80.0, cy = 60.0;
    ImageBuffer patch = gaze::crop_patch(cam, gaze::GazePoint{0.0, cx, cy}, geom);
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x) {
            const double cover = std::clamp(35.0 - std::hypot(x - 35.0, y - 35.0) + 0.5, 0.0, 1.0);
            patch.at(x, y, 0) = static_cast<float>(cover * 220 + (1 - cover) * patch.at(x, y, 0));
            patch.at(x, y, 1) = static_cast<float>(cover * 38 + (1 - cover) * patch.at(x, y, 1));
            patch.at(x, y, 2) = static_cast<float>(cover * 38 + (1 - cover) * patch.at(x, y, 2));
        }
    const gaze::CropBox box{cx - 4.375, cx + 4.375, cy - 4.375, cy + 4.375};
    const auto fused = pyr::fuse_frame(cam, patch, box, geom);
    REQUIRE(fused.has_value());
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x)
            if (std::hypot(x - cx, y - cy) > 2.0 * geom.marker_radius)
                for (int c = 0; c < 3; ++c)
                    CHECK(std::abs(fused->at(x, y, c) - cam.at(x, y, c)) < 2.0f);
    // and the disc itself is visible at the center
    CHECK(fused->at(80, 60, 0) > 150.0f);
    CHECK(fused->at(80, 60, 1) < 90.0f);
}

TEST_CASE("fuse_frame with the patch equal to the underlying region is a no-op") {
    gaze::ScreenGeometry geom;
    geom.source_w = 320.0;
    geom.source_h = 240.0;
    geom.target_w = 160.0;
    geom.target_h = 120.0;
    geom.x_offset = 40.0;
    geom.y_offset = 10.0;
    geom.marker_radius = 35.0;
    const ImageBuffer cam = random_image(160, 120, 3, 9, 0.0f, 255.0f);
    const ImageBuffer patch = gaze::crop_patch(cam, gaze::GazePoint{0.0, 80.0, 60.0}, geom);
    const gaze::CropBox box{80.0 - 4.375, 80.0 + 4.375, 60.0 - 4.375, 60.0 + 4.375};
    const auto fused = pyr::fuse_frame(cam, patch, box, geom);
    REQUIRE(fused.has_value());
    CHECK(max_abs_diff(*fused, cam) < 0.01);
}

TEST_CASE("blend with an all-zero mask reproduces the B layer") {
    const ImageBuffer cam = random_image(64, 48, 1, 11, 0.0f, 255.0f);
    const ImageBuffer other = random_image(64, 48, 1, 12, 0.0f, 255.0f);
    const auto ls = pyr::blend_pyramids(pyr::build_laplacian_pyramid(other),
                                        pyr::build_laplacian_pyramid(cam),
                                        pyr::build_mask_pyramid(flat_image(64, 48, 1, 0.0f)));
    const ImageBuffer out = pyr::reconstruct(ls);
    CHECK(max_abs_diff(out, cam) < 1e-3);
}

TEST_CASE("fuse_frame signals an off-frame box") {
    gaze::ScreenGeometry geom;
    geom.source_w = 320.0;
    geom.source_h = 240.0;
    geom.target_w = 160.0;
    geom.target_h = 120.0;
    geom.marker_radius = 35.0;
    const ImageBuffer cam = flat_image(160, 120, 3, 50.0f);
    const ImageBuffer patch = flat_image(70, 70, 3, 200.0f);
    const gaze::CropBox box{-20.0, -10.0, 30.0, 40.0};
    CHECK_FALSE(pyr::fuse_frame(cam, patch, box, geom).has_value());
}

TEST_CASE("fuse_frame validates shapes") {
    gaze::ScreenGeometry geom;
    geom.source_w = 320.0;
    geom.source_h = 240.0;
    geom.target_w = 160.0;
    geom.target_h = 120.0;
    geom.marker_radius = 35.0;
    const gaze::CropBox box{70.0, 90.0, 50.0, 70.0};
    CHECK_THROWS_AS(
        pyr::fuse_frame(flat_image(100, 100, 3, 0.0f), flat_image(70, 70, 3, 0.0f), box, geom),
        ShapeMismatch);
    CHECK_THROWS_AS(
        pyr::fuse_frame(flat_image(160, 120, 3, 0.0f), flat_image(64, 64, 3, 0.0f), box, geom),
        ShapeMismatch);
}

TEST_CASE("upsample enforces the doubling contract") {
    const ImageBuffer img = flat_image(16, 16, 1, 1.0f);
    CHECK_NOTHROW(pyr::upsample(img, 32, 31));
    CHECK_THROWS_AS(pyr::upsample(img, 30, 32), ShapeMismatch);
    CHECK_THROWS_AS(pyr::upsample(img, 32, 34), ShapeMismatch);
}

}  // TEST_SUITE
