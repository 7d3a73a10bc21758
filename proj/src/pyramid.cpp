#include "coopercept/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "coopercept/error.hpp"

namespace coopercept::pyr {

namespace {

constexpr float kTap[5] = {1.0f / 16, 4.0f / 16, 6.0f / 16, 4.0f / 16, 1.0f / 16};

int reflect101(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

ImageBuffer blur_axis(const ImageBuffer& img, bool horizontal, float gain) {
    ImageBuffer out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                float acc = 0.0f;
                for (int t = -2; t <= 2; ++t) {
                    const int sx = horizontal ? reflect101(x + t, img.width) : x;
                    const int sy = horizontal ? y : reflect101(y + t, img.height);
                    acc += kTap[t + 2] * img.at(sx, sy, c);
                }
                out.at(x, y, c) = acc * gain;
            }
        }
    }
    return out;
}

ImageBuffer decimate(const ImageBuffer& img) {
    const int w = (img.width + 1) / 2, h = (img.height + 1) / 2;
    ImageBuffer out(w, h, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(2 * x, 2 * y, c);
    return out;
}

ImageBuffer promote_to_rgb(const ImageBuffer& img) {
    ImageBuffer out(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y);
    return out;
}

}  // namespace

double log_continuous(double x, double y, double sigma) {
    const double rho2 = (x * x + y * y) / (2.0 * sigma * sigma);
    return -1.0 / (std::numbers::pi * sigma * sigma * sigma * sigma) * std::exp(-rho2) *
           (1.0 - rho2);
}

LoGKernel log_kernel(double sigma, int radius) {
    if (!(sigma > 0.0)) throw InvalidArgument("LoG sigma must be > 0");
    if (radius < static_cast<int>(std::ceil(3.0 * sigma)))
        throw InvalidArgument("LoG radius below ceil(3*sigma) would bias the kernel");
    LoGKernel k;
    k.sigma = sigma;
    k.radius = radius;
    const int side = k.side();
    k.weights.resize(static_cast<std::size_t>(side) * side);
    double sum = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double v = log_continuous(dx, dy, sigma);
            k.weights[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] = v;
            sum += v;
        }
    }
    const double mean = sum / static_cast<double>(side * side);
    for (double& w : k.weights) w -= mean;
    return k;
}

ImageBuffer smooth_patch(const ImageBuffer& patch, const LoGKernel& k) {
    ImageBuffer out(patch.width, patch.height, patch.channels);
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            for (int c = 0; c < patch.channels; ++c) {
                double acc = 0.0;
                for (int dy = -k.radius; dy <= k.radius; ++dy) {
                    const int sy = reflect101(y - dy, patch.height);
                    for (int dx = -k.radius; dx <= k.radius; ++dx) {
                        const int sx = reflect101(x - dx, patch.width);
                        acc += k.at(dx, dy) * patch.at(sx, sy, c);
                    }
                }
                out.at(x, y, c) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

ImageBuffer binomial_blur(const ImageBuffer& img) {
    return blur_axis(blur_axis(img, true, 1.0f), false, 1.0f);
}

ImageBuffer upsample(const ImageBuffer& img, int out_w, int out_h) {
    if (out_w != 2 * img.width && out_w != 2 * img.width - 1)
        throw ShapeMismatch("upsample width must be 2w or 2w-1");
    if (out_h != 2 * img.height && out_h != 2 * img.height - 1)
        throw ShapeMismatch("upsample height must be 2h or 2h-1");
    ImageBuffer zeros(out_w, out_h, img.channels);
    for (int y = 0; y < img.height; ++y) {
        if (2 * y >= out_h) break;
        for (int x = 0; x < img.width; ++x) {
            if (2 * x >= out_w) break;
            for (int c = 0; c < img.channels; ++c) zeros.at(2 * x, 2 * y, c) = img.at(x, y, c);
        }
    }
    return blur_axis(blur_axis(zeros, true, 2.0f), false, 2.0f);
}

GaussianPyramid build_gaussian_pyramid(const ImageBuffer& img) {
    if (std::min(img.width, img.height) < 2)
        throw InvalidArgument("pyramid needs min dimension >= 2");
    GaussianPyramid p;
    p.levels.push_back(img);
    do {
        p.levels.push_back(decimate(binomial_blur(p.levels.back())));
    } while (std::min(p.levels.back().width, p.levels.back().height) >= 8);
    return p;
}

LaplacianPyramid build_laplacian_pyramid(const ImageBuffer& img) {
    const GaussianPyramid g = build_gaussian_pyramid(img);
    LaplacianPyramid p;
    p.bands.reserve(g.levels.size() - 1);
    for (std::size_t k = 0; k + 1 < g.levels.size(); ++k) {
        const ImageBuffer& fine = g.levels[k];
        ImageBuffer up = upsample(g.levels[k + 1], fine.width, fine.height);
        ImageBuffer band(fine.width, fine.height, fine.channels);
        for (std::size_t i = 0; i < band.data.size(); ++i) band.data[i] = fine.data[i] - up.data[i];
        p.bands.push_back(std::move(band));
    }
    p.top = g.levels.back();
    return p;
}

MaskPyramid build_mask_pyramid(const ImageBuffer& mask) {
    GaussianPyramid g = build_gaussian_pyramid(mask);
    return MaskPyramid{std::move(g.levels)};
}

LaplacianPyramid blend_pyramids(const LaplacianPyramid& la, const LaplacianPyramid& lb,
                                const MaskPyramid& gm) {
    if (la.bands.size() != lb.bands.size() || gm.levels.size() != la.bands.size() + 1)
        throw ShapeMismatch("pyramid level counts differ");
    auto blend_level = [](const ImageBuffer& a, const ImageBuffer& b, const ImageBuffer& m) {
        if (!a.same_shape(b) || m.width != a.width || m.height != a.height || m.channels != 1)
            throw ShapeMismatch("pyramid level dimensions differ");
        ImageBuffer out(a.width, a.height, a.channels);
        for (int y = 0; y < a.height; ++y) {
            for (int x = 0; x < a.width; ++x) {
                const float w = m.at(x, y);
                for (int c = 0; c < a.channels; ++c)
                    out.at(x, y, c) = w * a.at(x, y, c) + (1.0f - w) * b.at(x, y, c);
            }
        }
        return out;
    };
    LaplacianPyramid out;
    out.bands.reserve(la.bands.size());
    for (std::size_t k = 0; k < la.bands.size(); ++k)
        out.bands.push_back(blend_level(la.bands[k], lb.bands[k], gm.levels[k]));
    out.top = blend_level(la.top, lb.top, gm.levels.back());
    return out;
}

ImageBuffer reconstruct(const LaplacianPyramid& ls) {
    ImageBuffer acc = ls.top;
    for (std::size_t k = ls.bands.size(); k-- > 0;) {
        const ImageBuffer& band = ls.bands[k];
        ImageBuffer up = upsample(acc, band.width, band.height);
        for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] += band.data[i];
        acc = std::move(up);
    }
    for (float& v : acc.data) v = std::clamp(v, 0.0f, 255.0f);
    return acc;
}

std::optional<ImageBuffer> fuse_frame(const ImageBuffer& camera, const ImageBuffer& patch,
                                      const gaze::CropBox& box, const gaze::ScreenGeometry& geom,
                                      bool literal_step6) {
    geom.validate();
    if (camera.width != static_cast<int>(geom.target_w) ||
        camera.height != static_cast<int>(geom.target_h))
        throw ShapeMismatch("camera frame size differs from target geometry");
    const int side = geom.crop_side();
    if (patch.width != side || patch.height != side)
        throw ShapeMismatch("patch must be crop_side x crop_side");
    if (box.x_max < 0.0 || box.x_min > geom.target_w || box.y_max < 0.0 || box.y_min > geom.target_h)
        return std::nullopt;

    const ImageBuffer base =
        (camera.channels == 1 && patch.channels == 3) ? promote_to_rgb(camera) : camera;
    const ImageBuffer& src =
        (patch.channels == 1 && base.channels == 3) ? promote_to_rgb(patch) : patch;

    const double cx = box.center_x(), cy = box.center_y();
    const int x0 = static_cast<int>(std::lround(cx)) - side / 2;
    const int y0 = static_cast<int>(std::lround(cy)) - side / 2;
    ImageBuffer canvas = base;
    for (int y = 0; y < side; ++y) {
        const int ty = y0 + y;
        if (ty < 0 || ty >= canvas.height) continue;
        for (int x = 0; x < side; ++x) {
            const int tx = x0 + x;
            if (tx < 0 || tx >= canvas.width) continue;
            for (int c = 0; c < canvas.channels; ++c) canvas.at(tx, ty, c) = src.at(x, y, c);
        }
    }

    ImageBuffer mask(canvas.width, canvas.height, 1);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            const double d = std::hypot(x - cx, y - cy);
            // half-pixel coverage ramp keeps the disc edge free of stair-stepping
            mask.at(x, y) = static_cast<float>(std::clamp(geom.marker_radius - d + 0.5, 0.0, 1.0));
        }
    }

    const LaplacianPyramid cam_pyr = build_laplacian_pyramid(base);
    const LaplacianPyramid gaze_pyr = build_laplacian_pyramid(canvas);
    const MaskPyramid gm = build_mask_pyramid(mask);
    const LaplacianPyramid blended = literal_step6 ? blend_pyramids(cam_pyr, gaze_pyr, gm)
                                                   : blend_pyramids(gaze_pyr, cam_pyr, gm);
    return reconstruct(blended);
}

}  // namespace coopercept::pyr
