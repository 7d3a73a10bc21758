#pragma once

#include <optional>
#include <vector>

#include "coopercept/gaze.hpp"
#include "coopercept/image.hpp"

namespace coopercept::pyr {

struct LoGKernel {
    double sigma = 1.4;
    int radius = 5;
    std::vector<double> weights;  // (2*radius+1)^2, row-major, zero-sum

    int side() const { return 2 * radius + 1; }
    double at(int dx, int dy) const {
        return weights[static_cast<std::size_t>(dy + radius) * side() + (dx + radius)];
    }
};

struct GaussianPyramid {
    std::vector<ImageBuffer> levels;  // level 0 = source
};

struct LaplacianPyramid {
    std::vector<ImageBuffer> bands;  // detail per level, finest first
    ImageBuffer top;                 // coarsest gaussian level
};

struct MaskPyramid {
    std::vector<ImageBuffer> levels;  // [0,1] weights, one per blended level
};

// Continuous LoG(x, y) = -(1/(pi sigma^4)) e^(-(x^2+y^2)/(2 sigma^2)) (1 - (x^2+y^2)/(2 sigma^2)).
double log_continuous(double x, double y, double sigma);

// Samples the continuous kernel on the integer grid, then mean-subtracts so
// the discrete weights sum to zero. radius below ceil(3*sigma) would bias the
// kernel and is rejected.
LoGKernel log_kernel(double sigma, int radius);

// True convolution (kernel flipped) with reflect-101 borders, per channel.
ImageBuffer smooth_patch(const ImageBuffer& patch, const LoGKernel& k);

// Separable 5x5 binomial (1,4,6,4,1)/16 blur with reflect-101 borders.
ImageBuffer binomial_blur(const ImageBuffer& img);

// Zero-insertion upsample to (out_w, out_h) followed by the binomial blur with
// x4 gain; inverse step of the blur+decimate schedule.
ImageBuffer upsample(const ImageBuffer& img, int out_w, int out_h);

// Blur + decimate-by-2 (ceil for odd dims) until min dimension < 8; at least
// one decimation, so every pyramid has >= 2 levels.
GaussianPyramid build_gaussian_pyramid(const ImageBuffer& img);

LaplacianPyramid build_laplacian_pyramid(const ImageBuffer& img);

// Gaussian pyramid of a [0,1] mask with one level per blended level
// (bands plus top).
MaskPyramid build_mask_pyramid(const ImageBuffer& mask);

// LS = GM * LA + (1 - GM) * LB per pixel and level, top included.
LaplacianPyramid blend_pyramids(const LaplacianPyramid& la, const LaplacianPyramid& lb,
                                const MaskPyramid& gm);

// Upsample-and-add from the top down; clamps to [0,255] at the final stage only.
ImageBuffer reconstruct(const LaplacianPyramid& ls);

// Pastes the patch on a camera-sized canvas centered on the crop box, builds a
// marker_radius disc mask there, and pyramid-blends. The mask weight goes to
// the gaze layer by default; literal_step6 weights the camera layer instead,
// exactly as the published step 6 reads. Returns nullopt for an off-frame box.
std::optional<ImageBuffer> fuse_frame(const ImageBuffer& camera, const ImageBuffer& patch,
                                      const gaze::CropBox& box, const gaze::ScreenGeometry& geom,
                                      bool literal_step6 = false);

}  // namespace coopercept::pyr
