#pragma once

#include <cstdint>
#include <vector>

namespace coopercept {

// 2-D raster of pixel intensities, row-major, channel-interleaved. Intensity
// convention: 8-bit-scale values live in [0,255], normalized values in [0,1];
// conversion between the two is always explicit (to_unit / to_byte_scale).
// Laplacian bands reuse the same container with signed values.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, float fill = 0.0f);

    float& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const ImageBuffer& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Explicit scale conversions.
ImageBuffer to_unit(const ImageBuffer& img);        // [0,255] -> [0,1]
ImageBuffer to_byte_scale(const ImageBuffer& img);  // [0,1] -> [0,255]

// 3-channel -> 1-channel luminance (Rec. 601 weights); 1-channel passes through.
ImageBuffer to_gray(const ImageBuffer& img);

// Binary boundary-point mask produced by edge detection.
struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 1 = boundary point

    EdgeMap() = default;
    EdgeMap(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::uint8_t v = 1) { bits[static_cast<std::size_t>(y) * width + x] = v; }
    std::size_t count() const;
};

}  // namespace coopercept
