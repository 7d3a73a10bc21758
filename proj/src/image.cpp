#include "coopercept/image.hpp"

#include <algorithm>
#include <string>

#include "coopercept/error.hpp"

namespace coopercept {

ImageBuffer::ImageBuffer(int w, int h, int c, float fill) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1)
        throw InvalidArgument("image dimensions must be >= 1, got " + std::to_string(w) + "x" +
                              std::to_string(h));
    if (c != 1 && c != 3)
        throw InvalidArgument("image must have 1 or 3 channels, got " + std::to_string(c));
    data.assign(static_cast<std::size_t>(w) * h * c, fill);
}

ImageBuffer to_unit(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (auto& v : out.data) v /= 255.0f;
    return out;
}

ImageBuffer to_byte_scale(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (auto& v : out.data) v *= 255.0f;
    return out;
}

ImageBuffer to_gray(const ImageBuffer& img) {
    if (img.channels == 1) return img;
    ImageBuffer out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) +
                           0.114f * img.at(x, y, 2);
    return out;
}

std::size_t EdgeMap::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

}  // namespace coopercept
