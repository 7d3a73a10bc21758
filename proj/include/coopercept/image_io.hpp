#pragma once

#include <filesystem>

#include "coopercept/image.hpp"

namespace coopercept::io {

// Reads a PGM (P2/P5) or PNG file. PNG gray/gray+alpha/palette/RGB/RGBA are
// all accepted; alpha is dropped. Values come back on the [0,255] scale.
ImageBuffer read_image(const std::filesystem::path& p);

// read_image + luminance conversion when the file is color.
ImageBuffer read_gray(const std::filesystem::path& p);

// Writes 8-bit PGM (1 channel, binary P5).
void write_pgm(const std::filesystem::path& p, const ImageBuffer& img);

// Writes 8-bit PNG, grayscale or RGB depending on channel count. Values are
// rounded and clamped to [0,255].
void write_png(const std::filesystem::path& p, const ImageBuffer& img);

// Dispatches on extension (.pgm / .png).
void write_image(const std::filesystem::path& p, const ImageBuffer& img);

}  // namespace coopercept::io
