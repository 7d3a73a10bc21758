#include "coopercept/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "coopercept/error.hpp"

namespace coopercept::io {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

int next_pnm_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments between tokens.
    for (;;) {
        int c = in.peek();
        if (c == EOF) throw ParseError(path, 0, "unexpected end of PNM header");
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string dummy;
            std::getline(in, dummy);
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) throw ParseError(path, 0, "malformed PNM header");
    return v;
}

ImageBuffer read_pgm(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + p.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || (magic[1] != '2' && magic[1] != '5'))
        throw ParseError(p.string(), 1, "not a PGM file (expected P2 or P5)");
    const bool binary = magic[1] == '5';
    int w = next_pnm_int(in, p.string());
    int h = next_pnm_int(in, p.string());
    int maxval = next_pnm_int(in, p.string());
    if (maxval <= 0 || maxval > 255)
        throw ParseError(p.string(), 1, "unsupported PGM maxval " + std::to_string(maxval));
    ImageBuffer img(w, h, 1);
    if (binary) {
        in.get();  // single whitespace after maxval
        std::vector<unsigned char> row(static_cast<std::size_t>(w));
        for (int y = 0; y < h; ++y) {
            in.read(reinterpret_cast<char*>(row.data()), w);
            if (!in) throw ParseError(p.string(), 0, "truncated PGM pixel data");
            for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(row[x]);
        }
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(next_pnm_int(in, p.string()));
    }
    return img;
}

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* f = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

ImageBuffer read_png_file(const std::filesystem::path& p) {
    PngReadCloser ctx;
    ctx.f = std::fopen(p.string().c_str(), "rb");
    if (!ctx.f) throw IoError("cannot open image: " + p.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, ctx.f) != 8 || png_sig_cmp(sig, 0, 8))
        throw ParseError(p.string(), 1, "not a PNG file");
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw IoError("libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw ParseError(p.string(), 0, "corrupt PNG data");
    png_init_io(ctx.png, ctx.f);
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    png_get_IHDR(ctx.png, ctx.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (bit_depth == 16) png_set_strip_16(ctx.png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    int channels = png_get_channels(ctx.png, ctx.info);
    if (channels != 1 && channels != 3)
        throw ParseError(p.string(), 0, "unsupported PNG channel count " + std::to_string(channels));

    ImageBuffer img(static_cast<int>(w), static_cast<int>(h), channels);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(ctx.png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w * static_cast<png_uint_32>(channels); ++x)
            img.data[static_cast<std::size_t>(y) * w * channels + x] = static_cast<float>(row[x]);
    }
    png_read_end(ctx.png, nullptr);
    return img;
}

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* f = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};

unsigned char quantize(float v) {
    return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

ImageBuffer read_image(const std::filesystem::path& p) {
    const std::string ext = lower_ext(p);
    if (ext == ".pgm" || ext == ".pnm") return read_pgm(p);
    if (ext == ".png") return read_png_file(p);
    throw InvalidArgument("unsupported image extension '" + ext + "' for " + p.string());
}

ImageBuffer read_gray(const std::filesystem::path& p) { return to_gray(read_image(p)); }

void write_pgm(const std::filesystem::path& p, const ImageBuffer& img) {
    if (img.channels != 1) throw InvalidArgument("write_pgm needs a single-channel image");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + p.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) row[x] = quantize(img.at(x, y));
        out.write(reinterpret_cast<const char*>(row.data()), img.width);
    }
}

void write_png(const std::filesystem::path& p, const ImageBuffer& img) {
    PngWriteCloser ctx;
    ctx.f = std::fopen(p.string().c_str(), "wb");
    if (!ctx.f) throw IoError("cannot write image: " + p.string());
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw IoError("libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("PNG encode failed for " + p.string());
    png_init_io(ctx.png, ctx.f);
    const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] = quantize(img.data[static_cast<std::size_t>(y) * row.size() + i]);
        png_write_row(ctx.png, row.data());
    }
    png_write_end(ctx.png, nullptr);
}

void write_image(const std::filesystem::path& p, const ImageBuffer& img) {
    const std::string ext = lower_ext(p);
    if (ext == ".pgm") {
        write_pgm(p, img);
    } else if (ext == ".png") {
        write_png(p, img);
    } else {
        throw InvalidArgument("unsupported image extension '" + ext + "' for " + p.string());
    }
}

}  // namespace coopercept::io
