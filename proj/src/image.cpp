#include "uwie/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "uwie/common.hpp"

namespace uwie {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

void open_read(PngReader& r, std::FILE* f, const std::string& path) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path);
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw DataError("libpng init failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(r.png))) throw CorruptionError("corrupt PNG: " + path);
    png_init_io(r.png, f);
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);
}

}  // namespace

Image read_png_rgb(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path);
    PngReader r;
    open_read(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) throw CorruptionError("corrupt PNG: " + path);

    // Normalize whatever we get to 8-bit RGB.
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_palette_to_rgb(r.png);
    png_set_expand_gray_1_2_4_to_8(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);

    const int w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int h = static_cast<int>(png_get_image_height(r.png, r.info));
    if (png_get_channels(r.png, r.info) != 3 || png_get_bit_depth(r.png, r.info) != 8)
        throw FormatError("unsupported PNG layout: " + path);

    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    Image img(3, h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
    }
    png_read_end(r.png, nullptr);
    return img;
}

Image read_png_gray16(const std::string& path, double divisor) {
    if (divisor <= 0) throw InvalidInputError("divisor must be positive");
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path);
    PngReader r;
    open_read(r, f.get(), path);
    if (setjmp(png_jmpbuf(r.png))) throw CorruptionError("corrupt PNG: " + path);

    if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(r.png, r.info) != 16)
        throw FormatError("expected 16-bit grayscale PNG: " + path);
    png_read_update_info(r.png, r.info);

    const int w = static_cast<int>(png_get_image_width(r.png, r.info));
    const int h = static_cast<int>(png_get_image_height(r.png, r.info));
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
    Image img(1, h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(r.png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            // PNG is big-endian.
            unsigned v = (static_cast<unsigned>(row[2 * x]) << 8) | row[2 * x + 1];
            img.at(0, y, x) = v / divisor;
        }
    }
    png_read_end(r.png, nullptr);
    return img;
}

namespace {

void write_png(const std::string& path, int w, int h, int bit_depth, int color_type,
               const std::vector<std::vector<unsigned char>>& rows) {
    const std::string tmp = path + ".tmp";
    {
        FilePtr f(std::fopen(tmp.c_str(), "wb"));
        if (!f) throw DataError("cannot write " + tmp);
        PngWriter wr;
        wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!wr.png) throw DataError("libpng init failed");
        wr.info = png_create_info_struct(wr.png);
        if (!wr.info) throw DataError("libpng init failed");
        if (setjmp(png_jmpbuf(wr.png))) throw DataError("PNG write failed: " + path);
        png_init_io(wr.png, f.get());
        png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
                     bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(wr.png, wr.info);
        for (const auto& row : rows) png_write_row(wr.png, const_cast<unsigned char*>(row.data()));
        png_write_end(wr.png, nullptr);
    }
    std::filesystem::rename(tmp, path);
}

unsigned char quantize8(double v) {
    double q = std::nearbyint(std::min(1.0, std::max(0.0, v)) * 255.0);
    return static_cast<unsigned char>(q);
}

}  // namespace

void write_png_rgb(const std::string& path, const Image& img) {
    if (img.channels != 3) throw InvalidInputError("write_png_rgb expects 3 channels");
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)].resize(static_cast<std::size_t>(img.width) * 3);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x) * 3 + c] =
                    quantize8(img.at(c, y, x));
    }
    write_png(path, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, rows);
}

void write_png_gray16(const std::string& path, const Image& img, double divisor) {
    if (img.channels != 1) throw InvalidInputError("write_png_gray16 expects 1 channel");
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)].resize(static_cast<std::size_t>(img.width) * 2);
        for (int x = 0; x < img.width; ++x) {
            double raw = std::nearbyint(img.at(0, y, x) * divisor);
            unsigned v = static_cast<unsigned>(std::min(65535.0, std::max(0.0, raw)));
            rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x) * 2] =
                static_cast<unsigned char>(v >> 8);
            rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x) * 2 + 1] =
                static_cast<unsigned char>(v & 0xff);
        }
    }
    write_png(path, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

}  // namespace uwie
