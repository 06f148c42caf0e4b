#pragma once

#include <string>
#include <vector>

namespace uwie {

// Planar (channel, row, col) image. Pixel values are kept in double: the
// formation model is algebraically inverted in tests and float32 would not
// survive the 1/T amplification. Disk formats quantize to 8/16 bit anyway.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;  // channels*height*width, CHW

    Image() = default;
    Image(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// 8-bit RGB PNG -> [0,1] image with 3 channels.
Image read_png_rgb(const std::string& path);

// Single-channel 16-bit PNG -> values raw/divisor (e.g. divisor 1000 for
// millimeter-encoded depth in meters).
Image read_png_gray16(const std::string& path, double divisor);

// [0,1] 3-channel image -> 8-bit RGB PNG. Writes to a temp file in the same
// directory and renames, so readers never observe a partial file.
void write_png_rgb(const std::string& path, const Image& img);

// Depth map (meters) -> 16-bit single-channel PNG, raw = round(value*divisor).
void write_png_gray16(const std::string& path, const Image& img, double divisor);

}  // namespace uwie
