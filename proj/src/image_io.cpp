#include "wsciss/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "wsciss/errors.hpp"

namespace wsciss::io {
namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const std::filesystem::path& path, int width, int height, png_uint_32 format,
               const std::vector<std::uint8_t>& buffer) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = format;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        throw IoError("cannot write '" + path.string() + "': " + img.message);
    }
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& width,
                                   int& height) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw IoError("cannot read '" + path.string() + "': " + img.message);
    }
    img.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&img);
        throw IoError("cannot decode '" + path.string() + "': " + img.message);
    }
    width = static_cast<int>(img.width);
    height = static_cast<int>(img.height);
    return buffer;
}

}  // namespace

void write_image_png(const std::filesystem::path& path, const Image& image) {
    const int h = image.height();
    const int w = image.width();
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.pixels()(c, y, x));
            }
        }
    }
    write_png(path, w, h, PNG_FORMAT_RGB, buf);
}

Image read_image_png(const std::filesystem::path& path, const std::string& id) {
    int w = 0, h = 0;
    auto buf = read_png(path, PNG_FORMAT_RGB, w, h);
    Tensor3 px(3, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                px(c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
            }
        }
    }
    return Image(std::move(px), id);
}

void write_mask_png(const std::filesystem::path& path, const HardLabelMap& mask) {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(mask.size()));
    for (int i = 0; i < mask.size(); ++i) {
        const int v = mask[i];
        if (v == kIgnore) {
            buf[static_cast<std::size_t>(i)] = kMaskIgnoreByte;
        } else if (v < 0 || v >= kMaskIgnoreByte) {
            throw ValidationError("mask label " + std::to_string(v) + " does not fit in 8 bits");
        } else {
            buf[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
        }
    }
    write_png(path, mask.width(), mask.height(), PNG_FORMAT_GRAY, buf);
}

HardLabelMap read_mask_png(const std::filesystem::path& path) {
    int w = 0, h = 0;
    auto buf = read_png(path, PNG_FORMAT_GRAY, w, h);
    std::vector<int> labels(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        labels[i] = buf[i] == kMaskIgnoreByte ? kIgnore : static_cast<int>(buf[i]);
    }
    return HardLabelMap(h, w, std::move(labels));
}

Image quantize_8bit(const Image& image) {
    Tensor3 px = image.pixels();
    for (double& v : px.values()) v = to_byte(v) / 255.0;
    return Image(std::move(px), image.id());
}

}  // namespace wsciss::io
