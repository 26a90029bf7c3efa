#include "dtn/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

#include "dtn/errors.hpp"

namespace dtn::png {
namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void write(const std::filesystem::path& file, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw UsageError("png::write: channels must be 1 or 3");
    FilePtr fp(std::fopen(file.string().c_str(), "wb"));
    if (!fp) throw std::runtime_error("png::write: cannot open " + file.string());
    png_structp p = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(p);
    if (setjmp(png_jmpbuf(p))) {
        png_destroy_write_struct(&p, &info);
        throw std::runtime_error("png::write: libpng failure on " + file.string());
    }
    png_init_io(p, fp.get());
    png_set_IHDR(p, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(p, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(p, const_cast<png_bytep>(img.pixels.data() +
                                               static_cast<size_t>(y) * img.width * img.channels));
    png_write_end(p, nullptr);
    png_destroy_write_struct(&p, &info);
}

Image read(const std::filesystem::path& file) {
    FilePtr fp(std::fopen(file.string().c_str(), "rb"));
    if (!fp) throw CorruptionError("png::read: cannot open " + file.string());
    png_structp p = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(p);
    if (setjmp(png_jmpbuf(p))) {
        png_destroy_read_struct(&p, &info, nullptr);
        throw CorruptionError("png::read: not a decodable PNG: " + file.string());
    }
    png_init_io(p, fp.get());
    png_read_info(p, info);
    png_set_strip_16(p);
    png_set_strip_alpha(p);
    png_set_palette_to_rgb(p);
    png_set_expand_gray_1_2_4_to_8(p);
    png_read_update_info(p, info);
    Image img;
    img.width = static_cast<int>(png_get_image_width(p, info));
    img.height = static_cast<int>(png_get_image_height(p, info));
    img.channels = static_cast<int>(png_get_channels(p, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&p, &info, nullptr);
        throw CorruptionError("png::read: unsupported channel count in " + file.string());
    }
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
    for (int y = 0; y < img.height; ++y)
        png_read_row(p, img.pixels.data() + static_cast<size_t>(y) * img.width * img.channels,
                     nullptr);
    png_destroy_read_struct(&p, &info, nullptr);
    return img;
}

}  // namespace dtn::png
