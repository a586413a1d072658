#include "sceneforge/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace sceneforge {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

ImageBuffer read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) {
        throw IoError("cannot open " + path.string());
    }
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError(path.string() + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};

    try {
        png_init_io(png, file.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        const int color = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (depth == 16) {
            png_set_strip_16(png);
        }
        if (color == PNG_COLOR_TYPE_PALETTE) {
            png_set_palette_to_rgb(png);
        }
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
        }
        if (color & PNG_COLOR_MASK_ALPHA) {
            png_set_strip_alpha(png);
        }
        if (png_get_valid(png, info, PNG_INFO_tRNS)) {
            png_set_tRNS_to_alpha(png);
            png_set_strip_alpha(png);
        }
        png_read_update_info(png, info);
        const int width = static_cast<int>(png_get_image_width(png, info));
        const int height = static_cast<int>(png_get_image_height(png, info));
        const int channels = png_get_channels(png, info);
        if (channels != 1 && channels != 3) {
            throw IoError(path.string() + ": unsupported channel layout");
        }
        std::vector<std::uint8_t> samples(static_cast<std::size_t>(width) * height * channels);
        std::vector<png_bytep> rows(static_cast<std::size_t>(height));
        for (int y = 0; y < height; ++y) {
            rows[static_cast<std::size_t>(y)] = samples.data() + static_cast<std::size_t>(y) * width * channels;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        return ImageBuffer(width, height, channels, std::move(samples));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img, int compression_level) {
    if (img.empty()) {
        throw IoError("refusing to write an empty image to " + path.string());
    }
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
        }
    }
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) {
        throw IoError("cannot write " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};

    png_init_io(png, file.get());
    png_set_compression_level(png, compression_level);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
    for (int y = 0; y < img.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(img.samples().data() + y * stride));
    }
    png_write_end(png, nullptr);
}

}  // namespace sceneforge
