#include "birduod/preprocess/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "birduod/error.hpp"
#include "birduod/io.hpp"

namespace birduod::preprocess {

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void flush_noop(png_structp) {}

}  // namespace

std::string encode_png_gray(int width, int height, const std::vector<uint8_t>& pixels) {
    if (width <= 0 || height <= 0 || pixels.size() != static_cast<size_t>(width) * height) {
        throw UsageError("encode_png_gray: bad dimensions");
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng initialisation failed");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG encoding failed");
    }
    png_set_write_fn(png, &out, append_bytes, flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<size_t>(y) * width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::string spectrogram_png(const Spectrogram& mel, int scale, double db_max) {
    if (scale < 1) throw UsageError("scale must be >= 1");
    const int bands = static_cast<int>(mel.rows());
    const int frames = static_cast<int>(mel.cols());
    const int width = frames * scale;
    const int height = bands * scale;
    const double top = std::max(db_max, 1.0);
    std::vector<uint8_t> pixels(static_cast<size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
        const int band = bands - 1 - y / scale;
        for (int x = 0; x < width; ++x) {
            const double v = std::clamp(static_cast<double>(mel(band, x / scale)) / top, 0.0, 1.0);
            pixels[static_cast<size_t>(y) * width + x] = static_cast<uint8_t>(std::lround(v * 255.0));
        }
    }
    return encode_png_gray(width, height, pixels);
}

void write_spectrogram_png(const std::filesystem::path& path, const Spectrogram& mel, int scale) {
    io::write_text_atomic(path, spectrogram_png(mel, scale));
}

}  // namespace birduod::preprocess
