#include "rrseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace rrseg {

namespace {

struct MemoryReader {
    const std::string* bytes;
    std::size_t offset;
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
    if (r->offset + n > r->bytes->size()) {
        png_error(png, "read past end of PNG buffer");
    }
    std::memcpy(out, r->bytes->data() + r->offset, n);
    r->offset += n;
}

void mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), n);
}

void mem_flush(png_structp) {}

// Encodes `channels`-deep 8-bit rows.
std::string encode_rows(int width, int height, int channels,
                        const std::vector<const std::uint8_t*>& rows) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw PngError("png_create_write_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw PngError("png_create_info_struct failed");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw PngError("PNG encode failed");
    }
    png_set_write_fn(png, &out, mem_write, mem_flush);
    const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, width, height, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const std::uint8_t* row : rows) {
        png_write_row(png, const_cast<png_bytep>(row));
    }
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
    return out;
}

// Decodes any 8/16-bit PNG into tightly packed RGB8 rows.
void decode_to_rgb(const std::string& bytes, int& width, int& height,
                   std::vector<std::uint8_t>& rgb) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8)) {
        throw PngError("not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        throw PngError("png_create_read_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw PngError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw PngError("PNG decode failed");
    }
    MemoryReader reader{&bytes, 0};
    png_set_read_fn(png, &reader, mem_read);
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != static_cast<png_size_t>(width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw PngError("unexpected PNG row layout");
    }

    rgb.resize(static_cast<std::size_t>(width) * height * 3);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw PngError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw PngError("cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw PngError("short write to " + path.string());
    }
}

}  // namespace

std::string encode_png(const RgbImage& img) {
    std::vector<const std::uint8_t*> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = img.at(0, y);
    }
    return encode_rows(img.width, img.height, 3, rows);
}

std::string encode_png(const BinaryMask& mask) {
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(mask.width()) * mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            gray[static_cast<std::size_t>(y) * mask.width() + x] = mask.test(x, y) ? 255 : 0;
        }
    }
    std::vector<const std::uint8_t*> rows(mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        rows[y] = gray.data() + static_cast<std::size_t>(y) * mask.width();
    }
    return encode_rows(mask.width(), mask.height(), 1, rows);
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
    write_file(path, encode_png(img));
}

void write_png(const std::filesystem::path& path, const BinaryMask& mask) {
    write_file(path, encode_png(mask));
}

RgbImage decode_png_rgb(const std::string& bytes) {
    RgbImage img;
    decode_to_rgb(bytes, img.width, img.height, img.pixels);
    return img;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
    return decode_png_rgb(read_file(path));
}

BinaryMask decode_png_mask(const std::string& bytes) {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;
    decode_to_rgb(bytes, width, height, rgb);
    BinaryMask mask(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            // 0/255 by contract; >= 128 tolerates resampled inputs.
            if (rgb[3 * (static_cast<std::size_t>(y) * width + x)] >= 128) {
                mask.set(x, y);
            }
        }
    }
    return mask;
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
    return decode_png_mask(read_file(path));
}

}  // namespace rrseg
