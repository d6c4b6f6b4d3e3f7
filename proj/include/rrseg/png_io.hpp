#pragma once

#include <filesystem>
#include <string>

#include "rrseg/geometry.hpp"
#include "rrseg/image.hpp"

namespace rrseg {

struct PngError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_png(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png_rgb(const std::filesystem::path& path);

/// Masks travel as single-channel 8-bit PNG with values 0 / 255.
void write_png(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_png_mask(const std::filesystem::path& path);

/// In-memory encodings for the wire formats.
std::string encode_png(const RgbImage& img);
std::string encode_png(const BinaryMask& mask);
BinaryMask decode_png_mask(const std::string& bytes);
RgbImage decode_png_rgb(const std::string& bytes);

}  // namespace rrseg
