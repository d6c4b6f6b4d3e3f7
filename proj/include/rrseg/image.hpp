#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rrseg/geometry.hpp"

namespace rrseg {

using Rgb = std::array<std::uint8_t, 3>;

struct RgbImage {
    int width{0};
    int height{0};
    std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

    RgbImage() = default;
    RgbImage(int width, int height, Rgb fill = {0, 0, 0});

    std::uint8_t* at(int x, int y) {
        return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }

    void fill_rect(const BBox& box, Rgb color);

    bool operator==(const RgbImage&) const = default;
};

struct OverlayStyle {
    Rgb box_color{255, 0, 0};
    int box_stroke{3};
    Rgb mask_color{0, 255, 0};
    double mask_alpha{0.4};
};

/// Alpha-blend the mask color over set mask pixels, then draw box outlines.
/// Pixels outside the mask and strokes are byte-identical to the input.
/// Blending is round-half-up per channel. Boxes are clamped to image bounds.
RgbImage overlay(const RgbImage& img, const std::vector<BBox>& boxes,
                 const BinaryMask& mask, const OverlayStyle& style);

}  // namespace rrseg
