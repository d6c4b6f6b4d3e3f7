#include "rrseg/image.hpp"

#include <algorithm>
#include <cmath>

namespace rrseg {

RgbImage::RgbImage(int width_, int height_, Rgb fill) : width(width_), height(height_) {
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("RgbImage dimensions must be positive");
    }
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill[0];
        pixels[i + 1] = fill[1];
        pixels[i + 2] = fill[2];
    }
}

namespace {

struct PixelSpan {
    int xs, xe, ys, ye;  // inclusive pixel index ranges; empty when xs > xe
};

// Pixels whose centers fall inside the (already clamped) continuous rect.
PixelSpan covered_pixels(const BBox& b, int width, int height) {
    PixelSpan s{};
    s.xs = std::max(0, static_cast<int>(std::ceil(b.x1 - 0.5)));
    s.xe = std::min(width - 1, static_cast<int>(std::floor(b.x2 - 0.5)));
    s.ys = std::max(0, static_cast<int>(std::ceil(b.y1 - 0.5)));
    s.ye = std::min(height - 1, static_cast<int>(std::floor(b.y2 - 0.5)));
    return s;
}

std::uint8_t blend_channel(std::uint8_t base, std::uint8_t over, double alpha) {
    const double v = alpha * over + (1.0 - alpha) * base;
    return static_cast<std::uint8_t>(std::floor(v + 0.5));
}

}  // namespace

void RgbImage::fill_rect(const BBox& box, Rgb color) {
    const PixelSpan s = covered_pixels(box.clamped(width, height), width, height);
    for (int y = s.ys; y <= s.ye; ++y) {
        for (int x = s.xs; x <= s.xe; ++x) {
            std::uint8_t* p = at(x, y);
            p[0] = color[0];
            p[1] = color[1];
            p[2] = color[2];
        }
    }
}

RgbImage overlay(const RgbImage& img, const std::vector<BBox>& boxes,
                 const BinaryMask& mask, const OverlayStyle& style) {
    if (mask.width() != img.width || mask.height() != img.height) {
        throw ShapeError("overlay: mask dimensions differ from image");
    }
    RgbImage out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!mask.test(x, y)) {
                continue;
            }
            std::uint8_t* p = out.at(x, y);
            p[0] = blend_channel(p[0], style.mask_color[0], style.mask_alpha);
            p[1] = blend_channel(p[1], style.mask_color[1], style.mask_alpha);
            p[2] = blend_channel(p[2], style.mask_color[2], style.mask_alpha);
        }
    }
    // Strokes go on top of the mask tint. Band membership is half-open so a
    // stroke of width s covers exactly s pixels across an integer box edge.
    const double half = style.box_stroke / 2.0;
    for (const BBox& raw : boxes) {
        const BBox b = raw.clamped(img.width, img.height);
        const BBox outer{b.x1 - half, b.y1 - half, b.x2 + half, b.y2 + half};
        const BBox inner{b.x1 + half, b.y1 + half, b.x2 - half, b.y2 - half};
        const bool hollow = inner.x1 < inner.x2 && inner.y1 < inner.y2;
        const PixelSpan s = covered_pixels(outer.clamped(img.width, img.height),
                                           img.width, img.height);
        for (int y = s.ys; y <= s.ye; ++y) {
            for (int x = s.xs; x <= s.xe; ++x) {
                const double cx = x + 0.5;
                const double cy = y + 0.5;
                const bool in_outer =
                    cx >= outer.x1 && cx < outer.x2 && cy >= outer.y1 && cy < outer.y2;
                const bool in_inner = hollow && cx >= inner.x1 && cx < inner.x2 &&
                                      cy >= inner.y1 && cy < inner.y2;
                if (!in_outer || in_inner) {
                    continue;
                }
                std::uint8_t* p = out.at(x, y);
                p[0] = style.box_color[0];
                p[1] = style.box_color[1];
                p[2] = style.box_color[2];
            }
        }
    }
    return out;
}

}  // namespace rrseg
