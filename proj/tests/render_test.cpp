#include "rrseg/image.hpp"

#include <gtest/gtest.h>

#include "rrseg/png_io.hpp"
#include "test_util.hpp"

namespace rrseg {
namespace {

TEST(Overlay, EmptyOverlayIsIdentity) {
    RgbImage img(8, 8, {10, 20, 30});
    img.fill_rect({2, 2, 5, 5}, {200, 100, 50});
    const BinaryMask empty(8, 8);
    const RgbImage out = overlay(img, {}, empty, OverlayStyle{});
    EXPECT_EQ(out, img);
}

TEST(Overlay, FullMaskAlphaOneSaturates) {
    const RgbImage img(6, 6, {1, 2, 3});
    OverlayStyle style;
    style.mask_alpha = 1.0;
    style.mask_color = {0, 255, 0};
    const RgbImage out = overlay(img, {}, BinaryMask::full(6, 6), style);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
            EXPECT_EQ(out.at(x, y)[1], 255);
            EXPECT_EQ(out.at(x, y)[0], 0);
        }
    }
}

TEST(Overlay, HalfAlphaRoundsHalfUp) {
    const RgbImage img(4, 4, {0, 0, 0});
    BinaryMask mask(4, 4);
    mask.set(1, 1);
    mask.set(2, 1);
    mask.set(1, 2);
    mask.set(2, 2);
    OverlayStyle style;
    style.mask_alpha = 0.5;
    style.mask_color = {255, 0, 0};
    const RgbImage out = overlay(img, {}, mask, style);
    // 0.5 * 255 = 127.5 -> 128 under round-half-up
    EXPECT_EQ(out.at(1, 1)[0], 128);
    EXPECT_EQ(out.at(2, 2)[0], 128);
    EXPECT_EQ(out.at(0, 0)[0], 0);
}

TEST(Overlay, UntouchedRegionByteIdentical) {
    RgbImage img(16, 16, {7, 7, 7});
    img.fill_rect({0, 0, 16, 4}, {50, 60, 70});
    BinaryMask mask(16, 16);
    mask.set(8, 8);
    OverlayStyle style;
    style.box_stroke = 1;
    const std::vector<BBox> boxes{{12, 12, 14, 14}};
    const RgbImage out = overlay(img, boxes, mask, style);
    // Far corner untouched by mask or strokes.
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            EXPECT_EQ(out.at(x, y)[0], img.at(x, y)[0]);
            EXPECT_EQ(out.at(x, y)[1], img.at(x, y)[1]);
            EXPECT_EQ(out.at(x, y)[2], img.at(x, y)[2]);
        }
    }
    // Input image itself unmodified.
    EXPECT_EQ(img.at(8, 8)[0], 7);
}

TEST(Overlay, StrokeCentersOnBoxEdge) {
    const RgbImage img(16, 16, {0, 0, 0});
    OverlayStyle style;
    style.box_stroke = 3;
    style.box_color = {255, 0, 0};
    const RgbImage out = overlay(img, {{4, 4, 12, 12}}, BinaryMask(16, 16), style);
    // Band of exactly 3 pixels straddling the left edge x = 4: columns 2-4.
    EXPECT_EQ(out.at(2, 8)[0], 255);
    EXPECT_EQ(out.at(3, 8)[0], 255);
    EXPECT_EQ(out.at(4, 8)[0], 255);
    EXPECT_EQ(out.at(5, 8)[0], 0);   // interior
    EXPECT_EQ(out.at(1, 8)[0], 0);   // outside
    EXPECT_EQ(out.at(8, 8)[0], 0);   // center stays background
    // Right edge x = 12: columns 10-12.
    EXPECT_EQ(out.at(9, 8)[0], 0);
    EXPECT_EQ(out.at(10, 8)[0], 255);
    EXPECT_EQ(out.at(12, 8)[0], 255);
    EXPECT_EQ(out.at(13, 8)[0], 0);
}

TEST(Overlay, BoxesDrawOverMask) {
    const RgbImage img(8, 8, {0, 0, 0});
    OverlayStyle style;
    style.mask_alpha = 1.0;
    style.mask_color = {0, 255, 0};
    style.box_stroke = 1;
    style.box_color = {255, 0, 0};
    const RgbImage out = overlay(img, {{2, 2, 6, 6}}, BinaryMask::full(8, 8), style);
    // Width-1 band on the edge x = 2 covers [1.5, 2.5): column 1.
    EXPECT_EQ(out.at(1, 4)[0], 255);  // stroke wins over the mask tint
    EXPECT_EQ(out.at(1, 4)[1], 0);
    EXPECT_EQ(out.at(2, 4)[1], 255);  // first interior column keeps the tint
    EXPECT_EQ(out.at(4, 4)[1], 255);
}

TEST(Overlay, ShapeMismatchRejected) {
    const RgbImage img(8, 8);
    EXPECT_THROW(overlay(img, {}, BinaryMask(4, 4), OverlayStyle{}), ShapeError);
}

TEST(Overlay, DeterministicBytes) {
    RgbImage img(32, 32, {9, 9, 9});
    BinaryMask mask(32, 32);
    for (int y = 10; y < 20; ++y) {
        mask.set_row_span(y, 4, 25);
    }
    const std::vector<BBox> boxes{{3.5, 9.5, 25.5, 20.5}};
    const RgbImage a = overlay(img, boxes, mask, OverlayStyle{});
    const RgbImage b = overlay(img, boxes, mask, OverlayStyle{});
    EXPECT_EQ(a, b);
}

TEST(PngIo, RgbRoundTrip) {
    testing::TempDir tmp("png-rgb");
    RgbImage img(20, 14, {0, 0, 0});
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::uint8_t* p = img.at(x, y);
            p[0] = static_cast<std::uint8_t>(x * 12);
            p[1] = static_cast<std::uint8_t>(y * 17);
            p[2] = static_cast<std::uint8_t>((x + y) * 7);
        }
    }
    const auto path = tmp.path() / "img.png";
    write_png(path, img);
    EXPECT_EQ(read_png_rgb(path), img);
}

TEST(PngIo, MaskRoundTrip) {
    testing::TempDir tmp("png-mask");
    BinaryMask mask(33, 9);
    for (int y = 0; y < 9; ++y) {
        mask.set_row_span(y, y, 2 * y + 3);
    }
    const auto path = tmp.path() / "mask.png";
    write_png(path, mask);
    EXPECT_EQ(read_png_mask(path), mask);
}

TEST(PngIo, InMemoryMaskRoundTrip) {
    BinaryMask mask(7, 7);
    mask.set(3, 3);
    mask.set(6, 0);
    EXPECT_EQ(decode_png_mask(encode_png(mask)), mask);
}

TEST(PngIo, RejectsGarbage) {
    EXPECT_THROW(decode_png_mask("not a png"), PngError);
}

}  // namespace
}  // namespace rrseg
