#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace rrseg {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Point2D {
    double x{0.0};
    double y{0.0};

    bool operator==(const Point2D&) const = default;
};

/// Axis-aligned box in continuous image coordinates, origin top-left.
/// Normalized form has x1 <= x2 and y1 <= y2.
struct BBox {
    double x1{0.0};
    double y1{0.0};
    double x2{0.0};
    double y2{0.0};

    static BBox normalized(double x1, double y1, double x2, double y2);

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    bool contains(const Point2D& p) const {
        return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2;
    }

    /// Clamp to the continuous image rectangle [0,w] x [0,h].
    BBox clamped(double image_width, double image_height) const;

    bool operator==(const BBox&) const = default;
};

Point2D clamp_point(const Point2D& p, double image_width, double image_height);

/// Intersection-over-union on continuous areas. 0 when the union is empty.
double box_iou(const BBox& a, const BBox& b);

/// Row-major bit grid. A pixel (x, y) covers the unit square with
/// center (x + 0.5, y + 0.5).
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height);

    static BinaryMask full(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    bool same_shape(const BinaryMask& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }

    bool test(int x, int y) const;
    void set(int x, int y, bool value = true);
    /// Set [x_begin, x_end) in row y.
    void set_row_span(int y, int x_begin, int x_end);

    std::size_t count() const;
    bool any() const;

    BinaryMask operator&(const BinaryMask& other) const;
    BinaryMask operator|(const BinaryMask& other) const;
    bool operator==(const BinaryMask& other) const;

private:
    std::size_t word_index(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) / 64;
    }
    int bit_index(int x, int y) const {
        return static_cast<int>((static_cast<std::size_t>(y) * width_ + x) % 64);
    }
    void check_shape(const BinaryMask& other) const;

    int width_{0};
    int height_{0};
    std::vector<std::uint64_t> words_;
};

/// |a & b| / |a | b|. Defined as 0 when both masks are empty.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct CostMatrix {
    int rows{0};
    int cols{0};
    std::vector<double> entries;  // row-major, rows*cols

    CostMatrix() = default;
    CostMatrix(int rows, int cols, double fill = 0.0);

    double at(int r, int c) const { return entries[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return entries[static_cast<std::size_t>(r) * cols + c]; }
};

struct Assignment {
    int row{0};
    int col{0};

    bool operator==(const Assignment&) const = default;
};

/// Minimum-cost assignment of size min(rows, cols); each row and column used
/// at most once. Among equally cheap assignments the one whose row-sorted
/// (row, col) pair sequence is lexicographically smallest is returned.
std::vector<Assignment> hungarian_assign(const CostMatrix& cost);

/// Number of Hungarian-matched (pred, gt) pairs with IoU strictly above
/// `iou_threshold`. The assignment is solved on the cost matrix 1 - M with
/// M[k][j] = 1(IoU(pred[k], gt[j]) > threshold); assigned pairs whose M entry
/// is 0 do not count.
int match_count(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                double iou_threshold);

/// Mask with a bit set iff the pixel center lies inside at least one box.
/// Boxes are clamped to the image bounds.
BinaryMask rasterize_rect_union(const std::vector<BBox>& shapes, int width, int height);

}  // namespace rrseg
