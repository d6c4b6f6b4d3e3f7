#include "rrseg/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace rrseg {

namespace {

bool approx_equal(double a, double b) {
    const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) <= 1e-9 * scale;
}

}  // namespace

BBox BBox::normalized(double x1, double y1, double x2, double y2) {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2))) {
        throw std::invalid_argument("BBox coordinates must be finite");
    }
    BBox b;
    b.x1 = std::min(x1, x2);
    b.x2 = std::max(x1, x2);
    b.y1 = std::min(y1, y2);
    b.y2 = std::max(y1, y2);
    return b;
}

BBox BBox::clamped(double image_width, double image_height) const {
    BBox b;
    b.x1 = std::clamp(x1, 0.0, image_width);
    b.x2 = std::clamp(x2, 0.0, image_width);
    b.y1 = std::clamp(y1, 0.0, image_height);
    b.y2 = std::clamp(y2, 0.0, image_height);
    return b;
}

Point2D clamp_point(const Point2D& p, double image_width, double image_height) {
    return {std::clamp(p.x, 0.0, image_width), std::clamp(p.y, 0.0, image_height)};
}

double box_iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) {
        return 0.0;
    }
    return inter / uni;
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("BinaryMask dimensions must be positive");
    }
    const std::size_t bits = static_cast<std::size_t>(width) * height;
    words_.assign((bits + 63) / 64, 0);
}

BinaryMask BinaryMask::full(int width, int height) {
    BinaryMask m(width, height);
    for (int y = 0; y < height; ++y) {
        m.set_row_span(y, 0, width);
    }
    return m;
}

bool BinaryMask::test(int x, int y) const {
    return (words_[word_index(x, y)] >> bit_index(x, y)) & 1u;
}

void BinaryMask::set(int x, int y, bool value) {
    const std::uint64_t bit = std::uint64_t{1} << bit_index(x, y);
    if (value) {
        words_[word_index(x, y)] |= bit;
    } else {
        words_[word_index(x, y)] &= ~bit;
    }
}

void BinaryMask::set_row_span(int y, int x_begin, int x_end) {
    x_begin = std::max(x_begin, 0);
    x_end = std::min(x_end, width_);
    if (x_begin >= x_end) {
        return;
    }
    std::size_t first = static_cast<std::size_t>(y) * width_ + x_begin;
    std::size_t last = static_cast<std::size_t>(y) * width_ + x_end;  // exclusive
    while (first < last) {
        const std::size_t word = first / 64;
        const int lo = static_cast<int>(first % 64);
        const std::size_t span = std::min<std::size_t>(64 - lo, last - first);
        std::uint64_t bits = ~std::uint64_t{0};
        if (span < 64) {
            bits = ((std::uint64_t{1} << span) - 1) << lo;
        }
        words_[word] |= bits;
        first += span;
    }
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (std::uint64_t w : words_) {
        n += static_cast<std::size_t>(std::popcount(w));
    }
    return n;
}

bool BinaryMask::any() const {
    for (std::uint64_t w : words_) {
        if (w != 0) {
            return true;
        }
    }
    return false;
}

void BinaryMask::check_shape(const BinaryMask& other) const {
    if (!same_shape(other)) {
        throw ShapeError("mask dimensions differ");
    }
}

BinaryMask BinaryMask::operator&(const BinaryMask& other) const {
    check_shape(other);
    BinaryMask out = *this;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        out.words_[i] &= other.words_[i];
    }
    return out;
}

BinaryMask BinaryMask::operator|(const BinaryMask& other) const {
    check_shape(other);
    BinaryMask out = *this;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        out.words_[i] |= other.words_[i];
    }
    return out;
}

bool BinaryMask::operator==(const BinaryMask& other) const {
    return width_ == other.width_ && height_ == other.height_ && words_ == other.words_;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("mask_iou: mask dimensions differ");
    }
    const std::size_t inter = (a & b).count();
    const std::size_t uni = (a | b).count();
    if (uni == 0) {
        return 0.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

CostMatrix::CostMatrix(int rows_, int cols_, double fill) : rows(rows_), cols(cols_) {
    if (rows < 0 || cols < 0) {
        throw std::invalid_argument("CostMatrix dimensions must be nonnegative");
    }
    entries.assign(static_cast<std::size_t>(rows) * cols, fill);
}

namespace {

// Kuhn-Munkres with row/column potentials on a square matrix.
// Returns the minimum total cost; col_of_row[i] receives the matched column.
double square_lap(const std::vector<std::vector<double>>& cost, std::vector<int>& col_of_row) {
    const int n = static_cast<int>(cost.size());
    col_of_row.assign(n, -1);
    if (n == 0) {
        return 0.0;
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> row_of_col(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = row_of_col[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const int j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) {
        if (row_of_col[j] > 0) {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    for (int i = 0; i < n; ++i) {
        total += cost[i][col_of_row[i]];
    }
    return total;
}

// Minimum total cost of assigning min(|rows|, |cols|) pairs drawn from the
// given row/column subsets. Rectangular cases are padded with zero-cost
// dummies, which leaves the optimum unchanged.
double subset_lap_cost(const CostMatrix& cost, const std::vector<int>& rows,
                       const std::vector<int>& cols) {
    const int r = static_cast<int>(rows.size());
    const int c = static_cast<int>(cols.size());
    if (r == 0 || c == 0) {
        return 0.0;
    }
    const int n = std::max(r, c);
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) {
            m[i][j] = cost.at(rows[i], cols[j]);
        }
    }
    std::vector<int> col_of_row;
    const double padded = square_lap(m, col_of_row);
    // Dummy entries are exactly zero, so the padded total is the real total.
    return padded;
}

}  // namespace

std::vector<Assignment> hungarian_assign(const CostMatrix& cost) {
    const int K = cost.rows;
    const int J = cost.cols;
    const int need = std::min(K, J);
    std::vector<Assignment> out;
    if (need == 0) {
        return out;
    }
    for (double e : cost.entries) {
        if (!std::isfinite(e)) {
            throw std::invalid_argument("hungarian_assign: cost entries must be finite");
        }
    }

    std::vector<int> all_rows(K), all_cols(J);
    for (int i = 0; i < K; ++i) all_rows[i] = i;
    for (int j = 0; j < J; ++j) all_cols[j] = j;
    const double optimum = subset_lap_cost(cost, all_rows, all_cols);

    // Fix pairs greedily in (row, col) order, keeping only choices that still
    // complete to an optimal assignment. Pairs come out sorted by row, so the
    // greedy prefix order is the lexicographic order of the full sequence.
    std::vector<char> col_used(J, 0);
    double fixed_cost = 0.0;
    int min_row = 0;
    for (int f = 0; f < need; ++f) {
        const int remaining = need - f;
        bool placed = false;
        double best_slack = std::numeric_limits<double>::infinity();
        Assignment best{-1, -1};
        for (int r = min_row; r <= K - remaining && !placed; ++r) {
            std::vector<int> rest_rows;
            for (int rr = r + 1; rr < K; ++rr) rest_rows.push_back(rr);
            for (int c = 0; c < J && !placed; ++c) {
                if (col_used[c]) {
                    continue;
                }
                std::vector<int> rest_cols;
                for (int cc = 0; cc < J; ++cc) {
                    if (!col_used[cc] && cc != c) rest_cols.push_back(cc);
                }
                const double total =
                    fixed_cost + cost.at(r, c) + subset_lap_cost(cost, rest_rows, rest_cols);
                if (approx_equal(total, optimum)) {
                    out.push_back({r, c});
                    col_used[c] = 1;
                    fixed_cost += cost.at(r, c);
                    min_row = r + 1;
                    placed = true;
                } else if (total - optimum < best_slack) {
                    best_slack = total - optimum;
                    best = {r, c};
                }
            }
        }
        if (!placed) {
            // Accumulated rounding kept every candidate off the optimum;
            // take the cheapest completion instead.
            out.push_back(best);
            col_used[best.col] = 1;
            fixed_cost += cost.at(best.row, best.col);
            min_row = best.row + 1;
        }
    }
    return out;
}

int match_count(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                double iou_threshold) {
    const int K = static_cast<int>(pred.size());
    const int J = static_cast<int>(gt.size());
    if (K == 0 || J == 0) {
        return 0;
    }
    CostMatrix cost(K, J, 1.0);
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < J; ++j) {
            if (box_iou(pred[k], gt[j]) > iou_threshold) {
                cost.at(k, j) = 0.0;
            }
        }
    }
    int matched = 0;
    for (const Assignment& a : hungarian_assign(cost)) {
        if (cost.at(a.row, a.col) == 0.0) {
            ++matched;
        }
    }
    return matched;
}

BinaryMask rasterize_rect_union(const std::vector<BBox>& shapes, int width, int height) {
    BinaryMask mask(width, height);
    for (const BBox& raw : shapes) {
        const BBox b = raw.clamped(width, height);
        if (b.area() <= 0.0) {
            continue;
        }
        // Pixel center (x + 0.5, y + 0.5) inside [x1, x2] x [y1, y2].
        const int xs = std::max(0, static_cast<int>(std::ceil(b.x1 - 0.5)));
        const int xe = std::min(width - 1, static_cast<int>(std::floor(b.x2 - 0.5)));
        const int ys = std::max(0, static_cast<int>(std::ceil(b.y1 - 0.5)));
        const int ye = std::min(height - 1, static_cast<int>(std::floor(b.y2 - 0.5)));
        for (int y = ys; y <= ye; ++y) {
            mask.set_row_span(y, xs, xe + 1);
        }
    }
    return mask;
}

}  // namespace rrseg
