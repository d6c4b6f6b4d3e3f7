#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "rrseg/geometry.hpp"

namespace rrseg::testing {

inline std::filesystem::path source_dir() {
    return std::filesystem::path(RRSEG_SOURCE_DIR);
}

inline std::filesystem::path prompts_dir() {
    return source_dir() / "assets" / "prompts";
}

/// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("rrseg-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Exhaustive minimum over all assignments of size min(rows, cols):
/// the independent oracle for the assignment solver.
inline double brute_force_assignment_cost(const CostMatrix& cost) {
    const int K = cost.rows;
    const int J = cost.cols;
    const int need = std::min(K, J);
    if (need == 0) {
        return 0.0;
    }
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> chosen_cols;
    std::vector<char> col_used(J, 0);
    // Enumerate every injective map from a row subset (in increasing row
    // order) onto columns; recursion over rows with a skip budget.
    auto recurse = [&](auto&& self, int row, int placed, double acc) -> void {
        if (placed == need) {
            best = std::min(best, acc);
            return;
        }
        if (row >= K || K - row < need - placed) {
            return;
        }
        // Skip this row entirely (only legal if enough rows remain).
        if (K - row - 1 >= need - placed) {
            self(self, row + 1, placed, acc);
        }
        for (int c = 0; c < J; ++c) {
            if (col_used[c]) {
                continue;
            }
            col_used[c] = 1;
            self(self, row + 1, placed + 1, acc + cost.at(row, c));
            col_used[c] = 0;
        }
    };
    recurse(recurse, 0, 0, 0.0);
    return best;
}

}  // namespace rrseg::testing
