#pragma once

#include <vector>

#include "rrseg/codec.hpp"
#include "rrseg/geometry.hpp"

namespace rrseg {

/// Components of one episode reward. A failed format check zeroes the total
/// regardless of the other components; otherwise total = format + accuracy +
/// length, which lies in [1, 3].
struct RewardBreakdown {
    int format{0};
    double accuracy{0.0};
    double length{0.0};
    double total{0.0};
};

struct LengthRewardParams {
    double mu{2.0};
    double sigma{2.0};
};

/// exp(-2 |K - J| / J); peaks at 1 exactly when K == J. Requires J > 0.
double stage1_length_reward(int predicted_count, int gt_count);

/// Matched count at the IoU threshold divided by max(K, J); 0 for an empty
/// prediction list.
double stage1_accuracy_reward(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                              double iou_threshold = 0.5);

RewardBreakdown stage1_reward(const Completion& c, const std::vector<BBox>& gt,
                              double iou_threshold = 0.5);

/// Mean over groups of exp(-(n - mu)^2 / (2 sigma^2)) for group point counts
/// n; 0 when there are no groups.
double point_length_reward(const std::vector<int>& group_point_counts,
                           const LengthRewardParams& params);

RewardBreakdown stage2_reward(const Completion& c, const BinaryMask& final_mask,
                              const BinaryMask& gt_mask, const LengthRewardParams& params);

}  // namespace rrseg
