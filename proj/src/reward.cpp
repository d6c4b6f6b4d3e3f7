#include "rrseg/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace rrseg {

double stage1_length_reward(int predicted_count, int gt_count) {
    if (gt_count <= 0) {
        throw std::invalid_argument("stage1_length_reward requires a positive gt count");
    }
    return std::exp(-2.0 * std::abs(predicted_count - gt_count) / static_cast<double>(gt_count));
}

double stage1_accuracy_reward(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                              double iou_threshold) {
    if (gt.empty()) {
        throw std::invalid_argument("stage1_accuracy_reward requires nonempty ground truth");
    }
    if (pred.empty()) {
        return 0.0;
    }
    const int matched = match_count(pred, gt, iou_threshold);
    return static_cast<double>(matched) /
           static_cast<double>(std::max(pred.size(), gt.size()));
}

RewardBreakdown stage1_reward(const Completion& c, const std::vector<BBox>& gt,
                              double iou_threshold) {
    RewardBreakdown r;
    r.format = format_reward(c);
    if (r.format == 0) {
        return r;  // format gate: everything stays 0
    }
    const std::vector<BBox>& boxes = c.stage1->boxes;
    r.accuracy = stage1_accuracy_reward(boxes, gt, iou_threshold);
    r.length = stage1_length_reward(static_cast<int>(boxes.size()),
                                    static_cast<int>(gt.size()));
    r.total = r.format + r.accuracy + r.length;
    return r;
}

double point_length_reward(const std::vector<int>& group_point_counts,
                           const LengthRewardParams& params) {
    if (params.sigma <= 0.0) {
        throw std::invalid_argument("point_length_reward requires sigma > 0");
    }
    if (group_point_counts.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (int n : group_point_counts) {
        const double d = n - params.mu;
        sum += std::exp(-(d * d) / (2.0 * params.sigma * params.sigma));
    }
    return sum / static_cast<double>(group_point_counts.size());
}

RewardBreakdown stage2_reward(const Completion& c, const BinaryMask& final_mask,
                              const BinaryMask& gt_mask, const LengthRewardParams& params) {
    RewardBreakdown r;
    r.format = format_reward(c);
    if (r.format == 0) {
        return r;
    }
    r.accuracy = mask_iou(final_mask, gt_mask);
    std::vector<int> counts;
    counts.reserve(c.stage2->groups.size());
    for (const PromptGroup& g : c.stage2->groups) {
        counts.push_back(static_cast<int>(g.points.size()));
    }
    r.length = point_length_reward(counts, params);
    r.total = r.format + r.accuracy + r.length;
    return r;
}

}  // namespace rrseg
