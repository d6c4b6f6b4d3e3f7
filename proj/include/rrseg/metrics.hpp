#pragma once

#include <span>
#include <string>
#include <vector>

#include "rrseg/dataset.hpp"
#include "rrseg/geometry.hpp"

namespace rrseg {

struct EvalRecord {
    std::string sample_id;
    BinaryMask pred_mask;
    BinaryMask gt_mask;
    std::string class_label;
    Tier tier{Tier::Class};
};

/// Mean over records of per-record mask IoU.
double giou(std::span<const EvalRecord> records);

/// Cumulative IoU: sum of intersections over sum of unions across records.
double ciou(std::span<const EvalRecord> records);

/// Per-record instance decision: TP iff the prediction is nonempty and its
/// IoU >= threshold; FP iff nonempty below threshold; FN iff empty or below
/// threshold against a nonempty ground truth. F1 = 2TP / (2TP + FP + FN).
double f1(std::span<const EvalRecord> records, double iou_threshold = 0.5);

enum class MetricKind { Giou, Ciou, F1 };
enum class GroupKey { ClassLabel, TierName };

struct ClassMetricRow {
    std::string key;
    std::size_t count{0};
    double value{0.0};
};

/// Metric within each partition of the grouping key, sorted by partition
/// frequency (descending, label ascending on ties). top_k > 0 keeps the most
/// frequent rows only.
std::vector<ClassMetricRow> per_class_accuracy(std::span<const EvalRecord> records,
                                               GroupKey key, MetricKind metric,
                                               double f1_threshold = 0.5, int top_k = 0);

}  // namespace rrseg
