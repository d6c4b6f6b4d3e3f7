#include "rrseg/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace rrseg {

double giou(std::span<const EvalRecord> records) {
    if (records.empty()) {
        throw std::invalid_argument("giou: no records");
    }
    double sum = 0.0;
    for (const EvalRecord& r : records) {
        sum += mask_iou(r.pred_mask, r.gt_mask);
    }
    return sum / static_cast<double>(records.size());
}

double ciou(std::span<const EvalRecord> records) {
    if (records.empty()) {
        throw std::invalid_argument("ciou: no records");
    }
    double inter = 0.0;
    double uni = 0.0;
    for (const EvalRecord& r : records) {
        if (!r.pred_mask.same_shape(r.gt_mask)) {
            throw ShapeError("ciou: mask dimensions differ");
        }
        inter += static_cast<double>((r.pred_mask & r.gt_mask).count());
        uni += static_cast<double>((r.pred_mask | r.gt_mask).count());
    }
    if (uni == 0.0) {
        return 0.0;
    }
    return inter / uni;
}

double f1(std::span<const EvalRecord> records, double iou_threshold) {
    if (records.empty()) {
        throw std::invalid_argument("f1: no records");
    }
    long tp = 0, fp = 0, fn = 0;
    for (const EvalRecord& r : records) {
        const bool pred_nonempty = r.pred_mask.any();
        const double iou = mask_iou(r.pred_mask, r.gt_mask);
        if (pred_nonempty && iou >= iou_threshold) {
            ++tp;
        } else {
            if (pred_nonempty) {
                ++fp;
            }
            if (r.gt_mask.any()) {
                ++fn;
            }
        }
    }
    const double denom = 2.0 * tp + fp + fn;
    if (denom == 0.0) {
        return 0.0;
    }
    return 2.0 * tp / denom;
}

std::vector<ClassMetricRow> per_class_accuracy(std::span<const EvalRecord> records,
                                               GroupKey key, MetricKind metric,
                                               double f1_threshold, int top_k) {
    if (records.empty()) {
        throw std::invalid_argument("per_class_accuracy: no records");
    }
    std::map<std::string, std::vector<EvalRecord>> groups;
    for (const EvalRecord& r : records) {
        const std::string k = key == GroupKey::ClassLabel ? r.class_label : to_string(r.tier);
        groups[k].push_back(r);
    }
    std::vector<ClassMetricRow> rows;
    rows.reserve(groups.size());
    for (const auto& [label, members] : groups) {
        ClassMetricRow row;
        row.key = label;
        row.count = members.size();
        switch (metric) {
            case MetricKind::Giou: row.value = giou(members); break;
            case MetricKind::Ciou: row.value = ciou(members); break;
            case MetricKind::F1: row.value = f1(members, f1_threshold); break;
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const ClassMetricRow& a, const ClassMetricRow& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.key < b.key;
    });
    if (top_k > 0 && static_cast<int>(rows.size()) > top_k) {
        rows.resize(top_k);
    }
    return rows;
}

}  // namespace rrseg
