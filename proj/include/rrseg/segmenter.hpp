#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rrseg/geometry.hpp"
#include "rrseg/image.hpp"

namespace rrseg {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PromptSet {
    std::vector<BBox> boxes;
    std::vector<Point2D> points;
};

/// One synthetic instance: a core rectangle strictly inside a full rectangle.
/// Box prompts alone reveal only the core; a point inside the full extent
/// reveals the full rectangle.
struct Blob {
    BBox core;
    BBox full;
    int class_id{0};
};

struct SyntheticScene {
    int width{0};
    int height{0};
    std::vector<Blob> blobs;
    int gt_instance{0};

    const Blob& target() const { return blobs.at(gt_instance); }
    BinaryMask target_mask() const;
};

struct SegmentInput {
    const SyntheticScene* scene{nullptr};  // oracle backend
    const RgbImage* image{nullptr};        // remote backend, sent as base64 PNG
    std::string image_id;                  // remote backend, sent instead of pixels when set
    int width{0};
    int height{0};
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual BinaryMask segment(const SegmentInput& input, const PromptSet& prompts) const = 0;
};

/// Deterministic stand-in for a promptable mask model. A blob is selected by
/// a box iff the box covers more than half of the blob's full extent; a
/// selected blob contributes its core rectangle, or its full rectangle when
/// at least one prompt point lies inside the full extent. The output is the
/// union over selected blobs.
class OracleSegmenter final : public Segmenter {
public:
    BinaryMask segment(const SegmentInput& input, const PromptSet& prompts) const override;
};

struct RemoteSegmenterConfig {
    std::string url;  // e.g. http://127.0.0.1:8008/segment
    double timeout_s{10.0};
    int retries{2};  // attempts beyond the first
};

/// HTTP adapter speaking the oracle-equivalent JSON schema:
/// request  {"image_id" | "image": base64 PNG, "boxes": [[x1,y1,x2,y2]...],
///           "points": [[x,y]...]}
/// response {"mask": base64 single-channel PNG}
class RemoteSegmenter final : public Segmenter {
public:
    explicit RemoteSegmenter(RemoteSegmenterConfig cfg);
    BinaryMask segment(const SegmentInput& input, const PromptSet& prompts) const override;

private:
    RemoteSegmenterConfig cfg_;
    std::string host_;  // scheme://host:port
    std::string path_;
};

/// Splits "http://host:port/some/path" into origin and path parts.
void split_url(const std::string& url, std::string& origin, std::string& path);

}  // namespace rrseg
