#include "rrseg/segmenter.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "rrseg/base64.hpp"
#include "rrseg/png_io.hpp"

#include <httplib.h>

namespace rrseg {

using nlohmann::json;

BinaryMask SyntheticScene::target_mask() const {
    return rasterize_rect_union({target().full}, width, height);
}

namespace {

double covered_fraction(const BBox& box, const BBox& full) {
    const double ix = std::max(0.0, std::min(box.x2, full.x2) - std::max(box.x1, full.x1));
    const double iy = std::max(0.0, std::min(box.y2, full.y2) - std::max(box.y1, full.y1));
    const double full_area = full.area();
    if (full_area <= 0.0) {
        return 0.0;
    }
    return ix * iy / full_area;
}

}  // namespace

BinaryMask OracleSegmenter::segment(const SegmentInput& input, const PromptSet& prompts) const {
    if (input.scene == nullptr) {
        throw std::invalid_argument("OracleSegmenter requires a synthetic scene");
    }
    const SyntheticScene& scene = *input.scene;
    const double w = scene.width;
    const double h = scene.height;

    std::vector<BBox> boxes;
    boxes.reserve(prompts.boxes.size());
    for (const BBox& b : prompts.boxes) {
        boxes.push_back(b.clamped(w, h));
    }
    std::vector<Point2D> points;
    points.reserve(prompts.points.size());
    for (const Point2D& p : prompts.points) {
        points.push_back(clamp_point(p, w, h));
    }

    std::vector<BBox> contributed;
    for (const Blob& blob : scene.blobs) {
        bool selected = false;
        for (const BBox& b : boxes) {
            if (covered_fraction(b, blob.full) > 0.5) {
                selected = true;
                break;
            }
        }
        if (!selected) {
            continue;
        }
        bool pointed = false;
        for (const Point2D& p : points) {
            if (blob.full.contains(p)) {
                pointed = true;
                break;
            }
        }
        contributed.push_back(pointed ? blob.full : blob.core);
    }
    return rasterize_rect_union(contributed, scene.width, scene.height);
}

void split_url(const std::string& url, std::string& origin, std::string& path) {
    const auto scheme_end = url.find("://");
    const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) {
        origin = url;
        path = "/";
    } else {
        origin = url.substr(0, path_start);
        path = url.substr(path_start);
    }
}

RemoteSegmenter::RemoteSegmenter(RemoteSegmenterConfig cfg) : cfg_(std::move(cfg)) {
    split_url(cfg_.url, host_, path_);
}

BinaryMask RemoteSegmenter::segment(const SegmentInput& input, const PromptSet& prompts) const {
    json req;
    if (!input.image_id.empty()) {
        req["image_id"] = input.image_id;
    } else if (input.image != nullptr) {
        req["image"] = base64_encode(encode_png(*input.image));
    } else {
        throw std::invalid_argument("RemoteSegmenter requires an image or image_id");
    }
    json boxes = json::array();
    for (const BBox& b : prompts.boxes) {
        boxes.push_back({b.x1, b.y1, b.x2, b.y2});
    }
    json points = json::array();
    for (const Point2D& p : prompts.points) {
        points.push_back({p.x, p.y});
    }
    req["boxes"] = std::move(boxes);
    req["points"] = std::move(points);
    const std::string body = req.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        httplib::Client client(host_);
        const auto sec = static_cast<time_t>(cfg_.timeout_s);
        const auto usec = static_cast<time_t>((cfg_.timeout_s - sec) * 1e6);
        client.set_connection_timeout(sec, usec);
        client.set_read_timeout(sec, usec);
        client.set_write_timeout(sec, usec);
        auto res = client.Post(path_, body, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        const json rsp = json::parse(res->body, nullptr, false);
        if (rsp.is_discarded() || !rsp.contains("mask") || !rsp["mask"].is_string()) {
            last_error = "malformed segment response";
            continue;
        }
        try {
            return decode_png_mask(base64_decode(rsp["mask"].get<std::string>()));
        } catch (const std::exception& e) {
            last_error = std::string("mask decode failed: ") + e.what();
            continue;
        }
    }
    throw TransportError("segment request to " + cfg_.url + " failed: " + last_error);
}

}  // namespace rrseg
