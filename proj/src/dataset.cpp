#include "rrseg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "rrseg/png_io.hpp"
#include "rrseg/rng.hpp"

namespace rrseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Tier tier) {
    switch (tier) {
        case Tier::Name: return "name";
        case Tier::Class: return "class";
        case Tier::Function: return "function";
    }
    return "class";
}

Tier tier_from_string(const std::string& s) {
    if (s == "name") return Tier::Name;
    if (s == "class") return Tier::Class;
    if (s == "function") return Tier::Function;
    throw std::invalid_argument("unknown tier: " + s);
}

namespace {

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw std::invalid_argument("box must be [x1,y1,x2,y2]");
    }
    return BBox::normalized(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                            j[3].get<double>());
}

json scene_to_json(const SyntheticScene& scene) {
    json blobs = json::array();
    for (const Blob& b : scene.blobs) {
        blobs.push_back({{"core", box_to_json(b.core)},
                         {"full", box_to_json(b.full)},
                         {"class_id", b.class_id}});
    }
    return {{"width", scene.width},
            {"height", scene.height},
            {"gt_instance", scene.gt_instance},
            {"blobs", std::move(blobs)}};
}

SyntheticScene scene_from_json(const json& j) {
    SyntheticScene scene;
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    scene.gt_instance = j.at("gt_instance").get<int>();
    for (const json& bj : j.at("blobs")) {
        Blob b;
        b.core = box_from_json(bj.at("core"));
        b.full = box_from_json(bj.at("full"));
        b.class_id = bj.at("class_id").get<int>();
        scene.blobs.push_back(b);
    }
    return scene;
}

void validate_sample(const Sample& s) {
    if (s.gt_boxes.empty()) {
        throw std::invalid_argument("sample has no ground-truth boxes");
    }
    if (!s.gt_mask.any()) {
        throw std::invalid_argument("sample has an empty ground-truth mask");
    }
    if (s.satellite.width != s.map.width || s.satellite.height != s.map.height ||
        s.satellite.width != s.gt_mask.width() || s.satellite.height != s.gt_mask.height()) {
        throw std::invalid_argument("sample image/mask dimensions differ");
    }
}

}  // namespace

Dataset load_manifest(const fs::path& root, LoadReport* report) {
    if (!fs::is_directory(root)) {
        throw std::runtime_error("dataset root is not a directory: " + root.string());
    }
    LoadReport local;
    LoadReport& rep = report ? *report : local;

    std::vector<fs::path> entries;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            entries.push_back(entry.path());
        }
    }
    std::sort(entries.begin(), entries.end());

    Dataset out;
    for (const fs::path& dir : entries) {
        try {
            Sample s;
            s.id = dir.filename().string();
            s.satellite = read_png_rgb(dir / "satellite.png");
            s.map = read_png_rgb(dir / "map.png");
            s.gt_mask = read_png_mask(dir / "mask.png");

            std::ifstream meta_in(dir / "meta.json");
            if (!meta_in) {
                throw std::runtime_error("missing meta.json");
            }
            const json meta = json::parse(meta_in);
            s.instruction = meta.at("instruction").get<std::string>();
            s.tier = tier_from_string(meta.at("tier").get<std::string>());
            s.class_label = meta.at("class_label").get<std::string>();
            for (const json& bj : meta.at("gt_boxes")) {
                s.gt_boxes.push_back(box_from_json(bj));
            }
            if (meta.contains("scene")) {
                s.scene = scene_from_json(meta.at("scene"));
            }
            validate_sample(s);
            out.samples.push_back(std::move(s));
            ++rep.loaded;
        } catch (const std::exception& e) {
            ++rep.skipped;
            rep.warnings.push_back(dir.filename().string() + ": " + e.what());
        }
    }
    return out;
}

void write_manifest(const fs::path& root, const Dataset& dataset) {
    fs::create_directories(root);
    for (const Sample& s : dataset.samples) {
        const fs::path dir = root / s.id;
        fs::create_directories(dir);
        write_png(dir / "satellite.png", s.satellite);
        write_png(dir / "map.png", s.map);
        write_png(dir / "mask.png", s.gt_mask);

        json boxes = json::array();
        for (const BBox& b : s.gt_boxes) {
            boxes.push_back(box_to_json(b));
        }
        json meta = {{"instruction", s.instruction},
                     {"tier", to_string(s.tier)},
                     {"class_label", s.class_label},
                     {"gt_boxes", std::move(boxes)}};
        if (s.scene) {
            meta["scene"] = scene_to_json(*s.scene);
        }
        std::ofstream out(dir / "meta.json", std::ios::trunc);
        out << meta.dump(2) << "\n";
    }
}

SplitResult split(const Dataset& dataset, const SplitSpec& spec, std::uint64_t seed) {
    if (dataset.empty()) {
        throw std::invalid_argument("split: dataset is empty");
    }
    if (!(spec.train > 0.0 && spec.val > 0.0 && spec.test > 0.0)) {
        throw std::invalid_argument("split: ratios must be positive");
    }
    const double ratio_sum = spec.train + spec.val + spec.test;
    const double ratios[3] = {spec.train / ratio_sum, spec.val / ratio_sum,
                              spec.test / ratio_sum};

    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const Sample& s = dataset.samples[i];
        strata[{to_string(s.tier), s.class_label}].push_back(i);
    }

    SplitResult out;
    Dataset* parts[3] = {&out.train, &out.val, &out.test};
    for (auto& [key, indices] : strata) {
        Rng rng(mix_seed(seed, hash_str(key.first + "/" + key.second)));
        // Fisher-Yates over the stratum, stable source order first.
        for (std::size_t i = indices.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(indices[i - 1], indices[j]);
        }

        const int n = static_cast<int>(indices.size());
        int counts[3];
        double remainders[3];
        int assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double quota = ratios[p] * n;
            counts[p] = static_cast<int>(quota);
            remainders[p] = quota - counts[p];
            assigned += counts[p];
        }
        int order[3] = {0, 1, 2};
        std::sort(order, order + 3, [&](int a, int b) {
            if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
            return ratios[a] > ratios[b];  // ties favor the larger ratio
        });
        for (int k = 0; assigned < n; ++k) {
            ++counts[order[k % 3]];
            ++assigned;
        }

        std::size_t cursor = 0;
        for (int p = 0; p < 3; ++p) {
            for (int c = 0; c < counts[p]; ++c) {
                parts[p]->samples.push_back(dataset.samples[indices[cursor++]]);
            }
        }
    }
    return out;
}

namespace {

struct ClassInfo {
    const char* label;
    Rgb fill;
};

// Small urban-amenity label set for synthetic scenes.
constexpr ClassInfo kClasses[] = {
    {"school", {214, 162, 86}},  {"park", {96, 176, 112}},
    {"hospital", {210, 116, 116}}, {"market", {182, 142, 196}},
    {"stadium", {110, 158, 206}},  {"museum", {196, 186, 120}},
    {"harbor", {104, 178, 186}},   {"plaza", {172, 172, 172}},
};
constexpr int kClassCount = static_cast<int>(sizeof(kClasses) / sizeof(kClasses[0]));

bool boxes_overlap(const BBox& a, const BBox& b) {
    return a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2;
}

RgbImage render_satellite(const SyntheticScene& scene) {
    RgbImage img(scene.width, scene.height, {52, 58, 48});
    for (const Blob& b : scene.blobs) {
        const Rgb fill = kClasses[b.class_id % kClassCount].fill;
        img.fill_rect(b.full, fill);
        const Rgb core{static_cast<std::uint8_t>(fill[0] / 2),
                       static_cast<std::uint8_t>(fill[1] / 2),
                       static_cast<std::uint8_t>(fill[2] / 2)};
        img.fill_rect(b.core, core);
    }
    return img;
}

RgbImage render_map(const SyntheticScene& scene, int cell) {
    RgbImage img(scene.width, scene.height, {245, 243, 238});
    for (const Blob& b : scene.blobs) {
        // Outline of the full extent plus a class-colored glyph rectangle.
        img.fill_rect(b.full, {214, 214, 214});
        img.fill_rect({b.full.x1 + 1, b.full.y1 + 1, b.full.x2 - 1, b.full.y2 - 1},
                      {245, 243, 238});
        const Rgb glyph = kClasses[b.class_id % kClassCount].fill;
        img.fill_rect({b.full.x1 + 1, b.full.y1 + 1,
                       std::min(b.full.x1 + 1 + cell, b.full.x2 - 1),
                       std::min(b.full.y1 + 1 + cell, b.full.y2 - 1)},
                      glyph);
    }
    return img;
}

}  // namespace

Dataset synth_generate(std::uint64_t seed, int n, const SynthParams& params) {
    if (n < 1) {
        throw std::invalid_argument("synth_generate: n must be >= 1");
    }
    if (params.grid < 4 || params.min_cells < 3 || params.max_cells > params.grid ||
        params.min_cells > params.max_cells) {
        throw std::invalid_argument("synth_generate: inconsistent scene parameters");
    }
    const double cell_w = static_cast<double>(params.width) / params.grid;
    const double cell_h = static_cast<double>(params.height) / params.grid;

    static const Tier kTiers[] = {Tier::Name, Tier::Class, Tier::Function};

    Dataset out;
    Rng rng(mix_seed(seed, 0x5ce1e5));
    for (int i = 0; i < n; ++i) {
        Rng scene_rng = rng.fork(static_cast<std::uint64_t>(i));
        SyntheticScene scene;
        scene.width = params.width;
        scene.height = params.height;

        const int blob_count = scene_rng.uniform_int(params.min_blobs, params.max_blobs);
        int guard = 0;
        while (static_cast<int>(scene.blobs.size()) < blob_count && guard < 1000) {
            ++guard;
            const int w = scene_rng.uniform_int(params.min_cells, params.max_cells);
            const int h = scene_rng.uniform_int(params.min_cells, params.max_cells);
            const int cx = scene_rng.uniform_int(0, params.grid - w);
            const int cy = scene_rng.uniform_int(0, params.grid - h);
            Blob blob;
            blob.full = BBox{cx * cell_w, cy * cell_h, (cx + w) * cell_w, (cy + h) * cell_h};
            blob.core = BBox{blob.full.x1 + cell_w, blob.full.y1 + cell_h,
                             blob.full.x2 - cell_w, blob.full.y2 - cell_h};
            bool ok = true;
            for (const Blob& other : scene.blobs) {
                if (boxes_overlap(blob.full, other.full)) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                scene.blobs.push_back(blob);
            }
        }
        scene.gt_instance = scene_rng.uniform_int(0, static_cast<int>(scene.blobs.size()) - 1);
        // The target's class must be unique so the instruction is unambiguous.
        const int target_class = scene_rng.uniform_int(0, kClassCount - 1);
        for (int b = 0; b < static_cast<int>(scene.blobs.size()); ++b) {
            if (b == scene.gt_instance) {
                scene.blobs[b].class_id = target_class;
            } else {
                const int shifted = scene_rng.uniform_int(1, kClassCount - 1);
                scene.blobs[b].class_id = (target_class + shifted) % kClassCount;
            }
        }

        Sample s;
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%04d", i);
        s.id = id;
        s.satellite = render_satellite(scene);
        s.map = render_map(scene, static_cast<int>(cell_w));
        s.gt_mask = scene.target_mask();
        s.gt_boxes = {scene.target().full};
        s.class_label = kClasses[target_class].label;
        s.tier = kTiers[i % 3];
        switch (s.tier) {
            case Tier::Name:
                s.instruction = "segment the " + s.class_label + " shown on the map";
                break;
            case Tier::Class:
                s.instruction = "segment the " + s.class_label;
                break;
            case Tier::Function:
                s.instruction = "segment the area serving as a " + s.class_label;
                break;
        }
        s.scene = std::move(scene);
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace rrseg
