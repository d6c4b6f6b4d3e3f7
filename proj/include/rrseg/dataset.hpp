#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rrseg/geometry.hpp"
#include "rrseg/image.hpp"
#include "rrseg/segmenter.hpp"

namespace rrseg {

enum class Tier { Name, Class, Function };

std::string to_string(Tier tier);
Tier tier_from_string(const std::string& s);  // throws std::invalid_argument

struct Sample {
    std::string id;
    RgbImage satellite;
    RgbImage map;
    BinaryMask gt_mask;
    std::vector<BBox> gt_boxes;  // at least one
    std::string instruction;
    Tier tier{Tier::Class};
    std::string class_label;
    std::optional<SyntheticScene> scene;  // present for synthetic samples
};

struct Dataset {
    std::vector<Sample> samples;

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

struct LoadReport {
    int loaded{0};
    int skipped{0};
    std::vector<std::string> warnings;
};

/// Layout: <root>/<id>/{satellite.png, map.png, mask.png, meta.json}.
/// Samples violating the invariants (empty mask, no boxes, mismatched image
/// dimensions) are skipped and reported, not fatal.
Dataset load_manifest(const std::filesystem::path& root, LoadReport* report = nullptr);

void write_manifest(const std::filesystem::path& root, const Dataset& dataset);

struct SplitSpec {
    double train{6.0};
    double val{1.0};
    double test{3.0};
};

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Stratified by (tier, class_label); per-stratum sizes follow the spec
/// ratios to within one sample (largest remainder, ties favoring the larger
/// ratio). Deterministic under `seed`.
SplitResult split(const Dataset& dataset, const SplitSpec& spec, std::uint64_t seed);

struct SynthParams {
    int width{64};
    int height{64};
    int grid{16};      // lattice cells per side; all blob edges snap to it
    int min_blobs{1};
    int max_blobs{3};
    int min_cells{3};  // full-extent width/height in cells
    int max_cells{8};
};

/// Seeded synthetic scenes: 1-3 disjoint blobs, cores strictly inside full
/// extents, one designated target whose class is unique in the scene.
/// gt_boxes = {target full box}; gt_mask = its rasterization.
Dataset synth_generate(std::uint64_t seed, int n, const SynthParams& params = {});

}  // namespace rrseg
