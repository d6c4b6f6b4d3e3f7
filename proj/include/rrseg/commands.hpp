#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "rrseg/config.hpp"

namespace rrseg {

// Exit codes shared by the command layer and the CLI driver.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the configured number of training steps; writes metrics.jsonl,
/// parameter snapshots, and the resolved config to the run directory.
int cmd_train(const RunConfig& cfg, std::ostream& out);

/// Scores <pred_dir>/<sample_id>.png predictions against the configured
/// dataset split; writes results.csv and summary.json under the run
/// directory. Missing predictions count as empty masks and are listed.
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& pred_dir,
             const std::string& split_name, std::ostream& out, double f1_threshold = 0.5);

/// Prints the reward components for one completion file, 6 decimals.
/// Stage 1: gt_file is JSON (an array of boxes or an object with gt_boxes).
/// Stage 2: gt_file is a mask PNG and pred_mask must be given.
int cmd_reward_check(int stage, const std::filesystem::path& completion_file,
                     const std::filesystem::path& gt_file,
                     const std::optional<std::filesystem::path>& pred_mask,
                     const LengthRewardParams& params, double match_iou_threshold,
                     std::ostream& out);

/// Overlay boxes (JSON array of [x1,y1,x2,y2]) and a mask PNG onto a sample
/// image and write the result.
int cmd_render(const std::filesystem::path& sample_dir,
               const std::filesystem::path& boxes_file,
               const std::filesystem::path& mask_file,
               const std::filesystem::path& out_path, bool use_map, const OverlayStyle& style,
               std::ostream& out);

/// Generates a synthetic dataset and writes the manifest layout to out_root.
int cmd_synth(std::uint64_t seed, int n, const SynthParams& params,
              const std::filesystem::path& out_root, std::ostream& out);

}  // namespace rrseg
