#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rrseg/dataset.hpp"
#include "rrseg/grpo.hpp"
#include "rrseg/image.hpp"
#include "rrseg/policy.hpp"
#include "rrseg/reward.hpp"
#include "rrseg/segmenter.hpp"

namespace rrseg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SegmenterBackend { Oracle, Remote };
enum class PolicyBackendKind { Toy, Remote };

struct RunConfig {
    std::uint64_t seed{0};
    std::filesystem::path out_dir{"runs/default"};

    GrpoConfig grpo;
    LengthRewardParams length_params;

    SegmenterBackend segmenter_backend{SegmenterBackend::Oracle};
    RemoteSegmenterConfig segmenter_remote;

    PolicyBackendKind policy_backend{PolicyBackendKind::Toy};
    RemoteChatConfig chat;
    ToyPolicyConfig toy;

    std::filesystem::path dataset_root;  // empty: generate synthetic data
    int synthetic_n{64};
    std::uint64_t synthetic_seed{7};
    SynthParams synthetic_params;
    SplitSpec split_spec;
    std::uint64_t split_seed{0};
    bool train_on_split{false};  // false: train on the full dataset

    std::filesystem::path prompts_dir{"assets/prompts"};
    std::string prompt_set{"default"};
    OverlayStyle style;
};

/// Strict JSON loader: unknown keys are rejected with the offending key
/// named; referenced paths must exist. RRSEG_SEGMENT_URL / RRSEG_CHAT_URL
/// environment variables override the remote backend URLs.
RunConfig load_run_config(const std::filesystem::path& path);

/// Resolved-config echo (round-trips through load_run_config).
std::string dump_run_config(const RunConfig& cfg);

}  // namespace rrseg
