#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "rrseg/codec.hpp"
#include "rrseg/image.hpp"
#include "rrseg/segmenter.hpp"  // TransportError

namespace rrseg {

struct TokenizedCompletion {
    std::vector<int> tokens;
    std::vector<double> logp_current;  // at sampling time
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::string raw_text;
    bool trainable{false};
    int stage{1};
    std::string context_key;
};

struct PolicyContext {
    int stage{1};
    std::string key;  // conditioning digest used by the toy policy
    PromptText prompt;
    std::vector<const RgbImage*> images;  // map first, satellite second
};

class PolicyBackend {
public:
    virtual ~PolicyBackend() = default;
    virtual std::vector<TokenizedCompletion> sample_group(const PolicyContext& ctx,
                                                          int group_size, double temperature,
                                                          std::uint64_t seed) = 0;
    virtual bool trainable() const = 0;
};

enum class ParamSet { Current, Old, Ref };

struct ToyPolicyConfig {
    int grid{16};        // coordinate quantization bins per axis
    int max_objects{4};  // count heads range over 0..max_objects
    int max_points{4};
    int image_width{64};
    int image_height{64};
};

/// Small grammar-constrained policy over per-context categorical heads:
/// object count, quantized box corners, per-group point count, quantized
/// point coordinates. Conditions only on (stage, context key); image pixels
/// are ignored. Sampled text always carries a fixed think block and a
/// schema-conforming answer, so the format reward is 1 by construction.
///
/// Log-probabilities are always those of the untempered (temperature 1)
/// policy; the sampling temperature only shapes exploration.
class ToyPolicy final : public PolicyBackend {
public:
    explicit ToyPolicy(ToyPolicyConfig cfg = {});

    const ToyPolicyConfig& config() const { return cfg_; }

    std::vector<TokenizedCompletion> sample_group(const PolicyContext& ctx, int group_size,
                                                  double temperature,
                                                  std::uint64_t seed) override;
    bool trainable() const override { return true; }

    Stage1Answer decode_stage1(std::span<const int> tokens) const;
    Stage2Answer decode_stage2(std::span<const int> tokens) const;
    std::string decode_text(int stage, std::span<const int> tokens) const;

    std::size_t block_size(int stage) const;

    struct LogpGrad {
        double logp{0.0};
        std::vector<double> per_token;
        std::vector<double> grad;  // d(sum logp)/d(block), Current only
    };
    /// Sum of per-token log-probabilities plus its analytic gradient with
    /// respect to the context's current-logits block.
    LogpGrad log_prob_and_grad(int stage, const std::string& key,
                               std::span<const int> tokens) const;

    std::vector<double> per_token_logp(int stage, const std::string& key,
                                       std::span<const int> tokens, ParamSet which) const;

    /// Accumulate sum_t weights[t] * d(logp_t)/d(block) into grad_out
    /// (size block_size(stage)).
    void accumulate_weighted_logp_grad(int stage, const std::string& key,
                                       std::span<const int> tokens,
                                       std::span<const double> weights,
                                       std::span<double> grad_out) const;

    /// Current-logits block for in-place updates; allocates on first use.
    std::span<double> context_block(int stage, const std::string& key);

    void ensure_context(int stage, const std::string& key);
    void refresh_old();  // old <- current, all contexts
    void freeze_ref();   // ref <- current, all contexts

    /// Full parameter state, for atomic-step rollback and snapshots.
    struct State {
        std::map<std::pair<int, std::string>, std::vector<double>> cur, old, ref;
    };
    State save_state() const;
    void restore_state(const State& state);

private:
    struct ContextParams {
        std::vector<double> cur, old, ref;
    };
    struct Head {
        std::size_t offset{0};
        int size{0};
    };

    const ContextParams& context(int stage, const std::string& key) const;
    ContextParams& context_mut(int stage, const std::string& key);

    Head count_head(int stage) const;
    Head stage1_coord_head(int slot, int axis) const;
    Head stage2_box_head(int slot, int axis) const;
    Head stage2_point_count_head(int slot) const;
    Head stage2_point_head(int slot, int point, int axis) const;
    std::size_t stage2_slot_size() const;

    /// Invoke fn(token_index, head) for each token; validates token ranges.
    template <typename Fn>
    void walk(int stage, std::span<const int> tokens, Fn&& fn) const;

    double decode_min(int token, double extent) const;
    double decode_max(int token, double extent) const;
    double decode_center(int token, double extent) const;

    ToyPolicyConfig cfg_;
    std::map<std::pair<int, std::string>, ContextParams> contexts_;
    mutable std::mutex alloc_mutex_;
};

struct RemoteChatConfig {
    std::string url;  // e.g. http://127.0.0.1:8009/chat
    std::string model;
    double timeout_s{30.0};
    int retries{2};
    int max_tokens{512};
};

/// Chat-completion client for a multi-image model server. Returned
/// completions carry raw text only (no log-probabilities) and are flagged
/// non-trainable.
class RemoteChatPolicy final : public PolicyBackend {
public:
    explicit RemoteChatPolicy(RemoteChatConfig cfg);

    std::vector<TokenizedCompletion> sample_group(const PolicyContext& ctx, int group_size,
                                                  double temperature,
                                                  std::uint64_t seed) override;
    bool trainable() const override { return false; }

    std::string chat(const PromptText& prompt, const std::vector<const RgbImage*>& images,
                     double temperature) const;

    /// Wire schema: {"model"?, "messages": [{"role": "user", "content":
    /// [{"type": "text", "text": ...}, {"type": "image", "data": base64
    /// PNG}, ...]}], "temperature", "max_tokens"}.
    static std::string build_request_body(const PromptText& prompt,
                                          const std::vector<const RgbImage*>& images,
                                          double temperature, int max_tokens,
                                          const std::string& model);

private:
    RemoteChatConfig cfg_;
    std::string host_;
    std::string path_;
};

}  // namespace rrseg
