#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rrseg/codec.hpp"
#include "rrseg/dataset.hpp"
#include "rrseg/image.hpp"
#include "rrseg/policy.hpp"
#include "rrseg/reward.hpp"
#include "rrseg/rng.hpp"
#include "rrseg/segmenter.hpp"

namespace rrseg {

struct GrpoConfig {
    int group_size{8};
    double clip_epsilon{0.5};
    double kl_weight{0.005};
    double learning_rate{1e-6};
    int steps{250};
    int rollout_batch{128};
    enum class Selection { Argmax, Softmax };
    Selection selection{Selection::Argmax};
    double temperature{1.0};
    double match_iou_threshold{0.5};
    int workers{1};
    int snapshot_every{0};  // 0 = final snapshot only

    void validate() const;
};

/// Mean-centered rewards: A_g = R_g - mean(R). Requires at least 2 entries.
std::vector<double> group_advantages(std::span<const double> rewards);

/// Per-token loss contributions -min(r A, clip(r, 1-eps, 1+eps) A).
std::vector<double> clipped_surrogate(std::span<const double> ratios, double advantage,
                                      double clip_epsilon);

/// d/d(logp_current) of min(r A, clip(r) A): r A while the unclipped branch
/// is active, 0 once the clip saturates.
double clipped_surrogate_grad_coeff(double ratio, double advantage, double clip_epsilon);

/// Per-token k3 divergence estimate exp(d) - d - 1 with d = logp_ref -
/// logp_current. Nonnegative for any inputs.
std::vector<double> token_kl(std::span<const double> logp_current,
                             std::span<const double> logp_ref);

/// Argmax with lowest-index tie break, or softmax sampling proportional to
/// exp(reward) from the provided stream.
int select_best(std::span<const double> rewards, GrpoConfig::Selection mode, Rng& rng);

struct MomentOptimizerConfig {
    double learning_rate{1e-6};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    double weight_decay{0.0};
};

/// First-order adaptive-moment update with decoupled weight decay, keyed by
/// parameter-block name so disjoint blocks keep independent moments.
class MomentOptimizer {
public:
    explicit MomentOptimizer(MomentOptimizerConfig cfg) : cfg_(cfg) {}

    void update(const std::string& block_key, std::span<double> params,
                std::span<const double> grad);

    struct Slot {
        std::vector<double> m, v;
        long step{0};
    };
    using State = std::map<std::string, Slot>;
    State save_state() const { return slots_; }
    void restore_state(State state) { slots_ = std::move(state); }

private:
    MomentOptimizerConfig cfg_;
    State slots_;
};

struct GroupUpdate {
    double loss{0.0};       // surrogate + kl_weight * kl
    double surrogate{0.0};  // -(1/G) sum_g sum_t min(.)
    double kl{0.0};         // (1/G) sum_g sum_t k3
    std::vector<double> grad;
};

/// Loss and analytic gradient of the clipped group objective for one rollout
/// group, with the KL anchor against the frozen reference policy. Token sums
/// per completion, group mean, matching the objective.
GroupUpdate grpo_group_gradient(const ToyPolicy& policy, int stage, const std::string& key,
                                const std::vector<TokenizedCompletion>& group,
                                std::span<const double> advantages, double clip_epsilon,
                                double kl_weight);

struct GroupRollout {
    std::vector<TokenizedCompletion> completions;
    std::vector<double> rewards;
    double baseline{0.0};
    std::vector<double> advantages;  // rewards - baseline; sums to zero
};

GroupRollout make_group_rollout(std::vector<TokenizedCompletion> completions,
                                std::vector<double> rewards);

struct EpisodeTrace {
    std::string sample_id;
    int selected_stage1{0};  // group index with maximal stage-1 reward
    std::vector<BBox> stage1_boxes;
    BinaryMask coarse_mask;
    RgbImage rendered_satellite;
    RgbImage rendered_map;
    std::vector<PromptGroup> stage2_groups;
    BinaryMask final_mask;
    RewardBreakdown stage1_rewards;
    RewardBreakdown stage2_rewards;
};

struct StageMetrics {
    double mean_reward{0.0};
    double mean_iou{0.0};
    double kl{0.0};
    double loss{0.0};
    double mean_accuracy{0.0};
    double mean_format{0.0};
    double mean_length{0.0};
};

struct StepMetrics {
    int step{0};
    StageMetrics stage1;
    StageMetrics stage2;
};

std::string metrics_json_line(const StepMetrics& m);

struct TrainerOptions {
    GrpoConfig grpo;
    LengthRewardParams length_params;
    OverlayStyle style;
    std::uint64_t seed{0};
};

/// Two-stage end-to-end group-relative training: per sample, stage-1 rollouts
/// are scored and applied, the best stage-1 outcome is rendered into the
/// stage-2 inputs of the same step, stage-2 rollouts are scored and applied,
/// and the behavior policy refreshes once per outer step. A backend failure
/// aborts the step with all parameters and optimizer state rolled back.
class Trainer {
public:
    Trainer(ToyPolicy& policy, const Segmenter& segmenter, const Dataset& dataset,
            const PromptTemplateSet& prompts, TrainerOptions options);

    StepMetrics train_step();
    int step() const { return step_; }

    const ToyPolicy& policy() const { return policy_; }

    /// Per-sample episode records; unset by default.
    std::function<void(const EpisodeTrace&)> trace_sink;

private:
    struct SampleOutcome {
        StageMetrics stage1;
        StageMetrics stage2;
    };
    SampleOutcome run_sample(const Sample& sample);

    ToyPolicy& policy_;
    const Segmenter& segmenter_;
    const Dataset& dataset_;
    const PromptTemplateSet& prompts_;
    TrainerOptions opts_;
    MomentOptimizer optimizer_;
    int step_{0};
};

}  // namespace rrseg
