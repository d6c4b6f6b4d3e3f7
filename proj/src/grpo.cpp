#include "rrseg/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "rrseg/parallel.hpp"

namespace rrseg {

using nlohmann::json;

void GrpoConfig::validate() const {
    if (group_size < 2) throw std::invalid_argument("grpo.group_size must be >= 2");
    if (!(clip_epsilon > 0.0)) throw std::invalid_argument("grpo.clip_epsilon must be > 0");
    if (kl_weight < 0.0) throw std::invalid_argument("grpo.kl_weight must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("grpo.learning_rate must be > 0");
    if (steps < 1) throw std::invalid_argument("grpo.steps must be >= 1");
    if (rollout_batch < 1) throw std::invalid_argument("grpo.rollout_batch must be >= 1");
    if (temperature < 0.0) throw std::invalid_argument("grpo.temperature must be >= 0");
    if (workers < 1) throw std::invalid_argument("grpo.workers must be >= 1");
    if (snapshot_every < 0) throw std::invalid_argument("grpo.snapshot_every must be >= 0");
}

std::vector<double> group_advantages(std::span<const double> rewards) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("group_advantages requires at least 2 rewards");
    }
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= static_cast<double>(rewards.size());
    std::vector<double> out(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        out[i] = rewards[i] - mean;
    }
    return out;
}

std::vector<double> clipped_surrogate(std::span<const double> ratios, double advantage,
                                      double clip_epsilon) {
    std::vector<double> out(ratios.size());
    for (std::size_t t = 0; t < ratios.size(); ++t) {
        const double r = ratios[t];
        const double clipped = std::clamp(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
        out[t] = -std::min(r * advantage, clipped * advantage);
    }
    return out;
}

double clipped_surrogate_grad_coeff(double ratio, double advantage, double clip_epsilon) {
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    if (ratio * advantage <= clipped * advantage) {
        return ratio * advantage;
    }
    return 0.0;
}

std::vector<double> token_kl(std::span<const double> logp_current,
                             std::span<const double> logp_ref) {
    if (logp_current.size() != logp_ref.size()) {
        throw std::invalid_argument("token_kl: length mismatch");
    }
    std::vector<double> out(logp_current.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double d = logp_ref[t] - logp_current[t];
        out[t] = std::exp(d) - d - 1.0;
    }
    return out;
}

GroupRollout make_group_rollout(std::vector<TokenizedCompletion> completions,
                                std::vector<double> rewards) {
    if (completions.size() != rewards.size()) {
        throw std::invalid_argument("make_group_rollout: completions/rewards size mismatch");
    }
    GroupRollout roll;
    roll.completions = std::move(completions);
    roll.rewards = std::move(rewards);
    roll.advantages = group_advantages(roll.rewards);
    double sum = 0.0;
    for (double r : roll.rewards) {
        sum += r;
    }
    roll.baseline = sum / static_cast<double>(roll.rewards.size());
    return roll;
}

int select_best(std::span<const double> rewards, GrpoConfig::Selection mode, Rng& rng) {
    if (rewards.empty()) {
        throw std::invalid_argument("select_best: empty rewards");
    }
    if (mode == GrpoConfig::Selection::Argmax) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(rewards.size()); ++i) {
            if (rewards[i] > rewards[best]) {
                best = i;
            }
        }
        return best;
    }
    double m = rewards[0];
    for (double r : rewards) {
        m = std::max(m, r);
    }
    std::vector<double> w(rewards.size());
    double total = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        w[i] = std::exp(rewards[i] - m);
        total += w[i];
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(w.size()) - 1;
}

void MomentOptimizer::update(const std::string& block_key, std::span<double> params,
                             std::span<const double> grad) {
    if (params.size() != grad.size()) {
        throw std::invalid_argument("optimizer: params/grad size mismatch");
    }
    Slot& slot = slots_[block_key];
    if (slot.m.empty()) {
        slot.m.assign(params.size(), 0.0);
        slot.v.assign(params.size(), 0.0);
    }
    slot.step += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        params[i] -= cfg_.learning_rate *
                     (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * params[i]);
    }
}

GroupUpdate grpo_group_gradient(const ToyPolicy& policy, int stage, const std::string& key,
                                const std::vector<TokenizedCompletion>& group,
                                std::span<const double> advantages, double clip_epsilon,
                                double kl_weight) {
    if (group.size() != advantages.size()) {
        throw std::invalid_argument("grpo_group_gradient: group/advantage size mismatch");
    }
    const double inv_g = 1.0 / static_cast<double>(group.size());
    GroupUpdate out;
    out.grad.assign(policy.block_size(stage), 0.0);
    std::vector<double> weights;
    for (std::size_t g = 0; g < group.size(); ++g) {
        const TokenizedCompletion& tc = group[g];
        const double advantage = advantages[g];
        const auto cur = policy.per_token_logp(stage, key, tc.tokens, ParamSet::Current);
        const auto old = policy.per_token_logp(stage, key, tc.tokens, ParamSet::Old);
        const auto ref = policy.per_token_logp(stage, key, tc.tokens, ParamSet::Ref);
        weights.assign(cur.size(), 0.0);
        for (std::size_t t = 0; t < cur.size(); ++t) {
            const double ratio = std::exp(cur[t] - old[t]);
            const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
            out.surrogate += -std::min(ratio * advantage, clipped * advantage) * inv_g;
            const double d = ref[t] - cur[t];
            out.kl += (std::exp(d) - d - 1.0) * inv_g;
            // d(-min)/dlogp + kl_weight * d(k3)/dlogp
            weights[t] = (-clipped_surrogate_grad_coeff(ratio, advantage, clip_epsilon) +
                          kl_weight * (1.0 - std::exp(d))) *
                         inv_g;
        }
        policy.accumulate_weighted_logp_grad(stage, key, tc.tokens, weights, out.grad);
    }
    out.loss = out.surrogate + kl_weight * out.kl;
    return out;
}

std::string metrics_json_line(const StepMetrics& m) {
    auto stage_json = [](const StageMetrics& s) {
        return json{{"mean_reward", s.mean_reward}, {"mean_iou", s.mean_iou},
                    {"kl", s.kl},                   {"loss", s.loss},
                    {"mean_accuracy", s.mean_accuracy}, {"mean_format", s.mean_format},
                    {"mean_length", s.mean_length}};
    };
    const json record = {
        {"step", m.step}, {"stage1", stage_json(m.stage1)}, {"stage2", stage_json(m.stage2)}};
    return record.dump();
}

Trainer::Trainer(ToyPolicy& policy, const Segmenter& segmenter, const Dataset& dataset,
                 const PromptTemplateSet& prompts, TrainerOptions options)
    : policy_(policy),
      segmenter_(segmenter),
      dataset_(dataset),
      prompts_(prompts),
      opts_(options),
      optimizer_(MomentOptimizerConfig{.learning_rate = options.grpo.learning_rate}) {
    opts_.grpo.validate();
    if (dataset_.empty()) {
        throw std::invalid_argument("Trainer requires a nonempty dataset");
    }
    if (!policy_.trainable()) {
        throw std::invalid_argument("Trainer requires a trainable policy backend");
    }
    // The reference policy freezes here; the behavior policy starts equal to
    // the current one and refreshes after each outer step.
    policy_.freeze_ref();
    policy_.refresh_old();
}

namespace {

std::uint64_t derive_seed(std::uint64_t base, int step, const std::string& sample_id,
                          std::uint64_t tag) {
    return mix_seed(mix_seed(base, static_cast<std::uint64_t>(step)),
                    hash_str(sample_id) ^ tag);
}

struct StageAccumulator {
    double reward{0.0}, iou{0.0}, accuracy{0.0}, format{0.0}, length{0.0};
    double kl{0.0}, loss{0.0};
    int members{0};
    int groups{0};

    void add_member(const RewardBreakdown& r, double member_iou) {
        reward += r.total;
        iou += member_iou;
        accuracy += r.accuracy;
        format += r.format;
        length += r.length;
        ++members;
    }
    void add_group(const GroupUpdate& upd) {
        kl += upd.kl;
        loss += upd.loss;
        ++groups;
    }
    StageMetrics finish() const {
        StageMetrics m;
        if (members > 0) {
            m.mean_reward = reward / members;
            m.mean_iou = iou / members;
            m.mean_accuracy = accuracy / members;
            m.mean_format = format / members;
            m.mean_length = length / members;
        }
        if (groups > 0) {
            m.kl = kl / groups;
            m.loss = loss / groups;
        }
        return m;
    }
};

}  // namespace

Trainer::SampleOutcome Trainer::run_sample(const Sample& sample) {
    const GrpoConfig& cfg = opts_.grpo;
    const double w = sample.satellite.width;
    const double h = sample.satellite.height;
    SegmentInput seg_input;
    seg_input.scene = sample.scene ? &*sample.scene : nullptr;
    seg_input.image = &sample.satellite;
    seg_input.image_id = sample.id;
    seg_input.width = sample.satellite.width;
    seg_input.height = sample.satellite.height;

    StageAccumulator acc1, acc2;

    // Stage 1: localization rollouts.
    PolicyContext ctx1{1, sample.id, prompts_.render(sample, 1), {&sample.map, &sample.satellite}};
    auto group1 = policy_.sample_group(ctx1, cfg.group_size, cfg.temperature,
                                       derive_seed(opts_.seed, step_, sample.id, 0xa1));

    struct Stage1Member {
        Completion completion;
        std::vector<BBox> boxes;
        BinaryMask coarse;
        RewardBreakdown reward;
        double iou{0.0};
    };
    std::vector<Stage1Member> members1(group1.size());
    parallel_for(static_cast<int>(group1.size()), cfg.workers, [&](int g) {
        Stage1Member& m = members1[g];
        m.completion = parse_completion(group1[g].raw_text, 1);
        if (m.completion.format_valid) {
            clamp_to_image(*m.completion.stage1, w, h);
            m.boxes = m.completion.stage1->boxes;
        }
        if (!m.boxes.empty()) {
            m.coarse = segmenter_.segment(seg_input, PromptSet{m.boxes, {}});
        } else {
            m.coarse = BinaryMask(sample.satellite.width, sample.satellite.height);
        }
        m.reward = stage1_reward(m.completion, sample.gt_boxes, cfg.match_iou_threshold);
        m.iou = mask_iou(m.coarse, sample.gt_mask);
    });

    std::vector<double> rewards1(members1.size());
    for (std::size_t g = 0; g < members1.size(); ++g) {
        rewards1[g] = members1[g].reward.total;
        acc1.add_member(members1[g].reward, members1[g].iou);
    }
    const GroupRollout roll1 = make_group_rollout(std::move(group1), std::move(rewards1));
    const GroupUpdate upd1 = grpo_group_gradient(policy_, 1, sample.id, roll1.completions,
                                                 roll1.advantages, cfg.clip_epsilon,
                                                 cfg.kl_weight);
    optimizer_.update("stage1/" + sample.id, policy_.context_block(1, sample.id), upd1.grad);
    acc1.add_group(upd1);

    // Select the stage-1 outcome that seeds refinement.
    Rng select_rng(derive_seed(opts_.seed, step_, sample.id, 0x5e1));
    const int gstar = select_best(roll1.rewards, cfg.selection, select_rng);

    // Stage 2: rendered feedback from this step's stage-1 outputs.
    const RgbImage rendered_sat =
        overlay(sample.satellite, members1[gstar].boxes, members1[gstar].coarse, opts_.style);
    const RgbImage rendered_map =
        overlay(sample.map, members1[gstar].boxes, members1[gstar].coarse, opts_.style);

    PolicyContext ctx2{2, sample.id, prompts_.render(sample, 2), {&rendered_map, &rendered_sat}};
    auto group2 = policy_.sample_group(ctx2, cfg.group_size, cfg.temperature,
                                       derive_seed(opts_.seed, step_, sample.id, 0xa2));

    struct Stage2Member {
        Completion completion;
        BinaryMask final_mask;
        RewardBreakdown reward;
        double iou{0.0};
    };
    std::vector<Stage2Member> members2(group2.size());
    parallel_for(static_cast<int>(group2.size()), cfg.workers, [&](int g) {
        Stage2Member& m = members2[g];
        m.completion = parse_completion(group2[g].raw_text, 2);
        m.final_mask = BinaryMask(sample.satellite.width, sample.satellite.height);
        if (m.completion.format_valid) {
            clamp_to_image(*m.completion.stage2, w, h);
            // One segmenter call per group, masks fused by union.
            for (const PromptGroup& pg : m.completion.stage2->groups) {
                m.final_mask =
                    m.final_mask | segmenter_.segment(seg_input, PromptSet{{pg.box}, pg.points});
            }
        }
        m.reward = stage2_reward(m.completion, m.final_mask, sample.gt_mask, opts_.length_params);
        m.iou = mask_iou(m.final_mask, sample.gt_mask);
    });

    std::vector<double> rewards2(members2.size());
    for (std::size_t g = 0; g < members2.size(); ++g) {
        rewards2[g] = members2[g].reward.total;
        acc2.add_member(members2[g].reward, members2[g].iou);
    }
    const GroupRollout roll2 = make_group_rollout(std::move(group2), std::move(rewards2));
    const GroupUpdate upd2 = grpo_group_gradient(policy_, 2, sample.id, roll2.completions,
                                                 roll2.advantages, cfg.clip_epsilon,
                                                 cfg.kl_weight);
    optimizer_.update("stage2/" + sample.id, policy_.context_block(2, sample.id), upd2.grad);
    acc2.add_group(upd2);

    if (trace_sink) {
        int best2 = 0;
        for (int g = 1; g < static_cast<int>(roll2.rewards.size()); ++g) {
            if (roll2.rewards[g] > roll2.rewards[best2]) {
                best2 = g;
            }
        }
        EpisodeTrace trace;
        trace.sample_id = sample.id;
        trace.selected_stage1 = gstar;
        trace.stage1_boxes = members1[gstar].boxes;
        trace.coarse_mask = members1[gstar].coarse;
        trace.rendered_satellite = rendered_sat;
        trace.rendered_map = rendered_map;
        if (members2[best2].completion.format_valid) {
            trace.stage2_groups = members2[best2].completion.stage2->groups;
        }
        trace.final_mask = members2[best2].final_mask;
        trace.stage1_rewards = members1[gstar].reward;
        trace.stage2_rewards = members2[best2].reward;
        trace_sink(trace);
    }

    return {acc1.finish(), acc2.finish()};
}

StepMetrics Trainer::train_step() {
    ++step_;
    const ToyPolicy::State policy_backup = policy_.save_state();
    const MomentOptimizer::State optimizer_backup = optimizer_.save_state();
    try {
        // Mini-batch draw, without replacement, reshuffled per step.
        const int n = static_cast<int>(dataset_.size());
        const int batch_size = std::min(opts_.grpo.rollout_batch, n);
        std::vector<int> indices(n);
        for (int i = 0; i < n; ++i) indices[i] = i;
        Rng batch_rng(derive_seed(opts_.seed, step_, "batch", 0xb));
        for (int i = 0; i < batch_size; ++i) {
            const int j = batch_rng.uniform_int(i, n - 1);
            std::swap(indices[i], indices[j]);
        }

        StageAccumulator total1, total2;
        for (int i = 0; i < batch_size; ++i) {
            const SampleOutcome outcome = run_sample(dataset_.samples[indices[i]]);
            total1.reward += outcome.stage1.mean_reward;
            total1.iou += outcome.stage1.mean_iou;
            total1.accuracy += outcome.stage1.mean_accuracy;
            total1.format += outcome.stage1.mean_format;
            total1.length += outcome.stage1.mean_length;
            total1.kl += outcome.stage1.kl;
            total1.loss += outcome.stage1.loss;
            ++total1.members;
            ++total1.groups;
            total2.reward += outcome.stage2.mean_reward;
            total2.iou += outcome.stage2.mean_iou;
            total2.accuracy += outcome.stage2.mean_accuracy;
            total2.format += outcome.stage2.mean_format;
            total2.length += outcome.stage2.mean_length;
            total2.kl += outcome.stage2.kl;
            total2.loss += outcome.stage2.loss;
            ++total2.members;
            ++total2.groups;
        }

        policy_.refresh_old();

        StepMetrics metrics;
        metrics.step = step_;
        metrics.stage1 = total1.finish();
        metrics.stage2 = total2.finish();
        return metrics;
    } catch (...) {
        policy_.restore_state(policy_backup);
        optimizer_.restore_state(optimizer_backup);
        --step_;
        throw;
    }
}

}  // namespace rrseg
