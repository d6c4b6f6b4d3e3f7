#include "rrseg/grpo.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace rrseg {
namespace {

TEST(GroupAdvantages, MeanCentering) {
    const std::vector<double> rewards{1, 2, 3};
    const auto adv = group_advantages(rewards);
    EXPECT_DOUBLE_EQ(adv[0], -1.0);
    EXPECT_DOUBLE_EQ(adv[1], 0.0);
    EXPECT_DOUBLE_EQ(adv[2], 1.0);
}

TEST(GroupAdvantages, AllEqualGivesZeros) {
    const std::vector<double> rewards{2.5, 2.5, 2.5, 2.5};
    for (double a : group_advantages(rewards)) {
        EXPECT_DOUBLE_EQ(a, 0.0);
    }
}

TEST(GroupAdvantages, TwoElementCase) {
    const std::vector<double> rewards{0, 3};
    const auto adv = group_advantages(rewards);
    EXPECT_DOUBLE_EQ(adv[0], -1.5);
    EXPECT_DOUBLE_EQ(adv[1], 1.5);
}

TEST(GroupAdvantages, RequiresAtLeastTwo) {
    EXPECT_THROW(group_advantages(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(ClippedSurrogate, RatioOneGivesMinusAdvantage) {
    for (double A : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
        const auto c = clipped_surrogate(std::vector<double>{1.0}, A, 0.5);
        EXPECT_DOUBLE_EQ(c[0], -A);
    }
}

TEST(ClippedSurrogate, PositiveAdvantageClipsHigh) {
    // min(2*1, 1.5*1) = 1.5 -> contribution -1.5
    const auto c = clipped_surrogate(std::vector<double>{2.0}, 1.0, 0.5);
    EXPECT_DOUBLE_EQ(c[0], -1.5);
}

TEST(ClippedSurrogate, NegativeAdvantageKeepsUnclippedMin) {
    // min(2*(-1), 1.5*(-1)) = -2 -> contribution +2
    const auto c = clipped_surrogate(std::vector<double>{2.0}, -1.0, 0.5);
    EXPECT_DOUBLE_EQ(c[0], 2.0);
}

TEST(ClippedSurrogate, GradCoeffMatchesSelectedBranch) {
    // Positive advantage: gradient flows while r <= 1 + eps.
    EXPECT_DOUBLE_EQ(clipped_surrogate_grad_coeff(0.3, 2.0, 0.5), 0.6);
    EXPECT_DOUBLE_EQ(clipped_surrogate_grad_coeff(1.2, 2.0, 0.5), 2.4);
    EXPECT_DOUBLE_EQ(clipped_surrogate_grad_coeff(1.8, 2.0, 0.5), 0.0);
    // Negative advantage: gradient flows while r >= 1 - eps.
    EXPECT_DOUBLE_EQ(clipped_surrogate_grad_coeff(1.8, -2.0, 0.5), -3.6);
    EXPECT_DOUBLE_EQ(clipped_surrogate_grad_coeff(0.3, -2.0, 0.5), 0.0);
}

TEST(TokenKl, ZeroWhenEqual) {
    const std::vector<double> lp{-1.0, -2.0, -0.25};
    for (double v : token_kl(lp, lp)) {
        EXPECT_DOUBLE_EQ(v, 0.0);
    }
}

TEST(TokenKl, ClosedFormAtLogTwo) {
    const std::vector<double> cur{-2.0};
    const std::vector<double> ref{-2.0 + std::log(2.0)};
    const auto kl = token_kl(cur, ref);
    EXPECT_NEAR(kl[0], 2.0 - std::log(2.0) - 1.0, 1e-12);
}

TEST(TokenKl, AlwaysNonNegative) {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const std::vector<double> cur{-5.0 * rng.uniform()};
        const std::vector<double> ref{-5.0 * rng.uniform()};
        EXPECT_GE(token_kl(cur, ref)[0], 0.0);
    }
}

TEST(SelectBest, ArgmaxAndTieBreak) {
    Rng rng(0);
    EXPECT_EQ(select_best(std::vector<double>{1, 3, 2}, GrpoConfig::Selection::Argmax, rng), 1);
    EXPECT_EQ(select_best(std::vector<double>{2, 2}, GrpoConfig::Selection::Argmax, rng), 0);
}

TEST(SelectBest, SoftmaxFrequencies) {
    // exp(0) : exp(ln 3) = 1 : 3, so index 1 should win 75% of draws.
    const std::vector<double> rewards{0.0, std::log(3.0)};
    Rng rng(20240202);
    int ones = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        ones += select_best(rewards, GrpoConfig::Selection::Softmax, rng);
    }
    EXPECT_NEAR(static_cast<double>(ones) / draws, 0.75, 0.01);
}

TEST(MomentOptimizer, DescendsAQuadratic) {
    MomentOptimizer opt({.learning_rate = 0.1});
    std::vector<double> x{5.0, -3.0};
    for (int i = 0; i < 500; ++i) {
        const std::vector<double> grad{2.0 * x[0], 2.0 * x[1]};
        opt.update("x", x, grad);
    }
    EXPECT_NEAR(x[0], 0.0, 1e-2);
    EXPECT_NEAR(x[1], 0.0, 1e-2);
}

TEST(MomentOptimizer, KeyedStatesIndependent) {
    MomentOptimizer opt({.learning_rate = 0.5});
    std::vector<double> a{1.0}, b{1.0};
    opt.update("a", a, std::vector<double>{1.0});
    // First step on "b" must see fresh moments, not "a"'s.
    opt.update("b", b, std::vector<double>{1.0});
    EXPECT_DOUBLE_EQ(a[0], b[0]);
}

struct GroupFixture {
    ToyPolicy policy;
    std::vector<TokenizedCompletion> group;

    explicit GroupFixture(int stage, std::uint64_t seed, int group_size = 2) {
        PolicyContext ctx;
        ctx.stage = stage;
        ctx.key = "g";
        group = policy.sample_group(ctx, group_size, 1.0, seed);
    }
};

// With beta = 0 and current == old (fresh policy), the surrogate gradient is
// exactly the vanilla policy-gradient estimator -(1/G) sum A * grad(logp).
TEST(GroupGradient, ReducesToPolicyGradientAtRatioOne) {
    GroupFixture fx(1, 11);
    const std::vector<double> advantages{1.5, -1.5};
    const GroupUpdate upd =
        grpo_group_gradient(fx.policy, 1, "g", fx.group, advantages, 0.5, 0.0);

    std::vector<double> expected(fx.policy.block_size(1), 0.0);
    for (std::size_t g = 0; g < fx.group.size(); ++g) {
        const auto lg = fx.policy.log_prob_and_grad(1, "g", fx.group[g].tokens);
        for (std::size_t i = 0; i < expected.size(); ++i) {
            expected[i] += -advantages[g] * lg.grad[i] / static_cast<double>(fx.group.size());
        }
    }
    ASSERT_EQ(upd.grad.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_NEAR(upd.grad[i], expected[i], 1e-12);
    }
    // At ratio 1 the loss is -(1/G) sum_g A_g * |tokens_g|... no: each token
    // contributes -A_g, so the loss is -(1/G) sum_g A_g * T_g.
    double expected_loss = 0.0;
    for (std::size_t g = 0; g < fx.group.size(); ++g) {
        expected_loss +=
            -advantages[g] * static_cast<double>(fx.group[g].tokens.size()) / 2.0;
    }
    EXPECT_NEAR(upd.loss, expected_loss, 1e-12);
    EXPECT_NEAR(upd.kl, 0.0, 1e-15);
}

// Full-loss finite-difference check, including clipping and the KL term,
// against hand-computed loss evaluations.
TEST(GroupGradient, MatchesFiniteDifferenceOfScalarLoss) {
    GroupFixture fx(2, 57, 4);
    // Make ratios and KL nontrivial: perturb current away from old/ref.
    auto block = fx.policy.context_block(2, "g");
    Rng rng(5);
    for (std::size_t i = 0; i < block.size(); ++i) {
        block[i] += 0.3 * (rng.uniform() - 0.5);
    }
    const std::vector<double> advantages{0.8, -0.2, -0.4, -0.2};
    const double eps = 0.2, beta = 0.05;

    auto scalar_loss = [&]() {
        double surrogate = 0.0, kl = 0.0;
        for (std::size_t g = 0; g < fx.group.size(); ++g) {
            const auto cur =
                fx.policy.per_token_logp(2, "g", fx.group[g].tokens, ParamSet::Current);
            const auto old =
                fx.policy.per_token_logp(2, "g", fx.group[g].tokens, ParamSet::Old);
            const auto ref =
                fx.policy.per_token_logp(2, "g", fx.group[g].tokens, ParamSet::Ref);
            std::vector<double> ratios(cur.size());
            for (std::size_t t = 0; t < cur.size(); ++t) {
                ratios[t] = std::exp(cur[t] - old[t]);
            }
            for (double c : clipped_surrogate(ratios, advantages[g], eps)) {
                surrogate += c / static_cast<double>(fx.group.size());
            }
            for (double k : token_kl(cur, ref)) {
                kl += k / static_cast<double>(fx.group.size());
            }
        }
        return surrogate + beta * kl;
    };

    const GroupUpdate upd =
        grpo_group_gradient(fx.policy, 2, "g", fx.group, advantages, eps, beta);
    EXPECT_NEAR(upd.loss, scalar_loss(), 1e-12);

    const double h = 1e-6;
    for (std::size_t i = 0; i < block.size(); i += 23) {
        const double saved = block[i];
        block[i] = saved + h;
        const double up = scalar_loss();
        block[i] = saved - h;
        const double down = scalar_loss();
        block[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        EXPECT_NEAR(upd.grad[i], fd, 1e-5) << "param " << i;
    }
}

TEST(MetricsJson, OneRecordPerStepWithStageFields) {
    StepMetrics m;
    m.step = 3;
    m.stage1.mean_reward = 1.5;
    m.stage2.mean_iou = 0.25;
    const std::string line = metrics_json_line(m);
    EXPECT_NE(line.find("\"step\":3"), std::string::npos);
    EXPECT_NE(line.find("\"stage1\""), std::string::npos);
    EXPECT_NE(line.find("\"stage2\""), std::string::npos);
    EXPECT_NE(line.find("\"mean_reward\""), std::string::npos);
    EXPECT_NE(line.find("\"kl\""), std::string::npos);
    EXPECT_NE(line.find("\"loss\""), std::string::npos);
    EXPECT_EQ(line.find('\n'), std::string::npos);
}

class TrainerFixture : public ::testing::Test {
protected:
    TrainerFixture()
        : data_(synth_generate(7, 4)),
          prompts_(PromptTemplateSet::load(testing::prompts_dir(), "default")) {}

    TrainerOptions options(std::uint64_t seed, double lr = 0.05) {
        TrainerOptions o;
        o.grpo.group_size = 4;
        o.grpo.rollout_batch = 4;
        o.grpo.learning_rate = lr;
        o.grpo.steps = 2;
        o.seed = seed;
        return o;
    }

    Dataset data_;
    OracleSegmenter segmenter_;
    PromptTemplateSet prompts_;
};

TEST_F(TrainerFixture, SeededRunsProduceIdenticalMetrics) {
    auto run = [&](int workers) {
        ToyPolicy policy;
        TrainerOptions o = options(99);
        o.grpo.workers = workers;
        Trainer trainer(policy, segmenter_, data_, prompts_, o);
        std::string log;
        for (int s = 0; s < 3; ++s) {
            log += metrics_json_line(trainer.train_step()) + "\n";
        }
        return log;
    };
    const std::string a = run(1);
    EXPECT_EQ(a, run(1));
    // Worker count does not change results either (index-slotted rollouts).
    EXPECT_EQ(a, run(4));
}

TEST_F(TrainerFixture, AllEqualRewardsWithZeroKlLeaveParametersUnchanged) {
    // A scene whose reward cannot vary: force group_size samples to produce
    // identical completions by zero temperature.
    ToyPolicy policy;
    TrainerOptions o = options(1);
    o.grpo.temperature = 0.0;  // identical completions -> equal rewards
    o.grpo.kl_weight = 0.0;
    Trainer trainer(policy, segmenter_, data_, prompts_, o);
    trainer.train_step();
    // With zero advantages everywhere and beta = 0, gradients vanish, so the
    // logits must still be exactly zero.
    const ToyPolicy::State state = policy.save_state();
    for (const auto& [key, cur] : state.cur) {
        for (double v : cur) {
            EXPECT_DOUBLE_EQ(v, 0.0) << key.second;
        }
    }
}

TEST_F(TrainerFixture, StageTwoInputsComeFromThisStepsStageOne) {
    ToyPolicy policy;
    Trainer trainer(policy, segmenter_, data_, prompts_, options(5));
    std::vector<EpisodeTrace> traces;
    trainer.trace_sink = [&](const EpisodeTrace& t) { traces.push_back(t); };
    trainer.train_step();
    ASSERT_EQ(traces.size(), data_.size());
    for (const EpisodeTrace& t : traces) {
        const Sample* sample = nullptr;
        for (const Sample& s : data_.samples) {
            if (s.id == t.sample_id) {
                sample = &s;
            }
        }
        ASSERT_NE(sample, nullptr);
        // The rendered pair must equal overlay(sample images, selected boxes,
        // selected coarse mask) for this step's selected stage-1 member.
        const RgbImage expect_sat =
            overlay(sample->satellite, t.stage1_boxes, t.coarse_mask, OverlayStyle{});
        const RgbImage expect_map =
            overlay(sample->map, t.stage1_boxes, t.coarse_mask, OverlayStyle{});
        EXPECT_EQ(t.rendered_satellite, expect_sat);
        EXPECT_EQ(t.rendered_map, expect_map);
        // And the coarse mask must be the oracle output for those boxes.
        if (!t.stage1_boxes.empty()) {
            const SegmentInput input{&*sample->scene, nullptr, "", 64, 64};
            EXPECT_EQ(t.coarse_mask,
                      segmenter_.segment(input, {t.stage1_boxes, {}}));
        }
    }
}

TEST_F(TrainerFixture, AbortedStepRollsBackParameters) {
    // A segmenter that fails on the second sample of the batch.
    class FlakySegmenter final : public Segmenter {
    public:
        mutable std::atomic<int> calls{0};
        BinaryMask segment(const SegmentInput& input, const PromptSet& prompts) const override {
            if (calls.fetch_add(1) >= 6) {
                throw TransportError("injected backend failure");
            }
            return OracleSegmenter().segment(input, prompts);
        }
    };
    ToyPolicy policy;
    FlakySegmenter flaky;
    TrainerOptions o = options(3, 0.5);
    Trainer trainer(policy, flaky, data_, prompts_, o);
    EXPECT_THROW(trainer.train_step(), TransportError);
    EXPECT_EQ(trainer.step(), 0);
    const ToyPolicy::State state = policy.save_state();
    for (const auto& [key, cur] : state.cur) {
        for (double v : cur) {
            EXPECT_DOUBLE_EQ(v, 0.0);
        }
    }
}

// One aggressively configured update must raise the probability of the
// positive-advantage completion (policy improvement direction).
TEST(TrainerLearning, SingleUpdateIncreasesGoodCompletionLogp) {
    ToyPolicy policy;
    PolicyContext ctx;
    ctx.stage = 1;
    ctx.key = "learn";
    const auto group = policy.sample_group(ctx, 2, 1.0, 17);
    ASSERT_NE(group[0].tokens, group[1].tokens);
    const std::vector<double> advantages{1.0, -1.0};
    const GroupUpdate upd =
        grpo_group_gradient(policy, 1, "learn", group, advantages, 0.5, 0.0);
    MomentOptimizer opt({.learning_rate = 0.05});
    opt.update("learn", policy.context_block(1, "learn"), upd.grad);
    const auto after0 = policy.log_prob_and_grad(1, "learn", group[0].tokens);
    const auto after1 = policy.log_prob_and_grad(1, "learn", group[1].tokens);
    double before0 = 0.0, before1 = 0.0;
    for (double v : group[0].logp_current) before0 += v;
    for (double v : group[1].logp_current) before1 += v;
    EXPECT_GT(after0.logp, before0);
    EXPECT_LT(after1.logp, before1);
}

}  // namespace
}  // namespace rrseg
