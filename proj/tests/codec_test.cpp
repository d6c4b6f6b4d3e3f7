#include "rrseg/codec.hpp"

#include <gtest/gtest.h>

#include "rrseg/rng.hpp"
#include "test_util.hpp"

namespace rrseg {
namespace {

TEST(ParseCompletion, SchemaLiteralStage1) {
    const Completion c =
        parse_completion("<think>x</think><answer>[{\"bbox_2d\":[1,2,3,4]}]</answer>", 1);
    ASSERT_TRUE(c.format_valid);
    EXPECT_EQ(format_reward(c), 1);
    ASSERT_TRUE(c.stage1.has_value());
    ASSERT_EQ(c.stage1->boxes.size(), 1u);
    EXPECT_EQ(c.stage1->boxes[0], (BBox{1, 2, 3, 4}));
    EXPECT_EQ(*c.think, "x");
}

TEST(ParseCompletion, MissingThinkBlockInvalid) {
    const Completion c = parse_completion("<answer>[]</answer>", 1);
    EXPECT_FALSE(c.format_valid);
    EXPECT_EQ(format_reward(c), 0);
    EXPECT_FALSE(c.stage1.has_value());
}

TEST(ParseCompletion, Stage2Points) {
    const Completion c = parse_completion(
        "<think>t</think>\n<answer>[{\"bbox_2d\":[0,0,8,8],\"points\":[[5,5],[6,6]]}]</answer>",
        2);
    ASSERT_TRUE(c.format_valid);
    ASSERT_EQ(c.stage2->groups.size(), 1u);
    EXPECT_EQ(c.stage2->groups[0].points.size(), 2u);
    EXPECT_EQ(c.stage2->groups[0].points[1], (Point2D{6, 6}));
}

TEST(ParseCompletion, Stage2RequiresPointsKey) {
    const Completion c =
        parse_completion("<think></think><answer>[{\"bbox_2d\":[1,2,3,4]}]</answer>", 2);
    EXPECT_FALSE(c.format_valid);
}

TEST(ParseCompletion, EmptyArrayIsValid) {
    const Completion c = parse_completion("<think></think><answer>[]</answer>", 1);
    ASSERT_TRUE(c.format_valid);
    EXPECT_TRUE(c.stage1->boxes.empty());
}

TEST(ParseCompletion, EmptyThinkAllowed) {
    EXPECT_TRUE(parse_completion("<think></think><answer>[]</answer>", 1).format_valid);
}

TEST(ParseCompletion, SurroundingWhitespaceAllowed) {
    EXPECT_TRUE(
        parse_completion("  <think>a</think>\n\n<answer>[]</answer>\n", 1).format_valid);
}

TEST(ParseCompletion, TextOutsideChannelsInvalid) {
    EXPECT_FALSE(
        parse_completion("hello <think>a</think><answer>[]</answer>", 1).format_valid);
    EXPECT_FALSE(
        parse_completion("<think>a</think> well <answer>[]</answer>", 1).format_valid);
    EXPECT_FALSE(
        parse_completion("<think>a</think><answer>[]</answer> bye", 1).format_valid);
}

TEST(ParseCompletion, DuplicateBlocksInvalid) {
    EXPECT_FALSE(parse_completion(
                     "<think>a</think><answer>[]</answer><answer>[]</answer>", 1)
                     .format_valid);
    EXPECT_FALSE(parse_completion(
                     "<think>a</think><think>b</think><answer>[]</answer>", 1)
                     .format_valid);
}

TEST(ParseCompletion, WrongOrderInvalid) {
    EXPECT_FALSE(parse_completion("<answer>[]</answer><think>a</think>", 1).format_valid);
}

TEST(ParseCompletion, TruncatedJsonInvalid) {
    EXPECT_FALSE(
        parse_completion("<think>a</think><answer>[{\"bbox_2d\":[1,2,3</answer>", 1)
            .format_valid);
}

TEST(ParseCompletion, NonArrayJsonInvalid) {
    EXPECT_FALSE(
        parse_completion("<think>a</think><answer>{\"bbox_2d\":[1,2,3,4]}</answer>", 1)
            .format_valid);
}

TEST(ParseCompletion, WrongArityOrTypeInvalid) {
    EXPECT_FALSE(
        parse_completion("<think></think><answer>[{\"bbox_2d\":[1,2,3]}]</answer>", 1)
            .format_valid);
    EXPECT_FALSE(
        parse_completion("<think></think><answer>[{\"bbox_2d\":[1,2,3,\"4\"]}]</answer>", 1)
            .format_valid);
    EXPECT_FALSE(parse_completion("<think></think><answer>[42]</answer>", 1).format_valid);
}

TEST(ParseCompletion, NonFiniteNumberInvalid) {
    EXPECT_FALSE(
        parse_completion("<think></think><answer>[{\"bbox_2d\":[1,2,3,1e999]}]</answer>", 1)
            .format_valid);
}

TEST(ParseCompletion, ExtraKeysTolerated) {
    const Completion c = parse_completion(
        "<think></think><answer>[{\"bbox_2d\":[1,2,3,4],\"label\":\"park\"}]</answer>", 1);
    EXPECT_TRUE(c.format_valid);
}

TEST(ParseCompletion, DecimalAndIntegerCoordinatesAccepted) {
    const Completion c = parse_completion(
        "<think></think><answer>[{\"bbox_2d\":[1.5,2,3.25,4]}]</answer>", 1);
    ASSERT_TRUE(c.format_valid);
    EXPECT_DOUBLE_EQ(c.stage1->boxes[0].x1, 1.5);
}

TEST(ParseCompletion, RawTextPreservedByteExact) {
    const std::string raw = "<think>abc</think><answer>[]</answer>";
    EXPECT_EQ(parse_completion(raw, 1).raw_text, raw);
}

TEST(ParseCompletion, RoundTripStage1) {
    Stage1Answer answer;
    answer.boxes = {{1, 2, 3, 4}, {10.5, 20, 30, 44.25}};
    const std::string text = wrap_channels("thinking", serialize_answer(answer));
    const Completion c = parse_completion(text, 1);
    ASSERT_TRUE(c.format_valid);
    ASSERT_EQ(c.stage1->boxes.size(), answer.boxes.size());
    for (std::size_t i = 0; i < answer.boxes.size(); ++i) {
        EXPECT_EQ(c.stage1->boxes[i], answer.boxes[i]);
    }
}

TEST(ParseCompletion, RoundTripStage2) {
    Stage2Answer answer;
    answer.groups.push_back({{0, 0, 16, 16}, {{2, 2}, {14, 10}}});
    answer.groups.push_back({{32, 32, 40, 48}, {}});
    const std::string text = wrap_channels("", serialize_answer(answer));
    const Completion c = parse_completion(text, 2);
    ASSERT_TRUE(c.format_valid);
    ASSERT_EQ(c.stage2->groups.size(), 2u);
    EXPECT_EQ(c.stage2->groups[0].points.size(), 2u);
    EXPECT_TRUE(c.stage2->groups[1].points.empty());
    EXPECT_EQ(c.stage2->groups[1].box, answer.groups[1].box);
}

// The parser must treat arbitrary bytes as a value, never a crash.
TEST(ParseCompletion, FuzzNeverThrows) {
    Rng rng(99);
    const std::string alphabet =
        "<think></think><answer>[]{}\",:0123456789abcdef \n\t\\";
    for (int trial = 0; trial < 3000; ++trial) {
        std::string s;
        const int len = rng.uniform_int(0, 120);
        for (int i = 0; i < len; ++i) {
            s += alphabet[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(alphabet.size()) - 1))];
        }
        const int stage = rng.uniform_int(1, 2);
        Completion c;
        EXPECT_NO_THROW(c = parse_completion(s, stage));
        EXPECT_TRUE(format_reward(c) == 0 || format_reward(c) == 1);
    }
}

TEST(ClampToImage, BoxesAndPoints) {
    Stage1Answer s1;
    s1.boxes = {{-5, -5, 100, 100}};
    clamp_to_image(s1, 64, 64);
    EXPECT_EQ(s1.boxes[0], (BBox{0, 0, 64, 64}));

    Stage2Answer s2;
    s2.groups.push_back({{-1, 2, 3, 200}, {{-7, 30}, {70, 70}}});
    clamp_to_image(s2, 64, 64);
    EXPECT_EQ(s2.groups[0].box, (BBox{0, 2, 3, 64}));
    EXPECT_EQ(s2.groups[0].points[0], (Point2D{0, 30}));
    EXPECT_EQ(s2.groups[0].points[1], (Point2D{64, 64}));
}

class PromptTemplateTest : public ::testing::Test {
protected:
    PromptTemplateSet templates_ =
        PromptTemplateSet::load(testing::prompts_dir(), "default");
    Sample sample_ = [] {
        Sample s;
        s.instruction = "segment the college";
        return s;
    }();
};

TEST_F(PromptTemplateTest, InstructionSubstitutedOnce) {
    const PromptText p = render_prompt(sample_, 1, templates_);
    const std::string needle = "segment the college";
    const auto first = p.text.find(needle);
    ASSERT_NE(first, std::string::npos);
    EXPECT_EQ(p.text.find(needle, first + 1), std::string::npos);
    EXPECT_EQ(p.text.find("{instruction}"), std::string::npos);
}

TEST_F(PromptTemplateTest, Deterministic) {
    EXPECT_EQ(render_prompt(sample_, 1, templates_).text,
              render_prompt(sample_, 1, templates_).text);
}

TEST_F(PromptTemplateTest, StagesDiffer) {
    EXPECT_NE(render_prompt(sample_, 1, templates_).text,
              render_prompt(sample_, 2, templates_).text);
    EXPECT_EQ(render_prompt(sample_, 2, templates_).stage, 2);
}

TEST_F(PromptTemplateTest, UnknownSetRejected) {
    EXPECT_THROW(PromptTemplateSet::load(testing::prompts_dir(), "nope"), std::runtime_error);
}

}  // namespace
}  // namespace rrseg
