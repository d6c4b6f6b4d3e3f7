#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rrseg/dataset.hpp"
#include "rrseg/geometry.hpp"

namespace rrseg {

struct PromptGroup {
    BBox box;
    std::vector<Point2D> points;
};

struct Stage1Answer {
    std::vector<BBox> boxes;
};

struct Stage2Answer {
    std::vector<PromptGroup> groups;
};

struct Completion {
    std::string raw_text;
    bool format_valid{false};
    std::optional<std::string> think;
    std::optional<std::string> answer_json;
    std::optional<Stage1Answer> stage1;
    std::optional<Stage2Answer> stage2;
};

/// Structural contract: exactly one <think>...</think> block followed by
/// exactly one <answer>...</answer> block (whitespace allowed between and
/// around), and the answer content is a JSON array whose elements satisfy
/// the stage schema. Any violation yields format_valid = false; no input
/// can make this throw.
Completion parse_completion(std::string_view raw, int stage);

int format_reward(const Completion& c);

std::string serialize_answer(const Stage1Answer& answer);
std::string serialize_answer(const Stage2Answer& answer);
std::string wrap_channels(std::string_view think, std::string_view answer_json);

/// Clamp parsed coordinates to the image bounds (policies may emit
/// out-of-range values; geometry downstream expects clamped inputs).
void clamp_to_image(Stage1Answer& answer, double width, double height);
void clamp_to_image(Stage2Answer& answer, double width, double height);

struct PromptText {
    std::string text;
    int stage{1};
};

/// Stage-keyed prompt templates loaded from text assets. Each template must
/// contain the placeholder {instruction} exactly once.
class PromptTemplateSet {
public:
    /// Loads <assets_dir>/<set_id>/stage1.txt and stage2.txt.
    static PromptTemplateSet load(const std::filesystem::path& assets_dir,
                                  const std::string& set_id);

    PromptText render(const Sample& sample, int stage) const;

private:
    std::string stage1_;
    std::string stage2_;
};

PromptText render_prompt(const Sample& sample, int stage, const PromptTemplateSet& templates);

}  // namespace rrseg
