#include "rrseg/codec.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace rrseg {

using nlohmann::json;

namespace {

bool whitespace_only(std::string_view s) {
    for (unsigned char c : s) {
        if (!std::isspace(c)) {
            return false;
        }
    }
    return true;
}

// Position of the single occurrence of `tag`, or npos if absent/repeated.
std::size_t find_unique(std::string_view text, std::string_view tag) {
    const std::size_t first = text.find(tag);
    if (first == std::string_view::npos) {
        return std::string_view::npos;
    }
    if (text.find(tag, first + tag.size()) != std::string_view::npos) {
        return std::string_view::npos;
    }
    return first;
}

bool finite_number(const json& j, double& out) {
    if (!j.is_number()) {
        return false;
    }
    out = j.get<double>();
    return std::isfinite(out);
}

bool parse_box(const json& j, BBox& out) {
    if (!j.is_array() || j.size() != 4) {
        return false;
    }
    double v[4];
    for (int i = 0; i < 4; ++i) {
        if (!finite_number(j[i], v[i])) {
            return false;
        }
    }
    out = BBox::normalized(v[0], v[1], v[2], v[3]);
    return true;
}

bool parse_points(const json& j, std::vector<Point2D>& out) {
    if (!j.is_array()) {
        return false;
    }
    for (const json& pj : j) {
        if (!pj.is_array() || pj.size() != 2) {
            return false;
        }
        Point2D p;
        if (!finite_number(pj[0], p.x) || !finite_number(pj[1], p.y)) {
            return false;
        }
        out.push_back(p);
    }
    return true;
}

std::string format_number(double v) {
    // Integral coordinates print without a trailing ".0" so serialized
    // answers look like typical model output.
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        return std::to_string(static_cast<long long>(v));
    }
    std::ostringstream ss;
    ss.precision(10);
    ss << v;
    return ss.str();
}

}  // namespace

Completion parse_completion(std::string_view raw, int stage) {
    Completion c;
    c.raw_text = std::string(raw);

    static constexpr std::string_view kThinkOpen = "<think>";
    static constexpr std::string_view kThinkClose = "</think>";
    static constexpr std::string_view kAnswerOpen = "<answer>";
    static constexpr std::string_view kAnswerClose = "</answer>";

    const std::size_t t0 = find_unique(raw, kThinkOpen);
    const std::size_t t1 = find_unique(raw, kThinkClose);
    const std::size_t a0 = find_unique(raw, kAnswerOpen);
    const std::size_t a1 = find_unique(raw, kAnswerClose);
    const std::size_t npos = std::string_view::npos;
    if (t0 == npos || t1 == npos || a0 == npos || a1 == npos) {
        return c;
    }
    if (!(t0 < t1 && t1 < a0 && a0 < a1)) {
        return c;
    }
    if (!whitespace_only(raw.substr(0, t0)) ||
        !whitespace_only(raw.substr(t1 + kThinkClose.size(),
                                    a0 - (t1 + kThinkClose.size()))) ||
        !whitespace_only(raw.substr(a1 + kAnswerClose.size()))) {
        return c;
    }
    const std::string_view think = raw.substr(t0 + kThinkOpen.size(), t1 - (t0 + kThinkOpen.size()));
    const std::string_view answer =
        raw.substr(a0 + kAnswerOpen.size(), a1 - (a0 + kAnswerOpen.size()));

    const json parsed = json::parse(answer, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || !parsed.is_array()) {
        return c;
    }

    if (stage == 1) {
        Stage1Answer ans;
        for (const json& el : parsed) {
            if (!el.is_object() || !el.contains("bbox_2d")) {
                return c;
            }
            BBox box;
            if (!parse_box(el["bbox_2d"], box)) {
                return c;
            }
            ans.boxes.push_back(box);
        }
        c.stage1 = std::move(ans);
    } else if (stage == 2) {
        Stage2Answer ans;
        for (const json& el : parsed) {
            if (!el.is_object() || !el.contains("bbox_2d") || !el.contains("points")) {
                return c;
            }
            PromptGroup g;
            if (!parse_box(el["bbox_2d"], g.box)) {
                return c;
            }
            if (!parse_points(el["points"], g.points)) {
                return c;
            }
            ans.groups.push_back(std::move(g));
        }
        c.stage2 = std::move(ans);
    } else {
        return c;
    }

    c.think = std::string(think);
    c.answer_json = std::string(answer);
    c.format_valid = true;
    return c;
}

int format_reward(const Completion& c) {
    return c.format_valid ? 1 : 0;
}

std::string serialize_answer(const Stage1Answer& answer) {
    std::string out = "[";
    for (std::size_t i = 0; i < answer.boxes.size(); ++i) {
        const BBox& b = answer.boxes[i];
        if (i) out += ", ";
        out += "{\"bbox_2d\": [" + format_number(b.x1) + ", " + format_number(b.y1) + ", " +
               format_number(b.x2) + ", " + format_number(b.y2) + "]}";
    }
    out += "]";
    return out;
}

std::string serialize_answer(const Stage2Answer& answer) {
    std::string out = "[";
    for (std::size_t i = 0; i < answer.groups.size(); ++i) {
        const PromptGroup& g = answer.groups[i];
        if (i) out += ", ";
        out += "{\"bbox_2d\": [" + format_number(g.box.x1) + ", " + format_number(g.box.y1) +
               ", " + format_number(g.box.x2) + ", " + format_number(g.box.y2) +
               "], \"points\": [";
        for (std::size_t p = 0; p < g.points.size(); ++p) {
            if (p) out += ", ";
            out += "[" + format_number(g.points[p].x) + ", " + format_number(g.points[p].y) + "]";
        }
        out += "]}";
    }
    out += "]";
    return out;
}

std::string wrap_channels(std::string_view think, std::string_view answer_json) {
    std::string out = "<think>";
    out += think;
    out += "</think><answer>";
    out += answer_json;
    out += "</answer>";
    return out;
}

void clamp_to_image(Stage1Answer& answer, double width, double height) {
    for (BBox& b : answer.boxes) {
        b = b.clamped(width, height);
    }
}

void clamp_to_image(Stage2Answer& answer, double width, double height) {
    for (PromptGroup& g : answer.groups) {
        g.box = g.box.clamped(width, height);
        for (Point2D& p : g.points) {
            p = clamp_point(p, width, height);
        }
    }
}

namespace {

std::string load_template(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read prompt template " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    const auto first = text.find("{instruction}");
    if (first == std::string::npos ||
        text.find("{instruction}", first + 1) != std::string::npos) {
        throw std::runtime_error("template must contain {instruction} exactly once: " +
                                 path.string());
    }
    return text;
}

}  // namespace

PromptTemplateSet PromptTemplateSet::load(const std::filesystem::path& assets_dir,
                                          const std::string& set_id) {
    const std::filesystem::path dir = assets_dir / set_id;
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error("unknown prompt template set: " + dir.string());
    }
    PromptTemplateSet set;
    set.stage1_ = load_template(dir / "stage1.txt");
    set.stage2_ = load_template(dir / "stage2.txt");
    return set;
}

PromptText PromptTemplateSet::render(const Sample& sample, int stage) const {
    if (stage != 1 && stage != 2) {
        throw std::invalid_argument("stage must be 1 or 2");
    }
    std::string text = stage == 1 ? stage1_ : stage2_;
    const auto slot = text.find("{instruction}");
    text.replace(slot, std::string("{instruction}").size(), sample.instruction);
    return {std::move(text), stage};
}

PromptText render_prompt(const Sample& sample, int stage, const PromptTemplateSet& templates) {
    return templates.render(sample, stage);
}

}  // namespace rrseg
