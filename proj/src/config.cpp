#include "rrseg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

namespace rrseg {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& prefix,
                const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("unknown config key: " + prefix + key);
        }
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        out = obj.at(key).get<T>();
    }
}

Rgb read_color(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError(where + " must be an [r,g,b] triple");
    }
    return {j[0].get<std::uint8_t>(), j[1].get<std::uint8_t>(), j[2].get<std::uint8_t>()};
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    json root = json::parse(in, nullptr, false);
    if (root.is_discarded() || !root.is_object()) {
        throw ConfigError("config is not a JSON object: " + path.string());
    }

    RunConfig cfg;
    check_keys(root, "", {"seed", "out_dir", "grpo", "reward", "segmenter", "policy", "dataset",
                          "prompts", "render"});
    read_field(root, "seed", cfg.seed);
    if (root.contains("out_dir")) {
        cfg.out_dir = root.at("out_dir").get<std::string>();
    }

    if (root.contains("grpo")) {
        const json& g = root["grpo"];
        check_keys(g, "grpo.", {"group_size", "clip_epsilon", "kl_weight", "learning_rate",
                                "steps", "rollout_batch", "selection", "temperature", "workers",
                                "snapshot_every"});
        read_field(g, "group_size", cfg.grpo.group_size);
        read_field(g, "clip_epsilon", cfg.grpo.clip_epsilon);
        read_field(g, "kl_weight", cfg.grpo.kl_weight);
        read_field(g, "learning_rate", cfg.grpo.learning_rate);
        read_field(g, "steps", cfg.grpo.steps);
        read_field(g, "rollout_batch", cfg.grpo.rollout_batch);
        read_field(g, "temperature", cfg.grpo.temperature);
        read_field(g, "workers", cfg.grpo.workers);
        read_field(g, "snapshot_every", cfg.grpo.snapshot_every);
        if (g.contains("selection")) {
            const std::string mode = g.at("selection").get<std::string>();
            if (mode == "argmax") {
                cfg.grpo.selection = GrpoConfig::Selection::Argmax;
            } else if (mode == "softmax") {
                cfg.grpo.selection = GrpoConfig::Selection::Softmax;
            } else {
                throw ConfigError("grpo.selection must be argmax or softmax");
            }
        }
    }

    if (root.contains("reward")) {
        const json& r = root["reward"];
        check_keys(r, "reward.", {"point_mu", "point_sigma", "match_iou_threshold"});
        read_field(r, "point_mu", cfg.length_params.mu);
        read_field(r, "point_sigma", cfg.length_params.sigma);
        read_field(r, "match_iou_threshold", cfg.grpo.match_iou_threshold);
    }

    if (root.contains("segmenter")) {
        const json& s = root["segmenter"];
        check_keys(s, "segmenter.", {"backend", "url", "timeout_s", "retries"});
        if (s.contains("backend")) {
            const std::string backend = s.at("backend").get<std::string>();
            if (backend == "oracle") {
                cfg.segmenter_backend = SegmenterBackend::Oracle;
            } else if (backend == "remote") {
                cfg.segmenter_backend = SegmenterBackend::Remote;
            } else {
                throw ConfigError("segmenter.backend must be oracle or remote");
            }
        }
        read_field(s, "url", cfg.segmenter_remote.url);
        read_field(s, "timeout_s", cfg.segmenter_remote.timeout_s);
        read_field(s, "retries", cfg.segmenter_remote.retries);
    }

    if (root.contains("policy")) {
        const json& p = root["policy"];
        check_keys(p, "policy.",
                   {"backend", "url", "model", "timeout_s", "retries", "max_tokens", "grid",
                    "max_objects", "max_points"});
        if (p.contains("backend")) {
            const std::string backend = p.at("backend").get<std::string>();
            if (backend == "toy") {
                cfg.policy_backend = PolicyBackendKind::Toy;
            } else if (backend == "remote") {
                cfg.policy_backend = PolicyBackendKind::Remote;
            } else {
                throw ConfigError("policy.backend must be toy or remote");
            }
        }
        read_field(p, "url", cfg.chat.url);
        read_field(p, "model", cfg.chat.model);
        read_field(p, "timeout_s", cfg.chat.timeout_s);
        read_field(p, "retries", cfg.chat.retries);
        read_field(p, "max_tokens", cfg.chat.max_tokens);
        read_field(p, "grid", cfg.toy.grid);
        read_field(p, "max_objects", cfg.toy.max_objects);
        read_field(p, "max_points", cfg.toy.max_points);
    }

    if (root.contains("dataset")) {
        const json& d = root["dataset"];
        check_keys(d, "dataset.",
                   {"root", "synthetic", "split", "split_seed", "train_on_split"});
        if (d.contains("root")) {
            cfg.dataset_root = d.at("root").get<std::string>();
        }
        if (d.contains("synthetic")) {
            const json& s = d["synthetic"];
            check_keys(s, "dataset.synthetic.",
                       {"n", "seed", "width", "height", "grid", "min_blobs", "max_blobs",
                        "min_cells", "max_cells"});
            read_field(s, "n", cfg.synthetic_n);
            read_field(s, "seed", cfg.synthetic_seed);
            read_field(s, "width", cfg.synthetic_params.width);
            read_field(s, "height", cfg.synthetic_params.height);
            read_field(s, "grid", cfg.synthetic_params.grid);
            read_field(s, "min_blobs", cfg.synthetic_params.min_blobs);
            read_field(s, "max_blobs", cfg.synthetic_params.max_blobs);
            read_field(s, "min_cells", cfg.synthetic_params.min_cells);
            read_field(s, "max_cells", cfg.synthetic_params.max_cells);
        }
        if (d.contains("split")) {
            const json& s = d["split"];
            check_keys(s, "dataset.split.", {"train", "val", "test"});
            read_field(s, "train", cfg.split_spec.train);
            read_field(s, "val", cfg.split_spec.val);
            read_field(s, "test", cfg.split_spec.test);
        }
        read_field(d, "split_seed", cfg.split_seed);
        read_field(d, "train_on_split", cfg.train_on_split);
    }

    if (root.contains("prompts")) {
        const json& p = root["prompts"];
        check_keys(p, "prompts.", {"dir", "set"});
        if (p.contains("dir")) {
            cfg.prompts_dir = p.at("dir").get<std::string>();
        }
        read_field(p, "set", cfg.prompt_set);
    }

    if (root.contains("render")) {
        const json& r = root["render"];
        check_keys(r, "render.", {"box_color", "box_stroke", "mask_color", "mask_alpha"});
        if (r.contains("box_color")) {
            cfg.style.box_color = read_color(r["box_color"], "render.box_color");
        }
        if (r.contains("mask_color")) {
            cfg.style.mask_color = read_color(r["mask_color"], "render.mask_color");
        }
        read_field(r, "box_stroke", cfg.style.box_stroke);
        read_field(r, "mask_alpha", cfg.style.mask_alpha);
    }

    if (const char* url = std::getenv("RRSEG_SEGMENT_URL")) {
        cfg.segmenter_remote.url = url;
    }
    if (const char* url = std::getenv("RRSEG_CHAT_URL")) {
        cfg.chat.url = url;
    }

    // Paths referenced by the config must exist now, not at first use.
    if (!cfg.dataset_root.empty() && !std::filesystem::is_directory(cfg.dataset_root)) {
        throw ConfigError("dataset.root does not exist: " + cfg.dataset_root.string());
    }
    if (!std::filesystem::is_directory(cfg.prompts_dir / cfg.prompt_set)) {
        throw ConfigError("prompt template set not found: " +
                          (cfg.prompts_dir / cfg.prompt_set).string());
    }
    cfg.grpo.validate();
    if (cfg.length_params.sigma <= 0.0) {
        throw ConfigError("reward.point_sigma must be > 0");
    }
    return cfg;
}

std::string dump_run_config(const RunConfig& cfg) {
    const json j = {
        {"seed", cfg.seed},
        {"out_dir", cfg.out_dir.string()},
        {"grpo",
         {{"group_size", cfg.grpo.group_size},
          {"clip_epsilon", cfg.grpo.clip_epsilon},
          {"kl_weight", cfg.grpo.kl_weight},
          {"learning_rate", cfg.grpo.learning_rate},
          {"steps", cfg.grpo.steps},
          {"rollout_batch", cfg.grpo.rollout_batch},
          {"selection",
           cfg.grpo.selection == GrpoConfig::Selection::Argmax ? "argmax" : "softmax"},
          {"temperature", cfg.grpo.temperature},
          {"workers", cfg.grpo.workers},
          {"snapshot_every", cfg.grpo.snapshot_every}}},
        {"reward",
         {{"point_mu", cfg.length_params.mu},
          {"point_sigma", cfg.length_params.sigma},
          {"match_iou_threshold", cfg.grpo.match_iou_threshold}}},
        {"segmenter",
         {{"backend", cfg.segmenter_backend == SegmenterBackend::Oracle ? "oracle" : "remote"},
          {"url", cfg.segmenter_remote.url},
          {"timeout_s", cfg.segmenter_remote.timeout_s},
          {"retries", cfg.segmenter_remote.retries}}},
        {"policy",
         {{"backend", cfg.policy_backend == PolicyBackendKind::Toy ? "toy" : "remote"},
          {"url", cfg.chat.url},
          {"model", cfg.chat.model},
          {"timeout_s", cfg.chat.timeout_s},
          {"retries", cfg.chat.retries},
          {"max_tokens", cfg.chat.max_tokens},
          {"grid", cfg.toy.grid},
          {"max_objects", cfg.toy.max_objects},
          {"max_points", cfg.toy.max_points}}},
        {"dataset",
         {{"root", cfg.dataset_root.string()},
          {"synthetic",
           {{"n", cfg.synthetic_n},
            {"seed", cfg.synthetic_seed},
            {"width", cfg.synthetic_params.width},
            {"height", cfg.synthetic_params.height},
            {"grid", cfg.synthetic_params.grid},
            {"min_blobs", cfg.synthetic_params.min_blobs},
            {"max_blobs", cfg.synthetic_params.max_blobs},
            {"min_cells", cfg.synthetic_params.min_cells},
            {"max_cells", cfg.synthetic_params.max_cells}}},
          {"split",
           {{"train", cfg.split_spec.train},
            {"val", cfg.split_spec.val},
            {"test", cfg.split_spec.test}}},
          {"split_seed", cfg.split_seed},
          {"train_on_split", cfg.train_on_split}}},
        {"prompts", {{"dir", cfg.prompts_dir.string()}, {"set", cfg.prompt_set}}},
        {"render",
         {{"box_color", {cfg.style.box_color[0], cfg.style.box_color[1], cfg.style.box_color[2]}},
          {"box_stroke", cfg.style.box_stroke},
          {"mask_color",
           {cfg.style.mask_color[0], cfg.style.mask_color[1], cfg.style.mask_color[2]}},
          {"mask_alpha", cfg.style.mask_alpha}}}};
    return j.dump(2);
}

}  // namespace rrseg
