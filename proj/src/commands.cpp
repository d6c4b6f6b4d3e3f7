#include "rrseg/commands.hpp"

#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "rrseg/codec.hpp"
#include "rrseg/grpo.hpp"
#include "rrseg/metrics.hpp"
#include "rrseg/png_io.hpp"

namespace rrseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Dataset build_dataset(const RunConfig& cfg, std::ostream& out) {
    if (!cfg.dataset_root.empty()) {
        LoadReport report;
        Dataset data = load_manifest(cfg.dataset_root, &report);
        if (report.skipped > 0) {
            out << "warning: skipped " << report.skipped << " invalid sample(s)\n";
            for (const std::string& w : report.warnings) {
                out << "  " << w << "\n";
            }
        }
        return data;
    }
    return synth_generate(cfg.synthetic_seed, cfg.synthetic_n, cfg.synthetic_params);
}

void write_policy_snapshot(const fs::path& path, const ToyPolicy& policy, int step) {
    const ToyPolicy::State state = policy.save_state();
    json contexts = json::array();
    for (const auto& [key, logits] : state.cur) {
        contexts.push_back(
            {{"stage", key.first}, {"key", key.second}, {"logits", logits}});
    }
    const json snapshot = {{"step", step}, {"contexts", std::move(contexts)}};
    std::ofstream f(path, std::ios::trunc);
    f << snapshot.dump() << "\n";
}

Dataset select_split(const Dataset& data, const RunConfig& cfg, const std::string& split_name) {
    if (split_name == "all") {
        return data;
    }
    SplitResult parts = split(data, cfg.split_spec, cfg.split_seed);
    if (split_name == "train") return std::move(parts.train);
    if (split_name == "val") return std::move(parts.val);
    if (split_name == "test") return std::move(parts.test);
    throw ConfigError("unknown split name: " + split_name + " (use train|val|test|all)");
}

void print_breakdown(const RewardBreakdown& r, std::ostream& out) {
    out << std::fixed << std::setprecision(6);
    out << "format=" << static_cast<double>(r.format) << "\n";
    out << "accuracy=" << r.accuracy << "\n";
    out << "length=" << r.length << "\n";
    out << "total=" << r.total << "\n";
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    if (cfg.policy_backend != PolicyBackendKind::Toy) {
        throw ConfigError("training requires policy.backend = toy");
    }
    Dataset data = build_dataset(cfg, out);
    if (cfg.train_on_split) {
        data = select_split(data, cfg, "train");
    }
    if (data.empty()) {
        throw ConfigError("training dataset is empty");
    }

    OracleSegmenter oracle;
    std::optional<RemoteSegmenter> remote;
    const Segmenter* segmenter = &oracle;
    if (cfg.segmenter_backend == SegmenterBackend::Remote) {
        if (cfg.segmenter_remote.url.empty()) {
            throw ConfigError("segmenter.url is required for the remote backend");
        }
        remote.emplace(cfg.segmenter_remote);
        segmenter = &*remote;
    } else {
        for (const Sample& s : data.samples) {
            if (!s.scene) {
                throw ConfigError("oracle segmenter needs synthetic scenes; sample " + s.id +
                                  " has none");
            }
        }
    }

    ToyPolicyConfig toy_cfg = cfg.toy;
    toy_cfg.image_width = data.samples.front().satellite.width;
    toy_cfg.image_height = data.samples.front().satellite.height;
    ToyPolicy policy(toy_cfg);

    const PromptTemplateSet prompts = PromptTemplateSet::load(cfg.prompts_dir, cfg.prompt_set);

    TrainerOptions options;
    options.grpo = cfg.grpo;
    options.length_params = cfg.length_params;
    options.style = cfg.style;
    options.seed = cfg.seed;
    Trainer trainer(policy, *segmenter, data, prompts, options);

    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.out_dir / "snapshots");
    {
        std::ofstream cfg_echo(cfg.out_dir / "config.json", std::ios::trunc);
        cfg_echo << dump_run_config(cfg) << "\n";
    }
    std::ofstream metrics_out(cfg.out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics_out) {
        throw std::runtime_error("cannot write metrics log in " + cfg.out_dir.string());
    }

    for (int step = 1; step <= cfg.grpo.steps; ++step) {
        const StepMetrics metrics = trainer.train_step();
        metrics_out << metrics_json_line(metrics) << "\n";
        if (cfg.grpo.snapshot_every > 0 && step % cfg.grpo.snapshot_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "step-%06d.json", step);
            write_policy_snapshot(cfg.out_dir / "snapshots" / name, policy, step);
        }
    }
    write_policy_snapshot(cfg.out_dir / "snapshots" / "final.json", policy, cfg.grpo.steps);
    metrics_out.flush();
    out << "trained " << cfg.grpo.steps << " step(s); run directory: " << cfg.out_dir.string()
        << "\n";
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& pred_dir, const std::string& split_name,
             std::ostream& out, double f1_threshold) {
    const Dataset data = build_dataset(cfg, out);
    if (data.empty()) {
        throw ConfigError("evaluation dataset is empty");
    }
    const Dataset part = select_split(data, cfg, split_name);

    std::vector<EvalRecord> records;
    std::vector<std::string> missing;
    records.reserve(part.size());
    for (const Sample& s : part.samples) {
        EvalRecord r;
        r.sample_id = s.id;
        r.gt_mask = s.gt_mask;
        r.class_label = s.class_label;
        r.tier = s.tier;
        const fs::path pred_path = pred_dir / (s.id + ".png");
        if (fs::exists(pred_path)) {
            r.pred_mask = read_png_mask(pred_path);
            if (!r.pred_mask.same_shape(r.gt_mask)) {
                throw ShapeError("prediction shape differs from ground truth for " + s.id);
            }
        } else {
            missing.push_back(s.id);
            r.pred_mask = BinaryMask(s.gt_mask.width(), s.gt_mask.height());
        }
        records.push_back(std::move(r));
    }

    const double overall_ciou = ciou(records);
    const double overall_giou = giou(records);
    const double overall_f1 = f1(records, f1_threshold);

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir / "results.csv", std::ios::trunc);
    csv << "metric,tier,class,value\n";
    csv << std::fixed << std::setprecision(6);
    csv << "ciou,all,all," << overall_ciou << "\n";
    csv << "giou,all,all," << overall_giou << "\n";
    csv << "f1,all,all," << overall_f1 << "\n";

    json tier_summary = json::object();
    for (const auto& [metric, kind] :
         std::initializer_list<std::pair<const char*, MetricKind>>{
             {"ciou", MetricKind::Ciou}, {"giou", MetricKind::Giou}, {"f1", MetricKind::F1}}) {
        for (const ClassMetricRow& row :
             per_class_accuracy(records, GroupKey::TierName, kind, f1_threshold)) {
            csv << metric << "," << row.key << ",all," << row.value << "\n";
            tier_summary[row.key][metric] = row.value;
        }
    }
    json class_summary = json::object();
    for (const auto& [metric, kind] :
         std::initializer_list<std::pair<const char*, MetricKind>>{
             {"ciou", MetricKind::Ciou}, {"giou", MetricKind::Giou}, {"f1", MetricKind::F1}}) {
        for (const ClassMetricRow& row :
             per_class_accuracy(records, GroupKey::ClassLabel, kind, f1_threshold)) {
            csv << metric << ",all," << row.key << "," << row.value << "\n";
            class_summary[row.key][metric] = row.value;
        }
    }

    const json summary = {{"split", split_name},
                          {"f1_threshold", f1_threshold},
                          {"records", records.size()},
                          {"overall",
                           {{"ciou", overall_ciou}, {"giou", overall_giou}, {"f1", overall_f1}}},
                          {"tiers", tier_summary},
                          {"classes", class_summary},
                          {"missing", missing}};
    {
        std::ofstream f(cfg.out_dir / "summary.json", std::ios::trunc);
        f << summary.dump(2) << "\n";
    }

    out << std::fixed << std::setprecision(6);
    out << "records=" << records.size() << " missing=" << missing.size() << "\n";
    for (const std::string& id : missing) {
        out << "missing prediction: " << id << "\n";
    }
    out << "ciou=" << overall_ciou << " giou=" << overall_giou << " f1=" << overall_f1 << "\n";
    return kExitOk;
}

int cmd_reward_check(int stage, const fs::path& completion_file, const fs::path& gt_file,
                     const std::optional<fs::path>& pred_mask,
                     const LengthRewardParams& params, double match_iou_threshold,
                     std::ostream& out) {
    std::ifstream cf(completion_file);
    if (!cf) {
        throw ConfigError("cannot open completion file: " + completion_file.string());
    }
    std::ostringstream raw;
    raw << cf.rdbuf();
    const Completion completion = parse_completion(raw.str(), stage);

    RewardBreakdown reward;
    if (stage == 1) {
        std::ifstream gf(gt_file);
        if (!gf) {
            throw ConfigError("cannot open gt file: " + gt_file.string());
        }
        const json gt = json::parse(gf, nullptr, false);
        if (gt.is_discarded()) {
            throw ConfigError("gt file is not valid JSON: " + gt_file.string());
        }
        const json& boxes_json = gt.is_array() ? gt : gt.at("gt_boxes");
        std::vector<BBox> gt_boxes;
        for (const json& bj : boxes_json) {
            gt_boxes.push_back(BBox::normalized(bj.at(0).get<double>(), bj.at(1).get<double>(),
                                                bj.at(2).get<double>(),
                                                bj.at(3).get<double>()));
        }
        if (gt_boxes.empty()) {
            throw ConfigError("gt file has no boxes");
        }
        reward = stage1_reward(completion, gt_boxes, match_iou_threshold);
    } else if (stage == 2) {
        if (!pred_mask) {
            throw ConfigError("stage 2 reward-check needs --pred-mask");
        }
        const BinaryMask gt = read_png_mask(gt_file);
        const BinaryMask pred = read_png_mask(*pred_mask);
        reward = stage2_reward(completion, pred, gt, params);
    } else {
        throw ConfigError("stage must be 1 or 2");
    }
    print_breakdown(reward, out);
    return kExitOk;
}

int cmd_render(const fs::path& sample_dir, const fs::path& boxes_file, const fs::path& mask_file,
               const fs::path& out_path, bool use_map, const OverlayStyle& style,
               std::ostream& out) {
    const RgbImage base =
        read_png_rgb(sample_dir / (use_map ? "map.png" : "satellite.png"));
    std::ifstream bf(boxes_file);
    if (!bf) {
        throw ConfigError("cannot open boxes file: " + boxes_file.string());
    }
    const json boxes_json = json::parse(bf, nullptr, false);
    if (boxes_json.is_discarded() || !boxes_json.is_array()) {
        throw ConfigError("boxes file must be a JSON array of [x1,y1,x2,y2]");
    }
    std::vector<BBox> boxes;
    for (const json& bj : boxes_json) {
        boxes.push_back(BBox::normalized(bj.at(0).get<double>(), bj.at(1).get<double>(),
                                         bj.at(2).get<double>(), bj.at(3).get<double>()));
    }
    const BinaryMask mask = read_png_mask(mask_file);
    const RgbImage rendered = overlay(base, boxes, mask, style);
    write_png(out_path, rendered);
    out << "wrote " << out_path.string() << "\n";
    return kExitOk;
}

int cmd_synth(std::uint64_t seed, int n, const SynthParams& params, const fs::path& out_root,
              std::ostream& out) {
    const Dataset data = synth_generate(seed, n, params);
    write_manifest(out_root, data);
    out << "wrote " << data.size() << " synthetic sample(s) to " << out_root.string() << "\n";
    return kExitOk;
}

}  // namespace rrseg
