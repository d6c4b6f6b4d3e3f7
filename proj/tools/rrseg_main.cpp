#include <CLI11.hpp>
#include <iostream>

#include "rrseg/commands.hpp"

namespace {

rrseg::RunConfig load_config_with_overrides(const std::string& config_path,
                                            const std::optional<std::uint64_t>& seed,
                                            const std::optional<std::string>& out_dir,
                                            const std::optional<std::string>& backend) {
    rrseg::RunConfig cfg = rrseg::load_run_config(config_path);
    if (seed) {
        cfg.seed = *seed;
    }
    if (out_dir) {
        cfg.out_dir = *out_dir;
    }
    if (backend) {
        if (*backend == "oracle") {
            cfg.segmenter_backend = rrseg::SegmenterBackend::Oracle;
        } else if (*backend == "remote") {
            cfg.segmenter_backend = rrseg::SegmenterBackend::Remote;
        } else {
            throw rrseg::ConfigError("--backend must be oracle or remote");
        }
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage render-and-refine reasoning segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> backend;

    auto add_config_options = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run configuration JSON")->required();
        cmd->add_option("--seed", seed, "Override the run seed");
        cmd->add_option("--out", out_dir, "Override the output directory");
        cmd->add_option("--backend", backend, "Override the segmenter backend (oracle|remote)");
    };

    CLI::App* train = app.add_subcommand("train", "Run two-stage policy training");
    add_config_options(train);

    CLI::App* eval = app.add_subcommand("eval", "Score a directory of predicted masks");
    add_config_options(eval);
    std::string pred_dir;
    std::string split_name = "test";
    double f1_threshold = 0.5;
    eval->add_option("--predictions", pred_dir, "Directory of <sample_id>.png masks")
        ->required();
    eval->add_option("--split", split_name, "train|val|test|all (default test)");
    eval->add_option("--f1-threshold", f1_threshold, "Instance IoU threshold for F1");

    CLI::App* reward = app.add_subcommand("reward-check", "Print reward components");
    int stage = 1;
    std::string completion_file, gt_file;
    std::optional<std::string> pred_mask;
    double mu = 2.0, sigma = 2.0, match_threshold = 0.5;
    reward->add_option("--stage", stage, "1 or 2")->required();
    reward->add_option("--completion", completion_file, "Completion text file")->required();
    reward->add_option("--gt", gt_file, "Stage 1: boxes JSON; stage 2: mask PNG")->required();
    reward->add_option("--pred-mask", pred_mask, "Stage 2: final mask PNG");
    reward->add_option("--mu", mu, "Point-count reward mean (default 2)");
    reward->add_option("--sigma", sigma, "Point-count reward width (default 2)");
    reward->add_option("--match-iou", match_threshold, "Box match threshold (default 0.5)");

    CLI::App* render = app.add_subcommand("render", "Overlay boxes and a mask onto a sample");
    std::string sample_dir, boxes_file, mask_file, render_out;
    bool use_map = false;
    render->add_option("--sample", sample_dir, "Sample directory")->required();
    render->add_option("--boxes", boxes_file, "JSON array of [x1,y1,x2,y2]")->required();
    render->add_option("--mask", mask_file, "Mask PNG")->required();
    render->add_option("--out", render_out, "Output PNG path")->required();
    render->add_flag("--map", use_map, "Overlay onto map.png instead of satellite.png");

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::uint64_t synth_seed = 7;
    int synth_n = 64;
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--n", synth_n, "Number of samples");
    synth->add_option("--out", synth_out, "Output dataset root")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : rrseg::kExitUsage;
    }

    try {
        if (train->parsed()) {
            const rrseg::RunConfig cfg =
                load_config_with_overrides(config_path, seed, out_dir, backend);
            return rrseg::cmd_train(cfg, std::cout);
        }
        if (eval->parsed()) {
            const rrseg::RunConfig cfg =
                load_config_with_overrides(config_path, seed, out_dir, backend);
            return rrseg::cmd_eval(cfg, pred_dir, split_name, std::cout, f1_threshold);
        }
        if (reward->parsed()) {
            rrseg::LengthRewardParams params{mu, sigma};
            std::optional<std::filesystem::path> mask_path;
            if (pred_mask) {
                mask_path = *pred_mask;
            }
            return rrseg::cmd_reward_check(stage, completion_file, gt_file, mask_path, params,
                                           match_threshold, std::cout);
        }
        if (render->parsed()) {
            return rrseg::cmd_render(sample_dir, boxes_file, mask_file, render_out, use_map,
                                     rrseg::OverlayStyle{}, std::cout);
        }
        if (synth->parsed()) {
            return rrseg::cmd_synth(synth_seed, synth_n, rrseg::SynthParams{}, synth_out,
                                    std::cout);
        }
    } catch (const rrseg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return rrseg::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rrseg::kExitRuntime;
    }
    return rrseg::kExitUsage;
}
