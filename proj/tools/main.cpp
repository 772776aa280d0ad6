#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "glyphlm/version.hpp"

using namespace glyphlm;

int main(int argc, char** argv) {
    CLI::App app{"glyphlm: character language modeling from glyph images or token indices"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    app.add_option("--config", config_path, "experiment config JSON (defaults apply when omitted)");
    app.add_option("--out", out_dir, "output root directory")->capture_default_str();
    app.add_option("--seed", seed_override, "override train.seed from the config")->each([&](const std::string&) {
        have_seed = true;
    });

    auto* render = app.add_subcommand("render", "rasterize the charset: glyph cache + preview heatmaps");
    auto* prepare = app.add_subcommand("prepare", "build corpus/vocab/dataset artifacts");
    auto* train = app.add_subcommand("train", "train one model per the config (mode, resolution, crop)");

    cli::EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the fixed validation split");
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();

    auto* sweep = app.add_subcommand("sweep", "train/evaluate the resolution x crop x mode grid");

    cli::AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "embedding geometry, probes, saliency tables and plots");
    analyze->add_option("--vision-checkpoint", analyze_args.vision_checkpoint, "vision-mode checkpoint");
    analyze->add_option("--index-checkpoint", analyze_args.index_checkpoint, "index-mode checkpoint (optional)");

    cli::PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot", "render milestone/sweep CSVs as SVG line charts");
    plot->add_option("--input", plot_args.input_csv, "input CSV file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig config = config_path.empty() ? parse_config_json("{}") : load_config(config_path);
        if (have_seed) {
            config.train.seed = seed_override;
            config.validate();
        }

        if (render->parsed()) return cli::cmd_render(config, out_dir);
        if (prepare->parsed()) return cli::cmd_prepare(config, out_dir);
        if (train->parsed()) return cli::cmd_train(config, out_dir);
        if (eval->parsed()) return cli::cmd_eval(config, out_dir, eval_args);
        if (sweep->parsed()) return cli::cmd_sweep(config, out_dir);
        if (analyze->parsed()) return cli::cmd_analyze(config, out_dir, analyze_args);
        if (plot->parsed()) return cli::cmd_plot(config, out_dir, plot_args);
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        std::fprintf(stderr, "note: artifacts written before the failure remain under %s\n", out_dir.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
