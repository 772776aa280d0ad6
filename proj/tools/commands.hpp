#pragma once

#include <string>

#include "glyphlm/config.hpp"

namespace glyphlm::cli {

struct EvalArgs {
    std::string checkpoint;
};

struct AnalyzeArgs {
    std::string vision_checkpoint;  // overrides config.analyze when non-empty
    std::string index_checkpoint;
};

struct PlotArgs {
    std::string input_csv;
};

int cmd_render(const ExperimentConfig& config, const std::string& out_dir);
int cmd_prepare(const ExperimentConfig& config, const std::string& out_dir);
int cmd_train(const ExperimentConfig& config, const std::string& out_dir);
int cmd_eval(const ExperimentConfig& config, const std::string& out_dir, const EvalArgs& args);
int cmd_sweep(const ExperimentConfig& config, const std::string& out_dir);
int cmd_analyze(const ExperimentConfig& config, const std::string& out_dir, const AnalyzeArgs& args);
int cmd_plot(const ExperimentConfig& config, const std::string& out_dir, const PlotArgs& args);

}  // namespace glyphlm::cli
