#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyphlm/corpus_synth.hpp"
#include "glyphlm/data.hpp"
#include "glyphlm/encoder.hpp"
#include "glyphlm/glyph.hpp"
#include "glyphlm/model.hpp"
#include "glyphlm/trainer.hpp"

namespace glyphlm {

/// The experiment configuration document. Every field has a default; unknown
/// JSON keys are rejected. The canonical serialized form feeds the config
/// digest recorded in every output artifact.
struct ExperimentConfig {
    struct Corpus {
        std::string path;  // UTF-8 text file; empty = generate the synthetic corpus
        SyntheticCorpusConfig synthetic;
    } corpus;

    RenderSpec render;

    struct Data {
        int seq_len = 64;
        std::int64_t val_count = 256;
    } data;

    struct ModelSection {
        InputMode mode = InputMode::kVision;
        DecoderConfig decoder;  // vocab filled from the dataset when 0
        EncoderConfig encoder;
    } model;

    TrainConfig train;

    struct Eval {
        std::vector<int> k_list = {1, 5};
        double rho = 0.15;
    } eval;

    struct Analyze {
        std::string vision_checkpoint;
        std::string index_checkpoint;
        std::string probe_file;     // empty = derive probes from the validation split
        std::string category_file;  // character category list for the geometry table
        std::vector<double> mask_fractions = {0.05, 0.10, 0.20};
        int probes = 60;
        int context_len = 12;
        int resamples = 1000;
        int pca_chars = 60;
    } analyze;

    struct Sweep {
        std::vector<int> resolutions = {4, 8, 16};
        std::vector<double> crops = {1.0, 0.8, 0.5};
        std::vector<std::string> modes = {"index", "vision"};
        int jobs = 1;
    } sweep;

    void validate() const;

    /// Canonical JSON (sorted keys, every field explicit).
    std::string canonical_json() const;

    /// FNV-1a 64 of the canonical JSON, hex.
    std::string digest() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_json(const std::string& text);
void save_config(const ExperimentConfig& config, const std::string& path);

}  // namespace glyphlm
