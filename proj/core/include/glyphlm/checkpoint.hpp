#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "glyphlm/glyph.hpp"
#include "glyphlm/model.hpp"

namespace glyphlm {

/// Everything needed to rebuild a model and its rendering context.
struct CheckpointMeta {
    DecoderConfig decoder;
    EncoderConfig encoder;
    RenderSpec render;
    InputMode mode = InputMode::kIndex;
    bool no_adapter = false;
    std::uint64_t seed = 0;
    std::int64_t samples_seen = 0;
    std::string config_digest;
};

/// Container layout: 8-byte magic "GLYPHLM1", little-endian u64 manifest
/// length, manifest JSON (config + seed + samples_seen + named tensor list),
/// then one tensor blob per manifest entry in order. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Model<float>& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    std::unique_ptr<Model<float>> model;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace glyphlm
