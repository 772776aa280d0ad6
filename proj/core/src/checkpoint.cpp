#include "glyphlm/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "glyphlm/serialize.hpp"

namespace glyphlm {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'G', 'L', 'Y', 'P', 'H', 'L', 'M', '1'};

json render_to_json(const RenderSpec& r) {
    return json{{"resolution", r.resolution}, {"occupancy", r.occupancy},   {"crop_keep", r.crop_keep},
                {"font", r.font_source},      {"background", r.background}, {"ink", r.ink}};
}

RenderSpec render_from_json(const json& j) {
    RenderSpec r;
    r.resolution = j.at("resolution").get<int>();
    r.occupancy = j.at("occupancy").get<double>();
    r.crop_keep = j.at("crop_keep").get<double>();
    r.font_source = j.at("font").get<std::string>();
    r.background = j.at("background").get<double>();
    r.ink = j.at("ink").get<double>();
    return r;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model<float>& model, const CheckpointMeta& meta) {
    const auto& dc = model.decoder_config();
    const auto& ec = model.encoder_config();
    json manifest;
    manifest["format"] = "glyphlm-checkpoint";
    manifest["decoder"] = {{"layers", dc.layers},   {"d_model", dc.d_model}, {"heads", dc.heads},
                           {"max_seq", dc.max_seq}, {"vocab", dc.vocab},     {"tie_output", dc.tie_output}};
    manifest["encoder"] = {{"variant", to_string(ec.variant)},
                           {"input_resolution", ec.input_resolution},
                           {"channels", ec.channels},
                           {"output_dim", ec.output_dim}};
    manifest["render"] = render_to_json(meta.render);
    manifest["mode"] = to_string(meta.mode);
    manifest["no_adapter"] = model.no_adapter();
    manifest["seed"] = meta.seed;
    manifest["samples_seen"] = meta.samples_seen;
    manifest["config_digest"] = meta.config_digest;

    const auto params = model.parameters();
    json tensors = json::array();
    for (const auto& p : params) {
        json t;
        t["name"] = p.name;
        t["shape"] = p.tensor->shape;
        t["dtype"] = "f32";
        tensors.push_back(std::move(t));
    }
    manifest["tensors"] = std::move(tensors);

    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    detail::put_u64(out, text.size());
    out.write(text.data(), std::streamsize(text.size()));
    for (const auto& p : params) write_tensor(out, *p.tensor);
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a glyphlm checkpoint: " + path);
    const std::uint64_t len = detail::get_u64(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), std::streamsize(len))) throw IoError("checkpoint manifest truncated: " + path);

    json manifest = json::parse(text);
    CheckpointMeta meta;
    const json& dj = manifest.at("decoder");
    meta.decoder.layers = dj.at("layers").get<int>();
    meta.decoder.d_model = dj.at("d_model").get<int>();
    meta.decoder.heads = dj.at("heads").get<int>();
    meta.decoder.max_seq = dj.at("max_seq").get<int>();
    meta.decoder.vocab = dj.at("vocab").get<int>();
    meta.decoder.tie_output = dj.at("tie_output").get<bool>();
    const json& ej = manifest.at("encoder");
    meta.encoder.variant = encoder_variant_from(ej.at("variant").get<std::string>());
    meta.encoder.input_resolution = ej.at("input_resolution").get<int>();
    meta.encoder.channels = ej.at("channels").get<int>();
    meta.encoder.output_dim = ej.at("output_dim").get<int>();
    meta.render = render_from_json(manifest.at("render"));
    meta.mode = manifest.at("mode").get<std::string>() == "vision" ? InputMode::kVision : InputMode::kIndex;
    meta.no_adapter = manifest.at("no_adapter").get<bool>();
    meta.seed = manifest.at("seed").get<std::uint64_t>();
    meta.samples_seen = manifest.at("samples_seen").get<std::int64_t>();
    meta.config_digest = manifest.at("config_digest").get<std::string>();

    LoadedCheckpoint loaded;
    loaded.meta = meta;
    loaded.model = std::make_unique<Model<float>>(meta.decoder, meta.encoder, meta.seed, meta.no_adapter);

    const auto params = loaded.model->parameters();
    const json& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
        throw IoError("checkpoint tensor count mismatch in " + path);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string name = tensors[i].at("name").get<std::string>();
        if (name != params[i].name)
            throw IoError("checkpoint tensor order mismatch: expected " + params[i].name + ", got " + name);
        auto blob = read_tensor<float>(in);
        if (blob->shape != params[i].tensor->shape)
            throw IoError("checkpoint tensor shape mismatch for " + name);
        params[i].tensor->value = std::move(blob->value);
    }
    return loaded;
}

}  // namespace glyphlm
