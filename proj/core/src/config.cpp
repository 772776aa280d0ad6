#include "glyphlm/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "glyphlm/rng.hpp"

namespace glyphlm {

using json = nlohmann::json;  // object keys sorted: canonical by construction

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + where + "." + it.key() + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["corpus"] = {{"path", c.corpus.path},
                   {"synthetic",
                    {{"target_chars", c.corpus.synthetic.target_chars},
                     {"seed", c.corpus.synthetic.seed},
                     {"families", c.corpus.synthetic.families},
                     {"members_per_family", c.corpus.synthetic.members_per_family},
                     {"classes", c.corpus.synthetic.classes},
                     {"words_per_class", c.corpus.synthetic.words_per_class}}}};
    j["render"] = {{"resolution", c.render.resolution}, {"occupancy", c.render.occupancy},
                   {"crop_keep", c.render.crop_keep},   {"font", c.render.font_source},
                   {"background", c.render.background}, {"ink", c.render.ink}};
    j["data"] = {{"seq_len", c.data.seq_len}, {"val_count", c.data.val_count}};
    j["model"] = {{"mode", to_string(c.model.mode)},
                  {"decoder",
                   {{"layers", c.model.decoder.layers},
                    {"d_model", c.model.decoder.d_model},
                    {"heads", c.model.decoder.heads},
                    {"max_seq", c.model.decoder.max_seq},
                    {"vocab", c.model.decoder.vocab},
                    {"tie_output", c.model.decoder.tie_output}}},
                  {"encoder",
                   {{"variant", to_string(c.model.encoder.variant)},
                    {"channels", c.model.encoder.channels}}}};
    j["train"] = {{"base_lr", c.train.base_lr},
                  {"max_lr", c.train.max_lr},
                  {"weight_decay", c.train.weight_decay},
                  {"clip_norm", c.train.clip_norm},
                  {"batch_size", c.train.batch_size},
                  {"patience", c.train.patience},
                  {"seed", c.train.seed},
                  {"milestones", c.train.milestones},
                  {"max_epochs", c.train.max_epochs},
                  {"plan_epochs", c.train.plan_epochs},
                  {"warmup_frac", c.train.warmup_frac},
                  {"final_lr_div", c.train.final_lr_div},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"eps", c.train.eps},
                  {"freeze_decoder", c.train.freeze_decoder},
                  {"no_adapter", c.train.no_adapter},
                  {"resample_each_epoch", c.train.resample_each_epoch}};
    j["eval"] = {{"k_list", c.eval.k_list}, {"rho", c.eval.rho}};
    j["analyze"] = {{"vision_checkpoint", c.analyze.vision_checkpoint},
                    {"index_checkpoint", c.analyze.index_checkpoint},
                    {"probe_file", c.analyze.probe_file},
                    {"category_file", c.analyze.category_file},
                    {"mask_fractions", c.analyze.mask_fractions},
                    {"probes", c.analyze.probes},
                    {"context_len", c.analyze.context_len},
                    {"resamples", c.analyze.resamples},
                    {"pca_chars", c.analyze.pca_chars}};
    j["sweep"] = {{"resolutions", c.sweep.resolutions},
                  {"crops", c.sweep.crops},
                  {"modes", c.sweep.modes},
                  {"jobs", c.sweep.jobs}};
    return j;
}

ExperimentConfig from_json(const json& j) {
    ExperimentConfig c;
    check_keys(j, "", {"corpus", "render", "data", "model", "train", "eval", "analyze", "sweep"});
    if (j.contains("corpus")) {
        const json& s = j.at("corpus");
        check_keys(s, "corpus", {"path", "synthetic"});
        get_if(s, "path", c.corpus.path);
        if (s.contains("synthetic")) {
            const json& y = s.at("synthetic");
            check_keys(y, "corpus.synthetic",
                       {"target_chars", "seed", "families", "members_per_family", "classes", "words_per_class"});
            get_if(y, "target_chars", c.corpus.synthetic.target_chars);
            get_if(y, "seed", c.corpus.synthetic.seed);
            get_if(y, "families", c.corpus.synthetic.families);
            get_if(y, "members_per_family", c.corpus.synthetic.members_per_family);
            get_if(y, "classes", c.corpus.synthetic.classes);
            get_if(y, "words_per_class", c.corpus.synthetic.words_per_class);
        }
    }
    if (j.contains("render")) {
        const json& s = j.at("render");
        check_keys(s, "render", {"resolution", "occupancy", "crop_keep", "font", "background", "ink"});
        get_if(s, "resolution", c.render.resolution);
        get_if(s, "occupancy", c.render.occupancy);
        get_if(s, "crop_keep", c.render.crop_keep);
        get_if(s, "font", c.render.font_source);
        get_if(s, "background", c.render.background);
        get_if(s, "ink", c.render.ink);
    }
    if (j.contains("data")) {
        const json& s = j.at("data");
        check_keys(s, "data", {"seq_len", "val_count"});
        get_if(s, "seq_len", c.data.seq_len);
        get_if(s, "val_count", c.data.val_count);
    }
    if (j.contains("model")) {
        const json& s = j.at("model");
        check_keys(s, "model", {"mode", "decoder", "encoder"});
        if (s.contains("mode")) {
            const std::string m = s.at("mode").get<std::string>();
            if (m != "index" && m != "vision") throw ConfigError("config: model.mode must be index or vision");
            c.model.mode = m == "index" ? InputMode::kIndex : InputMode::kVision;
        }
        if (s.contains("decoder")) {
            const json& d = s.at("decoder");
            check_keys(d, "model.decoder", {"layers", "d_model", "heads", "max_seq", "vocab", "tie_output"});
            get_if(d, "layers", c.model.decoder.layers);
            get_if(d, "d_model", c.model.decoder.d_model);
            get_if(d, "heads", c.model.decoder.heads);
            get_if(d, "max_seq", c.model.decoder.max_seq);
            get_if(d, "vocab", c.model.decoder.vocab);
            get_if(d, "tie_output", c.model.decoder.tie_output);
        }
        if (s.contains("encoder")) {
            const json& e = s.at("encoder");
            check_keys(e, "model.encoder", {"variant", "channels"});
            if (e.contains("variant")) c.model.encoder.variant = encoder_variant_from(e.at("variant").get<std::string>());
            get_if(e, "channels", c.model.encoder.channels);
        }
    }
    if (j.contains("train")) {
        const json& s = j.at("train");
        check_keys(s, "train",
                   {"base_lr", "max_lr", "weight_decay", "clip_norm", "batch_size", "patience", "seed", "milestones",
                    "max_epochs", "plan_epochs", "warmup_frac", "final_lr_div", "beta1", "beta2", "eps",
                    "freeze_decoder", "no_adapter", "resample_each_epoch"});
        get_if(s, "base_lr", c.train.base_lr);
        get_if(s, "max_lr", c.train.max_lr);
        get_if(s, "weight_decay", c.train.weight_decay);
        get_if(s, "clip_norm", c.train.clip_norm);
        get_if(s, "batch_size", c.train.batch_size);
        get_if(s, "patience", c.train.patience);
        get_if(s, "seed", c.train.seed);
        get_if(s, "milestones", c.train.milestones);
        get_if(s, "max_epochs", c.train.max_epochs);
        get_if(s, "plan_epochs", c.train.plan_epochs);
        get_if(s, "warmup_frac", c.train.warmup_frac);
        get_if(s, "final_lr_div", c.train.final_lr_div);
        get_if(s, "beta1", c.train.beta1);
        get_if(s, "beta2", c.train.beta2);
        get_if(s, "eps", c.train.eps);
        get_if(s, "freeze_decoder", c.train.freeze_decoder);
        get_if(s, "no_adapter", c.train.no_adapter);
        get_if(s, "resample_each_epoch", c.train.resample_each_epoch);
    }
    if (j.contains("eval")) {
        const json& s = j.at("eval");
        check_keys(s, "eval", {"k_list", "rho"});
        get_if(s, "k_list", c.eval.k_list);
        get_if(s, "rho", c.eval.rho);
    }
    if (j.contains("analyze")) {
        const json& s = j.at("analyze");
        check_keys(s, "analyze",
                   {"vision_checkpoint", "index_checkpoint", "probe_file", "category_file", "mask_fractions", "probes",
                    "context_len", "resamples", "pca_chars"});
        get_if(s, "vision_checkpoint", c.analyze.vision_checkpoint);
        get_if(s, "index_checkpoint", c.analyze.index_checkpoint);
        get_if(s, "probe_file", c.analyze.probe_file);
        get_if(s, "category_file", c.analyze.category_file);
        get_if(s, "mask_fractions", c.analyze.mask_fractions);
        get_if(s, "probes", c.analyze.probes);
        get_if(s, "context_len", c.analyze.context_len);
        get_if(s, "resamples", c.analyze.resamples);
        get_if(s, "pca_chars", c.analyze.pca_chars);
    }
    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        check_keys(s, "sweep", {"resolutions", "crops", "modes", "jobs"});
        get_if(s, "resolutions", c.sweep.resolutions);
        get_if(s, "crops", c.sweep.crops);
        get_if(s, "modes", c.sweep.modes);
        get_if(s, "jobs", c.sweep.jobs);
    }
    return c;
}

}  // namespace

void ExperimentConfig::validate() const {
    render.validate();
    train.validate();
    if (data.seq_len < 2) throw ConfigError("config: data.seq_len must be >= 2");
    if (data.val_count < 1) throw ConfigError("config: data.val_count must be >= 1");
    if (model.decoder.max_seq < data.seq_len) throw ConfigError("config: decoder.max_seq must cover data.seq_len");
    for (const auto& m : sweep.modes)
        if (m != "index" && m != "vision") throw ConfigError("config: sweep.modes entries must be index or vision");
    for (double f : analyze.mask_fractions)
        if (f < 0.0 || f > 1.0) throw ConfigError("config: analyze.mask_fractions must be in [0,1]");
    if (sweep.jobs < 1) throw ConfigError("config: sweep.jobs must be >= 1");
}

std::string ExperimentConfig::canonical_json() const { return to_json(*this).dump(2); }

std::string ExperimentConfig::digest() const {
    const std::string text = canonical_json();
    const std::uint64_t h = fnv1a64(text.data(), text.size());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig c = from_json(j);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    return parse_config_json(text);
}

void save_config(const ExperimentConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config: " + path);
    out << config.canonical_json() << '\n';
    if (!out) throw IoError("failed writing config: " + path);
}

}  // namespace glyphlm
