#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "glyphlm/checkpoint.hpp"
#include "glyphlm/corpus_synth.hpp"
#include "glyphlm/interpret.hpp"
#include "glyphlm/metrics.hpp"
#include "glyphlm/report.hpp"
#include "glyphlm/trainer.hpp"
#include "glyphlm/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace glyphlm::cli {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Corpus, vocabulary, and packed dataset for a config. The synthetic corpus
/// is regenerated deterministically when no path is configured, so every
/// subcommand sees the same data without sharing state on disk.
struct Workspace {
    std::u32string corpus;
    std::string corpus_digest;
    Vocabulary vocab;
    SequenceDataset dataset;
    DecoderConfig decoder;
    EncoderConfig encoder;

    static Workspace open(const ExperimentConfig& config) {
        Workspace ws;
        std::string bytes;
        if (!config.corpus.path.empty()) {
            bytes = read_file(config.corpus.path);
            ws.corpus = decode_utf8(bytes);
        } else {
            ws.corpus = generate_synthetic_corpus(config.corpus.synthetic);
            bytes = encode_utf8(ws.corpus);
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
        ws.corpus_digest = buf;
        ws.vocab = Vocabulary::build(ws.corpus);
        ws.dataset = SequenceDataset::pack(ws.corpus, ws.vocab, config.data.seq_len, config.data.val_count,
                                           config.train.seed);
        ws.decoder = config.model.decoder;
        if (ws.decoder.vocab == 0) ws.decoder.vocab = ws.vocab.size();
        ws.encoder = config.model.encoder;
        ws.encoder.input_resolution = config.render.resolution;
        ws.encoder.output_dim = ws.decoder.d_model;
        return ws;
    }
};

ArtifactMeta meta_for(const ExperimentConfig& config) {
    return {config.digest(), config.train.seed, kVersion};
}

std::string run_dir_name(InputMode mode, const RenderSpec& render) {
    if (mode == InputMode::kIndex) return "index";
    std::ostringstream os;
    os << "vision_r" << render.resolution << "_c" << format_number(render.crop_keep);
    return os.str();
}

std::vector<std::string> milestone_header() {
    return {"samples_seen", "mode", "resolution", "crop", "top1", "top5", "ppl", "loss"};
}

std::vector<std::string> milestone_row(const MilestoneRow& r) {
    return {std::to_string(r.samples_seen), to_string(r.mode),           std::to_string(r.resolution),
            format_number(r.crop),          format_number(r.top1),       format_number(r.top5),
            format_number(r.ppl),           format_number(r.loss)};
}

void write_milestone_csv(const std::string& path, const ExperimentConfig& config, const TrainRun& run) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : run.log) rows.push_back(milestone_row(r));
    write_csv(path, meta_for(config), milestone_header(), rows);
}

/// One full training run for a (mode, render) cell; returns the run and
/// writes milestones + checkpoints under out_dir.
TrainRun run_training(const ExperimentConfig& config, const Workspace& ws, InputMode mode, const std::string& out_dir,
                      bool quiet = false) {
    fs::create_directories(out_dir);
    GlyphRenderer renderer(config.render);
    GlyphCache cache(renderer);

    TrainConfig tc = config.train;
    Model<float> model(ws.decoder, ws.encoder, tc.seed, tc.no_adapter);
    if (!quiet) {
        std::printf("[train] mode=%s resolution=%d crop=%s params=%lld train_seqs=%lld val_seqs=%lld vocab=%d\n",
                    to_string(mode), mode == InputMode::kVision ? config.render.resolution : 0,
                    format_number(config.render.crop_keep).c_str(),
                    static_cast<long long>(model.total_params(mode)), static_cast<long long>(ws.dataset.train_count()),
                    static_cast<long long>(ws.dataset.val_count()), ws.decoder.vocab);
        std::fflush(stdout);
    }
    RenderSpec render = config.render;
    TrainRun run = train(model, ws.dataset, ws.vocab, &cache, tc, mode, out_dir, &render, config.digest());
    write_milestone_csv(out_dir + "/milestones.csv", config, run);
    if (!quiet) {
        std::printf("[train] done: epochs=%d samples_seen=%lld best_val_loss=%s top1=%s%s%s\n", run.epochs_run,
                    static_cast<long long>(run.samples_seen), format_number(run.best_val_loss).c_str(),
                    format_number(run.final_eval.top1()).c_str(), run.early_stopped ? " (early stop)" : "",
                    run.aborted_non_finite ? " (aborted: non-finite gradient)" : "");
        std::fflush(stdout);
    }
    return run;
}

std::vector<std::string> eval_row(const EvalReport& rep, InputMode mode, const RenderSpec& render,
                                  std::int64_t samples_seen) {
    const bool vision = mode == InputMode::kVision;
    return {std::to_string(samples_seen),        to_string(mode),
            std::to_string(vision ? render.resolution : 0), format_number(vision ? render.crop_keep : 1.0),
            format_number(rep.top1()),           format_number(rep.top5()),
            format_number(rep.ppl),              format_number(rep.ce)};
}

}  // namespace

int cmd_render(const ExperimentConfig& config, const std::string& out_dir) {
    Workspace ws = Workspace::open(config);
    const std::string dir = out_dir + "/render";
    fs::create_directories(dir);
    GlyphRenderer renderer(config.render);

    std::vector<GlyphImage> glyphs;
    for (int id = Vocabulary::kReserved; id < ws.vocab.size(); ++id)
        glyphs.push_back(renderer.render(ws.vocab.char_of(id)));
    write_glyph_cache(dir + "/glyphs.gly", glyphs);

    const auto meta = meta_for(config);
    const int n_preview = std::min<int>(12, int(glyphs.size()));
    for (int i = 0; i < n_preview; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s/glyph_u%04x.svg", dir.c_str(), unsigned(glyphs[size_t(i)].codepoint));
        write_heatmap_svg(name, meta, glyphs[size_t(i)].pixels, config.render.resolution,
                          "U+" + std::to_string(unsigned(glyphs[size_t(i)].codepoint)));
    }
    std::printf("[render] wrote %zu glyphs to %s (%d previews)\n", glyphs.size(), (dir + "/glyphs.gly").c_str(),
                n_preview);
    return 0;
}

int cmd_prepare(const ExperimentConfig& config, const std::string& out_dir) {
    Workspace ws = Workspace::open(config);
    const std::string dir = out_dir + "/prepare";
    fs::create_directories(dir);

    if (config.corpus.path.empty()) {
        std::ofstream out(dir + "/corpus.txt", std::ios::binary);
        out << encode_utf8(ws.corpus);
    }
    ws.vocab.save(dir + "/vocab.tsv");

    json manifest;
    manifest["seq_len"] = config.data.seq_len;
    manifest["train_sequences"] = ws.dataset.train_count();
    manifest["val_sequences"] = ws.dataset.val_count();
    manifest["vocab_size"] = ws.vocab.size();
    manifest["corpus_chars"] = ws.corpus.size();
    manifest["corpus_digest"] = ws.corpus_digest;
    manifest["seed"] = config.train.seed;
    manifest["config_digest"] = config.digest();
    std::ofstream mf(dir + "/dataset.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';

    const double unigram = unigram_baseline(ws.dataset.train_char_counts(ws.vocab.size()), ws.dataset);
    std::printf("[prepare] corpus=%zu chars vocab=%d train=%lld val=%lld unigram_baseline=%s\n", ws.corpus.size(),
                ws.vocab.size(), static_cast<long long>(ws.dataset.train_count()),
                static_cast<long long>(ws.dataset.val_count()), format_number(unigram).c_str());
    return 0;
}

int cmd_train(const ExperimentConfig& config, const std::string& out_dir) {
    Workspace ws = Workspace::open(config);
    const std::string dir = out_dir + "/train/" + run_dir_name(config.model.mode, config.render);
    TrainRun run = run_training(config, ws, config.model.mode, dir);
    return run.aborted_non_finite ? 2 : 0;
}

int cmd_eval(const ExperimentConfig& config, const std::string& out_dir, const EvalArgs& args) {
    if (args.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    Workspace ws = Workspace::open(config);
    auto loaded = load_checkpoint(args.checkpoint);
    GlyphRenderer renderer(loaded.meta.render);
    GlyphCache cache(renderer);

    auto rep = evaluate(*loaded.model, ws.dataset, loaded.meta.mode, ws.vocab, &cache, config.eval.k_list,
                        config.eval.rho);

    const std::string dir = out_dir + "/eval";
    fs::create_directories(dir);
    write_csv(dir + "/eval.csv", meta_for(config), milestone_header(),
              {eval_row(rep, loaded.meta.mode, loaded.meta.render, loaded.meta.samples_seen)});

    json detail;
    detail["mode"] = to_string(loaded.meta.mode);
    detail["samples_seen"] = loaded.meta.samples_seen;
    detail["checkpoint"] = args.checkpoint;
    detail["ce"] = rep.ce;
    detail["ppl"] = rep.ppl;
    for (const auto& [k, frac] : rep.topk) detail["topk"][std::to_string(k)] = frac;
    detail["n_positions"] = rep.n_positions;
    detail["n_sequences"] = rep.n_sequences;
    detail["deff"] = rep.deff;
    detail["n_eff"] = rep.n_eff;
    detail["se_adjusted"] = rep.se_adjusted;
    detail["rho"] = config.eval.rho;
    detail["config_digest"] = config.digest();
    std::ofstream out(dir + "/eval.json", std::ios::binary);
    out << detail.dump(2) << '\n';

    std::printf("[eval] top1=%s top5=%s ppl=%s (n=%lld positions, se_adj=%s)\n", format_number(rep.top1()).c_str(),
                format_number(rep.top5()).c_str(), format_number(rep.ppl).c_str(),
                static_cast<long long>(rep.n_positions), format_number(rep.se_adjusted).c_str());
    return 0;
}

int cmd_sweep(const ExperimentConfig& config, const std::string& out_dir) {
    struct Cell {
        InputMode mode;
        int resolution;
        double crop;
    };
    std::vector<Cell> cells;
    for (const auto& m : config.sweep.modes) {
        if (m == "index") {
            cells.push_back({InputMode::kIndex, 0, 1.0});
            continue;
        }
        for (int r : config.sweep.resolutions)
            for (double c : config.sweep.crops) cells.push_back({InputMode::kVision, r, c});
    }

    const std::string dir = out_dir + "/sweep";
    fs::create_directories(dir);
    std::vector<std::vector<std::string>> rows(cells.size());
    std::mutex print_mu;

    auto run_cell = [&](size_t i) {
        const Cell& cell = cells[i];
        ExperimentConfig cc = config;
        cc.model.mode = cell.mode;
        if (cell.mode == InputMode::kVision) {
            cc.render.resolution = cell.resolution;
            cc.render.crop_keep = cell.crop;
        }
        Workspace ws = Workspace::open(cc);
        const std::string cell_dir = dir + "/" + run_dir_name(cell.mode, cc.render);
        TrainRun run = run_training(cc, ws, cell.mode, cell_dir, /*quiet=*/true);
        rows[i] = eval_row(run.final_eval, cell.mode, cc.render, run.samples_seen);
        std::lock_guard<std::mutex> lock(print_mu);
        std::printf("[sweep] %s: top1=%s ppl=%s\n", run_dir_name(cell.mode, cc.render).c_str(),
                    format_number(run.final_eval.top1()).c_str(), format_number(run.final_eval.ppl).c_str());
        std::fflush(stdout);
    };

    const int jobs = std::max(1, config.sweep.jobs);
    if (jobs == 1) {
        for (size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) run_cell(i);
            });
        for (auto& t : pool) t.join();
    }

    write_csv(dir + "/sweep.csv", meta_for(config), milestone_header(), rows);
    std::printf("[sweep] wrote %zu rows to %s\n", rows.size(), (dir + "/sweep.csv").c_str());
    return 0;
}

namespace {

struct Category {
    std::string label;
    std::vector<char32_t> chars;
};

std::vector<Category> load_categories(const std::string& path, const Vocabulary& vocab) {
    std::vector<Category> out;
    if (!path.empty()) {
        std::istringstream in(read_file(path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw DataError("category file: missing tab in '" + line + "'");
            Category cat;
            cat.label = line.substr(0, tab);
            for (char32_t cp : decode_utf8(line.substr(tab + 1)))
                if (vocab.contains(cp)) cat.chars.push_back(cp);
            if (cat.chars.size() >= 2) out.push_back(std::move(cat));
        }
        return out;
    }
    // derive categories from the three most populated glyph stroke blocks
    std::map<char32_t, std::vector<char32_t>> blocks;
    for (int id = Vocabulary::kReserved; id < vocab.size(); ++id) {
        const char32_t cp = vocab.char_of(id);
        if (cp >= 0x3400) blocks[cp >> 6].push_back(cp);
    }
    std::vector<std::pair<char32_t, std::vector<char32_t>>> sorted(blocks.begin(), blocks.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });
    for (size_t i = 0; i < std::min<size_t>(3, sorted.size()); ++i) {
        char label[32];
        std::snprintf(label, sizeof label, "block_u%04x", unsigned(sorted[i].first << 6));
        Category cat;
        cat.label = label;
        cat.chars = sorted[i].second;
        if (cat.chars.size() > 16) cat.chars.resize(16);
        if (cat.chars.size() >= 2) out.push_back(std::move(cat));
    }
    if (out.empty()) throw DataError("analyze: could not derive character categories");
    return out;
}

struct ProbeSpecLine {
    std::u32string sentence;
    char32_t a, b;
};

std::vector<ProbeSpecLine> load_probe_file(const std::string& path) {
    std::vector<ProbeSpecLine> out;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 3) throw DataError("probe file: expected 'sentence<TAB>a<TAB>b' per line");
        const auto a = decode_utf8(fields[1]);
        const auto b = decode_utf8(fields[2]);
        if (a.size() != 1 || b.size() != 1) throw DataError("probe file: candidates must be single characters");
        out.push_back({decode_utf8(fields[0]), a[0], b[0]});
    }
    return out;
}

}  // namespace

int cmd_analyze(const ExperimentConfig& config, const std::string& out_dir, const AnalyzeArgs& args) {
    const std::string vision_path =
        !args.vision_checkpoint.empty() ? args.vision_checkpoint : config.analyze.vision_checkpoint;
    const std::string index_path =
        !args.index_checkpoint.empty() ? args.index_checkpoint : config.analyze.index_checkpoint;
    if (vision_path.empty()) throw ConfigError("analyze: a vision checkpoint is required (--vision-checkpoint)");

    Workspace ws = Workspace::open(config);
    auto vision = load_checkpoint(vision_path);
    std::unique_ptr<Model<float>> index_model;
    if (!index_path.empty()) index_model = std::move(load_checkpoint(index_path).model);

    GlyphRenderer renderer(vision.meta.render);
    GlyphCache cache(renderer);
    const std::string dir = out_dir + "/analyze";
    fs::create_directories(dir);
    const auto meta = meta_for(config);
    Rng rng(config.train.seed ^ 0xA11A57ull);

    // ---- embedding geometry (reference-table shape: group x metric x mode)
    std::vector<Category> categories = load_categories(config.analyze.category_file, ws.vocab);
    std::vector<std::vector<std::string>> geo_rows;
    std::vector<std::pair<std::string, Model<float>*>> modes;
    modes.emplace_back("vision", vision.model.get());
    if (index_model) modes.emplace_back("index", index_model.get());

    std::vector<double> pooled_euclid, pooled_cos;
    for (const auto& [mode_name, model] : modes) {
        const InputMode mode = mode_name == std::string("vision") ? InputMode::kVision : InputMode::kIndex;
        pooled_euclid.clear();
        pooled_cos.clear();
        for (const auto& cat : categories) {
            std::vector<double> euclid, cosine;
            for (size_t i = 0; i < cat.chars.size(); ++i)
                for (size_t j = i + 1; j < cat.chars.size(); ++j) {
                    auto va = embedding_view(*model, ws.vocab, &cache, cat.chars[i], mode);
                    auto vb = embedding_view(*model, ws.vocab, &cache, cat.chars[j], mode);
                    auto g = pair_geometry(va, vb);
                    euclid.push_back(g.euclidean);
                    cosine.push_back(g.cosine);
                }
            pooled_euclid.insert(pooled_euclid.end(), euclid.begin(), euclid.end());
            pooled_cos.insert(pooled_cos.end(), cosine.begin(), cosine.end());
            auto ce = group_ci(euclid, config.analyze.resamples, config.train.seed);
            auto cc = group_ci(cosine, config.analyze.resamples, config.train.seed);
            geo_rows.push_back({cat.label, "euclidean_l2norm", mode_name, format_number(ce.mean),
                                format_number(ce.lo95), format_number(ce.hi95), std::to_string(euclid.size())});
            geo_rows.push_back({cat.label, "cosine", mode_name, format_number(cc.mean), format_number(cc.lo95),
                                format_number(cc.hi95), std::to_string(cosine.size())});
        }
        auto pe = group_ci(pooled_euclid, config.analyze.resamples, config.train.seed);
        auto pc = group_ci(pooled_cos, config.analyze.resamples, config.train.seed);
        geo_rows.push_back({"similar_pairs", "euclidean_l2norm", mode_name, format_number(pe.mean),
                            format_number(pe.lo95), format_number(pe.hi95), std::to_string(pooled_euclid.size())});
        geo_rows.push_back({"similar_pairs", "cosine", mode_name, format_number(pc.mean), format_number(pc.lo95),
                            format_number(pc.hi95), std::to_string(pooled_cos.size())});
    }
    write_csv(dir + "/geometry.csv", meta, {"category", "metric", "mode", "mean", "lo95", "hi95", "n_pairs"}, geo_rows);

    // ---- PCA scatter of vision embeddings for the most frequent characters
    {
        std::vector<std::pair<std::int64_t, int>> by_freq;
        const auto counts = ws.dataset.train_char_counts(ws.vocab.size());
        for (int id = Vocabulary::kReserved; id < ws.vocab.size(); ++id) by_freq.push_back({counts[size_t(id)], id});
        std::stable_sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<std::vector<double>> views;
        std::vector<char32_t> chars;
        for (int i = 0; i < std::min<int>(config.analyze.pca_chars, int(by_freq.size())); ++i) {
            const char32_t cp = ws.vocab.char_of(by_freq[size_t(i)].second);
            views.push_back(unit_normalize(embedding_view(*vision.model, ws.vocab, &cache, cp, InputMode::kVision)));
            chars.push_back(cp);
        }
        auto pca = pca_project(views, 2);
        std::vector<ScatterPoint> pts;
        for (size_t i = 0; i < chars.size(); ++i)
            pts.push_back({pca.coords[i][0], pca.coords[i][1], encode_utf8(chars[i])});
        write_scatter_svg(dir + "/pca.svg", meta, "vision embeddings, first two components", pts);
    }

    // ---- weak-context probe table
    std::vector<ProbeSpecLine> probe_lines;
    if (!config.analyze.probe_file.empty()) {
        probe_lines = load_probe_file(config.analyze.probe_file);
    } else {
        auto probes = make_probes(ws.dataset, ws.vocab, config.analyze.probes, config.analyze.context_len,
                                  config.train.seed ^ 0x9E0B5ull);
        for (const auto& p : probes)
            probe_lines.push_back({p.context, p.target, confusable_candidate(ws.vocab, p.target, rng)});
    }
    std::vector<std::vector<std::string>> probe_rows;
    std::vector<Probe> saliency_probes;
    int probe_id = 0;
    for (const auto& line : probe_lines) {
        ++probe_id;
        if (int(line.sentence.size()) > ws.decoder.max_seq) throw DataError("probe sentence longer than max_seq");
        if (!ws.vocab.contains(line.a) || !ws.vocab.contains(line.b)) continue;
        for (const auto& [mode_name, model] : modes) {
            const InputMode mode = mode_name == std::string("vision") ? InputMode::kVision : InputMode::kIndex;
            auto rec = probe_pair(*model, ws.vocab, &cache, line.sentence, line.a, line.b, mode);
            probe_rows.push_back({std::to_string(probe_id), encode_utf8(line.sentence), encode_utf8(line.a),
                                  encode_utf8(line.b), mode_name, format_number(rec.p_a), format_number(rec.p_b),
                                  rec.choice == 0 ? encode_utf8(line.a) : rec.choice == 1 ? encode_utf8(line.b) : "tie",
                                  std::to_string(rec.rank_a), std::to_string(rec.rank_b)});
        }
        saliency_probes.push_back({line.sentence, line.a});
    }
    write_csv(dir + "/probes.csv", meta,
              {"id", "sentence", "candidate_a", "candidate_b", "mode", "p_a", "p_b", "choice", "rank_a", "rank_b"},
              probe_rows);

    // ---- saliency: region intensities, CMR/entropy, masking gaps
    const int n_sal = std::min<int>(int(saliency_probes.size()), config.analyze.probes);
    std::vector<Probe> sal(saliency_probes.begin(), saliency_probes.begin() + n_sal);
    std::vector<double> uppers, lowers, lefts, rights, cmrs, entropies;
    for (int i = 0; i < n_sal; ++i) {
        auto map = saliency(*vision.model, ws.vocab, &cache, sal[size_t(i)].context, sal[size_t(i)].target);
        if (map.all_zero) continue;
        for (int k = 0; k < map.positions; ++k) {
            if (map.s[size_t(k)] <= 0.0) continue;
            auto rs = region_stats(map.h[size_t(k)], map.resolution);
            uppers.push_back(rs.upper);
            lowers.push_back(rs.lower);
            lefts.push_back(rs.left);
            rights.push_back(rs.right);
            cmrs.push_back(center_mass_ratio(map.grids[size_t(k)], map.resolution));
            entropies.push_back(attribution_entropy(map.grids[size_t(k)], map.resolution));
        }
        if (i < 2) {  // a few attribution heatmaps for inspection
            for (int k = 0; k < std::min(3, map.positions); ++k) {
                char name[96];
                std::snprintf(name, sizeof name, "%s/saliency_p%d_k%d.svg", dir.c_str(), i, k);
                write_heatmap_svg(name, meta, map.h[size_t(k)], map.resolution, "normalized attribution");
            }
        }
    }
    auto mean_sd = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= double(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair<double, double>(m, std::sqrt(s / double(v.size())));
    };
    if (!uppers.empty()) {
        auto [mu, su] = mean_sd(uppers);
        auto [ml, sl] = mean_sd(lowers);
        auto [mle, sle] = mean_sd(lefts);
        auto [mr, sr] = mean_sd(rights);
        write_csv(dir + "/regions.csv", meta, {"region", "avg_intensity", "std_dev"},
                  {{"upper_half", format_number(mu), format_number(su)},
                   {"lower_half", format_number(ml), format_number(sl)},
                   {"left_half", format_number(mle), format_number(sle)},
                   {"right_half", format_number(mr), format_number(sr)}});
    }

    std::vector<std::string> summary_header = {"resolution", "n_probes", "cme_median", "cme_iqr",
                                               "cmr_median", "entropy_median"};
    std::vector<std::string> summary_row = {std::to_string(vision.meta.render.resolution), std::to_string(n_sal)};
    std::vector<double> cme;
    {
        auto imp = gap_metric(*vision.model, ws.vocab, &cache, sal, 0.20, MaskPolicy::kImportant, config.train.seed);
        auto rnd = gap_metric(*vision.model, ws.vocab, &cache, sal, 0.20, MaskPolicy::kRandom, config.train.seed);
        for (size_t i = 0; i < imp.gaps.size(); ++i) cme.push_back(imp.gaps[i] - rnd.gaps[i]);
    }
    summary_row.push_back(format_number(median_of(cme)));
    summary_row.push_back(format_number(iqr_of(cme)));
    summary_row.push_back(cmrs.empty() ? "nan" : format_number(median_of(cmrs)));
    summary_row.push_back(entropies.empty() ? "nan" : format_number(median_of(entropies)));
    for (double frac : config.analyze.mask_fractions) {
        auto imp = gap_metric(*vision.model, ws.vocab, &cache, sal, frac, MaskPolicy::kImportant, config.train.seed);
        auto rnd = gap_metric(*vision.model, ws.vocab, &cache, sal, frac, MaskPolicy::kRandom, config.train.seed);
        const std::string pct = std::to_string(int(std::lround(frac * 100.0)));
        summary_header.push_back("gap" + pct + "_median");
        summary_header.push_back("gap" + pct + "_iqr");
        summary_header.push_back("gap" + pct + "_random_median");
        summary_row.push_back(format_number(imp.median));
        summary_row.push_back(format_number(imp.iqr));
        summary_row.push_back(format_number(rnd.median));
    }
    write_csv(dir + "/saliency_summary.csv", meta, summary_header, {summary_row});

    std::printf("[analyze] wrote geometry/probes/regions/saliency tables and pca.svg under %s\n", dir.c_str());
    return 0;
}

int cmd_plot(const ExperimentConfig& config, const std::string& out_dir, const PlotArgs& args) {
    if (args.input_csv.empty()) throw ConfigError("plot: --input is required");
    std::istringstream in(read_file(args.input_csv));
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (header.empty()) header = fields;
        else rows.push_back(fields);
    }
    auto col = [&](const std::string& name) {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return int(i);
        return -1;
    };
    const int c_samples = col("samples_seen"), c_mode = col("mode"), c_res = col("resolution");
    if (c_samples < 0 || c_mode < 0 || c_res < 0)
        throw DataError("plot: input CSV must carry samples_seen/mode/resolution columns");

    const std::string dir = out_dir + "/plot";
    fs::create_directories(dir);
    const auto meta = meta_for(config);
    int made = 0;
    for (const std::string metric : {"top1", "top5", "ppl", "loss"}) {
        const int c_metric = col(metric);
        if (c_metric < 0) continue;
        std::map<std::string, Series> series;
        for (const auto& r : rows) {
            const std::string label = r[size_t(c_mode)] == "index" ? "index" : r[size_t(c_mode)] + " r" + r[size_t(c_res)];
            auto& s = series[label];
            s.label = label;
            s.points.emplace_back(std::stod(r[size_t(c_samples)]), std::stod(r[size_t(c_metric)]));
        }
        std::vector<Series> list;
        for (auto& [label, s] : series) {
            std::stable_sort(s.points.begin(), s.points.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            list.push_back(std::move(s));
        }
        write_line_chart_svg(dir + "/" + metric + ".svg", meta, metric + " vs samples seen", "samples_seen", metric,
                             list);
        ++made;
    }
    std::printf("[plot] wrote %d charts under %s\n", made, dir.c_str());
    return 0;
}

}  // namespace glyphlm::cli
