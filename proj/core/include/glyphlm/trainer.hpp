#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "glyphlm/checkpoint.hpp"
#include "glyphlm/metrics.hpp"
#include "glyphlm/model.hpp"
#include "glyphlm/rng.hpp"

namespace glyphlm {

struct TrainConfig {
    double base_lr = 2e-4;
    double max_lr = 1.5e-3;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    int batch_size = 16;
    int patience = 7;
    std::uint64_t seed = 42;
    std::vector<std::int64_t> milestones;  // samples_seen thresholds; empty = derive from the plan

    int max_epochs = 8;    // hard stop for this run
    int plan_epochs = 50;  // denominator for the schedule and milestone grid
    double warmup_frac = 0.3;
    double final_lr_div = 25.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool freeze_decoder = false;
    bool no_adapter = false;
    bool resample_each_epoch = false;  // default: curriculum subsets nest

    void validate() const {
        if (base_lr > max_lr) throw ConfigError("train: base_lr must be <= max_lr");
        if (patience < 1) throw ConfigError("train: patience must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (max_epochs < 1 || plan_epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) throw ConfigError("train: warmup_frac must be in (0,1)");
        if (final_lr_div <= 0.0) throw ConfigError("train: final_lr_div must be positive");
    }
};

/// One evaluation row of the milestone log (the CSV schema of the run).
struct MilestoneRow {
    std::int64_t samples_seen = 0;
    InputMode mode = InputMode::kIndex;
    int resolution = 0;  // 0 for index mode
    double crop = 1.0;
    double top1 = 0.0;
    double top5 = 0.0;
    double ppl = 0.0;
    double loss = 0.0;  // validation cross-entropy
};

struct TrainRun {
    std::vector<MilestoneRow> log;
    std::int64_t samples_seen = 0;
    std::int64_t steps = 0;
    int epochs_run = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    bool early_stopped = false;
    bool aborted_non_finite = false;
    EvalReport final_eval;
};

/// One-cycle schedule: cosine ramp base->max over the first warmup_frac of
/// the run, cosine decay max->base/final_div over the rest. Continuous at the
/// peak.
inline double onecycle_lr(std::int64_t step, std::int64_t total_steps, double base_lr, double max_lr,
                          double warmup_frac = 0.3, double final_div = 25.0) {
    if (total_steps <= 0) return base_lr;
    if (step < 0) step = 0;
    if (step > total_steps) step = total_steps;
    const double warm = warmup_frac * double(total_steps);
    constexpr double kPi = 3.14159265358979323846;
    if (double(step) <= warm) {
        const double u = warm > 0 ? double(step) / warm : 1.0;
        return base_lr + (max_lr - base_lr) * (1.0 - std::cos(kPi * u)) / 2.0;
    }
    const double final_lr = base_lr / final_div;
    const double w = (double(step) - warm) / (double(total_steps) - warm);
    return final_lr + (max_lr - final_lr) * (1.0 + std::cos(kPi * w)) / 2.0;
}

/// Joint L2 norm over all gradients; scales them in place so the post-clip
/// norm is at most max_norm. Returns the scale applied.
template <typename T>
double clip_gradients(const std::vector<Param<T>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (T g : p.tensor->grad) sq += double(g) * double(g);
    }
    const double norm = std::sqrt(sq);
    if (!(norm > max_norm)) return 1.0;
    const double scale = max_norm / norm;
    for (const auto& p : params)
        for (auto& g : p.tensor->grad) g = T(double(g) * scale);
    return scale;
}

/// AdamW with decoupled weight decay and bias-corrected moments. Moments are
/// keyed by parameter name. Throws NonFiniteGradientError before touching any
/// state when a gradient is not finite, so an aborted step leaves parameters
/// and moments exactly as they were.
template <typename T>
class AdamW {
  public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.01)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    std::int64_t step_count() const { return t_; }

    void step(const std::vector<Param<T>>& params, double lr) {
        for (const auto& p : params) {
            p.tensor->ensure_grad();
            for (T g : p.tensor->grad)
                if (!std::isfinite(double(g)))
                    throw NonFiniteGradientError("non-finite gradient in " + p.name);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (const auto& p : params) {
            auto& slot = moments_[p.name];
            if (slot.m.empty()) {
                slot.m.assign(p.tensor->value.size(), 0.0);
                slot.v.assign(p.tensor->value.size(), 0.0);
            }
            const double wd = p.decay ? weight_decay_ : 0.0;
            T* w = p.tensor->value.data();
            const T* g = p.tensor->grad.data();
            for (std::size_t i = 0; i < p.tensor->value.size(); ++i) {
                const double gi = double(g[i]);
                slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
                slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
                const double mhat = slot.m[i] / bc1;
                const double vhat = slot.v[i] / bc2;
                const double update = mhat / (std::sqrt(vhat) + eps_) + wd * double(w[i]);
                w[i] = T(double(w[i]) - lr * update);
            }
        }
    }

  private:
    struct Slot {
        std::vector<double> m, v;
    };
    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
    std::unordered_map<std::string, Slot> moments_;
};

/// Default milestone grid: the reference grid {4096, 6152, 8200, 10248,
/// 16441} out of ~2.13M planned instances, rescaled to this run's planned
/// total, plus the 0.4%-of-plan point.
inline std::vector<std::int64_t> default_milestones(const CurriculumSchedule& sched, int plan_epochs) {
    static const std::int64_t kReferenceGrid[] = {4096, 6152, 8200, 10248, 16441};
    constexpr double kReferenceTotal = 2130000.0;
    const double planned = double(sched.total_instances(plan_epochs));
    std::vector<std::int64_t> out;
    for (std::int64_t g : kReferenceGrid) {
        const auto m = std::int64_t(std::llround(double(g) * planned / kReferenceTotal));
        if (m >= 1) out.push_back(m);
    }
    const auto hot = std::int64_t(std::llround(0.004 * planned));
    if (hot >= 1) out.push_back(hot);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// The samples_seen value the hot-start check reads: the milestone closest to
/// 0.4% of the planned total.
inline std::int64_t hot_start_milestone(const std::vector<std::int64_t>& milestones, const CurriculumSchedule& sched,
                                        int plan_epochs) {
    const double hot = 0.004 * double(sched.total_instances(plan_epochs));
    std::int64_t best = milestones.empty() ? 0 : milestones.front();
    for (std::int64_t m : milestones)
        if (std::fabs(double(m) - hot) < std::fabs(double(best) - hot)) best = m;
    return best;
}

/// Full optimization loop: quadratic curriculum over the seeded train order
/// (nested prefixes unless resampling), AdamW + one-cycle + clipping,
/// milestone and epoch-end evaluation on the fixed validation set, early
/// stopping on validation loss, best/final checkpoints when out_dir is given.
template <typename T>
TrainRun train(Model<T>& model, const SequenceDataset& dataset, const Vocabulary& vocab, GlyphCache* cache,
               const TrainConfig& cfg, InputMode mode, const std::string& out_dir = "",
               const RenderSpec* render = nullptr, const std::string& config_digest = "") {
    cfg.validate();
    if (mode == InputMode::kVision && !cache) throw DataError("train: vision mode needs a glyph cache");

    CurriculumSchedule sched;
    sched.cap = dataset.train_count();
    const std::vector<std::int64_t> milestones =
        cfg.milestones.empty() ? default_milestones(sched, cfg.plan_epochs) : [&] {
            auto m = cfg.milestones;
            std::sort(m.begin(), m.end());
            m.erase(std::unique(m.begin(), m.end()), m.end());
            return m;
        }();

    std::int64_t plan_steps = 0;
    for (int e = 0; e < cfg.plan_epochs; ++e)
        plan_steps += (sched.size_at(e) + cfg.batch_size - 1) / cfg.batch_size;

    const auto trainable = model.trainable(mode, cfg.freeze_decoder);
    const auto all_params = model.parameters();
    AdamW<T> opt(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    Rng order_rng = Rng(cfg.seed).fork(17);

    const int resolution = mode == InputMode::kVision && cache ? cache->renderer().spec().resolution : 0;
    const double crop = mode == InputMode::kVision && cache ? cache->renderer().spec().crop_keep : 1.0;

    RenderSpec render_spec = render ? *render : (cache ? cache->renderer().spec() : RenderSpec{});
    auto meta = [&](std::int64_t samples) {
        CheckpointMeta m;
        m.decoder = model.decoder_config();
        m.encoder = model.encoder_config();
        m.render = render_spec;
        m.mode = mode;
        m.no_adapter = model.no_adapter();
        m.seed = cfg.seed;
        m.samples_seen = samples;
        m.config_digest = config_digest;
        return m;
    };
    const bool write_ckpt = !out_dir.empty() && std::is_same_v<T, float>;
    if (write_ckpt) std::filesystem::create_directories(out_dir);

    std::vector<std::int64_t> order(std::size_t(dataset.train_count()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = std::int64_t(i);

    TrainRun run;
    std::size_t next_milestone = 0;

    auto do_eval = [&]() {
        EvalReport rep = evaluate(model, dataset, mode, vocab, cache);
        MilestoneRow row;
        row.samples_seen = run.samples_seen;
        row.mode = mode;
        row.resolution = resolution;
        row.crop = crop;
        row.top1 = rep.top1();
        row.top5 = rep.top5();
        row.ppl = rep.ppl;
        row.loss = rep.ce;
        if (run.log.empty() || run.log.back().samples_seen < row.samples_seen) run.log.push_back(row);
        run.final_eval = rep;
        return rep;
    };

    try {
        for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
            if (cfg.resample_each_epoch) order_rng.fork(std::uint64_t(epoch)).shuffle(order);
            const std::int64_t subset = sched.size_at(epoch);
            for (std::int64_t start = 0; start < subset; start += cfg.batch_size) {
                const std::int64_t stop = std::min(subset, start + cfg.batch_size);
                std::vector<std::int64_t> idx(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(stop));
                SequenceBatch batch = make_batch(dataset, Split::kTrain, idx, mode, vocab, cache);

                for (const auto& p : all_params) p.tensor->zero_grad();
                auto loss = cross_entropy(model.forward(batch, mode), batch.target_ids, Vocabulary::kPad);
                backward(loss);
                clip_gradients(trainable, cfg.clip_norm);
                opt.step(trainable, onecycle_lr(run.steps, plan_steps, cfg.base_lr, cfg.max_lr, cfg.warmup_frac,
                                                cfg.final_lr_div));
                ++run.steps;
                run.samples_seen += stop - start;

                if (next_milestone < milestones.size() && run.samples_seen >= milestones[next_milestone]) {
                    while (next_milestone < milestones.size() && run.samples_seen >= milestones[next_milestone])
                        ++next_milestone;
                    do_eval();
                }
            }

            EvalReport rep = (run.log.empty() || run.log.back().samples_seen < run.samples_seen) ? do_eval()
                                                                                                 : run.final_eval;
            run.epochs_run = epoch + 1;
            if (rep.ce < run.best_val_loss) {
                run.best_val_loss = rep.ce;
                run.best_epoch = epoch;
                if (write_ckpt) {
                    if constexpr (std::is_same_v<T, float>)
                        save_checkpoint(out_dir + "/checkpoint_best.ckpt", model, meta(run.samples_seen));
                }
            } else if (epoch - run.best_epoch >= cfg.patience) {
                run.early_stopped = true;
                break;
            }
        }
    } catch (const NonFiniteGradientError&) {
        // parameters are untouched by the failed step; keep the last good state
        run.aborted_non_finite = true;
    }

    if (write_ckpt) {
        if constexpr (std::is_same_v<T, float>)
            save_checkpoint(out_dir + "/checkpoint_final.ckpt", model, meta(run.samples_seen));
    }
    return run;
}

}  // namespace glyphlm
