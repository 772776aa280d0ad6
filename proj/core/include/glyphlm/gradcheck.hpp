#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "glyphlm/ops.hpp"
#include "glyphlm/rng.hpp"
#include "glyphlm/tensor.hpp"

namespace glyphlm {

struct GradCheckEntry {
    std::string name;
    std::int64_t checked = 0;
    std::int64_t failed = 0;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    std::int64_t checked = 0;
    std::int64_t failed = 0;
    double max_rel_err = 0.0;

    double pass_fraction() const {
        return checked ? double(checked - failed) / double(checked) : 1.0;
    }
    bool all_passed() const { return failed == 0; }
};

/// Verify analytic gradients against central finite differences.
/// loss_fn must rebuild the graph from the current parameter values on every
/// call. An element passes when |analytic - numeric| <= max(tolerance *
/// max(|analytic|,|numeric|), abs_floor). Meant to run in FP64; FP32 noise
/// swamps the difference quotient.
template <typename T>
GradCheckReport finite_diff_check(const std::vector<std::pair<std::string, TensorPtr<T>>>& params,
                                  const std::function<TensorPtr<T>()>& loss_fn, T step, double tolerance,
                                  double abs_floor = 1e-8, std::int64_t max_per_tensor = -1,
                                  Rng* sampler = nullptr) {
    for (auto& [name, p] : params) p->zero_grad();
    backward(loss_fn());

    GradCheckReport report;
    for (auto& [name, p] : params) {
        GradCheckEntry entry;
        entry.name = name;
        p->ensure_grad();

        std::vector<std::int64_t> picks;
        const std::int64_t n = p->numel();
        if (max_per_tensor > 0 && n > max_per_tensor && sampler) {
            for (std::int64_t i = 0; i < max_per_tensor; ++i) picks.push_back(std::int64_t(sampler->below(std::uint64_t(n))));
        } else {
            picks.resize(std::size_t(n));
            for (std::int64_t i = 0; i < n; ++i) picks[std::size_t(i)] = i;
        }

        for (std::int64_t i : picks) {
            const T saved = p->value[std::size_t(i)];
            p->value[std::size_t(i)] = saved + step;
            const double lp = [&] {
                NoGradGuard ng;
                return double(loss_fn()->value[0]);
            }();
            p->value[std::size_t(i)] = saved - step;
            const double lm = [&] {
                NoGradGuard ng;
                return double(loss_fn()->value[0]);
            }();
            p->value[std::size_t(i)] = saved;

            const double numeric = (lp - lm) / (2.0 * double(step));
            const double analytic = double(p->grad[std::size_t(i)]);
            const double abs_err = std::fabs(analytic - numeric);
            const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
            const double rel_err = abs_err / std::max(scale, 1e-300);
            ++entry.checked;
            entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
            if (scale > abs_floor / std::max(tolerance, 1e-300))
                entry.max_rel_err = std::max(entry.max_rel_err, rel_err);
            if (abs_err > std::max(tolerance * scale, abs_floor)) ++entry.failed;
        }

        report.checked += entry.checked;
        report.failed += entry.failed;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace glyphlm
