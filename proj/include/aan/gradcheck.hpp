#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "aan/ops.hpp"
#include "aan/tensor.hpp"

namespace aan {

struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    double tolerance = 0.0;
    bool passed = true;
};

// Below this magnitude both gradients are treated as "near zero" and the
// comparison becomes absolute at that scale.
inline constexpr double kGradCheckFloor = 1e-6;

inline double gradient_relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    return std::abs(analytic - numeric) / denom;
}

/// Compares autodiff against central differences for every element of `x`.
/// `f` must map a tensor to a scalar tensor and be deterministic.
inline GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step = 1e-5,
                                  double tol = 1e-4, std::string name = "grad_check") {
    GradCheckReport report{std::move(name), 0.0, 0, tol, true};
    Tensor input(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
    backward(f(input));
    std::vector<double> analytic = input.has_grad() ? std::vector<double>(input.grad().begin(), input.grad().end())
                                                    : std::vector<double>(input.numel(), 0.0);
    NoGradGuard no_grad;
    auto values = input.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double up = f(input).item();
        values[i] = saved - step;
        const double down = f(input).item();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        report.max_rel_error = std::max(report.max_rel_error, gradient_relative_error(analytic[i], numeric));
        ++report.checked;
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

/// Same comparison for a loss over a set of parameter tensors. At most
/// `max_per_tensor` entries of each parameter are probed (chosen with `rng`);
/// zero means every entry.
inline GradCheckReport grad_check_parameters(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                             double step, double tol, std::size_t max_per_tensor, Rng& rng,
                                             std::string name = "grad_check_parameters") {
    GradCheckReport report{std::move(name), 0.0, 0, tol, true};
    for (auto& p : params) p.zero_grad();
    backward(loss_fn());
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        analytic.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                           : std::vector<double>(p.numel(), 0.0));
    }
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto values = params[t].mutable_data();
        std::vector<std::size_t> idx(values.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (max_per_tensor != 0 && idx.size() > max_per_tensor) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_per_tensor);
        }
        for (std::size_t i : idx) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = loss_fn().item();
            values[i] = saved - step;
            const double down = loss_fn().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            report.max_rel_error = std::max(report.max_rel_error, gradient_relative_error(analytic[t][i], numeric));
            ++report.checked;
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace aan
