#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "aan/errors.hpp"

namespace aan {

// Population variance below this makes the correlation undefined; it is then reported as 0.
inline constexpr double kDegenerateVariance = 1e-12;

inline double mean_squared_error(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ContractError("mse: lengths differ (" + std::to_string(pred.size()) + " vs " + std::to_string(target.size()) + ")");
    }
    if (pred.empty()) throw ContractError("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

/// Sample Pearson correlation; 0 when either side is (numerically) constant.
inline double pcc(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ContractError("pcc: lengths differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) throw ContractError("pcc: needs at least two values");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx / n < kDegenerateVariance || syy / n < kDegenerateVariance) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct PooledMetrics {
    double mse = 0.0;
    double pcc = 0.0;
    std::size_t count = 0;
};

/// MSE and PCC over the concatenation of every fold's test predictions.
inline PooledMetrics pooled_metrics(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty() || targets.empty()) throw ContractError("pooled_metrics: empty input");
    if (predictions.size() != targets.size()) throw ContractError("pooled_metrics: lengths differ");
    PooledMetrics m;
    m.count = predictions.size();
    m.mse = mean_squared_error(predictions, targets);
    m.pcc = predictions.size() >= 2 ? pcc(predictions, targets) : 0.0;
    return m;
}

}  // namespace aan
