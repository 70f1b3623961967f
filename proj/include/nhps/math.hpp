#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace nhps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// log(0): the weight of an impossible particle or partition.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline bool is_log_zero(double x) noexcept { return x == kLogZero; }

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + e^x) in the overflow-safe branch form.
inline double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

/// Scaled softplus f(x) = s log(1 + exp(x / s)).
inline double scaled_softplus(double x, double s) noexcept { return s * softplus(x / s); }

inline Vector sigmoid(const Vector& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

/// 2 sigma(2x) - 1, i.e. tanh, elementwise.
inline Vector squash(const Vector& x) { return x.array().tanh().matrix(); }

inline double log_sum_exp(std::span<const double> xs) {
    double mx = kLogZero;
    for (double x : xs) mx = std::max(mx, x);
    if (is_log_zero(mx)) return kLogZero;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

inline double safe_log(double x) noexcept { return x > 0.0 ? std::log(x) : kLogZero; }

}  // namespace nhps
