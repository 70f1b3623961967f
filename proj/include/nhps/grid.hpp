#pragma once

#include "nhps/rng.hpp"

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nhps {

/// Shared Monte Carlo sample times for every integral over [0, T).
///
/// Point g lies in observed interval i, (t_i, t_{i+1}], and carries weight
/// (t_{i+1} - t_i) / n_i, so sum_g w_g f(t_g) is an unbiased estimate of the integral
/// of f. The weights sum to T exactly, which makes the estimate exact for constants.
class TimeGrid {
public:
    TimeGrid() = default;

    /// Grid over explicit points; every point must lie in (0, T).
    static TimeGrid from_points(std::vector<double> boundaries, std::vector<double> points) {
        TimeGrid g;
        g.boundaries_ = std::move(boundaries);
        if (g.boundaries_.size() < 2) throw std::invalid_argument("TimeGrid: need at least the two boundaries");
        std::sort(points.begin(), points.end());
        const double T = g.boundaries_.back();
        for (double p : points)
            if (!(p > 0.0 && p < T)) throw std::invalid_argument("TimeGrid: point outside (0, T)");
        g.points_ = std::move(points);
        const std::size_t n_int = g.boundaries_.size() - 1;
        g.interval_.resize(g.points_.size());
        std::vector<std::size_t> count(n_int, 0);
        for (std::size_t j = 0; j < g.points_.size(); ++j) {
            g.interval_[j] = g.interval_of(g.points_[j]);
            ++count[g.interval_[j]];
        }
        g.weights_.resize(g.points_.size());
        for (std::size_t j = 0; j < g.points_.size(); ++j) {
            const std::size_t i = g.interval_[j];
            g.weights_[j] = (g.boundaries_[i + 1] - g.boundaries_[i]) / static_cast<double>(count[i]);
        }
        return g;
    }

    /// (I+1)*multiplier uniform points on (0, T), plus one uniform point in every
    /// observed interval left empty, so N is in [I+1, 2I+1] at multiplier 1.
    static TimeGrid sample(const std::vector<double>& boundaries, Rng& rng, int multiplier = 1) {
        if (boundaries.size() < 2) throw std::invalid_argument("TimeGrid: need at least the two boundaries");
        if (multiplier < 1) throw std::invalid_argument("TimeGrid: multiplier must be >= 1");
        const double T = boundaries.back();
        const std::size_t n_int = boundaries.size() - 1;
        std::vector<double> pts;
        const std::size_t n0 = n_int * static_cast<std::size_t>(multiplier);
        pts.reserve(n0 + n_int);
        while (pts.size() < n0) {
            const double p = T * rng.uniform_open();
            if (p > 0.0 && p < T) pts.push_back(p);
        }
        std::vector<char> occupied(n_int, 0);
        for (double p : pts) occupied[interval_index(boundaries, p)] = 1;
        for (std::size_t i = 0; i < n_int; ++i) {
            if (occupied[i]) continue;
            const double lo = boundaries[i], hi = boundaries[i + 1];
            if (!(hi > lo)) continue;  // zero-length interval (equal-times regime)
            double p;
            do {
                p = lo + (hi - lo) * rng.uniform_open();
            } while (!(p > lo && p < hi));
            pts.push_back(p);
        }
        return from_points(boundaries, std::move(pts));
    }

    const std::vector<double>& points() const noexcept { return points_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& boundaries() const noexcept { return boundaries_; }
    std::size_t size() const noexcept { return points_.size(); }
    std::size_t interval(std::size_t j) const { return interval_[j]; }
    double horizon() const { return boundaries_.back(); }

    /// Index range [first, last) of points with lo < t <= hi.
    std::pair<std::size_t, std::size_t> range(double lo, double hi) const {
        const auto first = std::upper_bound(points_.begin(), points_.end(), lo) - points_.begin();
        const auto last = std::upper_bound(points_.begin(), points_.end(), hi) - points_.begin();
        return {static_cast<std::size_t>(first), static_cast<std::size_t>(std::max(first, last))};
    }

    /// Observed interval i with t_i < t <= t_{i+1}.
    std::size_t interval_of(double t) const { return interval_index(boundaries_, t); }

    static std::size_t interval_index(const std::vector<double>& b, double t) {
        auto it = std::lower_bound(b.begin(), b.end(), t);
        std::size_t i = static_cast<std::size_t>(it - b.begin());
        i = i == 0 ? 0 : i - 1;
        return std::min(i, b.size() - 2);
    }

private:
    std::vector<double> boundaries_;
    std::vector<double> points_;
    std::vector<double> weights_;
    std::vector<std::size_t> interval_;
};

}  // namespace nhps
