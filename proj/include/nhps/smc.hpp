#pragma once

#include "nhps/ctlstm.hpp"
#include "nhps/event.hpp"
#include "nhps/grid.hpp"
#include "nhps/math.hpp"
#include "nhps/missingness.hpp"
#include "nhps/nhp.hpp"
#include "nhps/proposal.hpp"
#include "nhps/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <stdexcept>
#include <vector>

namespace nhps {

/// One hypothesis of the missing events with its running log factors.
struct Particle {
    std::vector<Event> z;
    CTLSTMState state;  ///< left-to-right state after the last event read
    double log_weight = 0.0;  ///< since the last resampling
    double log_p = 0.0;       ///< model factor over the whole path
    double log_q = 0.0;       ///< proposal factor over the whole path
    double log_miss = 0.0;    ///< missingness factor over the whole path
};

struct Ensemble {
    std::vector<std::vector<Event>> particles;
    std::vector<double> weights;      ///< normalized
    std::vector<double> log_weights;  ///< unnormalized, since the last resampling
    std::vector<double> log_p, log_q, log_miss;
    double log_marginal = 0.0;  ///< log of the particle estimate of p(x) p_miss integrated over z
    TimeGrid grid;
    std::uint64_t seed = 0;
    bool smooth = false;
    int resamplings = 0;

    std::size_t size() const noexcept { return particles.size(); }
};

struct SmcOptions {
    int particles = 50;
    bool resample = true;
    std::uint64_t seed = 0;
    int grid_multiplier = 1;
};

/// (sum w)^2 / sum w^2.
inline double ess(std::span<const double> weights) {
    double s = 0.0, s2 = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("ess: negative or NaN weight");
        s += w;
        s2 += w * w;
    }
    if (!(s > 0.0)) throw std::invalid_argument("ess: all weights are zero");
    return s * s / s2;
}

/// exp-normalizes log weights; throws when every weight is zero.
inline std::vector<double> normalize_log_weights(std::span<const double> lw) {
    const double lse = log_sum_exp(lw);
    if (is_log_zero(lse) || !std::isfinite(lse)) throw std::domain_error("all particles have zero weight");
    std::vector<double> w(lw.size());
    for (std::size_t m = 0; m < lw.size(); ++m) w[m] = std::exp(lw[m] - lse);
    return w;
}

/// M iid categorical draws of indices by (not necessarily normalized) weight.
inline std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t count, Rng& rng) {
    std::vector<double> cdf(weights.size());
    double acc = 0.0;
    for (std::size_t m = 0; m < weights.size(); ++m) cdf[m] = acc += weights[m];
    if (!(acc > 0.0)) throw std::invalid_argument("resample: all weights are zero");
    std::vector<std::size_t> idx(count);
    for (auto& j : idx) {
        const double u = rng.uniform() * acc;
        j = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        j = std::min(j, weights.size() - 1);
        while (weights[j] == 0.0 && j > 0) --j;  // u landed on a zero-width bin edge
    }
    return idx;
}

/// Replaces the ensemble by M draws by weight; weights become uniform.
inline Ensemble resample_multinomial(const Ensemble& e, Rng& rng) {
    const auto idx = multinomial_indices(e.weights, e.size(), rng);
    Ensemble out = e;
    const double uniform = 1.0 / static_cast<double>(e.size());
    for (std::size_t m = 0; m < idx.size(); ++m) {
        out.particles[m] = e.particles[idx[m]];
        out.log_p[m] = e.log_p[idx[m]];
        out.log_q[m] = e.log_q[idx[m]];
        out.log_miss[m] = e.log_miss[idx[m]];
        out.weights[m] = uniform;
        out.log_weights[m] = 0.0;
    }
    out.resamplings = e.resamplings + 1;
    return out;
}

/// sum_m w_m f(z_m).
inline double expectation(const Ensemble& e, const std::function<double(const std::vector<Event>&)>& f) {
    double acc = 0.0;
    for (std::size_t m = 0; m < e.size(); ++m)
        if (e.weights[m] > 0.0) acc += e.weights[m] * f(e.particles[m]);
    return acc;
}

/// Shared read-only state for one observed sequence: observed events, the grid, the
/// reverse trajectory, and the reverse term VB h_bar at every grid point.
class SmcContext {
public:
    SmcContext(const EventSequence& x, const Proposal& q, TimeGrid grid) : x_(&x), q_(&q), grid_(std::move(grid)) {
        if (auto r = validate(x, q.model().num_types); !r) throw ValidationError("smc: " + r.message);
        for (const Event& e : x.events())
            if (!e.observed) throw ValidationError("smc: observed sequence contains a missing event");
        times_ = observed_times(x);
        if (q.smooth()) {
            rev_ = build_reverse(q.params(), x);
            const int K = q.model().num_types;
            rev_terms_ = Matrix::Zero(K, static_cast<Eigen::Index>(grid_.size()));
            for (std::size_t g = 0; g < grid_.size(); ++g)
                rev_terms_.col(static_cast<Eigen::Index>(g)) = q.mixed_rows() * rev_.hidden(grid_.points()[g]);
        }
    }

    const EventSequence& observed() const noexcept { return *x_; }
    const Proposal& proposal() const noexcept { return *q_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& times() const noexcept { return times_; }
    std::size_t num_segments() const noexcept { return times_.size() - 1; }
    const ReverseTrajectory& reverse() const noexcept { return rev_; }

    /// VB h_bar(t) (empty when filtering).
    Vector reverse_term(double t) const {
        if (!q_->smooth()) return {};
        return q_->mixed_rows() * rev_.hidden(t);
    }
    Vector grid_reverse_term(std::size_t g) const {
        if (!q_->smooth()) return {};
        return rev_terms_.col(static_cast<Eigen::Index>(g));
    }
    const CTLSTMState* reverse_state(std::size_t segment) const {
        return q_->smooth() ? &rev_.state_for_interval(segment) : nullptr;
    }

private:
    const EventSequence* x_;
    const Proposal* q_;
    TimeGrid grid_;
    std::vector<double> times_;
    ReverseTrajectory rev_;
    Matrix rev_terms_;
};

inline Particle initial_particle(const NHPParams& model) {
    Particle p;
    p.state = step(model.lstm, initial_state(model.hidden()), kBos, 0.0);
    return p;
}

namespace detail {

/// Grid integrals over (lo, hi] of lambda^p and lambda^q under the particle's current state.
inline std::pair<double, double> integrate_segment(const SmcContext& ctx, const Particle& part, double lo, double hi) {
    const Proposal& q = ctx.proposal();
    const NHPParams& model = q.model();
    const auto [g0, g1] = ctx.grid().range(lo, hi);
    double ip = 0.0, iq = 0.0;
    for (std::size_t g = g0; g < g1; ++g) {
        const double t = ctx.grid().points()[g];
        const double w = ctx.grid().weights()[g];
        const Vector h = hidden_after(part.state, t - part.state.start_time);
        ip += w * intensities(model, h).sum();
        iq += w * q.intensities(h, ctx.grid_reverse_term(g)).sum();
    }
    return {ip, iq};
}

}  // namespace detail

/// Extends a particle over segment (t_i, t_{i+1}] by thinning from lambda^q until the
/// next proposal falls past t_{i+1}, then lets the observed event preempt it. Updates
/// the model, proposal and missingness factors and the left-to-right state.
inline void draw_segment(const SmcContext& ctx, Particle& part, std::size_t segment, Rng& rng) {
    const Proposal& q = ctx.proposal();
    const NHPParams& model = q.model();
    const MissingnessMechanism& mech = q.mechanism();
    const double t_hi = ctx.times()[segment + 1];
    const bool last = segment + 1 == ctx.num_segments();
    const CTLSTMState* rs = ctx.reverse_state(segment);
    double delta = 0.0;
    auto add = [&](double& factor, double v, double sign) {
        factor += v;
        delta += sign * v;
    };
    auto integrate = [&](double hi) {
        const auto [ip, iq] = detail::integrate_segment(ctx, part, part.state.start_time, hi);
        add(part.log_p, -ip, 1.0);
        add(part.log_q, -iq, -1.0);
    };

    double t = ctx.times()[segment];
    double lstar = q.lambda_star(part.state, rs);
    while (true) {
        if (lstar > 0.0) t += rng.exponential(lstar);
        if (!(lstar > 0.0) || t > t_hi) break;
        const double u = rng.uniform_open();
        const Vector h = hidden_after(part.state, t - part.state.start_time);
        const Vector lq = q.intensities(h, ctx.reverse_term(t));
        const double total = lq.sum();
        if (u * lstar > total) continue;
        double pick = rng.uniform() * total;
        int k = 0;
        for (int kk = 0; kk < lq.size(); ++kk) {
            if (lq[kk] <= 0.0) continue;
            k = kk + 1;
            pick -= lq[kk];
            if (pick < 0.0) break;
        }
        integrate(t);
        add(part.log_q, std::log(lq[k - 1]), -1.0);
        add(part.log_p, std::log(intensity(model, h, k)), 1.0);
        add(part.log_miss, mech.incremental_factor({k, t, false}, true), 1.0);
        part.z.push_back({k, t, false});
        part.state = step(model.lstm, part.state, k, t);
        lstar = q.lambda_star(part.state, rs);
    }
    integrate(t_hi);
    if (!last) {
        const Event& obs = ctx.observed()[segment + 1];
        const Vector h = hidden_after(part.state, t_hi - part.state.start_time);
        add(part.log_p, std::log(intensity(model, h, obs.type)), 1.0);
        add(part.log_miss, mech.incremental_factor(obs, false), 1.0);
        part.state = step(model.lstm, part.state, obs.type, t_hi);
    }
    part.log_weight += delta;
}

inline void collect(const std::vector<Particle>& ps, Ensemble& e) {
    const std::size_t M = ps.size();
    e.particles.resize(M);
    e.log_weights.resize(M);
    e.log_p.resize(M);
    e.log_q.resize(M);
    e.log_miss.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        e.particles[m] = ps[m].z;
        e.log_weights[m] = ps[m].log_weight;
        e.log_p[m] = ps[m].log_p;
        e.log_q[m] = ps[m].log_q;
        e.log_miss[m] = ps[m].log_miss;
    }
}

/// Sequential Monte Carlo over the observed sequence x with the given proposal on a
/// caller-supplied grid. Both p and q integrals use that grid.
inline Ensemble run(const EventSequence& x, const Proposal& q, const SmcOptions& opt, TimeGrid grid) {
    if (opt.particles < 1) throw std::invalid_argument("smc: particle count must be >= 1");
    const SmcContext ctx(x, q, std::move(grid));
    const std::size_t M = static_cast<std::size_t>(opt.particles);
    std::vector<Particle> ps(M, initial_particle(q.model()));
    Ensemble e;
    e.seed = opt.seed;
    e.smooth = q.smooth();
    double log_evidence = 0.0;
    const double log_m = std::log(static_cast<double>(M));
    std::vector<double> lw(M);

    for (std::size_t i = 0; i < ctx.num_segments(); ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            Rng rng(derive_seed(opt.seed, "particle", m, i));
            draw_segment(ctx, ps[m], i, rng);
        }
        if (!opt.resample || i + 1 == ctx.num_segments()) continue;
        for (std::size_t m = 0; m < M; ++m) lw[m] = ps[m].log_weight;
        const auto w = normalize_log_weights(lw);
        if (ess(w) >= 0.5 * static_cast<double>(M)) continue;
        log_evidence += log_sum_exp(lw) - log_m;
        Rng rng(derive_seed(opt.seed, "resample", i));
        const auto idx = multinomial_indices(w, M, rng);
        std::vector<Particle> next;
        next.reserve(M);
        for (std::size_t j : idx) {
            next.push_back(ps[j]);
            next.back().log_weight = 0.0;
        }
        ps = std::move(next);
        ++e.resamplings;
    }
    collect(ps, e);
    e.weights = normalize_log_weights(e.log_weights);
    e.log_marginal = log_evidence + log_sum_exp(e.log_weights) - log_m;
    e.grid = ctx.grid();
    return e;
}

/// As above with the grid drawn from the seed over the observed intervals of x.
inline Ensemble run(const EventSequence& x, const Proposal& q, const SmcOptions& opt) {
    Rng grng(derive_seed(opt.seed, "grid"));
    return run(x, q, opt, TimeGrid::sample(observed_times(x), grng, opt.grid_multiplier));
}

/// log p_model(x + z) + log p_miss - log q(z | x), evaluated directly on whole sequences.
inline double monolithic_log_weight(const Proposal& q, const EventSequence& x, const std::vector<Event>& z,
                                    const TimeGrid& grid) {
    const EventSequence merged = merge(x, z);
    return log_likelihood(q.model(), merged, grid) + log_p_miss(q.mechanism(), merged) - log_q(q, x, z, grid);
}

}  // namespace nhps
