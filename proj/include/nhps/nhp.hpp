#pragma once

#include "nhps/ctlstm.hpp"
#include "nhps/event.hpp"
#include "nhps/grid.hpp"
#include "nhps/math.hpp"
#include "nhps/rng.hpp"

#include <cmath>
#include <concepts>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nhps {

/// Neural Hawkes process parameters: lambda_k(t) = s_k log(1 + exp(v_k . h(t) / s_k)).
struct NHPParams {
    int num_types = 0;  ///< K
    CTLSTMParams lstm;
    Matrix V;  ///< K x D, row k-1 is v_k
    Vector s;  ///< K softplus scales, > 0

    int hidden() const noexcept { return lstm.hidden; }

    static NHPParams zeros(int num_types, int hidden) {
        NHPParams p;
        p.num_types = num_types;
        p.lstm = CTLSTMParams::zeros(hidden, num_types + 2);
        p.V = Matrix::Zero(num_types, hidden);
        p.s = Vector::Ones(num_types);
        return p;
    }

    /// Same shapes, every entry zero (gradient container).
    NHPParams zeros_like() const {
        NHPParams g = zeros(num_types, hidden());
        g.s.setZero();
        return g;
    }

    friend bool operator==(const NHPParams& a, const NHPParams& b) {
        return a.num_types == b.num_types && a.lstm == b.lstm && a.V == b.V && a.s == b.s;
    }
};

/// Visits every tensor as (name, Eigen dense object&) in a fixed order.
template <class Params, class F>
    requires std::same_as<std::remove_const_t<Params>, NHPParams>
void for_each_tensor(Params& p, F&& f) {
    f(std::string_view("lstm.W"), p.lstm.W);
    f(std::string_view("lstm.U"), p.lstm.U);
    f(std::string_view("lstm.b"), p.lstm.b);
    f(std::string_view("V"), p.V);
    f(std::string_view("s"), p.s);
}

inline void check_type(const NHPParams& p, int k) {
    if (k < 1 || k > p.num_types)
        throw std::out_of_range("intensity requested for non-event type " + std::to_string(k));
}

/// Intensity of type k (1-based) at hidden vector h.
inline double intensity(const NHPParams& p, const Vector& h, int k) {
    check_type(p, k);
    return scaled_softplus(p.V.row(k - 1).dot(h), p.s[k - 1]);
}

/// All K intensities at h.
inline Vector intensities(const NHPParams& p, const Vector& h) {
    Vector x = p.V * h;
    for (int k = 0; k < p.num_types; ++k) x[k] = scaled_softplus(x[k], p.s[k]);
    return x;
}

/// Upper bound on f_k(v_k . h + u_k . hbar) over an interval where each hidden unit
/// is o_d tanh(c_d(t)) with c_d(t) moving monotonically between cell_d and target_d.
/// Each summand is bounded by its larger endpoint value.
inline double bound_linear_term(const Eigen::Ref<const Vector>& coef, const CTLSTMState& s) {
    double acc = 0.0;
    for (int d = 0; d < coef.size(); ++d) {
        const double a = coef[d] * s.output[d] * std::tanh(s.cell[d]);
        const double b = coef[d] * s.output[d] * std::tanh(s.target[d]);
        acc += std::max(a, b);
    }
    return acc;
}

/// lambda* >= sup_t sum_k lambda_k(t) over the whole interval starting at state.start_time.
inline double lambda_star(const NHPParams& p, const CTLSTMState& state) {
    double total = 0.0;
    for (int k = 0; k < p.num_types; ++k)
        total += scaled_softplus(bound_linear_term(p.V.row(k).transpose(), state), p.s[k]);
    return total;
}

inline void check_finite(double v, std::string_view what) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite value in " + std::string(what));
}

namespace detail {

/// Log-likelihood of a complete sequence; gradient added into `grad` when non-null.
inline double log_likelihood_impl(const NHPParams& p, const EventSequence& seq, const TimeGrid& grid,
                                  NHPParams* grad) {
    const auto& ev = seq.events();
    const int D = p.hidden();
    const int K = p.num_types;
    const std::size_t n_reads = ev.size() - 1;  // BOS + interior; EOS is never read

    std::vector<TrajectoryInput> reads(n_reads);
    for (std::size_t j = 0; j < n_reads; ++j)
        reads[j] = {ev[j].type, j == 0 ? 0.0 : ev[j].time - ev[j - 1].time, ev[j].time};

    Trajectory tr;
    std::vector<CTLSTMState> plain;
    if (grad) {
        tr = run_trajectory(p.lstm, initial_state(D), reads);
    } else {
        plain.reserve(n_reads + 1);
        plain.push_back(initial_state(D));
        for (const auto& r : reads)
            plain.push_back(step_elapsed(p.lstm, plain.back(), r.type, r.elapsed, r.time));
    }
    const auto& states = grad ? tr.states : plain;
    std::vector<StateGrad> sg;
    if (grad) sg = zero_state_grads(tr, D);

    double ll = 0.0;
    // Segment l covers (t_{l-1}, t_l] and is governed by the state after reading event l-1.
    for (std::size_t l = 1; l < ev.size(); ++l) {
        const CTLSTMState& s = states[l];  // states[l] = after reading ev[l-1]
        const double t0 = ev[l - 1].time;
        const bool is_event = l + 1 < ev.size();
        if (is_event) {
            const int k = ev[l].type;
            const double tau = ev[l].time - t0;
            const Vector h = hidden_after(s, tau);
            const double x = p.V.row(k - 1).dot(h);
            const double sk = p.s[k - 1];
            const double lam = scaled_softplus(x, sk);
            ll += std::log(lam);
            if (grad) {
                const double sig = sigmoid(x / sk);
                const double a = sig / lam;
                grad->V.row(k - 1) += a * h.transpose();
                grad->s[k - 1] += (softplus(x / sk) - (x / sk) * sig) / lam;
                accumulate_query_grad(s, tau, (a * p.V.row(k - 1)).transpose(), sg[l]);
            }
        }
        const auto [g0, g1] = grid.range(t0, ev[l].time);
        for (std::size_t g = g0; g < g1; ++g) {
            const double tau = grid.points()[g] - t0;
            const double w = grid.weights()[g];
            const Vector h = hidden_after(s, tau);
            const Vector x = p.V * h;
            Vector gh = grad ? Vector::Zero(D) : Vector();
            for (int k = 0; k < K; ++k) {
                const double sk = p.s[k];
                ll -= w * scaled_softplus(x[k], sk);
                if (grad) {
                    const double sig = sigmoid(x[k] / sk);
                    grad->V.row(k) += (-w * sig) * h.transpose();
                    grad->s[k] += -w * (softplus(x[k] / sk) - (x[k] / sk) * sig);
                    gh += (-w * sig) * p.V.row(k).transpose();
                }
            }
            if (grad) accumulate_query_grad(s, tau, gh, sg[l]);
        }
    }
    if (grad) backward(p.lstm, tr, sg, grad->lstm);
    return ll;
}

}  // namespace detail

/// sum_l log lambda_{k_l}(t_l) minus the grid estimate of the integral of sum_k lambda_k.
/// Boundaries contribute no log-intensity term.
inline double log_likelihood(const NHPParams& p, const EventSequence& seq, const TimeGrid& grid) {
    if (auto r = validate(seq, p.num_types, {.allow_equal_times = true}); !r)
        throw ValidationError("log_likelihood: " + r.message);
    return detail::log_likelihood_impl(p, seq, grid, nullptr);
}

/// Grid whose intervals are the gaps between consecutive events of a complete sequence.
inline TimeGrid complete_data_grid(const EventSequence& seq, Rng& rng, int multiplier = 1) {
    std::vector<double> b;
    b.reserve(seq.size());
    for (const Event& e : seq.events()) b.push_back(e.time);
    return TimeGrid::sample(b, rng, multiplier);
}

struct Horizon {
    double T;
};
struct EventCount {
    int count;
};
using StopRule = std::variant<Horizon, EventCount>;

/// Samples a complete, fully observed sequence by thinning.
///
/// With Horizon{T} events are drawn on [0, T). With EventCount{I} the first I events
/// are drawn on [0, inf), T is set to t_I, and the I-th event closes the window, so
/// the sequence holds I-1 interior events on [0, t_I).
inline EventSequence sample_prior(const NHPParams& p, const StopRule& stop, Rng& rng) {
    const int D = p.hidden();
    const int K = p.num_types;
    CTLSTMState state = step(p.lstm, initial_state(D), kBos, 0.0);
    std::vector<Event> drawn;
    const bool by_count = std::holds_alternative<EventCount>(stop);
    const double T = by_count ? 0.0 : std::get<Horizon>(stop).T;
    const int want = by_count ? std::get<EventCount>(stop).count : 0;
    if (by_count && want < 1) throw std::invalid_argument("sample_prior: event count must be >= 1");
    if (!by_count && !(T > 0.0)) throw std::invalid_argument("sample_prior: horizon must be positive");

    double t = 0.0;
    double lstar = lambda_star(p, state);
    while (true) {
        t += rng.exponential(lstar);
        if (!by_count && t >= T) break;
        const double u = rng.uniform();
        const Vector lam = intensities(p, hidden_after(state, t - state.start_time));
        const double total = lam.sum();
        if (u * lstar > total) continue;
        double pick = rng.uniform() * total;
        int k = K;
        for (int kk = 0; kk < K; ++kk) {
            pick -= lam[kk];
            if (pick < 0.0) {
                k = kk + 1;
                break;
            }
        }
        drawn.push_back({k, t, true});
        if (by_count && static_cast<int>(drawn.size()) == want) break;
        state = step(p.lstm, state, k, t);
        lstar = lambda_star(p, state);
    }
    if (by_count) {
        const double horizon = drawn.back().time;
        drawn.pop_back();
        return make_sequence(horizon, K, std::move(drawn));
    }
    return make_sequence(T, K, std::move(drawn));
}

/// Weights ~ Unif[-scale, scale], zero biases, unit scales.
inline NHPParams init_params(int num_types, int hidden, Rng& rng, double scale = 0.1) {
    NHPParams p = NHPParams::zeros(num_types, hidden);
    for (auto* m : {&p.lstm.W, &p.lstm.U, &p.V})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-scale, scale);
    return p;
}

/// Ground-truth draw for synthetic data: every weight and bias ~ Unif[-1, 1];
/// scales ~ Unif(0, 1] since they must stay positive.
inline NHPParams random_ground_truth(int num_types, int hidden, Rng& rng) {
    NHPParams p = NHPParams::zeros(num_types, hidden);
    for (auto* m : {&p.lstm.W, &p.lstm.U, &p.V})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < p.lstm.b.size(); ++i) p.lstm.b[i] = rng.uniform(-1.0, 1.0);
    for (Eigen::Index k = 0; k < p.s.size(); ++k) p.s[k] = 1.0 - rng.uniform();
    return p;
}

}  // namespace nhps
