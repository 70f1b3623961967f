#pragma once

#include "nhps/ctlstm.hpp"
#include "nhps/event.hpp"
#include "nhps/grid.hpp"
#include "nhps/math.hpp"
#include "nhps/missingness.hpp"
#include "nhps/nhp.hpp"
#include "nhps/rng.hpp"

#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace nhps {

/// Trainable part of the smoothing proposal: a right-to-left CTLSTM over observed
/// events and the D x D' matrix B mixing its hidden state into the model's.
struct ProposalParams {
    int num_types = 0;
    CTLSTMParams lstm;  ///< hidden D', K + 2 inputs
    Matrix B;           ///< D x D'

    int hidden() const noexcept { return lstm.hidden; }
    int model_hidden() const noexcept { return static_cast<int>(B.rows()); }

    static ProposalParams zeros(int num_types, int model_hidden, int hidden) {
        ProposalParams p;
        p.num_types = num_types;
        p.lstm = CTLSTMParams::zeros(hidden, num_types + 2);
        p.B = Matrix::Zero(model_hidden, hidden);
        return p;
    }

    ProposalParams zeros_like() const { return zeros(num_types, model_hidden(), hidden()); }

    friend bool operator==(const ProposalParams& a, const ProposalParams& b) {
        return a.num_types == b.num_types && a.lstm == b.lstm && a.B == b.B;
    }
};

template <class Params, class F>
    requires std::same_as<std::remove_const_t<Params>, ProposalParams>
void for_each_tensor(Params& p, F&& f) {
    f(std::string_view("lstm.W"), p.lstm.W);
    f(std::string_view("lstm.U"), p.lstm.U);
    f(std::string_view("lstm.b"), p.lstm.b);
    f(std::string_view("B"), p.B);
}

inline ProposalParams init_proposal(int num_types, int model_hidden, int hidden, Rng& rng, double scale = 0.1) {
    ProposalParams p = ProposalParams::zeros(num_types, model_hidden, hidden);
    for (auto* m : {&p.lstm.W, &p.lstm.U, &p.B})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-scale, scale);
    return p;
}

/// Right-to-left states over the observed events of x.
///
/// The encoder starts at T, reads EOS with zero elapsed time, then reads observed
/// events I, ..., 1. The state governing observed interval (t_i, t_{i+1}] is the one
/// after reading event i+1, and it decays by t_{i+1} - t at time t.
class ReverseTrajectory {
public:
    ReverseTrajectory() = default;
    ReverseTrajectory(std::vector<double> times, Trajectory tr) : times_(std::move(times)), tr_(std::move(tr)) {}

    /// Number of observed intervals, I + 1.
    std::size_t num_intervals() const noexcept { return times_.size() - 1; }
    const std::vector<double>& times() const noexcept { return times_; }
    const Trajectory& trajectory() const noexcept { return tr_; }

    /// Index into trajectory().states of the state for interval i.
    std::size_t state_index(std::size_t interval) const { return num_intervals() - interval; }
    const CTLSTMState& state_for_interval(std::size_t interval) const { return tr_.states[state_index(interval)]; }

    std::size_t interval_of(double t) const { return TimeGrid::interval_index(times_, t); }

    /// h_bar(t) for t in (0, T).
    Vector hidden(double t) const {
        const std::size_t i = interval_of(t);
        return hidden_after(state_for_interval(i), times_[i + 1] - t);
    }

    /// Elapsed reverse time at t within its interval.
    double elapsed(double t) const {
        const std::size_t i = interval_of(t);
        return times_[i + 1] - t;
    }

private:
    std::vector<double> times_;
    Trajectory tr_;
};

inline ReverseTrajectory build_reverse(const ProposalParams& p, const EventSequence& x) {
    const auto& ev = x.events();
    for (std::size_t i = 0; i < ev.size(); ++i)
        if (!ev[i].observed)
            throw std::invalid_argument("build_reverse: unobserved event at index " + std::to_string(i));
    if (ev.size() < 2) throw std::invalid_argument("build_reverse: missing boundaries");
    const double T = x.horizon();
    std::vector<TrajectoryInput> reads;
    reads.reserve(ev.size() - 1);
    reads.push_back({ev.back().type, 0.0, T});
    for (std::size_t j = ev.size() - 2; j >= 1; --j) reads.push_back({ev[j].type, ev[j + 1].time - ev[j].time, ev[j].time});
    std::vector<double> times;
    times.reserve(ev.size());
    for (const Event& e : ev) times.push_back(e.time);
    return {std::move(times), run_trajectory(p.lstm, initial_state(p.hidden(), T), reads)};
}

/// rho_k f_k(v_k . (h + B h_bar)); exactly zero when rho_k = 0.
inline double proposal_intensity(const NHPParams& model, const ProposalParams& phi, const Vector& h,
                                 const Vector& hbar, int k, double rho_k) {
    check_type(model, k);
    if (rho_k == 0.0) return 0.0;
    const Vector mixed = h + phi.B * hbar;
    return rho_k * scaled_softplus(model.V.row(k - 1).dot(mixed), model.s[k - 1]);
}

/// The proposal q(z | x): filtering when no ProposalParams are attached (lambda^q =
/// rho_k lambda^p), smoothing otherwise.
class Proposal {
public:
    static Proposal filtering(const NHPParams& model, const MissingnessMechanism& mech) {
        return Proposal(model, nullptr, mech);
    }
    static Proposal smoothing(const NHPParams& model, const ProposalParams& phi, const MissingnessMechanism& mech) {
        return Proposal(model, &phi, mech);
    }

    bool smooth() const noexcept { return phi_ != nullptr; }
    const NHPParams& model() const noexcept { return *model_; }
    const ProposalParams& params() const { return *phi_; }
    const MissingnessMechanism& mechanism() const noexcept { return *mech_; }
    double rho(int k) const { return mech_->rho(k); }

    /// K x D' matrix whose row k is u_k = B^T v_k.
    const Matrix& mixed_rows() const noexcept { return VB_; }

    /// Per-type proposal intensities given the left hidden vector and the reverse term
    /// VB h_bar (empty when filtering).
    Vector intensities(const Vector& h, const Vector& reverse_term) const {
        Vector x = model_->V * h;
        if (reverse_term.size()) x += reverse_term;
        for (int k = 0; k < x.size(); ++k) {
            const double r = mech_->rho(k + 1);
            x[k] = r == 0.0 ? 0.0 : r * scaled_softplus(x[k], model_->s[k]);
        }
        return x;
    }

    /// Upper bound on sum_k lambda^q_k over the interval of `left`, within the reverse
    /// state's interval when smoothing.
    double lambda_star(const CTLSTMState& left, const CTLSTMState* right) const {
        double total = 0.0;
        for (int k = 0; k < model_->num_types; ++k) {
            const double r = mech_->rho(k + 1);
            if (r == 0.0) continue;
            double a = bound_linear_term(model_->V.row(k).transpose(), left);
            if (right) a += bound_linear_term(VB_.row(k).transpose(), *right);
            total += r * scaled_softplus(a, model_->s[k]);
        }
        return total;
    }

private:
    Proposal(const NHPParams& model, const ProposalParams* phi, const MissingnessMechanism& mech)
        : model_(&model), phi_(phi), mech_(&mech) {
        if (mech.num_types() != model.num_types)
            throw std::invalid_argument("proposal: mechanism K does not match model K");
        if (phi) {
            if (phi->num_types != model.num_types || phi->model_hidden() != model.hidden())
                throw std::invalid_argument("proposal: parameter shapes do not match the model");
            VB_ = model.V * phi->B;
        }
    }

    const NHPParams* model_;
    const ProposalParams* phi_;
    const MissingnessMechanism* mech_;
    Matrix VB_;
};

namespace detail {

/// log q(z | x) on the grid; gradient with respect to the proposal parameters added
/// into `grad` when non-null (smoothing only). The model is held fixed.
inline double log_q_impl(const Proposal& q, const EventSequence& x, const std::vector<Event>& z, const TimeGrid& grid,
                         ProposalParams* grad) {
    const NHPParams& model = q.model();
    const int K = model.num_types;
    for (const Event& e : z) {
        check_type(model, e.type);
        if (q.rho(e.type) == 0.0) return kLogZero;
    }
    const EventSequence merged = merge(x, z, {.allow_equal_times = true});
    const auto& ev = merged.events();

    ReverseTrajectory rev;
    std::vector<StateGrad> rsg;
    if (q.smooth()) {
        rev = build_reverse(q.params(), x);
        if (grad) rsg = zero_state_grads(rev.trajectory(), q.params().hidden());
    }
    const Matrix& VB = q.mixed_rows();

    CTLSTMState left = initial_state(model.hidden());
    left = step(model.lstm, left, kBos, 0.0);

    auto eval = [&](double t, double elapsed_left, double coef_log, double coef_int, int k_event) {
        // coef_log: weight on log lambda^q_{k_event}; coef_int: weight on -sum_k lambda^q_k.
        const Vector h = hidden_after(left, elapsed_left);
        Vector x_lin = model.V * h;
        Vector hbar;
        std::size_t ri = 0;
        double rel = 0.0;
        if (q.smooth()) {
            ri = rev.interval_of(t);
            rel = rev.times()[ri + 1] - t;
            hbar = hidden_after(rev.state_for_interval(ri), rel);
            x_lin += VB * hbar;
        }
        double val = 0.0;
        Vector gx = grad ? Vector::Zero(K) : Vector();
        if (k_event > 0) {
            const int k = k_event - 1;
            const double sk = model.s[k];
            const double lam = q.rho(k_event) * scaled_softplus(x_lin[k], sk);
            val += coef_log * std::log(lam);
            if (grad) gx[k] += coef_log * sigmoid(x_lin[k] / sk) / (sk * softplus(x_lin[k] / sk));
        }
        if (coef_int != 0.0) {
            for (int k = 0; k < K; ++k) {
                const double r = q.rho(k + 1);
                if (r == 0.0) continue;
                const double sk = model.s[k];
                val -= coef_int * r * scaled_softplus(x_lin[k], sk);
                if (grad) gx[k] -= coef_int * r * sigmoid(x_lin[k] / sk);
            }
        }
        if (grad && q.smooth()) {
            grad->B.noalias() += model.V.transpose() * gx * hbar.transpose();
            const Vector gh = VB.transpose() * gx;
            accumulate_query_grad(rev.state_for_interval(ri), rel, gh, rsg[rev.state_index(ri)]);
        }
        return val;
    };

    double lq = 0.0;
    for (std::size_t l = 1; l < ev.size(); ++l) {
        const double t0 = ev[l - 1].time;
        const auto [g0, g1] = grid.range(t0, ev[l].time);
        for (std::size_t g = g0; g < g1; ++g) {
            const double t = grid.points()[g];
            lq += eval(t, t - t0, 0.0, grid.weights()[g], 0);
        }
        if (l + 1 == ev.size()) break;
        const Event& e = ev[l];
        if (!e.observed) lq += eval(e.time, e.time - t0, 1.0, 0.0, e.type);
        left = step(model.lstm, left, e.type, e.time);
    }
    if (grad && q.smooth()) backward(q.params().lstm, rev.trajectory(), rsg, grad->lstm);
    return lq;
}

}  // namespace detail

/// Sum over z of log lambda^q minus the grid estimate of the integral of sum_k lambda^q_k
/// over [0, T). Observed events advance the left-to-right state only. A z event of a type
/// with rho_k = 0 gives kLogZero.
inline double log_q(const Proposal& q, const EventSequence& x, const std::vector<Event>& z, const TimeGrid& grid) {
    return detail::log_q_impl(q, x, z, grid, nullptr);
}

/// log q and its gradient with respect to the proposal parameters.
inline double log_q_with_grad(const Proposal& q, const EventSequence& x, const std::vector<Event>& z,
                              const TimeGrid& grid, ProposalParams& grad) {
    if (!q.smooth()) throw std::invalid_argument("log_q_with_grad: filtering proposal has no parameters");
    return detail::log_q_impl(q, x, z, grid, &grad);
}

}  // namespace nhps
