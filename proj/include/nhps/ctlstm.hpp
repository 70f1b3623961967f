#pragma once

#include "nhps/math.hpp"

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhps {

/// Gate banks of the continuous-time LSTM, stacked in this order (D rows each) in
/// CTLSTMParams::W, U and b. The two target banks drive the asymptotic cell.
enum class Gate : int { input = 0, forget, cell, output, decay, target_input, target_forget };
inline constexpr int kNumGates = 7;
inline constexpr std::array<const char*, kNumGates> kGateNames = {"i", "f", "z", "o", "d", "ibar", "fbar"};

struct CTLSTMParams {
    int hidden = 0;      ///< D
    int num_inputs = 0;  ///< K + 2 embedding rows (boundaries included)
    Matrix W;            ///< 7D x (K+2)
    Matrix U;            ///< 7D x D
    Vector b;            ///< 7D

    static CTLSTMParams zeros(int hidden, int num_inputs) {
        if (hidden < 1) throw std::invalid_argument("CTLSTM hidden size must be >= 1");
        CTLSTMParams p;
        p.hidden = hidden;
        p.num_inputs = num_inputs;
        p.W = Matrix::Zero(kNumGates * hidden, num_inputs);
        p.U = Matrix::Zero(kNumGates * hidden, hidden);
        p.b = Vector::Zero(kNumGates * hidden);
        return p;
    }

    auto W_gate(Gate g) { return W.middleRows(static_cast<int>(g) * hidden, hidden); }
    auto W_gate(Gate g) const { return W.middleRows(static_cast<int>(g) * hidden, hidden); }
    auto U_gate(Gate g) { return U.middleRows(static_cast<int>(g) * hidden, hidden); }
    auto U_gate(Gate g) const { return U.middleRows(static_cast<int>(g) * hidden, hidden); }
    auto b_gate(Gate g) { return b.segment(static_cast<int>(g) * hidden, hidden); }
    auto b_gate(Gate g) const { return b.segment(static_cast<int>(g) * hidden, hidden); }

    bool all_finite() const { return W.allFinite() && U.allFinite() && b.allFinite(); }

    friend bool operator==(const CTLSTMParams& a, const CTLSTMParams& b) {
        return a.hidden == b.hidden && a.num_inputs == b.num_inputs && a.W == b.W && a.U == b.U && a.b == b.b;
    }
};

/// State on the interval that starts at the most recently read event. The cell moves
/// from `cell` toward `target` at rate `decay` as the elapsed time grows.
struct CTLSTMState {
    double start_time = 0.0;
    Vector cell;
    Vector target;
    Vector decay;   ///< > 0 elementwise
    Vector output;  ///< in (0, 1)
};

/// State before the first (boundary) event is read: c = c_bar = 0, delta = 1, o = 0.5.
inline CTLSTMState initial_state(int hidden, double start_time = 0.0) {
    return {start_time, Vector::Zero(hidden), Vector::Zero(hidden), Vector::Ones(hidden),
            Vector::Constant(hidden, 0.5)};
}

struct DecayedState {
    Vector cell;
    Vector hidden;
};

/// Cell and hidden vector after `elapsed` time units (negative elapsed clamps to 0).
inline DecayedState decay_by(const CTLSTMState& s, double elapsed) {
    const double dt = std::max(elapsed, 0.0);
    Vector e = (-s.decay.array() * dt).exp().matrix();
    Vector c = (s.target.array() + (s.cell - s.target).array() * e.array()).matrix();
    Vector h = (s.output.array() * c.array().tanh()).matrix();
    return {std::move(c), std::move(h)};
}

inline Vector hidden_after(const CTLSTMState& s, double elapsed) { return decay_by(s, elapsed).hidden; }

/// Left-to-right decay to absolute time t >= start_time.
inline DecayedState decay(const CTLSTMState& s, double t) {
    if (t < s.start_time)
        throw std::invalid_argument("decay: t=" + std::to_string(t) + " precedes interval start " +
                                    std::to_string(s.start_time));
    return decay_by(s, t - s.start_time);
}

/// Quantities of one update kept for the backward pass.
struct StepRecord {
    int type = 0;
    double elapsed = 0.0;
    Vector decay_factor;  ///< exp(-delta_prev * elapsed)
    Vector cell_before;   ///< c(t_i) of the previous interval
    Vector tanh_cell;     ///< tanh(c(t_i))
    Vector hidden;        ///< h(t_i) fed to the recurrence
    Vector gates;         ///< 7D activated gates: sigma / 2sigma-1 / softplus per bank
    Vector decay_slope;   ///< sigma(a_d), derivative of the softplus decay
};

namespace detail {

inline CTLSTMState step_impl(const CTLSTMParams& p, const CTLSTMState& prev, int type, double elapsed,
                             double new_start, StepRecord* rec) {
    if (type < 0 || type >= p.num_inputs)
        throw std::out_of_range("CTLSTM step: event type " + std::to_string(type) + " outside embedding");
    const int D = p.hidden;
    const double dt = std::max(elapsed, 0.0);
    Vector e = (-prev.decay.array() * dt).exp().matrix();
    Vector ct = (prev.target.array() + (prev.cell - prev.target).array() * e.array()).matrix();
    Vector tct = ct.array().tanh().matrix();
    Vector h = (prev.output.array() * tct.array()).matrix();

    Vector a = p.W.col(type) + p.U * h + p.b;
    Vector g(kNumGates * D);
    for (int j = 0; j < kNumGates * D; ++j) {
        const int bank = j / D;
        if (bank == static_cast<int>(Gate::cell))
            g[j] = 2.0 * sigmoid(a[j]) - 1.0;
        else if (bank == static_cast<int>(Gate::decay))
            g[j] = softplus(a[j]);
        else
            g[j] = sigmoid(a[j]);
    }
    auto gi = g.segment(0, D), gf = g.segment(D, D), gz = g.segment(2 * D, D), go = g.segment(3 * D, D),
         gd = g.segment(4 * D, D), gib = g.segment(5 * D, D), gfb = g.segment(6 * D, D);

    CTLSTMState next;
    next.start_time = new_start;
    next.cell = (gf.array() * ct.array() + gi.array() * gz.array()).matrix();
    next.target = (gfb.array() * prev.target.array() + gib.array() * gz.array()).matrix();
    next.decay = gd;
    next.output = go;

    if (rec) {
        rec->type = type;
        rec->elapsed = dt;
        rec->decay_factor = std::move(e);
        rec->cell_before = std::move(ct);
        rec->tanh_cell = std::move(tct);
        rec->hidden = std::move(h);
        rec->decay_slope = a.segment(4 * D, D).unaryExpr([](double v) { return sigmoid(v); });
        rec->gates = std::move(g);
    }
    return next;
}

}  // namespace detail

/// Reads event `type` at absolute time t (left to right).
inline CTLSTMState step(const CTLSTMParams& p, const CTLSTMState& s, int type, double t) {
    if (t < s.start_time)
        throw std::invalid_argument("step: event at t=" + std::to_string(t) + " precedes state start");
    return detail::step_impl(p, s, type, t - s.start_time, t, nullptr);
}

/// Reads an event after `elapsed` units of decay; `new_start` is the stamp of the result.
/// Used by the right-to-left encoder, where time runs backwards.
inline CTLSTMState step_elapsed(const CTLSTMParams& p, const CTLSTMState& s, int type, double elapsed,
                                double new_start) {
    return detail::step_impl(p, s, type, elapsed, new_start, nullptr);
}

/// One read in a recorded trajectory.
struct TrajectoryInput {
    int type;
    double elapsed;
    double time;
};

/// States and caches of a sequence of reads. states[0] is the initial state and
/// states[j + 1] the state after the j-th read.
struct Trajectory {
    std::vector<CTLSTMState> states;
    std::vector<StepRecord> steps;
};

inline Trajectory run_trajectory(const CTLSTMParams& p, CTLSTMState init, const std::vector<TrajectoryInput>& in) {
    Trajectory tr;
    tr.states.reserve(in.size() + 1);
    tr.steps.resize(in.size());
    tr.states.push_back(std::move(init));
    for (std::size_t j = 0; j < in.size(); ++j)
        tr.states.push_back(detail::step_impl(p, tr.states.back(), in[j].type, in[j].elapsed, in[j].time, &tr.steps[j]));
    return tr;
}

/// Upstream gradient with respect to one state's fields.
struct StateGrad {
    Vector cell, target, decay, output;

    static StateGrad zeros(int D) { return {Vector::Zero(D), Vector::Zero(D), Vector::Zero(D), Vector::Zero(D)}; }
};

inline std::vector<StateGrad> zero_state_grads(const Trajectory& tr, int D) {
    return std::vector<StateGrad>(tr.states.size(), StateGrad::zeros(D));
}

/// Adds d(loss)/d(state) given d(loss)/dh for h = hidden_after(s, elapsed).
inline void accumulate_query_grad(const CTLSTMState& s, double elapsed, const Vector& grad_h, StateGrad& g) {
    const double dt = std::max(elapsed, 0.0);
    const Eigen::ArrayXd e = (-s.decay.array() * dt).exp();
    const Eigen::ArrayXd c = s.target.array() + (s.cell - s.target).array() * e;
    const Eigen::ArrayXd tc = c.tanh();
    const Eigen::ArrayXd gc = grad_h.array() * s.output.array() * (1.0 - tc * tc);
    g.output.array() += grad_h.array() * tc;
    g.cell.array() += gc * e;
    g.target.array() += gc * (1.0 - e);
    g.decay.array() += gc * (-dt) * (s.cell - s.target).array() * e;
}

/// Backpropagation through the recorded reads; adds parameter gradients into `grad`.
/// `sg` is consumed (gradients are pushed from later states into earlier ones).
inline void backward(const CTLSTMParams& p, const Trajectory& tr, std::vector<StateGrad>& sg, CTLSTMParams& grad) {
    const int D = p.hidden;
    for (std::size_t jj = tr.steps.size(); jj-- > 0;) {
        const StepRecord& r = tr.steps[jj];
        const CTLSTMState& prev = tr.states[jj];
        const StateGrad& G = sg[jj + 1];
        const auto& g = r.gates;
        const Eigen::ArrayXd gi = g.segment(0, D), gf = g.segment(D, D), gz = g.segment(2 * D, D),
                             go = g.segment(3 * D, D), gib = g.segment(5 * D, D), gfb = g.segment(6 * D, D);
        const Eigen::ArrayXd gc = G.cell.array(), gt = G.target.array();

        Vector ga(kNumGates * D);
        ga.segment(0, D) = (gc * gz * gi * (1.0 - gi)).matrix();
        ga.segment(D, D) = (gc * r.cell_before.array() * gf * (1.0 - gf)).matrix();
        const Eigen::ArrayXd dz = gc * gi + gt * gib;
        ga.segment(2 * D, D) = (dz * 0.5 * (1.0 + gz) * (1.0 - gz)).matrix();
        ga.segment(3 * D, D) = (G.output.array() * go * (1.0 - go)).matrix();
        ga.segment(4 * D, D) = (G.decay.array() * r.decay_slope.array()).matrix();
        ga.segment(5 * D, D) = (gt * gz * gib * (1.0 - gib)).matrix();
        ga.segment(6 * D, D) = (gt * prev.target.array() * gfb * (1.0 - gfb)).matrix();

        grad.W.col(r.type) += ga;
        grad.b += ga;
        grad.U.noalias() += ga * r.hidden.transpose();

        if (jj == 0) continue;  // the initial state is constant
        StateGrad& P = sg[jj];
        const Vector gh = p.U.transpose() * ga;
        const Eigen::ArrayXd tc = r.tanh_cell.array();
        const Eigen::ArrayXd gct = gc * gf + gh.array() * prev.output.array() * (1.0 - tc * tc);
        P.output.array() += gh.array() * tc;
        P.target.array() += gt * gfb;
        const Eigen::ArrayXd e = r.decay_factor.array();
        P.cell.array() += gct * e;
        P.target.array() += gct * (1.0 - e);
        P.decay.array() += gct * (-r.elapsed) * (prev.cell - prev.target).array() * e;
    }
}

}  // namespace nhps
