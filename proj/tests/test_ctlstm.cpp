#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace nhps;
using nhps::testing::ref_hidden;
using nhps::testing::ref_init;
using nhps::testing::ref_step;

namespace {

CTLSTMState state_of(double c, double cbar, double delta, double o = 0.5) {
    return {0.0, Vector::Constant(1, c), Vector::Constant(1, cbar), Vector::Constant(1, delta), Vector::Constant(1, o)};
}

CTLSTMParams random_lstm(int D, int inputs, Rng& rng, double scale = 1.0) {
    CTLSTMParams p = CTLSTMParams::zeros(D, inputs);
    for (auto* m : {&p.W, &p.U})
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-scale, scale);
    for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b[i] = rng.uniform(-scale, scale);
    return p;
}

}  // namespace

TEST(Decay, ZeroElapsedReturnsStartCell) {
    const auto s = state_of(0.7, -0.2, 3.0);
    EXPECT_EQ(decay(s, 0.0).cell[0], 0.7);
}

TEST(Decay, ApproachesTargetAsymptotically) {
    const auto s = state_of(1.0, 0.25, 1.0);
    EXPECT_NEAR(decay(s, 50.0).cell[0], 0.25, 1e-12);
}

TEST(Decay, HalfLifeClosedForm) {
    const auto s = state_of(1.0, 0.0, std::log(2.0));
    EXPECT_NEAR(decay(s, 1.0).cell[0], 0.5, 1e-15);
}

TEST(Decay, HiddenIsOutputTimesSquashedCell) {
    const auto s = state_of(0.3, -0.8, 0.9, 0.6);
    const double c = decay(s, 0.4).cell[0];
    EXPECT_NEAR(decay(s, 0.4).hidden[0], 0.6 * (2.0 * nhps::testing::logistic(2.0 * c) - 1.0), 1e-15);
}

TEST(Decay, BeforeIntervalStartThrows) {
    auto s = state_of(1.0, 0.0, 1.0);
    s.start_time = 2.0;
    EXPECT_THROW(decay(s, 1.5), std::invalid_argument);
}

TEST(Decay, MonotoneBetweenCellAndTarget) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = state_of(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.01, 5));
        const double lo = std::min(s.cell[0], s.target[0]), hi = std::max(s.cell[0], s.target[0]);
        double prev = s.cell[0];
        for (int j = 1; j <= 50; ++j) {
            const double c = decay(s, 0.1 * j).cell[0];
            EXPECT_GE(c, lo - 1e-15);
            EXPECT_LE(c, hi + 1e-15);
            EXPECT_LE(std::abs(c - s.target[0]), std::abs(prev - s.target[0]) + 1e-15);
            prev = c;
        }
    }
}

TEST(Step, ZeroParametersHalveTheDecayedCell) {
    const int D = 3;
    const auto p = CTLSTMParams::zeros(D, 4);
    CTLSTMState s{0.0, Vector::Constant(D, 0.8), Vector::Constant(D, 0.4), Vector::Constant(D, 1.0),
                  Vector::Constant(D, 0.5)};
    const double t = 0.7;
    const Vector ct = decay(s, t).cell;
    const auto n = step(p, s, 1, t);
    for (int d = 0; d < D; ++d) {
        EXPECT_DOUBLE_EQ(n.cell[d], 0.5 * ct[d]);   // f = 0.5, z = 0
        EXPECT_DOUBLE_EQ(n.target[d], 0.5 * 0.4);   // fbar = 0.5 times the previous target
        EXPECT_DOUBLE_EQ(n.output[d], 0.5);
        EXPECT_NEAR(n.decay[d], std::log(2.0), 1e-15);
    }
    EXPECT_EQ(n.start_time, t);
}

TEST(Step, OneHotInputSelectsAColumn) {
    Rng rng(5);
    const int D = 2, K2 = 5;
    CTLSTMParams p = CTLSTMParams::zeros(D, K2);
    for (Eigen::Index i = 0; i < p.W.size(); ++i) p.W.data()[i] = rng.uniform(-1, 1);
    const auto s0 = initial_state(D);  // c = 0 so h = 0 and only W contributes
    for (int k = 0; k < K2; ++k) {
        const auto n = step(p, s0, k, 0.0);
        for (int d = 0; d < D; ++d) {
            EXPECT_NEAR(n.output[d], nhps::testing::logistic(p.W(3 * D + d, k)), 1e-15);
            EXPECT_NEAR(n.decay[d], nhps::testing::softplus_ref(p.W(4 * D + d, k)), 1e-15);
        }
    }
}

TEST(Step, SameTimeStepsSeeUndecayedCell) {
    Rng rng(7);
    const auto p = random_lstm(3, 4, rng);
    const auto a = step(p, initial_state(3), 0, 0.0);
    const auto b = step(p, a, 1, 1.0);
    const auto c = step(p, b, 2, 1.0);
    EXPECT_EQ(decay(b, 1.0).cell, b.cell);
    const auto expect = ref_step(p, ref_step(p, ref_step(p, ref_init(3), 0, 0.0), 1, 1.0), 2, 1.0);
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(c.cell[d], expect.c[d], 1e-14);
}

TEST(Step, MatchesScalarReferenceOnRandomTrajectories) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const int D = 1 + static_cast<int>(rng.uniform_int(0, 4));
        const int inputs = 2 + static_cast<int>(rng.uniform_int(1, 3));
        const auto p = random_lstm(D, inputs, rng);
        auto s = initial_state(D);
        auto r = ref_init(D);
        double t = 0.0;
        for (int j = 0; j < 8; ++j) {
            const int k = static_cast<int>(rng.uniform_int(0, inputs - 1));
            s = step(p, s, k, t);
            r = ref_step(p, r, k, t);
            const double q = t + rng.uniform(0.0, 2.0);
            const Vector h = decay(s, q).hidden;
            const auto hr = ref_hidden(r, q);
            for (int d = 0; d < D; ++d) {
                EXPECT_NEAR(s.cell[d], r.c[d], 1e-13);
                EXPECT_NEAR(s.target[d], r.cbar[d], 1e-13);
                EXPECT_NEAR(s.decay[d], r.delta[d], 1e-13);
                EXPECT_NEAR(h[d], hr[d], 1e-13);
            }
            t += rng.uniform(0.0, 1.5);
        }
    }
}

TEST(Step, HiddenStaysInOpenUnitBox) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = random_lstm(4, 3, rng, 5.0);
        auto s = step(p, initial_state(4), 0, 0.0);
        for (int j = 0; j < 5; ++j) {
            const double t = s.start_time + rng.uniform(0.0, 3.0);
            const Vector h = decay(s, t).hidden;
            EXPECT_TRUE((h.array().abs() < 1.0).all());
            EXPECT_TRUE((s.decay.array() > 0.0).all());
            s = step(p, s, 1 + static_cast<int>(rng.uniform_int(0, 1)), t);
        }
    }
}

TEST(Step, Deterministic) {
    Rng rng(17);
    const auto p = random_lstm(3, 4, rng);
    const auto a = step(p, step(p, initial_state(3), 0, 0.0), 2, 0.37);
    const auto b = step(p, step(p, initial_state(3), 0, 0.0), 2, 0.37);
    EXPECT_EQ(a.cell, b.cell);
    EXPECT_EQ(a.target, b.target);
    EXPECT_EQ(a.decay, b.decay);
    EXPECT_EQ(a.output, b.output);
}

TEST(Step, UnknownTypeThrows) {
    const auto p = CTLSTMParams::zeros(2, 3);
    EXPECT_THROW(step(p, initial_state(2), 3, 0.0), std::out_of_range);
    EXPECT_THROW(step(p, initial_state(2), -1, 0.0), std::out_of_range);
}

TEST(Backward, MatchesFiniteDifferencesOfAQueryLoss) {
    Rng rng(19);
    const int D = 3, inputs = 4;
    const auto p = random_lstm(D, inputs, rng);
    std::vector<TrajectoryInput> in;
    double t = 0.0;
    for (int j = 0; j < 6; ++j) {
        const double dt = j == 0 ? 0.0 : rng.uniform(0.1, 1.0);
        t += dt;
        in.push_back({static_cast<int>(rng.uniform_int(0, inputs - 1)), dt, t});
    }
    std::vector<double> query(in.size());
    std::vector<Vector> coef(in.size());
    for (std::size_t j = 0; j < in.size(); ++j) {
        query[j] = rng.uniform(0.0, 1.0);
        coef[j] = Vector::Random(D);
    }
    auto loss = [&](const CTLSTMParams& q) {
        const auto tr = run_trajectory(q, initial_state(D), in);
        double L = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) L += coef[j].dot(hidden_after(tr.states[j + 1], query[j]));
        return L;
    };
    const auto tr = run_trajectory(p, initial_state(D), in);
    auto sg = zero_state_grads(tr, D);
    for (std::size_t j = 0; j < in.size(); ++j) accumulate_query_grad(tr.states[j + 1], query[j], coef[j], sg[j + 1]);
    CTLSTMParams g = CTLSTMParams::zeros(D, inputs);
    backward(p, tr, sg, g);

    const double h = 1e-5;
    double worst = 0.0;
    for (auto [analytic, target] : {std::pair{&g.W, 0}, std::pair{&g.U, 1}}) {
        for (Eigen::Index i = 0; i < analytic->size(); ++i) {
            CTLSTMParams a = p, b = p;
            (target == 0 ? a.W : a.U).data()[i] += h;
            (target == 0 ? b.W : b.U).data()[i] -= h;
            const double fd = (loss(a) - loss(b)) / (2 * h);
            const double an = analytic->data()[i];
            worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
        }
    }
    for (Eigen::Index i = 0; i < g.b.size(); ++i) {
        CTLSTMParams a = p, b = p;
        a.b[i] += h;
        b.b[i] -= h;
        const double fd = (loss(a) - loss(b)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g.b[i]) / std::max({std::abs(fd), std::abs(g.b[i]), 1e-3}));
    }
    EXPECT_LT(worst, 1e-6);
}
