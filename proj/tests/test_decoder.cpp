#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace nhps;

namespace {

const CostConfig kUnit = CostConfig::symmetric(1.0);

DecodeState aligned_state(std::vector<std::vector<double>> ps, std::vector<double> w, std::vector<double> decode,
                          CostConfig c = kUnit) {
    DecodeState s(std::move(ps), std::move(w), c);
    s.decode = std::move(decode);
    align_phase(s);
    return s;
}

/// Distance of the tracked alignments, recomputed from scratch.
std::vector<double> recomputed(const DecodeState& s) {
    std::vector<double> out(s.size());
    for (std::size_t m = 0; m < s.size(); ++m) {
        double d = 0.0;
        std::size_t aligned = 0;
        for (std::size_t j = 0; j < s.decode.size(); ++j) {
            if (s.match[m][j] < 0) continue;
            d += std::abs(s.decode[j] - s.particles[m][static_cast<std::size_t>(s.match[m][j])]);
            ++aligned;
        }
        d += s.cost.c_delete * static_cast<double>(s.decode.size() - aligned);
        d += s.cost.c_insert * static_cast<double>(s.particles[m].size() - aligned);
        out[m] = d;
    }
    return out;
}

std::vector<Event> as_events(int k, const std::vector<double>& ts) {
    std::vector<Event> out;
    for (double t : ts) out.push_back({k, t, false});
    return out;
}

std::vector<std::vector<double>> random_particles(int M, int max_len, Rng& rng) {
    std::vector<std::vector<double>> ps(static_cast<std::size_t>(M));
    for (auto& p : ps) {
        const int n = static_cast<int>(rng.uniform_int(0, max_len));
        for (int j = 0; j < n; ++j) p.push_back(std::round(rng.uniform(0.0, 4.0) * 1000.0) / 1000.0);
        std::sort(p.begin(), p.end());
    }
    return ps;
}

std::vector<double> random_weights(int M, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(M));
    double s = 0.0;
    for (auto& v : w) s += v = rng.uniform(0.05, 1.0);
    for (auto& v : w) v /= s;
    return w;
}

double risk_of(const std::vector<double>& decode, const std::vector<std::vector<double>>& ps,
               const std::vector<double>& w, const CostConfig& c) {
    double r = 0.0;
    for (std::size_t m = 0; m < ps.size(); ++m) r += w[m] * align_times(decode, ps[m], c).distance;
    return r;
}

}  // namespace

TEST(Decode, SingleParticleIsItsOwnDecode) {
    const auto z = as_events(1, {0.5, 1.7, 3.2});
    const auto d = consensus_decode({z}, {1.0}, kUnit);
    EXPECT_EQ(d, z);
    EXPECT_EQ(bayes_risk(d, {z}, {1.0}, kUnit), 0.0);
}

TEST(Decode, IdenticalParticlesGiveTheCommonValue) {
    std::vector<Event> z = as_events(1, {0.5, 2.0});
    z.push_back({2, 2.5, false});
    const std::vector<std::vector<Event>> ps(5, z);
    EXPECT_EQ(consensus_decode(ps, std::vector<double>(5, 0.2), kUnit), z);
}

TEST(Decode, EmptyEnsembleThrows) {
    EXPECT_THROW(consensus_decode(std::vector<std::vector<Event>>{}, {}, kUnit), std::invalid_argument);
}

TEST(Move, EqualWeightsEqualCostStaysPut) {
    auto s = aligned_state({{1.0}, {3.0}}, {0.5, 0.5}, {3.0});
    move_phase(s);
    EXPECT_EQ(s.decode, std::vector<double>{3.0});
}

TEST(Move, HeavierParticlePullsTheEvent) {
    auto s = aligned_state({{1.0}, {3.0}}, {0.9, 0.1}, {3.0});
    move_phase(s);
    EXPECT_EQ(s.decode, std::vector<double>{1.0});
    EXPECT_NEAR(s.risk(), 0.1 * 2.0, 1e-15);
}

TEST(Move, NoAlignedEventsIsANoOp) {
    auto s = aligned_state({{9.0}, {}}, {0.5, 0.5}, {1.0});
    move_phase(s);
    EXPECT_EQ(s.decode, std::vector<double>{1.0});
}

TEST(Delete, CloseAlignedEventIsKept) {
    auto s = aligned_state({{1.5}, {1.5}}, {0.5, 0.5}, {1.0});
    delete_phase(s);
    EXPECT_EQ(s.decode.size(), 1u);
}

TEST(Delete, FarAlignedEventIsDeleted) {
    // Forced edge at distance 3: removing it trades 3 of movement for C_insert = 1.
    DecodeState s({{4.0}, {4.0}}, {0.5, 0.5}, kUnit);
    s.decode = {1.0};
    s.match = {{0}, {0}};
    s.dist = {3.0, 3.0};
    delete_phase(s);
    EXPECT_TRUE(s.decode.empty());
    EXPECT_NEAR(s.risk(), 1.0, 1e-15);
}

TEST(Delete, PerfectlyAlignedIsKeptUnalignedIsDropped) {
    auto s = aligned_state({{1.0, 2.0}, {1.0}}, {0.5, 0.5}, {1.0, 7.0});
    delete_phase(s);
    EXPECT_EQ(s.decode, std::vector<double>{1.0});
}

TEST(Insert, SharedEventIsInserted) {
    auto s = aligned_state({{2.0}, {2.0, 3.0}}, {0.5, 0.5}, {});
    const double before = s.risk();
    insert_phase(s);
    ASSERT_FALSE(s.decode.empty());
    EXPECT_EQ(s.decode.front(), 2.0);
    EXPECT_LT(s.risk(), before);
}

TEST(Insert, CoveredUnionIsANoOp) {
    auto s = aligned_state({{1.0}, {1.0, 2.0}}, {0.5, 0.5}, {1.0, 2.0});
    insert_phase(s);
    EXPECT_EQ(s.decode, (std::vector<double>{1.0, 2.0}));
}

TEST(Insert, CandidateThatOnlyAddsChargesIsRejected) {
    // The only particle event is already aligned, so inserting it again costs C_delete.
    auto s = aligned_state({{1.0}, {1.0}}, {0.5, 0.5}, {1.2});
    insert_phase(s);
    EXPECT_EQ(s.decode, std::vector<double>{1.2});
}

TEST(Phases, TrackedDistancesStayExactAndRiskNeverRises) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int M = 1 + static_cast<int>(rng.uniform_int(0, 5));
        DecodeState s(random_particles(M, 5, rng), random_weights(M, rng), CostConfig::symmetric(rng.uniform(0.2, 2.0)));
        init_from_best(s);
        for (int cycle = 0; cycle < 3; ++cycle) {
            align_phase(s);
            double prev = s.risk();
            for (auto phase : {move_phase, delete_phase, insert_phase}) {
                phase(s);
                const auto d = recomputed(s);
                for (std::size_t m = 0; m < s.size(); ++m) EXPECT_NEAR(s.dist[m], d[m], 1e-9);
                EXPECT_LE(s.risk(), prev + 1e-12);
                prev = s.risk();
            }
        }
    }
}

TEST(Decode, TrackedRiskBoundsTheBayesRisk) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int M = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const auto ps = random_particles(M, 5, rng);
        const auto w = random_weights(M, rng);
        double tracked = 0.0;
        const auto d = decode_type(ps, w, kUnit, &tracked);
        EXPECT_LE(risk_of(d, ps, w, kUnit), tracked + 1e-9);
        const auto best = std::max_element(w.begin(), w.end()) - w.begin();
        EXPECT_LE(tracked, risk_of(ps[static_cast<std::size_t>(best)], ps, w, kUnit) + 1e-9);
    }
}

TEST(Decode, NoBetterThanTheBestSubsetOfTheUnion) {
    Rng rng(3);
    int matched = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        const int M = 1 + static_cast<int>(rng.uniform_int(0, 2));
        auto ps = random_particles(M, 3, rng);
        const auto w = random_weights(M, rng);
        std::vector<double> u;
        for (const auto& p : ps) u.insert(u.end(), p.begin(), p.end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        double best = std::numeric_limits<double>::infinity();
        for (unsigned mask = 0; mask < (1u << u.size()); ++mask) {
            std::vector<double> sub;
            for (std::size_t j = 0; j < u.size(); ++j)
                if (mask >> j & 1u) sub.push_back(u[j]);
            best = std::min(best, risk_of(sub, ps, w, kUnit));
        }
        const double got = risk_of(decode_type(ps, w, kUnit), ps, w, kUnit);
        EXPECT_GE(got, best - 1e-12);
        matched += got <= best + 1e-9;
    }
    EXPECT_GE(matched, 80);
}

TEST(Decode, TypesDecodeIndependently) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const int M = 2 + static_cast<int>(rng.uniform_int(0, 3));
        const auto a = random_particles(M, 4, rng), b = random_particles(M, 4, rng);
        const auto w = random_weights(M, rng);
        std::vector<std::vector<Event>> joint(static_cast<std::size_t>(M));
        for (int m = 0; m < M; ++m) {
            for (double t : a[m]) joint[m].push_back({1, t, false});
            for (double t : b[m]) joint[m].push_back({2, t, false});
        }
        std::vector<double> ta, tb;
        for (const Event& e : consensus_decode(joint, w, kUnit)) (e.type == 1 ? ta : tb).push_back(e.time);
        EXPECT_EQ(ta, decode_type(a, w, kUnit));
        EXPECT_EQ(tb, decode_type(b, w, kUnit));
    }
}

TEST(Decode, LargerCostInsertsAndDeletesLess) {
    // Particles are noisy copies of a reference: events dropped, jittered, or added.
    // Summed over instances so that single-instance ties of the heuristic do not matter.
    Rng rng(5);
    const std::vector<double> costs{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<double> edits(costs.size(), 0.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ref = random_particles(1, 6, rng)[0];
        const int M = 5 + static_cast<int>(rng.uniform_int(0, 15));
        std::vector<std::vector<double>> ps(static_cast<std::size_t>(M));
        for (auto& p : ps) {
            for (double t : ref)
                if (rng.bernoulli(0.7)) p.push_back(t + rng.uniform(-0.3, 0.3));
            if (rng.bernoulli(0.3)) p.push_back(rng.uniform(0.0, 4.0));
            std::sort(p.begin(), p.end());
        }
        const auto w = random_weights(M, rng);
        for (std::size_t c = 0; c < costs.size(); ++c) {
            const CostConfig cc = CostConfig::symmetric(costs[c]);
            edits[c] += static_cast<double>(
                otd_breakdown(as_events(1, decode_type(ps, w, cc)), as_events(1, ref), cc).unaligned);
        }
    }
    for (std::size_t c = 1; c < costs.size(); ++c) EXPECT_LE(edits[c], edits[c - 1]) << costs[c];
}
