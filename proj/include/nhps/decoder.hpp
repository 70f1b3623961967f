#pragma once

#include "nhps/event.hpp"
#include "nhps/otd.hpp"
#include "nhps/smc.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

namespace nhps {

/// Working state of the single-type decoder: the decode, the particles' times, and
/// for each particle its alignment to the decode and tracked distance d_m.
struct DecodeState {
    std::vector<double> decode;
    std::vector<std::vector<double>> particles;  ///< sorted times per particle
    std::vector<double> weights;
    std::vector<std::vector<int>> match;  ///< match[m][j]: index in particles[m] aligned to decode[j], or -1
    std::vector<double> dist;
    CostConfig cost;

    DecodeState(std::vector<std::vector<double>> ps, std::vector<double> w, CostConfig c)
        : particles(std::move(ps)), weights(std::move(w)), cost(c) {
        if (particles.empty()) throw std::invalid_argument("decode: empty ensemble");
        if (weights.size() != particles.size()) throw std::invalid_argument("decode: weight count mismatch");
        for (auto& p : particles) std::sort(p.begin(), p.end());
        match.assign(particles.size(), {});
        dist.assign(particles.size(), 0.0);
    }

    std::size_t size() const noexcept { return particles.size(); }

    double risk() const {
        double r = 0.0;
        for (std::size_t m = 0; m < size(); ++m) r += weights[m] * dist[m];
        return r;
    }
    double risk(const std::vector<double>& d) const {
        double r = 0.0;
        for (std::size_t m = 0; m < size(); ++m) r += weights[m] * d[m];
        return r;
    }

    bool contains(double t) const { return std::find(decode.begin(), decode.end(), t) != decode.end(); }
};

/// Highest-weight particle (first on ties).
inline void init_from_best(DecodeState& s) {
    const auto best = std::max_element(s.weights.begin(), s.weights.end()) - s.weights.begin();
    s.decode = s.particles[static_cast<std::size_t>(best)];
}

/// Re-aligns every particle to the (sorted) decode with the edit DP.
inline void align_phase(DecodeState& s) {
    std::sort(s.decode.begin(), s.decode.end());
    for (std::size_t m = 0; m < s.size(); ++m) {
        const TypeAlignment a = align_times(s.decode, s.particles[m], s.cost);
        s.match[m].assign(s.decode.size(), -1);
        for (const auto& [i, j] : a.pairs) s.match[m][i] = static_cast<int>(j);
        s.dist[m] = a.distance;
    }
}

/// Each decode event may move to a particle time aligned to it when that strictly
/// lowers the risk; candidates are scanned in increasing time and edges are kept.
inline void move_phase(DecodeState& s) {
    std::vector<double> d(s.size());
    for (std::size_t j = 0; j < s.decode.size(); ++j) {
        std::vector<double> cand;
        for (std::size_t m = 0; m < s.size(); ++m)
            if (s.match[m][j] >= 0) cand.push_back(s.particles[m][static_cast<std::size_t>(s.match[m][j])]);
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        for (double tp : cand) {
            const double t = s.decode[j];
            if (tp == t || s.contains(tp)) continue;
            for (std::size_t m = 0; m < s.size(); ++m) {
                d[m] = s.dist[m];
                if (s.match[m][j] < 0) continue;
                const double tpp = s.particles[m][static_cast<std::size_t>(s.match[m][j])];
                d[m] += std::abs(tpp - tp) - std::abs(tpp - t);
            }
            if (s.risk(d) < s.risk()) {
                s.dist = d;
                s.decode[j] = tp;
            }
        }
    }
}

/// Each decode event is dropped when that strictly lowers the full weighted sum.
inline void delete_phase(DecodeState& s) {
    std::vector<double> d(s.size());
    std::size_t j = 0;
    while (j < s.decode.size()) {
        const double t = s.decode[j];
        for (std::size_t m = 0; m < s.size(); ++m) {
            const int a = s.match[m][j];
            d[m] = a >= 0 ? s.dist[m] + s.cost.c_insert - std::abs(s.particles[m][static_cast<std::size_t>(a)] - t)
                          : s.dist[m] - s.cost.c_delete;
        }
        if (s.risk(d) < s.risk()) {
            s.dist = d;
            s.decode.erase(s.decode.begin() + static_cast<std::ptrdiff_t>(j));
            for (auto& row : s.match) row.erase(row.begin() + static_cast<std::ptrdiff_t>(j));
        } else {
            ++j;
        }
    }
}

/// Greedily inserts the union time with the largest positive risk reduction, aligning
/// it in each particle to the closest unaligned event when that is within
/// c_insert + c_delete; repeats until no insertion helps.
inline void insert_phase(DecodeState& s) {
    std::vector<double> all;
    for (const auto& p : s.particles) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<double> d(s.size()), best_d(s.size());
    std::vector<int> link(s.size()), best_link(s.size());
    while (true) {
        double best_gain = -std::numeric_limits<double>::infinity();
        double best_t = 0.0;
        for (double tc : all) {
            if (s.contains(tc)) continue;
            for (std::size_t m = 0; m < s.size(); ++m) {
                std::vector<char> used(s.particles[m].size(), 0);
                for (int a : s.match[m])
                    if (a >= 0) used[static_cast<std::size_t>(a)] = 1;
                int closest = -1;
                double gap = std::numeric_limits<double>::infinity();
                for (std::size_t e = 0; e < used.size(); ++e) {
                    if (used[e]) continue;
                    const double g = std::abs(s.particles[m][e] - tc);
                    if (g < gap) gap = g, closest = static_cast<int>(e);
                }
                if (closest >= 0 && gap < s.cost.c_insert + s.cost.c_delete) {
                    d[m] = s.dist[m] - s.cost.c_insert + gap;
                    link[m] = closest;
                } else {
                    d[m] = s.dist[m] + s.cost.c_delete;
                    link[m] = -1;
                }
            }
            const double gain = s.risk() - s.risk(d);
            if (gain > best_gain) {
                best_gain = gain;
                best_t = tc;
                best_d = d;
                best_link = link;
            }
        }
        if (!(best_gain > 0.0)) break;
        s.decode.push_back(best_t);
        for (std::size_t m = 0; m < s.size(); ++m) s.match[m].push_back(best_link[m]);
        s.dist = best_d;
    }
}

/// Decode of one type: start at the heaviest particle and cycle align, move, delete,
/// insert until a cycle leaves the risk unchanged.
inline std::vector<double> decode_type(std::vector<std::vector<double>> particles, std::vector<double> weights,
                                       const CostConfig& cost, double* tracked_risk = nullptr) {
    DecodeState s(std::move(particles), std::move(weights), cost);
    init_from_best(s);
    while (true) {
        align_phase(s);
        const double r_min = s.risk();
        move_phase(s);
        delete_phase(s);
        insert_phase(s);
        if (!(s.risk() < r_min)) break;
    }
    std::sort(s.decode.begin(), s.decode.end());
    if (tracked_risk) *tracked_risk = s.risk();
    return s.decode;
}

/// Consensus decode of weighted particles, type by type.
inline std::vector<Event> consensus_decode(const std::vector<std::vector<Event>>& particles,
                                           const std::vector<double>& weights, const CostConfig& cost) {
    if (particles.empty()) throw std::invalid_argument("consensus_decode: empty ensemble");
    cost.check();
    std::set<int> types;
    for (const auto& p : particles)
        for (const Event& e : p) types.insert(e.type);
    std::vector<Event> out;
    for (int k : types) {
        std::vector<std::vector<double>> ps(particles.size());
        for (std::size_t m = 0; m < particles.size(); ++m)
            for (const Event& e : particles[m])
                if (e.type == k) ps[m].push_back(e.time);
        for (double t : decode_type(std::move(ps), weights, cost)) out.push_back({k, t, false});
    }
    std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
    return out;
}

inline std::vector<Event> consensus_decode(const Ensemble& e, const CostConfig& cost) {
    return consensus_decode(e.particles, e.weights, cost);
}

/// sum_m w_m L(z, z_m).
inline double bayes_risk(const std::vector<Event>& z, const std::vector<std::vector<Event>>& particles,
                         const std::vector<double>& weights, const CostConfig& cost) {
    double r = 0.0;
    for (std::size_t m = 0; m < particles.size(); ++m) r += weights[m] * otd(z, particles[m], cost).distance;
    return r;
}

}  // namespace nhps
