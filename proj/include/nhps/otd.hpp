#pragma once

#include "nhps/event.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhps {

struct CostConfig {
    double c_insert = 1.0;  ///< charged for each reference event left unaligned
    double c_delete = 1.0;  ///< charged for each predicted event left unaligned

    static CostConfig symmetric(double c) { return {c, c}; }
    void check() const {
        if (!(c_insert > 0.0) || !(c_delete > 0.0)) throw std::invalid_argument("costs must be positive");
    }
};

/// Indices into the predicted list z and the reference list z*.
struct AlignedPair {
    std::size_t pred = 0;
    std::size_t ref = 0;

    friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

struct Alignment {
    std::vector<AlignedPair> pairs;

    std::size_t size() const noexcept { return pairs.size(); }
};

struct OtdResult {
    double distance = 0.0;
    Alignment alignment;
};

/// Cost decomposition of a distance: unaligned-event charges plus total movement.
struct OtdBreakdown {
    double distance = 0.0;
    std::size_t unaligned = 0;  ///< |z| + |z*| - 2|a|
    double movement = 0.0;
    std::size_t aligned = 0;
};

/// One-type edit DP between sorted time lists. Keeps back pointers and returns the
/// aligned index pairs (pred, ref) in increasing order.
struct TypeAlignment {
    double distance = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

inline TypeAlignment align_times(const std::vector<double>& pred, const std::vector<double>& ref, const CostConfig& c) {
    enum Back : unsigned char { kMove, kInsert, kDelete };
    const std::size_t n = pred.size(), m = ref.size();
    std::vector<double> D((n + 1) * (m + 1));
    std::vector<unsigned char> P((n + 1) * (m + 1), kMove);
    auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
    D[at(0, 0)] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        D[at(i, 0)] = D[at(i - 1, 0)] + c.c_delete;
        P[at(i, 0)] = kDelete;
    }
    for (std::size_t j = 1; j <= m; ++j) {
        D[at(0, j)] = D[at(0, j - 1)] + c.c_insert;
        P[at(0, j)] = kInsert;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const double mv = D[at(i - 1, j - 1)] + std::abs(pred[i - 1] - ref[j - 1]);
            const double ins = D[at(i, j - 1)] + c.c_insert;
            const double del = D[at(i - 1, j)] + c.c_delete;
            double best = mv;
            unsigned char b = kMove;
            if (ins < best) best = ins, b = kInsert;
            if (del < best) best = del, b = kDelete;
            D[at(i, j)] = best;
            P[at(i, j)] = b;
        }
    }
    TypeAlignment out;
    out.distance = D[at(n, m)];
    std::size_t i = n, j = m;
    while (i > 0 && j > 0) {
        switch (P[at(i, j)]) {
            case kMove:
                out.pairs.emplace_back(i - 1, j - 1);
                --i, --j;
                break;
            case kInsert: --j; break;
            default: --i; break;
        }
    }
    std::reverse(out.pairs.begin(), out.pairs.end());
    return out;
}

namespace detail {

/// Sorted times of each type plus the original list index of each.
struct TypeLists {
    std::map<int, std::vector<double>> times;
    std::map<int, std::vector<std::size_t>> index;
};

inline TypeLists by_type(const std::vector<Event>& z) {
    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a].time < z[b].time; });
    TypeLists out;
    for (std::size_t j : order) {
        out.times[z[j].type].push_back(z[j].time);
        out.index[z[j].type].push_back(j);
    }
    return out;
}

}  // namespace detail

/// Optimal transport distance sum_k Align(z^(k), z*^(k)) and an alignment attaining it.
/// z is the prediction (unaligned events there cost c_delete), z* the reference
/// (unaligned events there cost c_insert).
inline OtdResult otd(const std::vector<Event>& z, const std::vector<Event>& zstar, const CostConfig& cost) {
    cost.check();
    const auto a = detail::by_type(z);
    const auto b = detail::by_type(zstar);
    OtdResult r;
    static const std::vector<double> kEmpty;
    std::map<int, int> types;
    for (const auto& [k, _] : a.times) types[k] = 1;
    for (const auto& [k, _] : b.times) types[k] = 1;
    for (const auto& [k, _] : types) {
        const auto ia = a.times.find(k);
        const auto ib = b.times.find(k);
        const auto& ta = ia == a.times.end() ? kEmpty : ia->second;
        const auto& tb = ib == b.times.end() ? kEmpty : ib->second;
        const TypeAlignment t = align_times(ta, tb, cost);
        r.distance += t.distance;
        for (const auto& [i, j] : t.pairs) r.alignment.pairs.push_back({a.index.at(k)[i], b.index.at(k)[j]});
    }
    return r;
}

/// Distance of a given alignment: charges for every unaligned event plus |t - t*| per
/// aligned pair. Throws if the alignment is not one-to-one or pairs different types.
inline OtdBreakdown distance_given_alignment(const std::vector<Event>& z, const std::vector<Event>& zstar,
                                             const Alignment& a, const CostConfig& cost) {
    std::vector<char> used_p(z.size(), 0), used_r(zstar.size(), 0);
    OtdBreakdown out;
    for (const AlignedPair& p : a.pairs) {
        if (p.pred >= z.size() || p.ref >= zstar.size()) throw std::invalid_argument("alignment index out of range");
        if (used_p[p.pred] || used_r[p.ref]) throw std::invalid_argument("alignment is not one-to-one");
        if (z[p.pred].type != zstar[p.ref].type) throw std::invalid_argument("alignment pairs events of different types");
        used_p[p.pred] = used_r[p.ref] = 1;
        out.movement += std::abs(z[p.pred].time - zstar[p.ref].time);
    }
    out.aligned = a.pairs.size();
    const std::size_t free_p = z.size() - a.pairs.size();
    const std::size_t free_r = zstar.size() - a.pairs.size();
    out.unaligned = free_p + free_r;
    out.distance = out.movement + static_cast<double>(free_p) * cost.c_delete + static_cast<double>(free_r) * cost.c_insert;
    return out;
}

/// Distance and decomposition under the optimal alignment.
inline OtdBreakdown otd_breakdown(const std::vector<Event>& z, const std::vector<Event>& zstar, const CostConfig& cost) {
    const OtdResult r = otd(z, zstar, cost);
    OtdBreakdown b = distance_given_alignment(z, zstar, r.alignment, cost);
    b.distance = r.distance;
    return b;
}

namespace detail {

inline void enumerate_matchings(const std::vector<double>& a, const std::vector<double>& b, std::size_t i,
                                std::vector<char>& used, double acc, std::size_t matched, bool monotone,
                                std::size_t min_j, const CostConfig& c, double& best) {
    if (i == a.size()) {
        const double total = acc + static_cast<double>(a.size() - matched) * c.c_delete +
                             static_cast<double>(b.size() - matched) * c.c_insert;
        best = std::min(best, total);
        return;
    }
    enumerate_matchings(a, b, i + 1, used, acc, matched, monotone, min_j, c, best);
    for (std::size_t j = monotone ? min_j : 0; j < b.size(); ++j) {
        if (used[j]) continue;
        used[j] = 1;
        enumerate_matchings(a, b, i + 1, used, acc + std::abs(a[i] - b[j]), matched + 1, monotone, j + 1, c, best);
        used[j] = 0;
    }
}

}  // namespace detail

/// Exhaustive minimum over partial matchings per type; monotone (order-preserving)
/// matchings only unless `allow_crossing`. Per-type sizes must not exceed 6.
inline double brute_force_otd(const std::vector<Event>& z, const std::vector<Event>& zstar, const CostConfig& cost,
                              bool allow_crossing = false) {
    cost.check();
    const auto a = detail::by_type(z);
    const auto b = detail::by_type(zstar);
    static const std::vector<double> kEmpty;
    std::map<int, int> types;
    for (const auto& [k, _] : a.times) types[k] = 1;
    for (const auto& [k, _] : b.times) types[k] = 1;
    double total = 0.0;
    for (const auto& [k, _] : types) {
        const auto ia = a.times.find(k);
        const auto ib = b.times.find(k);
        const auto& ta = ia == a.times.end() ? kEmpty : ia->second;
        const auto& tb = ib == b.times.end() ? kEmpty : ib->second;
        if (ta.size() > 6 || tb.size() > 6) throw std::invalid_argument("brute_force_otd: more than 6 events of a type");
        std::vector<char> used(tb.size(), 0);
        double best = std::numeric_limits<double>::infinity();
        detail::enumerate_matchings(ta, tb, 0, used, 0.0, 0, !allow_crossing, 0, cost, best);
        total += best;
    }
    return total;
}

}  // namespace nhps
