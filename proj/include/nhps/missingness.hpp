#pragma once

#include "nhps/event.hpp"
#include "nhps/math.hpp"
#include "nhps/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhps {

/// Each event of type k is censored independently with probability rho_k.
class MissingnessMechanism {
public:
    MissingnessMechanism() = default;
    explicit MissingnessMechanism(std::vector<double> rho) : rho_(std::move(rho)) {
        for (double r : rho_)
            if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("censoring probability outside [0, 1]");
    }

    static MissingnessMechanism uniform(int num_types, double rho) {
        return MissingnessMechanism(std::vector<double>(static_cast<std::size_t>(num_types), rho));
    }

    /// rho_k = 1 for the listed types and 0 for the rest.
    static MissingnessMechanism deterministic(int num_types, const std::vector<int>& missing_types) {
        std::vector<double> rho(static_cast<std::size_t>(num_types), 0.0);
        for (int k : missing_types) {
            if (k < 1 || k > num_types) throw std::invalid_argument("missing type out of range");
            rho[static_cast<std::size_t>(k - 1)] = 1.0;
        }
        return MissingnessMechanism(std::move(rho));
    }

    int num_types() const noexcept { return static_cast<int>(rho_.size()); }
    double rho(int k) const { return rho_.at(static_cast<std::size_t>(k - 1)); }
    const std::vector<double>& rho() const noexcept { return rho_; }

    bool is_deterministic() const noexcept {
        for (double r : rho_)
            if (r != 0.0 && r != 1.0) return false;
        return true;
    }

    /// log rho_k if missing, log(1 - rho_k) if observed; log 0 is kLogZero.
    double incremental_factor(const Event& e, bool is_missing) const {
        const double r = rho(e.type);
        return is_missing ? safe_log(r) : safe_log(1.0 - r);
    }

private:
    std::vector<double> rho_;
};

inline double incremental_factor(const MissingnessMechanism& mech, const Event& e, bool is_missing) {
    return mech.incremental_factor(e, is_missing);
}

/// Marks each interior event missing with probability rho_k; boundaries stay observed.
inline EventSequence censor(const MissingnessMechanism& mech, const EventSequence& seq, Rng& rng) {
    std::vector<Event> ev = seq.events();
    for (std::size_t i = 1; i + 1 < ev.size(); ++i) {
        const double r = mech.rho(ev[i].type);
        // One draw per event keeps the stream aligned across rho values.
        const double u = rng.uniform();
        ev[i].observed = !(u < r);
    }
    return EventSequence(seq.horizon(), seq.num_types(), std::move(ev));
}

/// sum_z log rho_k + sum_x log(1 - rho_k) over interior events. For deterministic
/// mechanisms this is 0 for the one consistent partition and kLogZero otherwise.
inline double log_p_miss(const MissingnessMechanism& mech, const EventSequence& x, const std::vector<Event>& z) {
    double acc = 0.0;
    const auto& ev = x.events();
    for (std::size_t i = 1; i + 1 < ev.size(); ++i) acc += mech.incremental_factor(ev[i], false);
    for (const Event& e : z) acc += mech.incremental_factor(e, true);
    return acc;
}

/// Same factor read off a merged sequence's observed flags.
inline double log_p_miss(const MissingnessMechanism& mech, const EventSequence& complete) {
    double acc = 0.0;
    const auto& ev = complete.events();
    for (std::size_t i = 1; i + 1 < ev.size(); ++i) acc += mech.incremental_factor(ev[i], !ev[i].observed);
    return acc;
}

}  // namespace nhps
