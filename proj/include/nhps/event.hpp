#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nhps {

/// Type id 0 is the begin-of-sequence boundary, id K+1 the end-of-sequence boundary,
/// and 1..K are real event types.
using EventType = int;

constexpr EventType kBos = 0;
constexpr EventType eos_type(int num_types) noexcept { return num_types + 1; }

struct Event {
    EventType type = 0;
    double time = 0.0;
    bool observed = true;

    friend bool operator==(const Event&, const Event&) = default;
};

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ValidationResult {
    bool ok = true;
    std::string message;
    std::size_t index = 0;

    explicit operator bool() const noexcept { return ok; }

    static ValidationResult failure(std::string msg, std::size_t idx) {
        return {false, std::move(msg), idx};
    }
};

/// A stream on [0, T) with explicit BOS/EOS boundary events at 0 and T.
///
/// Values are immutable once built by the factory functions; the constructor does
/// not validate, call validate() (or use make_sequence) where input is untrusted.
class EventSequence {
public:
    EventSequence() = default;
    EventSequence(double horizon, int num_types, std::vector<Event> events)
        : horizon_(horizon), num_types_(num_types), events_(std::move(events)) {}

    double horizon() const noexcept { return horizon_; }
    int num_types() const noexcept { return num_types_; }

    /// All events including the two boundaries.
    const std::vector<Event>& events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    const Event& operator[](std::size_t i) const { return events_[i]; }

    /// Number of interior (non-boundary) events.
    std::size_t num_interior() const noexcept { return events_.size() >= 2 ? events_.size() - 2 : 0; }

    std::vector<Event> interior() const {
        if (events_.size() < 2) return {};
        return {events_.begin() + 1, events_.end() - 1};
    }

    std::size_t num_missing() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(events_.begin(), events_.end(), [](const Event& e) { return !e.observed; }));
    }

    bool fully_observed() const noexcept { return num_missing() == 0; }

    friend bool operator==(const EventSequence&, const EventSequence&) = default;

private:
    double horizon_ = 0.0;
    int num_types_ = 0;
    std::vector<Event> events_;
};

struct ValidateOptions {
    /// Permit consecutive events with identical times (generation order preserved).
    bool allow_equal_times = false;
};

inline ValidationResult validate(const EventSequence& seq, int num_types, ValidateOptions opts = {}) {
    const auto& ev = seq.events();
    if (!(seq.horizon() > 0.0) || !std::isfinite(seq.horizon()))
        return ValidationResult::failure("horizon must be positive and finite", 0);
    if (seq.num_types() != num_types)
        return ValidationResult::failure("sequence K does not match dataset K", 0);
    if (ev.size() < 2) return ValidationResult::failure("missing boundaries", 0);
    if (ev.front().type != kBos || ev.front().time != 0.0)
        return ValidationResult::failure("missing BOS boundary at index 0", 0);
    const std::size_t last = ev.size() - 1;
    if (ev.back().type != eos_type(num_types) || ev.back().time != seq.horizon())
        return ValidationResult::failure("missing EOS boundary at index " + std::to_string(last), last);
    if (!ev.front().observed || !ev.back().observed)
        return ValidationResult::failure("boundary events must be observed", ev.front().observed ? last : 0);
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const Event& e = ev[i];
        if (!std::isfinite(e.time) || e.time < 0.0)
            return ValidationResult::failure("non-finite or negative time at index " + std::to_string(i), i);
        if (e.type < 0 || e.type > num_types + 1)
            return ValidationResult::failure("type id out of range at index " + std::to_string(i), i);
        if (i > 0 && i < last && (e.type == kBos || e.type == eos_type(num_types)))
            return ValidationResult::failure("boundary type in interior at index " + std::to_string(i), i);
        if (i > 0) {
            const double prev = ev[i - 1].time;
            const bool bad = opts.allow_equal_times ? e.time < prev : e.time <= prev;
            if (bad) return ValidationResult::failure("non-monotone at index " + std::to_string(i), i);
        }
    }
    return {};
}

/// Builds a sequence from interior events (boundaries added) and validates it.
inline EventSequence make_sequence(double horizon, int num_types, std::vector<Event> interior,
                                   ValidateOptions opts = {}) {
    std::vector<Event> ev;
    ev.reserve(interior.size() + 2);
    ev.push_back({kBos, 0.0, true});
    for (auto& e : interior) ev.push_back(e);
    ev.push_back({eos_type(num_types), horizon, true});
    EventSequence seq(horizon, num_types, std::move(ev));
    if (auto r = validate(seq, num_types, opts); !r) throw ValidationError(r.message);
    return seq;
}

struct SplitResult {
    EventSequence observed;     ///< x: observed interior events plus boundaries
    std::vector<Event> missing; ///< z: unobserved interior events, time-ordered
};

inline SplitResult split(const EventSequence& seq) {
    std::vector<Event> x;
    std::vector<Event> z;
    for (const Event& e : seq.events()) (e.observed ? x : z).push_back(e);
    return {EventSequence(seq.horizon(), seq.num_types(), std::move(x)), std::move(z)};
}

/// Interleaves missing events into an observed sequence. At equal times (only legal in
/// the equal-times regime) a missing event precedes the observed one.
inline EventSequence merge(const EventSequence& x, const std::vector<Event>& z, ValidateOptions opts = {}) {
    const double T = x.horizon();
    std::vector<Event> zs = z;
    for (Event& e : zs) {
        if (!(e.time > 0.0 && e.time < T))
            throw ValidationError("missing event at t=" + std::to_string(e.time) + " outside (0, T)");
        e.observed = false;
    }
    std::stable_sort(zs.begin(), zs.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
    std::vector<Event> out;
    out.reserve(x.size() + zs.size());
    std::size_t j = 0;
    for (const Event& e : x.events()) {
        while (j < zs.size() && zs[j].time <= e.time && e.type != kBos) out.push_back(zs[j++]);
        out.push_back(e);
    }
    EventSequence merged(T, x.num_types(), std::move(out));
    if (auto r = validate(merged, x.num_types(), opts); !r) throw ValidationError("merge: " + r.message);
    return merged;
}

/// Times of the observed events of x, boundaries included (t_0 = 0, ..., t_{I+1} = T).
inline std::vector<double> observed_times(const EventSequence& x) {
    std::vector<double> t;
    for (const Event& e : x.events())
        if (e.observed) t.push_back(e.time);
    return t;
}

enum class SplitTag { train, dev, test };

struct Dataset {
    int num_types = 0;
    std::vector<EventSequence> sequences;
    SplitTag tag = SplitTag::train;

    std::size_t size() const noexcept { return sequences.size(); }
    bool empty() const noexcept { return sequences.empty(); }
};

}  // namespace nhps
