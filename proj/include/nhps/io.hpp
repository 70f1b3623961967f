#pragma once

#include "nhps/checkpoint.hpp"
#include "nhps/event.hpp"
#include "nhps/missingness.hpp"
#include "nhps/smc.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhps {

inline json sequence_to_json(const EventSequence& s) {
    json ev = json::array();
    for (const Event& e : s.interior()) ev.push_back({{"k", e.type}, {"t", e.time}, {"obs", e.observed}});
    return {{"T", s.horizon()}, {"K", s.num_types()}, {"events", std::move(ev)}};
}

inline EventSequence sequence_from_json(const json& j, ValidateOptions opts = {}) {
    if (!j.is_object() || !j.contains("T") || !j.contains("K") || !j.contains("events"))
        throw ValidationError("sequence needs T, K and events");
    const double T = j.at("T").get<double>();
    const int K = j.at("K").get<int>();
    std::vector<Event> ev{{kBos, 0.0, true}};
    for (const json& e : j.at("events"))
        ev.push_back({e.at("k").get<int>(), e.at("t").get<double>(), e.value("obs", true)});
    ev.push_back({eos_type(K), T, true});
    EventSequence s(T, K, std::move(ev));
    if (auto r = validate(s, K, opts); !r) throw ValidationError(r.message);
    return s;
}

inline json events_to_json(const std::vector<Event>& z) {
    json out = json::array();
    for (const Event& e : z) out.push_back({{"k", e.type}, {"t", e.time}});
    return out;
}

inline std::vector<Event> events_from_json(const json& j) {
    std::vector<Event> z;
    for (const json& e : j) z.push_back({e.at("k").get<int>(), e.at("t").get<double>(), false});
    return z;
}

/// Calls f(line_number, json) for every non-empty line.
template <class F>
void for_each_ndjson(const std::string& path, F&& f) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
        }
        f(n, j);
    }
}

inline Dataset read_dataset(const std::string& path, SplitTag tag = SplitTag::train, ValidateOptions opts = {}) {
    Dataset d;
    d.tag = tag;
    d.num_types = -1;
    for_each_ndjson(path, [&](std::size_t n, const json& j) {
        EventSequence s;
        try {
            s = sequence_from_json(j, opts);
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
        }
        if (d.num_types < 0) d.num_types = s.num_types();
        if (s.num_types() != d.num_types)
            throw ValidationError(path + ":" + std::to_string(n) + ": sequence K does not match dataset K");
        d.sequences.push_back(std::move(s));
    });
    if (d.num_types < 0) d.num_types = 0;
    return d;
}

inline void write_dataset(const std::string& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& s : d.sequences) out << sequence_to_json(s).dump() << '\n';
}

/// An ensemble as stored on disk.
struct EnsembleRecord {
    std::size_t id = 0;
    std::vector<double> weights;
    std::vector<std::vector<Event>> particles;
    std::uint64_t seed = 0;
    bool smooth = false;
    double log_marginal = 0.0;
};

inline EnsembleRecord to_record(std::size_t id, const Ensemble& e) {
    return {id, e.weights, e.particles, e.seed, e.smooth, e.log_marginal};
}

inline json ensemble_to_json(const EnsembleRecord& r) {
    json ps = json::array();
    for (const auto& p : r.particles) ps.push_back(events_to_json(p));
    return {{"id", r.id},         {"weights", r.weights}, {"particles", std::move(ps)},
            {"seed", r.seed},     {"smooth", r.smooth},   {"log_marginal", r.log_marginal}};
}

inline EnsembleRecord ensemble_from_json(const json& j) {
    EnsembleRecord r;
    r.id = j.value("id", std::size_t{0});
    r.weights = j.at("weights").get<std::vector<double>>();
    for (const json& p : j.at("particles")) r.particles.push_back(events_from_json(p));
    r.seed = j.value("seed", std::uint64_t{0});
    r.smooth = j.value("smooth", false);
    r.log_marginal = j.value("log_marginal", 0.0);
    if (r.weights.size() != r.particles.size()) throw ValidationError("ensemble: weights and particles differ in length");
    if (r.particles.empty()) throw ValidationError("ensemble: no particles");
    return r;
}

inline std::vector<EnsembleRecord> read_ensembles(const std::string& path) {
    std::vector<EnsembleRecord> out;
    for_each_ndjson(path, [&](std::size_t n, const json& j) {
        try {
            out.push_back(ensemble_from_json(j));
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    });
    return out;
}

struct DecodeRecord {
    std::size_t id = 0;
    double C = 1.0;
    std::vector<Event> events;
};

inline json decode_to_json(const DecodeRecord& d) {
    return {{"id", d.id}, {"C", d.C}, {"events", events_to_json(d.events)}};
}

inline std::vector<DecodeRecord> read_decodes(const std::string& path) {
    std::vector<DecodeRecord> out;
    for_each_ndjson(path, [&](std::size_t n, const json& j) {
        try {
            out.push_back({j.at("id").get<std::size_t>(), j.at("C").get<double>(), events_from_json(j.at("events"))});
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    });
    return out;
}

/// {"rho": [...]}, {"rho_all": r} or {"missing_types": [...]}.
inline MissingnessMechanism mechanism_from_json(const json& j, int num_types) {
    try {
        if (j.contains("rho")) {
            auto rho = j.at("rho").get<std::vector<double>>();
            if (static_cast<int>(rho.size()) != num_types) throw ValidationError("rho needs one entry per type");
            return MissingnessMechanism(std::move(rho));
        }
        if (j.contains("rho_all")) return MissingnessMechanism::uniform(num_types, j.at("rho_all").get<double>());
        if (j.contains("missing_types"))
            return MissingnessMechanism::deterministic(num_types, j.at("missing_types").get<std::vector<int>>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("mechanism: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("mechanism: ") + e.what());
    }
    throw ValidationError("mechanism needs rho, rho_all or missing_types");
}

}  // namespace nhps
