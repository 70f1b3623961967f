#pragma once

#include "nhps/ctlstm.hpp"
#include "nhps/nhp.hpp"
#include "nhps/proposal.hpp"
#include "nhps/training.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>

namespace nhps {

using nlohmann::json;

namespace detail {

inline json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const Eigen::Ref<const Vector>& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline const json& tensor(const json& tensors, const std::string& name) {
    if (!tensors.contains(name)) throw ValidationError("checkpoint: missing tensor " + name);
    return tensors.at(name);
}

inline void matrix_from_json(const json& j, Eigen::Ref<Matrix> m, const std::string& name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != m.rows())
        throw ValidationError("checkpoint: tensor " + name + " has the wrong number of rows");
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
            throw ValidationError("checkpoint: tensor " + name + " has the wrong number of columns");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
}

inline void vector_from_json(const json& j, Eigen::Ref<Vector> v, const std::string& name) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != v.size())
        throw ValidationError("checkpoint: tensor " + name + " has the wrong length");
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
}

inline void lstm_to_json(const CTLSTMParams& p, json& tensors) {
    for (int g = 0; g < kNumGates; ++g) {
        const std::string n = kGateNames[static_cast<std::size_t>(g)];
        tensors["W_" + n] = matrix_to_json(p.W_gate(static_cast<Gate>(g)));
        tensors["U_" + n] = matrix_to_json(p.U_gate(static_cast<Gate>(g)));
        tensors["d_" + n] = vector_to_json(p.b_gate(static_cast<Gate>(g)));
    }
}

inline void lstm_from_json(const json& tensors, CTLSTMParams& p) {
    for (int g = 0; g < kNumGates; ++g) {
        const std::string n = kGateNames[static_cast<std::size_t>(g)];
        matrix_from_json(tensor(tensors, "W_" + n), p.W_gate(static_cast<Gate>(g)), "W_" + n);
        matrix_from_json(tensor(tensors, "U_" + n), p.U_gate(static_cast<Gate>(g)), "U_" + n);
        vector_from_json(tensor(tensors, "d_" + n), p.b_gate(static_cast<Gate>(g)), "d_" + n);
    }
}

inline void check_header(const json& j, const std::string& kind) {
    if (!j.is_object() || j.value("version", 0) != 1) throw ValidationError("checkpoint: unsupported version");
    if (j.value("kind", std::string()) != kind) throw ValidationError("checkpoint: expected kind \"" + kind + "\"");
    for (const char* f : {"K", "D", "tensors"})
        if (!j.contains(f)) throw ValidationError(std::string("checkpoint: missing field ") + f);
}

}  // namespace detail

inline json to_json(const NHPParams& p) {
    json t = json::object();
    detail::lstm_to_json(p.lstm, t);
    t["V"] = detail::matrix_to_json(p.V);
    t["s"] = detail::vector_to_json(p.s);
    return {{"version", 1}, {"kind", "nhp"}, {"K", p.num_types}, {"D", p.hidden()}, {"tensors", std::move(t)}};
}

inline NHPParams nhp_from_json(const json& j) {
    detail::check_header(j, "nhp");
    const int K = j.at("K").get<int>(), D = j.at("D").get<int>();
    if (K < 1 || D < 1) throw ValidationError("checkpoint: K and D must be positive");
    NHPParams p = NHPParams::zeros(K, D);
    const json& t = j.at("tensors");
    detail::lstm_from_json(t, p.lstm);
    detail::matrix_from_json(detail::tensor(t, "V"), p.V, "V");
    detail::vector_from_json(detail::tensor(t, "s"), p.s, "s");
    if (!(p.s.array() > 0.0).all()) throw ValidationError("checkpoint: softplus scales must be positive");
    check_finite_params(p, "checkpoint");
    return p;
}

inline json to_json(const ProposalParams& p) {
    json t = json::object();
    detail::lstm_to_json(p.lstm, t);
    t["B"] = detail::matrix_to_json(p.B);
    return {{"version", 1},          {"kind", "proposal"}, {"K", p.num_types},
            {"D", p.model_hidden()}, {"Dprime", p.hidden()}, {"tensors", std::move(t)}};
}

inline ProposalParams proposal_from_json(const json& j) {
    detail::check_header(j, "proposal");
    if (!j.contains("Dprime")) throw ValidationError("checkpoint: missing field Dprime");
    const int K = j.at("K").get<int>(), D = j.at("D").get<int>(), Dp = j.at("Dprime").get<int>();
    if (K < 1 || D < 1 || Dp < 1) throw ValidationError("checkpoint: K, D and Dprime must be positive");
    ProposalParams p = ProposalParams::zeros(K, D, Dp);
    const json& t = j.at("tensors");
    detail::lstm_from_json(t, p.lstm);
    detail::matrix_from_json(detail::tensor(t, "B"), p.B, "B");
    check_finite_params(p, "checkpoint");
    return p;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump() << '\n';
}

inline void save_checkpoint(const std::string& path, const NHPParams& p) { write_json_file(path, to_json(p)); }
inline void save_checkpoint(const std::string& path, const ProposalParams& p) { write_json_file(path, to_json(p)); }
inline NHPParams load_model(const std::string& path) { return nhp_from_json(read_json_file(path)); }
inline ProposalParams load_proposal(const std::string& path) { return proposal_from_json(read_json_file(path)); }

}  // namespace nhps
