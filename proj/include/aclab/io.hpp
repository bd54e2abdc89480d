#pragma once

#include "aclab/limit_ode.hpp"
#include "aclab/mdp.hpp"
#include "aclab/online_ac.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace aclab::io {

using json = nlohmann::ordered_json;

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v)
            break;
    }
    return buf;
}

inline json table_to_json(const Table& t) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < t.cols(); ++j)
            row.push_back(t(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Table table_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw ValidationError(what + ": expected " + std::to_string(rows) + " rows");
    Table t(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ValidationError(what + ": row " + std::to_string(i) + " must have " + std::to_string(cols) +
                                  " entries");
        for (Eigen::Index k = 0; k < cols; ++k)
            t(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return t;
}

/// {"n_states", "n_actions", "gamma", "mu", "r", "p"} with p indexed [x][a][x'].
inline json mdp_to_json(const MdpSpec& spec) {
    json j;
    j["n_states"] = spec.n_states;
    j["n_actions"] = spec.n_actions;
    j["gamma"] = spec.gamma;
    j["mu"] = std::vector<double>(spec.mu.data(), spec.mu.data() + spec.mu.size());
    j["r"] = table_to_json(spec.r);
    json p = json::array();
    for (Eigen::Index x = 0; x < spec.n_states; ++x) {
        json px = json::array();
        for (Eigen::Index a = 0; a < spec.n_actions; ++a) {
            json row = json::array();
            for (Eigen::Index y = 0; y < spec.n_states; ++y)
                row.push_back(spec.prob(x, a, y));
            px.push_back(std::move(row));
        }
        p.push_back(std::move(px));
    }
    j["p"] = std::move(p);
    return j;
}

/// Parses, validates and renormalizes. Any structural or numeric problem is a ValidationError.
inline MdpSpec mdp_from_json(const json& j) {
    MdpSpec s;
    try {
        for (const char* key : {"n_states", "n_actions", "gamma", "mu", "r", "p"})
            if (!j.contains(key))
                throw ValidationError(std::string("missing field \"") + key + "\"");
        s.n_states = j.at("n_states").get<Eigen::Index>();
        s.n_actions = j.at("n_actions").get<Eigen::Index>();
        s.gamma = j.at("gamma").get<double>();
        if (s.n_states < 1 || s.n_actions < 1)
            throw ValidationError("n_states and n_actions must be positive");
        const auto& mu = j.at("mu");
        if (!mu.is_array() || static_cast<Eigen::Index>(mu.size()) != s.n_states)
            throw ValidationError("mu must have n_states entries");
        s.mu.resize(s.n_states);
        for (Eigen::Index x = 0; x < s.n_states; ++x)
            s.mu(x) = mu[static_cast<std::size_t>(x)].get<double>();
        s.r = table_from_json(j.at("r"), s.n_states, s.n_actions, "r");
        const auto& p = j.at("p");
        if (!p.is_array() || static_cast<Eigen::Index>(p.size()) != s.n_states)
            throw ValidationError("p must have n_states blocks");
        s.p.resize(s.n_pairs(), s.n_states);
        for (Eigen::Index x = 0; x < s.n_states; ++x) {
            const Table block = table_from_json(p[static_cast<std::size_t>(x)], s.n_actions, s.n_states,
                                                "p[" + std::to_string(x) + "]");
            s.p.middleRows(x * s.n_actions, s.n_actions) = block;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed MDP document: ") + e.what());
    }
    return normalized(s);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

inline MdpSpec load_mdp(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return mdp_from_json(j);
}

inline void save_mdp(const std::filesystem::path& path, const MdpSpec& spec) {
    write_file(path, mdp_to_json(spec).dump(2) + "\n");
}

/// Hex SHA-1 of "blob <size>\0<content>", the way git names file contents.
inline std::string git_blob_hash(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1)
        throw std::runtime_error("SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

/// Hash of the canonical (pretty-printed) file form of the spec.
inline std::string content_hash(const MdpSpec& spec) { return git_blob_hash(mdp_to_json(spec).dump(2) + "\n"); }

inline json schedule_to_json(const RateSchedule& s) {
    json j;
    j["kind"] = s.name();
    if (s.kind() != RateSchedule::Kind::Standard) {
        j["times"] = s.knot_times();
        j["zetas"] = s.knot_zetas();
        j["etas"] = s.knot_etas();
    }
    return j;
}

inline json ac_config_to_json(const AcConfig& c) {
    json j;
    j["N"] = c.N;
    j["T"] = c.T;
    j["alpha"] = c.alpha;
    j["seed"] = c.seed;
    j["run_id"] = c.run_id;
    j["checkpoint_times"] = c.checkpoint_times;
    j["schedule"] = schedule_to_json(c.schedule);
    j["freeze_updates"] = c.freeze_updates;
    j["theta0"] = table_to_json(c.theta0);
    j["q0"] = table_to_json(c.q0);
    return j;
}

/// Long-form CSV: one row per checkpoint and state-action pair.
inline std::string online_trajectory_csv(const RunTrajectory& traj) {
    std::string out = "t,x,a,theta,q\n";
    for (const auto& s : traj.snapshots)
        for (Eigen::Index x = 0; x < s.theta.rows(); ++x)
            for (Eigen::Index a = 0; a < s.theta.cols(); ++a)
                out += fmt(s.t) + "," + std::to_string(x) + "," + std::to_string(a) + "," + fmt(s.theta(x, a)) +
                       "," + fmt(s.q(x, a)) + "\n";
    return out;
}

inline json online_trajectory_metadata(const MdpSpec& spec, const AcConfig& c, const RunTrajectory& traj) {
    json j;
    j["kind"] = "online_actor_critic";
    j["mdp_hash"] = content_hash(spec);
    j["config"] = ac_config_to_json(c);
    j["total_steps"] = traj.total_steps;
    json ks = json::array();
    for (const auto& s : traj.snapshots)
        ks.push_back(s.k);
    j["checkpoint_steps"] = ks;
    j["max_q_sup"] = traj.max_q_sup;
    return j;
}

/// Long-form CSV: table rows (theta, q, phi) then scalar rows (Y, J_gap, grad_norm) per checkpoint.
inline std::string ode_trajectory_csv(const OdeTrajectory& traj) {
    std::string out = "t,entry_kind,x,a,value\n";
    for (const auto& cp : traj.checkpoints) {
        const std::string t = fmt(cp.state.t);
        auto emit = [&](const char* kind, const Table& tab) {
            for (Eigen::Index x = 0; x < tab.rows(); ++x)
                for (Eigen::Index a = 0; a < tab.cols(); ++a)
                    out += t + "," + kind + "," + std::to_string(x) + "," + std::to_string(a) + "," +
                           fmt(tab(x, a)) + "\n";
        };
        emit("theta", cp.state.theta_bar);
        emit("q", cp.state.q_bar);
        emit("phi", cp.diag.phi);
        out += t + ",Y,,," + fmt(cp.diag.y) + "\n";
        out += t + ",J_gap,,," + fmt(cp.diag.j_gap) + "\n";
        out += t + ",grad_norm,,," + fmt(cp.diag.grad_norm) + "\n";
    }
    return out;
}

inline json ode_trajectory_metadata(const MdpSpec& spec, double T, double h, const OdeOptions& opt,
                                    const OdeTrajectory& traj) {
    json j;
    j["kind"] = "limit_ode";
    j["mdp_hash"] = content_hash(spec);
    j["T"] = T;
    j["h"] = h;
    j["alpha"] = opt.alpha;
    j["schedule"] = schedule_to_json(opt.schedule);
    j["sigma"] = opt.sigma == SigmaNormalization::MassOne ? "mass_one" : "unnormalized";
    j["steps"] = traj.steps;
    return j;
}

} // namespace aclab::io
