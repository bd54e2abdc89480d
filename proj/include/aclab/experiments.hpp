#pragma once

#include "aclab/exact.hpp"
#include "aclab/io.hpp"
#include "aclab/limit_ode.hpp"
#include "aclab/online_ac.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace aclab::exp {

using io::json;

/// Bad experiment configuration or command-line usage.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids{"ode-limit", "critic-rate", "actor-rate", "fluctuation"};
    return ids;
}

/// Where the MDP comes from: a named fixture, a spec file, or random_mdp parameters.
struct MdpSource {
    std::string kind = "fixture"; ///< fixture | path | random
    std::string fixture = "chainmdp";
    std::optional<double> gamma; ///< overrides the fixture discount
    std::filesystem::path path;
    Eigen::Index n_states = 2;
    Eigen::Index n_actions = 2;
    double random_gamma = 0.9;
    std::uint64_t random_seed = 0;
    double min_prob = 0.01;
};

inline MdpSpec resolve_mdp(const MdpSource& src) {
    if (src.kind == "path")
        return io::load_mdp(src.path);
    if (src.kind == "random")
        return random_mdp(src.n_states, src.n_actions, src.random_gamma, src.random_seed, src.min_prob);
    if (src.kind != "fixture")
        throw ConfigError("unknown mdp source kind \"" + src.kind + "\"");
    const double g = src.gamma.value_or(src.fixture == "single_state" ? 0.5 : 0.9);
    if (src.fixture == "chainmdp")
        return fixtures::chainmdp(g);
    if (src.fixture == "single_state")
        return fixtures::single_state(0.5, g);
    if (src.fixture == "constant_reward")
        return fixtures::constant_reward(0.5, g);
    throw ConfigError("unknown fixture \"" + src.fixture + "\"");
}

/// Acceptance thresholds; defaults encode desk-scale expectations.
struct Thresholds {
    double halving = 0.5;          ///< ode-limit: final mean error <= halving * first
    double burn_in = 10.0;         ///< actor-rate: gap must decrease from here on
    double gap_ratio = 1.0 / 3.0;  ///< actor-rate: gap(T) <= gap_ratio * gap(burn_in)
    double mass_check_from = 100.0; ///< actor-rate: optimal-action mass compared from here on
    double decay_factor = 2.0;     ///< fluctuation: required drop from N_min to N_max
    double min_span = 16.0;        ///< fluctuation: required N_max / N_min
    double converged_tol = 1e-10;  ///< values at or below this count as already converged
};

struct ExperimentConfig {
    std::string id;
    MdpSource mdp;
    std::vector<long long> n_grid;
    double T = 1.0;
    double alpha = 1.0;
    std::vector<std::uint64_t> seeds;
    double h = 1e-2;
    std::vector<double> checkpoints;
    std::filesystem::path out_dir = "out";
    int workers = 1;
    RateSchedule schedule = RateSchedule::standard();
    SigmaNormalization sigma = SigmaNormalization::MassOne;
    bool freeze_updates = false;
    std::string q0 = "zero"; ///< zero | bellman (value of the initial exploration policy)
    double theta0_optimal_logit = 0.0;
    Thresholds thresholds;
};

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
    std::vector<std::uint64_t> s(count);
    std::iota(s.begin(), s.end(), first);
    return s;
}

/// 10^(k / per_decade) for k from lo_exp * per_decade to hi_exp * per_decade.
inline std::vector<double> decade_grid(int lo_exp, int hi_exp, int per_decade) {
    std::vector<double> out;
    for (int k = lo_exp * per_decade; k <= hi_exp * per_decade; ++k)
        out.push_back(k % per_decade == 0 ? std::pow(10.0, k / per_decade)
                                          : std::pow(10.0, static_cast<double>(k) / per_decade));
    return out;
}

inline ExperimentConfig default_experiment(const std::string& id) {
    ExperimentConfig c;
    c.id = id;
    c.out_dir = std::filesystem::path("out") / id;
    if (id == "ode-limit") {
        c.n_grid = {200, 800, 3200};
        c.T = 2.0;
        c.seeds = seed_range(0, 20);
        c.h = 1e-3;
        for (int i = 0; i <= 40; ++i)
            c.checkpoints.push_back(0.05 * i);
    } else if (id == "critic-rate") {
        c.T = 1e4;
        c.h = 0.1;
        c.checkpoints = {1e2, 1e3, 1e4};
    } else if (id == "actor-rate") {
        c.T = 1e4;
        c.h = 0.1;
        c.checkpoints = decade_grid(0, 4, 10);
    } else if (id == "fluctuation") {
        c.n_grid = {200, 3200};
        c.T = 2.0;
        c.seeds = seed_range(0, 20);
    } else {
        throw ConfigError("unknown experiment \"" + id + "\"");
    }
    return c;
}

inline void validate_experiment(const ExperimentConfig& c) {
    const bool sampled = c.id == "ode-limit" || c.id == "fluctuation";
    if (sampled) {
        if (c.n_grid.empty() || c.seeds.empty())
            throw ConfigError(c.id + ": N grid and seeds must be nonempty");
        if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
            throw ConfigError(c.id + ": seeds must be distinct");
        for (long long n : c.n_grid)
            if (n < 1)
                throw ConfigError(c.id + ": every N must be at least 1");
        if (!std::is_sorted(c.n_grid.begin(), c.n_grid.end()) ||
            std::adjacent_find(c.n_grid.begin(), c.n_grid.end()) != c.n_grid.end())
            throw ConfigError(c.id + ": N grid must be strictly increasing");
    }
    if (!(c.T > 0.0) || !std::isfinite(c.T))
        throw ConfigError(c.id + ": T must be positive");
    if (!(c.alpha > 0.0))
        throw ConfigError(c.id + ": alpha must be positive");
    if (!(c.h > 0.0))
        throw ConfigError(c.id + ": h must be positive");
    if (c.id != "fluctuation") {
        if (c.checkpoints.empty())
            throw ConfigError(c.id + ": checkpoint grid must be nonempty");
        for (std::size_t i = 0; i < c.checkpoints.size(); ++i)
            if (c.checkpoints[i] < 0.0 || c.checkpoints[i] > c.T || (i > 0 && c.checkpoints[i] <= c.checkpoints[i - 1]))
                throw ConfigError(c.id + ": checkpoints must be strictly increasing within [0,T]");
    }
    if (c.workers < 1)
        throw ConfigError("workers must be at least 1");
    if (c.q0 != "zero" && c.q0 != "bellman")
        throw ConfigError("q0 must be \"zero\" or \"bellman\"");
}

/// "paper" or "constant:zeta,eta".
inline RateSchedule parse_schedule(const std::string& text) {
    if (text == "paper")
        return RateSchedule::standard();
    const std::string prefix = "constant:";
    if (text.rfind(prefix, 0) == 0) {
        const std::string rest = text.substr(prefix.size());
        const auto comma = rest.find(',');
        if (comma == std::string::npos)
            throw ConfigError("schedule \"" + text + "\": expected constant:zeta,eta");
        try {
            return RateSchedule::constant(std::stod(rest.substr(0, comma)), std::stod(rest.substr(comma + 1)));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("schedule \"" + text + "\": " + e.what());
        }
    }
    throw ConfigError("unknown schedule \"" + text + "\"");
}

inline std::string schedule_text(const RateSchedule& s) {
    if (s.kind() == RateSchedule::Kind::Standard)
        return "paper";
    if (s.kind() == RateSchedule::Kind::Constant)
        return "constant:" + io::fmt(s.knot_zetas()[0]) + "," + io::fmt(s.knot_etas()[0]);
    throw ConfigError("tabulated schedules cannot be written as text");
}

inline json experiment_to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.id;
    json m;
    if (c.mdp.kind == "fixture") {
        m["fixture"] = c.mdp.fixture;
        if (c.mdp.gamma)
            m["gamma"] = *c.mdp.gamma;
    } else if (c.mdp.kind == "path") {
        m["path"] = c.mdp.path.string();
    } else {
        m["random"] = {{"n_states", c.mdp.n_states},
                       {"n_actions", c.mdp.n_actions},
                       {"gamma", c.mdp.random_gamma},
                       {"seed", c.mdp.random_seed},
                       {"min_prob", c.mdp.min_prob}};
    }
    j["mdp"] = m;
    j["N"] = c.n_grid;
    j["T"] = c.T;
    j["alpha"] = c.alpha;
    j["seeds"] = c.seeds;
    j["h"] = c.h;
    j["checkpoints"] = c.checkpoints;
    j["out_dir"] = c.out_dir.string();
    j["workers"] = c.workers;
    j["schedule"] = schedule_text(c.schedule);
    j["sigma"] = c.sigma == SigmaNormalization::MassOne ? "mass_one" : "unnormalized";
    j["freeze_updates"] = c.freeze_updates;
    j["q0"] = c.q0;
    j["theta0_optimal_logit"] = c.theta0_optimal_logit;
    const auto& t = c.thresholds;
    j["thresholds"] = {{"halving", t.halving},         {"burn_in", t.burn_in},
                       {"gap_ratio", t.gap_ratio},     {"mass_check_from", t.mass_check_from},
                       {"decay_factor", t.decay_factor}, {"min_span", t.min_span},
                       {"converged_tol", t.converged_tol}};
    return j;
}

/**
 * Reads a config document on top of the defaults for its experiment.
 * Relative MDP paths resolve against base_dir. Unknown keys are rejected.
 */
inline ExperimentConfig experiment_from_json(const json& j, const std::string& id_hint = "",
                                             const std::filesystem::path& base_dir = {}) {
    if (!j.is_object())
        throw ConfigError("experiment config must be a JSON object");
    std::string id = id_hint;
    if (j.contains("experiment")) {
        const auto named = j.at("experiment").get<std::string>();
        if (!id.empty() && named != id)
            throw ConfigError("config is for \"" + named + "\" but \"" + id + "\" was requested");
        id = named;
    }
    if (id.empty())
        throw ConfigError("experiment id missing");
    ExperimentConfig c = default_experiment(id);
    static const std::set<std::string> known{"experiment", "mdp",     "N",         "T",      "alpha",
                                             "seeds",      "n_seeds", "h",         "checkpoints",
                                             "out_dir",    "workers", "schedule",  "sigma",  "freeze_updates",
                                             "q0",         "theta0_optimal_logit", "thresholds"};
    try {
        for (const auto& [key, _] : j.items())
            if (!known.count(key))
                throw ConfigError("unknown config key \"" + key + "\"");
        if (j.contains("mdp")) {
            const auto& m = j.at("mdp");
            if (m.contains("fixture")) {
                c.mdp.kind = "fixture";
                c.mdp.fixture = m.at("fixture").get<std::string>();
                if (m.contains("gamma"))
                    c.mdp.gamma = m.at("gamma").get<double>();
            } else if (m.contains("path")) {
                c.mdp.kind = "path";
                std::filesystem::path p = m.at("path").get<std::string>();
                c.mdp.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
            } else if (m.contains("random")) {
                const auto& r = m.at("random");
                c.mdp.kind = "random";
                c.mdp.n_states = r.value("n_states", Eigen::Index{2});
                c.mdp.n_actions = r.value("n_actions", Eigen::Index{2});
                c.mdp.random_gamma = r.value("gamma", 0.9);
                c.mdp.random_seed = r.value("seed", std::uint64_t{0});
                c.mdp.min_prob = r.value("min_prob", 0.01);
            } else {
                throw ConfigError("mdp must name a fixture, path or random");
            }
        }
        if (j.contains("N"))
            c.n_grid = j.at("N").get<std::vector<long long>>();
        if (j.contains("T"))
            c.T = j.at("T").get<double>();
        if (j.contains("alpha"))
            c.alpha = j.at("alpha").get<double>();
        if (j.contains("seeds"))
            c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        else if (j.contains("n_seeds"))
            c.seeds = seed_range(0, j.at("n_seeds").get<std::size_t>());
        if (j.contains("h"))
            c.h = j.at("h").get<double>();
        if (j.contains("checkpoints"))
            c.checkpoints = j.at("checkpoints").get<std::vector<double>>();
        else if (j.contains("T") && (id == "critic-rate" || id == "actor-rate"))
            std::erase_if(c.checkpoints, [&](double t) { return t > c.T; });
        if (j.contains("out_dir"))
            c.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("workers"))
            c.workers = j.at("workers").get<int>();
        if (j.contains("schedule"))
            c.schedule = parse_schedule(j.at("schedule").get<std::string>());
        if (j.contains("sigma")) {
            const auto s = j.at("sigma").get<std::string>();
            if (s == "mass_one")
                c.sigma = SigmaNormalization::MassOne;
            else if (s == "unnormalized")
                c.sigma = SigmaNormalization::Unnormalized;
            else
                throw ConfigError("sigma must be \"mass_one\" or \"unnormalized\"");
        }
        if (j.contains("freeze_updates"))
            c.freeze_updates = j.at("freeze_updates").get<bool>();
        if (j.contains("q0"))
            c.q0 = j.at("q0").get<std::string>();
        if (j.contains("theta0_optimal_logit"))
            c.theta0_optimal_logit = j.at("theta0_optimal_logit").get<double>();
        if (j.contains("thresholds")) {
            auto& t = c.thresholds;
            const auto& jt = j.at("thresholds");
            t.halving = jt.value("halving", t.halving);
            t.burn_in = jt.value("burn_in", t.burn_in);
            t.gap_ratio = jt.value("gap_ratio", t.gap_ratio);
            t.mass_check_from = jt.value("mass_check_from", t.mass_check_from);
            t.decay_factor = jt.value("decay_factor", t.decay_factor);
            t.min_span = jt.value("min_span", t.min_span);
            t.converged_tol = jt.value("converged_tol", t.converged_tol);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    validate_experiment(c);
    return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path, const std::string& id_hint = "") {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    return experiment_from_json(j, id_hint, path.parent_path());
}

struct GridPoint {
    double key = 0.0; ///< N or t
    double mean = 0.0;
    double std = 0.0; ///< sample standard deviation, 0 for a single value
    std::size_t count = 0;
};

struct Verdict {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct TrendReport {
    std::string experiment;
    std::string quantity;
    std::vector<GridPoint> points;
    std::vector<std::pair<std::string, std::vector<GridPoint>>> extra;
    std::vector<Verdict> verdicts;
    std::vector<std::pair<std::string, double>> fits;

    bool passed() const {
        return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
    }
};

inline json grid_to_json(const std::vector<GridPoint>& pts) {
    json a = json::array();
    for (const auto& p : pts)
        a.push_back({{"key", p.key}, {"mean", p.mean}, {"std", p.std}, {"count", p.count}});
    return a;
}

inline json report_to_json(const TrendReport& r) {
    json j;
    j["experiment"] = r.experiment;
    j["quantity"] = r.quantity;
    j["points"] = grid_to_json(r.points);
    json extra = json::object();
    for (const auto& [name, pts] : r.extra)
        extra[name] = grid_to_json(pts);
    j["extra"] = extra;
    json fits = json::object();
    for (const auto& [name, v] : r.fits)
        fits[name] = v;
    j["fits"] = fits;
    json verdicts = json::array();
    for (const auto& v : r.verdicts)
        verdicts.push_back({{"name", v.name}, {"passed", v.passed}, {"detail", v.detail}});
    j["verdicts"] = verdicts;
    j["passed"] = r.passed();
    return j;
}

/// Mean and sample standard deviation, summed in a fixed order.
inline GridPoint summarize(double key, std::vector<double> values) {
    GridPoint g;
    g.key = key;
    g.count = values.size();
    if (values.empty())
        return g;
    std::sort(values.begin(), values.end());
    g.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - g.mean) * (v - g.mean);
        g.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return g;
}

/// Least-squares slope of y on x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    if (x.size() < 2)
        return std::nan("");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

/**
 * Evaluates fn(0..n-1) on a bounded pool of worker threads. Results land in
 * index order, so the output does not depend on scheduling.
 */
template <class R, class Fn>
std::vector<R> parallel_map(std::size_t n, int workers, Fn fn) {
    std::vector<R> out(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        }
    };
    const auto count = static_cast<std::size_t>(std::max(1, workers));
    if (count == 1 || n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(count, n); ++w)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (error)
        std::rethrow_exception(error);
    return out;
}

struct ExperimentResult {
    ExperimentConfig config;
    TrendReport report;
    std::string raw_csv;
};

namespace detail {

inline std::string pass_text(bool ok) { return ok ? "pass" : "fail"; }

/// Consecutive pairs strictly decrease, except where both values are already converged.
inline bool strictly_decreasing(const std::vector<double>& v, double tol, std::string& detail) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i)
        if (!(v[i + 1] < v[i]) && !(v[i] <= tol && v[i + 1] <= tol)) {
            detail = "increase at index " + std::to_string(i + 1) + ": " + io::fmt(v[i]) + " -> " + io::fmt(v[i + 1]);
            return false;
        }
    detail = "strictly decreasing over " + std::to_string(v.size()) + " points";
    return true;
}

inline std::size_t find_time(const std::vector<double>& ts, double t) {
    for (std::size_t i = 0; i < ts.size(); ++i)
        if (std::abs(ts[i] - t) <= 1e-9 * std::max(1.0, t))
            return i;
    throw ConfigError("checkpoint grid must contain t=" + io::fmt(t));
}

inline ThetaTable initial_theta(const MdpSpec& spec, const ExperimentConfig& c) {
    ThetaTable theta = ThetaTable::Zero(spec.n_states, spec.n_actions);
    if (c.theta0_optimal_logit != 0.0) {
        const auto opt = optimal_policy(spec);
        for (Eigen::Index x = 0; x < spec.n_states; ++x)
            theta(x, opt.actions[x]) = c.theta0_optimal_logit;
    }
    return theta;
}

inline CriticTable initial_q(const MdpSpec& spec, const ExperimentConfig& c, const ThetaTable& theta) {
    if (c.q0 == "zero")
        return CriticTable::Zero(spec.n_states, spec.n_actions);
    const auto g = exploration_policy(softmax_policy(theta), c.schedule.eta(0.0));
    return value_functions(spec, g).v_state_action;
}

inline OdeOptions ode_options(const ExperimentConfig& c) {
    OdeOptions o;
    o.alpha = c.alpha;
    o.schedule = c.schedule;
    o.sigma = c.sigma;
    return o;
}

} // namespace detail

/**
 * Distance between the online algorithm and its limit ODE. The ODE reference
 * is integrated once at step h; every (N, seed) run is compared with it at the
 * checkpoints, and the per-run value is the sup over checkpoints of
 * ||theta - theta_bar||_2 + ||Q - Q_bar||_2.
 */
inline ExperimentResult exp_ode_limit(const ExperimentConfig& c) {
    validate_experiment(c);
    const MdpSpec spec = resolve_mdp(c.mdp);
    const ThetaTable theta0 = detail::initial_theta(spec, c);
    const CriticTable q0 = detail::initial_q(spec, c, theta0);
    const auto ref = integrate(spec, theta0, q0, c.T, c.h, c.checkpoints, detail::ode_options(c));

    std::vector<std::uint64_t> seeds = c.seeds;
    std::sort(seeds.begin(), seeds.end());
    struct Task {
        long long n;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (long long n : c.n_grid)
        for (auto s : seeds)
            tasks.push_back({n, s});
    struct Err {
        double euclid = 0.0, sup = 0.0;
    };
    const auto errs = parallel_map<Err>(tasks.size(), c.workers, [&](std::size_t i) {
        AcConfig ac;
        ac.N = tasks[i].n;
        ac.T = c.T;
        ac.alpha = c.alpha;
        ac.theta0 = theta0;
        ac.q0 = q0;
        ac.seed = tasks[i].seed;
        ac.checkpoint_times = c.checkpoints;
        ac.schedule = c.schedule;
        const auto traj = run(spec, ac);
        Err e;
        for (std::size_t k = 0; k < c.checkpoints.size(); ++k) {
            const auto& o = ref.checkpoints[k].state;
            const auto& s = traj.snapshots[k];
            e.euclid = std::max(e.euclid, (s.theta - o.theta_bar).norm() + (s.q - o.q_bar).norm());
            e.sup = std::max(e.sup, std::max((s.theta - o.theta_bar).cwiseAbs().maxCoeff(),
                                             (s.q - o.q_bar).cwiseAbs().maxCoeff()));
        }
        return e;
    });

    ExperimentResult res{c, {}, "N,seed,error_euclidean,error_sup\n"};
    TrendReport& r = res.report;
    r.experiment = c.id;
    r.quantity = "sup_t ||theta - theta_bar||_2 + ||Q - Q_bar||_2";
    std::vector<GridPoint> sup_pts;
    std::vector<double> log_n, log_err;
    for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
        std::vector<double> eu, su;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const auto& e = errs[g * seeds.size() + s];
            eu.push_back(e.euclid);
            su.push_back(e.sup);
            res.raw_csv += std::to_string(c.n_grid[g]) + "," + std::to_string(seeds[s]) + "," + io::fmt(e.euclid) +
                           "," + io::fmt(e.sup) + "\n";
        }
        r.points.push_back(summarize(static_cast<double>(c.n_grid[g]), eu));
        sup_pts.push_back(summarize(static_cast<double>(c.n_grid[g]), su));
        log_n.push_back(std::log(static_cast<double>(c.n_grid[g])));
        log_err.push_back(std::log(r.points.back().mean));
    }
    r.extra.push_back({"sup_norm_error", sup_pts});
    r.fits.push_back({"slope_log_error_vs_log_N", fit_slope(log_n, log_err)});

    std::vector<double> means;
    for (const auto& p : r.points)
        means.push_back(p.mean);
    std::string detail;
    const bool dec = detail::strictly_decreasing(means, 0.0, detail);
    r.verdicts.push_back({"mean_error_strictly_decreasing", dec, detail});
    const bool half = means.back() <= c.thresholds.halving * means.front();
    r.verdicts.push_back({"final_error_at_most_fraction_of_first", half,
                          io::fmt(means.back()) + " vs " + io::fmt(c.thresholds.halving) + " * " +
                              io::fmt(means.front())});
    return res;
}

/**
 * Critic convergence along the limit ODE: ||Q_bar_t - V^{f_t}||_2 at the
 * checkpoints, required to decrease and to stay under c / log^2 t with c
 * fixed by the first checkpoint.
 */
inline ExperimentResult exp_critic_rate(const ExperimentConfig& c) {
    validate_experiment(c);
    const MdpSpec spec = resolve_mdp(c.mdp);
    const ThetaTable theta0 = detail::initial_theta(spec, c);
    const CriticTable q0 = detail::initial_q(spec, c, theta0);
    const auto traj = integrate(spec, theta0, q0, c.T, c.h, c.checkpoints, detail::ode_options(c));

    ExperimentResult res{c, {}, "t,critic_error,critic_error_exploration,bound\n"};
    TrendReport& r = res.report;
    r.experiment = c.id;
    r.quantity = "||Q_bar_t - V^{f_t}||_2";
    std::vector<double> ts, errs;
    std::vector<GridPoint> explo;
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
        const auto& cp = traj.checkpoints[i];
        ts.push_back(cp.state.t);
        errs.push_back(cp.diag.critic_error_f);
        explo.push_back(summarize(cp.state.t, {cp.diag.phi.norm()}));
        r.points.push_back(summarize(cp.state.t, {cp.diag.critic_error_f}));
    }
    const double l0 = std::log(ts.front());
    const bool log_ok = ts.front() > 1.0;
    const double c_fit = errs.front() * l0 * l0;
    bool under = log_ok;
    std::string under_detail = log_ok ? "all points under c/log^2 t" : "first checkpoint must exceed t=1";
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double l = std::log(ts[i]);
        const double bound = log_ok ? c_fit / (l * l) : std::nan("");
        res.raw_csv += io::fmt(ts[i]) + "," + io::fmt(errs[i]) + "," + io::fmt(explo[i].mean) + "," + io::fmt(bound) +
                       "\n";
        if (log_ok && !(errs[i] <= bound * (1.0 + 1e-12) || errs[i] <= c.thresholds.converged_tol)) {
            under = false;
            under_detail = "t=" + io::fmt(ts[i]) + ": " + io::fmt(errs[i]) + " > " + io::fmt(bound);
        }
    }
    r.extra.push_back({"critic_error_exploration", explo});
    r.fits.push_back({"c", c_fit});
    if (ts.size() >= 2 && log_ok) {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < ts.size(); ++i)
            if (errs[i] > 0.0) {
                x.push_back(std::log(std::log(ts[i])));
                y.push_back(std::log(errs[i]));
            }
        r.fits.push_back({"slope_log_error_vs_log_log_t", fit_slope(x, y)});
    }
    std::string detail;
    r.verdicts.push_back(
        {"critic_error_strictly_decreasing", detail::strictly_decreasing(errs, c.thresholds.converged_tol, detail),
         detail});
    r.verdicts.push_back({"dominated_by_c_over_log_squared", under, under_detail});
    return res;
}

/**
 * Actor convergence along the limit ODE: J(f*) - J(f_t) at the checkpoints
 * and the smallest probability the policy puts on an optimal action.
 */
inline ExperimentResult exp_actor_rate(const ExperimentConfig& c) {
    validate_experiment(c);
    const MdpSpec spec = resolve_mdp(c.mdp);
    if ((spec.mu.array() <= 0.0).any())
        throw ValidationError("actor-rate: mu must have full support");
    const ThetaTable theta0 = detail::initial_theta(spec, c);
    const CriticTable q0 = detail::initial_q(spec, c, theta0);
    const auto traj = integrate(spec, theta0, q0, c.T, c.h, c.checkpoints, detail::ode_options(c));
    const auto& th = c.thresholds;

    ExperimentResult res{c, {}, "t,j_gap,min_optimal_mass,grad_norm\n"};
    TrendReport& r = res.report;
    r.experiment = c.id;
    r.quantity = "J(f*) - J(f_t)";
    std::vector<double> ts, gaps, mass;
    std::vector<GridPoint> mass_pts, grad_pts;
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
        const auto& cp = traj.checkpoints[i];
        ts.push_back(cp.state.t);
        gaps.push_back(cp.diag.j_gap);
        mass.push_back(cp.diag.min_optimal_mass);
        r.points.push_back(summarize(cp.state.t, {cp.diag.j_gap}));
        mass_pts.push_back(summarize(cp.state.t, {cp.diag.min_optimal_mass}));
        grad_pts.push_back(summarize(cp.state.t, {cp.diag.grad_norm}));
        res.raw_csv += io::fmt(cp.state.t) + "," + io::fmt(cp.diag.j_gap) + "," + io::fmt(cp.diag.min_optimal_mass) +
                       "," + io::fmt(cp.diag.grad_norm) + "\n";
    }
    r.extra.push_back({"min_optimal_mass", mass_pts});
    r.extra.push_back({"grad_norm", grad_pts});

    const std::size_t ib = detail::find_time(ts, th.burn_in);
    {
        std::vector<double> x, y;
        for (std::size_t i = ib; i < ts.size(); ++i)
            if (gaps[i] > 0.0 && ts[i] > 1.0) {
                x.push_back(std::log(std::log(ts[i])));
                y.push_back(std::log(gaps[i]));
            }
        r.fits.push_back({"slope_log_gap_vs_log_log_t", fit_slope(x, y)});
    }
    std::string detail;
    const std::vector<double> tail(gaps.begin() + static_cast<std::ptrdiff_t>(ib), gaps.end());
    r.verdicts.push_back(
        {"gap_strictly_decreasing_after_burn_in", detail::strictly_decreasing(tail, th.converged_tol, detail), detail});
    const bool ratio_ok = gaps.back() <= th.gap_ratio * gaps[ib] || gaps[ib] <= th.converged_tol;
    r.verdicts.push_back({"final_gap_at_most_fraction_of_burn_in_gap", ratio_ok,
                          io::fmt(gaps.back()) + " vs " + io::fmt(th.gap_ratio) + " * " + io::fmt(gaps[ib])});
    bool mass_ok = true;
    std::string mass_detail = "min optimal-action mass stays >= " + io::fmt(mass[ib]) + " from t=" +
                              io::fmt(th.mass_check_from);
    for (std::size_t i = ib; i < ts.size(); ++i)
        if (ts[i] >= th.mass_check_from && !(mass[i] >= mass[ib] && mass[i] > 0.0)) {
            mass_ok = false;
            mass_detail = "t=" + io::fmt(ts[i]) + ": mass " + io::fmt(mass[i]) + " < " + io::fmt(mass[ib]);
            break;
        }
    r.verdicts.push_back({"optimal_action_mass_bounded_below", mass_ok, mass_detail});
    return res;
}

/// Magnitudes of the accumulated stochastic error terms per N: L1 norm of the actor term, summed L1 norms of the critic terms.
inline ExperimentResult exp_fluctuation(const ExperimentConfig& c) {
    validate_experiment(c);
    const MdpSpec spec = resolve_mdp(c.mdp);
    const ThetaTable theta0 = detail::initial_theta(spec, c);
    const CriticTable q0 = detail::initial_q(spec, c, theta0);
    std::vector<std::uint64_t> seeds = c.seeds;
    std::sort(seeds.begin(), seeds.end());
    std::vector<std::pair<long long, std::uint64_t>> tasks;
    for (long long n : c.n_grid)
        for (auto s : seeds)
            tasks.emplace_back(n, s);
    const auto mags = parallel_map<std::pair<double, double>>(tasks.size(), c.workers, [&](std::size_t i) {
        AcConfig ac;
        ac.N = tasks[i].first;
        ac.T = c.T;
        ac.alpha = c.alpha;
        ac.theta0 = theta0;
        ac.q0 = q0;
        ac.seed = tasks[i].second;
        ac.schedule = c.schedule;
        ac.freeze_updates = c.freeze_updates;
        const auto m = empirical_fluctuation(spec, ac);
        return std::pair{m.actor_magnitude(), m.critic_magnitude()};
    });

    ExperimentResult res{c, {}, "N,seed,actor,critic\n"};
    TrendReport& r = res.report;
    r.experiment = c.id;
    r.quantity = "|M_T^N| (actor, L1 over entries)";
    std::vector<GridPoint> critic_pts;
    for (std::size_t g = 0; g < c.n_grid.size(); ++g) {
        std::vector<double> a, cr;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const auto& m = mags[g * seeds.size() + s];
            a.push_back(m.first);
            cr.push_back(m.second);
            res.raw_csv += std::to_string(c.n_grid[g]) + "," + std::to_string(seeds[s]) + "," + io::fmt(m.first) + "," +
                           io::fmt(m.second) + "\n";
        }
        r.points.push_back(summarize(static_cast<double>(c.n_grid[g]), a));
        critic_pts.push_back(summarize(static_cast<double>(c.n_grid[g]), cr));
    }
    r.extra.push_back({"critic_sum_of_parts", critic_pts});
    if (c.n_grid.size() >= 2) {
        std::vector<double> x, y;
        for (const auto& p : r.points)
            if (p.mean > 0.0) {
                x.push_back(std::log(p.key));
                y.push_back(std::log(p.mean));
            }
        r.fits.push_back({"slope_log_actor_vs_log_N", fit_slope(x, y)});
    }
    const auto& th = c.thresholds;
    const double span = static_cast<double>(c.n_grid.back()) / static_cast<double>(c.n_grid.front());
    r.verdicts.push_back({"grid_span", span >= th.min_span,
                          "N_max / N_min = " + io::fmt(span) + ", need >= " + io::fmt(th.min_span)});
    auto decay = [&](const std::vector<GridPoint>& pts, const char* name) {
        const double lo = pts.front().mean, hi = pts.back().mean;
        const bool ok = hi * th.decay_factor <= lo || (lo <= th.converged_tol && hi <= th.converged_tol);
        r.verdicts.push_back({name, ok, io::fmt(lo) + " -> " + io::fmt(hi) + ", need factor " +
                                            io::fmt(th.decay_factor)});
    };
    decay(r.points, "actor_decay");
    decay(critic_pts, "critic_decay");
    return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    if (c.id == "ode-limit")
        return exp_ode_limit(c);
    if (c.id == "critic-rate")
        return exp_critic_rate(c);
    if (c.id == "actor-rate")
        return exp_actor_rate(c);
    if (c.id == "fluctuation")
        return exp_fluctuation(c);
    throw ConfigError("unknown experiment \"" + c.id + "\"");
}

/// Writes config.json, raw.csv and report.json into the configured output directory.
inline void write_outputs(const ExperimentResult& res) {
    const auto& dir = res.config.out_dir;
    std::filesystem::create_directories(dir);
    io::write_file(dir / "config.json", experiment_to_json(res.config).dump(2) + "\n");
    io::write_file(dir / "raw.csv", res.raw_csv);
    io::write_file(dir / "report.json", report_to_json(res.report).dump(2) + "\n");
}

} // namespace aclab::exp
