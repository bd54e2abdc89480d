#pragma once

#include "aclab/exact.hpp"
#include "aclab/io.hpp"
#include "aclab/limit_ode.hpp"
#include "aclab/online_ac.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace aclab::verify {

/// A named check run on fixtures plus instances derived from seed.
struct Property {
    std::string name;
    std::string description;
    std::function<PropertyResult(std::uint64_t seed)> check;
};

namespace detail {

inline ThetaTable random_theta(Eigen::Index n_states, Eigen::Index n_actions, CounterRng& rng, double scale) {
    ThetaTable t(n_states, n_actions);
    for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
    return t;
}

/// chainmdp plus seeded random instances of varying shape and discount.
inline std::vector<MdpSpec> instances(std::uint64_t seed, int n_random) {
    std::vector<MdpSpec> out{fixtures::chainmdp()};
    for (int i = 0; i < n_random; ++i)
        out.push_back(random_mdp(2 + i % 3, 2 + (i / 3) % 2, 0.5 + 0.4 * (i % 5) / 4.0, seed * 1000 + i, 0.01));
    return out;
}

/// Tracks the worst value of a measured error against a tolerance.
struct Worst {
    double value = 0.0;
    std::string where;
    void update(double v, const std::string& w) {
        if (!(v <= value)) {
            value = v;
            where = w;
        }
    }
};

inline PropertyResult finish(const std::string& name, const Worst& w, double tol, int cases) {
    const bool ok = w.value <= tol;
    return {name, ok, w.value,
            std::to_string(cases) + " cases, worst " + io::fmt(w.value) + (w.where.empty() ? "" : " at " + w.where) +
                ", tol " + io::fmt(tol)};
}

inline double log_softmax(const ThetaTable& theta, Eigen::Index x, Eigen::Index a) {
    const double m = theta.row(x).maxCoeff();
    return theta(x, a) - m - std::log((theta.row(x).array() - m).exp().sum());
}

/// Central difference of a scalar function of a table, entrywise.
inline Table central_difference(const std::function<double(const Table&)>& fn, const Table& at, double step) {
    Table grad(at.rows(), at.cols());
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        Table plus = at, minus = at;
        plus.data()[i] += step;
        minus.data()[i] -= step;
        grad.data()[i] = (fn(plus) - fn(minus)) / (2.0 * step);
    }
    return grad;
}

} // namespace detail

inline PropertyResult check_softmax_gradient(std::uint64_t seed) {
    CounterRng rng(seed, 0x736f66);
    detail::Worst w;
    int cases = 0;
    for (auto [ns, na] : {std::pair<Eigen::Index, Eigen::Index>{2, 2}, {3, 4}, {4, 3}}) {
        const ThetaTable theta = detail::random_theta(ns, na, rng, 2.0);
        for (Eigen::Index x = 0; x < ns; ++x)
            for (Eigen::Index a = 0; a < na; ++a) {
                const Table fd = detail::central_difference(
                    [&](const Table& t) { return detail::log_softmax(t, x, a); }, theta, 1e-5);
                w.update((log_policy_gradient(theta, x, a) - fd).cwiseAbs().maxCoeff(),
                         "(" + std::to_string(x) + "," + std::to_string(a) + ")");
                ++cases;
            }
    }
    return detail::finish("softmax_log_gradient", w, 1e-8, cases);
}

/// Analytic policy gradient against central differences of J, relative to the gradient size.
inline PropertyResult check_policy_gradient(std::uint64_t seed) {
    CounterRng rng(seed, 0x706766);
    detail::Worst w;
    const auto specs = detail::instances(seed, 19);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const ThetaTable theta = detail::random_theta(spec.n_states, spec.n_actions, rng, 2.0);
        const Table g = policy_gradient(spec, theta);
        const Table fd = detail::central_difference(
            [&](const Table& t) { return objective(spec, softmax_policy(t)); }, theta, 1e-5);
        const double scale = std::max(g.cwiseAbs().maxCoeff(), 1e-3);
        w.update((g - fd).cwiseAbs().maxCoeff() / scale, "instance " + std::to_string(i));
    }
    return detail::finish("policy_gradient_finite_difference", w, 1e-6, static_cast<int>(specs.size()));
}

inline PropertyResult check_bellman_residual(std::uint64_t seed) {
    CounterRng rng(seed, 0x62656c);
    detail::Worst w;
    const auto specs = detail::instances(seed, 19);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const PolicyTable f = softmax_policy(detail::random_theta(spec.n_states, spec.n_actions, rng, 3.0));
        w.update(bellman_residual(spec, f, value_functions(spec, f).v_state_action), "instance " + std::to_string(i));
    }
    return detail::finish("bellman_residual", w, 1e-10, static_cast<int>(specs.size()));
}

inline PropertyResult check_poisson(std::uint64_t seed, KernelKind kind) {
    CounterRng rng(seed, kind == KernelKind::RestartWithPolicy ? 0x706f72 : 0x706f6f);
    detail::Worst w;
    int cases = 0;
    const auto specs = detail::instances(seed, 9);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        PolicyTable f = softmax_policy(detail::random_theta(spec.n_states, spec.n_actions, rng, 2.0));
        if (kind == KernelKind::OriginalWithExploration)
            f = exploration_policy(f, 0.3);
        const auto k = joint_kernel(spec, f, kind);
        const Vector pi = stationary_distribution(k);
        for (Eigen::Index xi = 0; xi < k.size(); ++xi) {
            w.update(poisson_residual(k.matrix, pi, xi, poisson_solution(k, pi, xi)),
                     "instance " + std::to_string(i) + " xi " + std::to_string(xi));
            ++cases;
        }
    }
    return detail::finish(kind == KernelKind::RestartWithPolicy ? "poisson_residual_restart_kernel"
                                                                : "poisson_residual_original_kernel",
                          w, 1e-10, cases);
}

inline PropertyResult check_performance_difference(std::uint64_t seed) {
    CounterRng rng(seed, 0x706466);
    detail::Worst w;
    int cases = 0;
    const auto specs = detail::instances(seed, 9);
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (int rep = 0; rep < 3; ++rep) {
            const auto& spec = specs[i];
            const PolicyTable f = softmax_policy(detail::random_theta(spec.n_states, spec.n_actions, rng, 3.0));
            const PolicyTable f2 = softmax_policy(detail::random_theta(spec.n_states, spec.n_actions, rng, 3.0));
            const auto x0 = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(spec.n_states));
            const auto pd = performance_difference(spec, f, f2, x0);
            w.update(std::abs(pd.lhs - pd.rhs), "instance " + std::to_string(i));
            ++cases;
        }
    return detail::finish("performance_difference", w, 1e-8, cases);
}

/// Stationary law of the restart chain with policy f equals (1 - gamma) sigma_mu^f.
inline PropertyResult check_restart_stationarity(std::uint64_t seed) {
    CounterRng rng(seed, 0x6b6f6e);
    detail::Worst w;
    const auto specs = detail::instances(seed, 19);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const PolicyTable f = softmax_policy(detail::random_theta(spec.n_states, spec.n_actions, rng, 2.0));
        const Vector pi = stationary_distribution(joint_kernel(spec, f, KernelKind::RestartWithPolicy));
        const Vector expected = (1.0 - spec.gamma) * flatten(visiting_measures(spec, f).sigma);
        w.update((pi - expected).cwiseAbs().maxCoeff(), "instance " + std::to_string(i));
    }
    return detail::finish("restart_chain_stationarity", w, 1e-8, static_cast<int>(specs.size()));
}

/// Both non-uniform Lojasiewicz inequalities at 100 random parameters.
inline PropertyResult check_lojasiewicz(std::uint64_t seed) {
    CounterRng rng(seed, 0x6c6f6a);
    const auto specs = detail::instances(seed, 4);
    int held = 0, total = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int draw = 0; draw < 100; ++draw) {
        const auto& spec = specs[static_cast<std::size_t>(draw) % specs.size()];
        const auto opt = optimal_policy(spec);
        const double scale = 1.0 + 4.0 * rng.uniform();
        const auto rep = lojasiewicz_bounds(spec, detail::random_theta(spec.n_states, spec.n_actions, rng, scale),
                                            opt.f_star);
        ++total;
        if (rep.holds())
            ++held;
        worst = std::max(worst, std::max(rep.rhs_unique, rep.rhs_general) - rep.grad_norm);
    }
    return {"lojasiewicz_inequality", held == total, static_cast<double>(held),
            std::to_string(held) + "/" + std::to_string(total) + " hold, worst rhs - lhs " + io::fmt(worst)};
}

inline PropertyResult check_rate_schedule(std::uint64_t) {
    const auto rep = check_rate_properties(RateSchedule::standard(), 1e6, {1, 2, 4});
    std::string detail;
    int passed = 0;
    for (const auto& r : rep.results) {
        detail += r.name + (r.passed ? " ok; " : " FAIL; ");
        passed += r.passed ? 1 : 0;
    }
    return {"rate_schedule_properties", rep.all_passed(), static_cast<double>(passed), detail};
}

/// Limit ODE from Q = 0 keeps every critic entry within 2 ||r||_inf / (1 - gamma).
inline PropertyResult check_critic_bound(std::uint64_t seed) {
    detail::Worst w;
    const auto specs = detail::instances(seed, 4);
    CounterRng rng(seed, 0x637262);
    std::vector<double> times;
    for (int i = 0; i <= 400; ++i)
        times.push_back(0.5 * i);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        const double bound = 2.0 * std::max(1.0, spec.r.cwiseAbs().maxCoeff()) / (1.0 - spec.gamma);
        const auto traj = integrate(spec, detail::random_theta(spec.n_states, spec.n_actions, rng, 2.0),
                                    CriticTable::Zero(spec.n_states, spec.n_actions), 200.0, 0.05, times, {});
        for (const auto& cp : traj.checkpoints)
            w.update(cp.state.q_bar.cwiseAbs().maxCoeff() / bound,
                     "instance " + std::to_string(i) + " t=" + io::fmt(cp.state.t));
    }
    return detail::finish("critic_uniform_bound", w, 1.0, static_cast<int>(specs.size()));
}

/**
 * Per-step increments of an online run: |dQ|_inf <= (alpha/N)(||r||_inf + (1+gamma)||Q_k||_inf)
 * and ||d theta||_1 <= (2 zeta_k / N)||Q_k||_inf, at every step.
 */
inline PropertyResult check_ac_increments(const MdpSpec& spec, const AcConfig& c) {
    auto s = init_run(spec, c);
    const double n = static_cast<double>(c.N);
    const double r_sup = spec.r.cwiseAbs().maxCoeff();
    const long long total = steps_for(c.N, c.T);
    double worst = -std::numeric_limits<double>::infinity();
    long long worst_k = -1;
    while (s.k < total) {
        const double q_sup = s.q.cwiseAbs().maxCoeff();
        const Table q_prev = s.q;
        const Table theta_prev = s.theta;
        const long long k = s.k;
        advance(s, spec, c);
        const double critic_ratio = (s.q - q_prev).cwiseAbs().maxCoeff() /
                                    (c.alpha / n * (r_sup + (1.0 + spec.gamma) * q_sup) + 1e-300);
        const double actor_cap = 2.0 * c.schedule.zeta(k, c.N) / n * q_sup;
        const double actor_excess = (s.theta - theta_prev).cwiseAbs().sum() - actor_cap;
        const double actor_rel = actor_cap > 0.0 ? actor_excess / actor_cap
                                 : actor_excess > 0.0 ? std::numeric_limits<double>::infinity()
                                                      : -1.0;
        const double excess = std::max(critic_ratio - 1.0, actor_rel);
        if (excess > worst) {
            worst = excess;
            worst_k = k;
        }
    }
    const bool ok = worst <= 1e-12;
    return {"ac_increment_bounds", ok, worst,
            std::to_string(total) + " steps, worst relative excess " + io::fmt(worst) + " at step " +
                std::to_string(worst_k)};
}

inline PropertyResult check_ac_increments(std::uint64_t seed) {
    const auto spec = fixtures::chainmdp();
    AcConfig c = default_config(spec);
    c.N = 1000;
    c.T = 100.0;
    c.seed = seed;
    return check_ac_increments(spec, c);
}

inline const std::vector<Property>& registry() {
    static const std::vector<Property> props{
        {"softmax_log_gradient", "grad log f_theta against central differences", check_softmax_gradient},
        {"policy_gradient_finite_difference", "exact policy gradient against central differences of J",
         check_policy_gradient},
        {"bellman_residual", "V^f solves the Bellman equation", check_bellman_residual},
        {"poisson_residual_original_kernel", "Poisson solution residual, original kernel with exploration",
         [](std::uint64_t s) { return check_poisson(s, KernelKind::OriginalWithExploration); }},
        {"poisson_residual_restart_kernel", "Poisson solution residual, restart kernel with policy",
         [](std::uint64_t s) { return check_poisson(s, KernelKind::RestartWithPolicy); }},
        {"performance_difference", "performance difference identity", check_performance_difference},
        {"restart_chain_stationarity", "restart chain stationary law equals (1-gamma) sigma",
         check_restart_stationarity},
        {"lojasiewicz_inequality", "non-uniform Lojasiewicz bounds on random parameters", check_lojasiewicz},
        {"rate_schedule_properties", "integrability and ratio properties of the default rates", check_rate_schedule},
        {"critic_uniform_bound", "limit ODE critic stays within 2/(1-gamma)", check_critic_bound},
        {"ac_increment_bounds", "per-step actor and critic increment bounds on a 1e5-step run",
         [](std::uint64_t s) { return check_ac_increments(s); }},
    };
    return props;
}

/// Runs every property whose name contains filter.
inline PropertyReport run_properties(const std::string& filter = "", std::uint64_t seed = 0) {
    PropertyReport rep;
    for (const auto& p : registry())
        if (filter.empty() || p.name.find(filter) != std::string::npos)
            rep.results.push_back(p.check(seed));
    return rep;
}

} // namespace aclab::verify
