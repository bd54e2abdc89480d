#pragma once

#include "aclab/mdp.hpp"
#include "aclab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace aclab {

namespace detail {

inline Vector lu_solve(const Matrix& a, const Vector& b) {
    Eigen::PartialPivLU<Matrix> lu(a);
    Vector x = lu.solve(b);
    if (!x.allFinite())
        throw NumericalError("linear solve produced non-finite values");
    return x;
}

inline void require_ergodic(const Matrix& kernel, const char* who) {
    const auto rep = check_ergodicity(kernel);
    if (!rep.irreducible || !rep.aperiodic)
        throw NumericalError(std::string(who) + ": kernel is not irreducible and aperiodic (classes=" +
                             std::to_string(rep.n_communicating_classes) +
                             ", period=" + std::to_string(rep.period) + ")");
}

inline void require_policy_shape(const MdpSpec& spec, const PolicyTable& f) {
    if (f.n_states() != spec.n_states || f.n_actions() != spec.n_actions)
        throw std::invalid_argument("policy shape does not match the MDP");
}

} // namespace detail

/// Unique invariant law of an ergodic kernel. One balance equation is
/// replaced by the normalization row and the system is solved by LU.
inline Vector stationary_distribution(const Matrix& kernel) {
    detail::require_ergodic(kernel, "stationary_distribution");
    const Eigen::Index n = kernel.rows();
    Matrix a = kernel.transpose() - Matrix::Identity(n, n);
    a.row(n - 1).setOnes();
    Vector b = Vector::Zero(n);
    b(n - 1) = 1.0;
    return detail::lu_solve(a, b);
}

inline Vector stationary_distribution(const StateActionKernel& kernel) {
    return stationary_distribution(kernel.matrix);
}

/// Discounted occupancy measures. nu and sigma carry total mass 1/(1-gamma),
/// sigma_normalized = (1-gamma) sigma has mass one.
struct VisitingMeasures {
    Vector nu;
    Table sigma;
    Table sigma_normalized;
};

/// Occupancy measures from an arbitrary initial law over states.
inline VisitingMeasures visiting_measures(const MdpSpec& spec, const PolicyTable& f, const Vector& initial) {
    detail::require_policy_shape(spec, f);
    const Matrix pf = state_kernel(spec, f);
    const Eigen::Index n = spec.n_states;
    VisitingMeasures vm;
    vm.nu = detail::lu_solve(Matrix::Identity(n, n) - spec.gamma * pf.transpose(), initial);
    vm.sigma = f.probs.array().colwise() * vm.nu.array();
    vm.sigma_normalized = (1.0 - spec.gamma) * vm.sigma;
    return vm;
}

inline VisitingMeasures visiting_measures(const MdpSpec& spec, const PolicyTable& f) {
    require_valid(spec);
    return visiting_measures(spec, f, spec.mu);
}

struct ValuePair {
    Vector v_state;
    Table v_state_action;
};

/// Exact V^f(x) and V^f(x,a) by solving (I - gamma P_f) V = r_f.
inline ValuePair value_functions(const MdpSpec& spec, const PolicyTable& f) {
    require_valid(spec);
    detail::require_policy_shape(spec, f);
    const Eigen::Index n = spec.n_states;
    const Matrix pf = state_kernel(spec, f);
    const Vector rf = (f.probs.array() * spec.r.array()).rowwise().sum();
    ValuePair vp;
    vp.v_state = detail::lu_solve(Matrix::Identity(n, n) - spec.gamma * pf, rf);
    const Vector next = spec.p * vp.v_state;
    vp.v_state_action = spec.r + spec.gamma * unflatten(next, n, spec.n_actions);
    return vp;
}

/// J(f) = sum_x mu(x) V^f(x).
inline double objective(const MdpSpec& spec, const PolicyTable& f) {
    return spec.mu.dot(value_functions(spec, f).v_state);
}

/// A(x,a) = V(x,a) - V(x).
inline Table advantage(const ValuePair& vp) {
    return vp.v_state_action.colwise() - vp.v_state;
}

/// Sup-norm residual of the action-value Bellman equation under policy f.
inline double bellman_residual(const MdpSpec& spec, const PolicyTable& f, const Table& q) {
    const Vector vq = (q.array() * f.probs.array()).rowwise().sum();
    const Table target = spec.r + spec.gamma * unflatten(spec.p * vq, spec.n_states, spec.n_actions);
    return (target - q).cwiseAbs().maxCoeff();
}

/// Exact gradient of J(softmax(theta)): sigma(x,a) A(x,a), sigma unnormalized.
inline Table policy_gradient(const MdpSpec& spec, const ThetaTable& theta) {
    const PolicyTable f = softmax_policy(theta);
    const auto vm = visiting_measures(spec, f);
    const auto vp = value_functions(spec, f);
    return vm.sigma.array() * advantage(vp).array();
}

struct PerformanceDifference {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// V^f(x0) - V^f2(x0) against sum sigma_{x0}^f(x,a) A^f2(x,a).
inline PerformanceDifference performance_difference(const MdpSpec& spec, const PolicyTable& f,
                                                    const PolicyTable& f2, Eigen::Index x0) {
    if (x0 < 0 || x0 >= spec.n_states)
        throw std::out_of_range("performance_difference: x0 out of range");
    const auto vp = value_functions(spec, f);
    const auto vp2 = value_functions(spec, f2);
    const auto vm = visiting_measures(spec, f, Vector::Unit(spec.n_states, x0));
    return {vp.v_state(x0) - vp2.v_state(x0), (vm.sigma.array() * advantage(vp2).array()).sum()};
}

/// Tie tolerance for greedy action sets.
inline constexpr double kGreedyTieTol = 1e-9;

struct OptimalPolicy {
    PolicyTable f_star;
    std::vector<Eigen::Index> actions;
    double j_star = 0.0;
    Vector v_star;
};

/// Greedy deterministic policy, lowest index among actions within tol of the row max.
inline std::vector<Eigen::Index> greedy_actions(const Table& q, double tol = kGreedyTieTol) {
    std::vector<Eigen::Index> out(q.rows());
    for (Eigen::Index x = 0; x < q.rows(); ++x) {
        const double m = q.row(x).maxCoeff();
        Eigen::Index a = 0;
        while (q(x, a) < m - tol)
            ++a;
        out[x] = a;
    }
    return out;
}

inline PolicyTable deterministic_policy(const std::vector<Eigen::Index>& actions, Eigen::Index n_actions) {
    PolicyTable f{Table::Zero(static_cast<Eigen::Index>(actions.size()), n_actions)};
    for (std::size_t x = 0; x < actions.size(); ++x)
        f.probs(static_cast<Eigen::Index>(x), actions[x]) = 1.0;
    return f;
}

/**
 * Policy iteration from the all-zeros policy. An action is switched only on
 * strict improvement beyond the tie tolerance, so the result is the
 * lowest-index greedy policy of the optimal value.
 */
inline OptimalPolicy optimal_policy(const MdpSpec& spec) {
    require_valid(spec);
    std::vector<Eigen::Index> actions(spec.n_states, 0);
    for (int iter = 0; iter < 10000; ++iter) {
        const auto vp = value_functions(spec, deterministic_policy(actions, spec.n_actions));
        bool changed = false;
        for (Eigen::Index x = 0; x < spec.n_states; ++x) {
            const auto& q = vp.v_state_action;
            Eigen::Index best = actions[x];
            for (Eigen::Index a = 0; a < spec.n_actions; ++a)
                if (q(x, a) > q(x, best) + kGreedyTieTol)
                    best = a;
            if (best != actions[x]) {
                actions[x] = best;
                changed = true;
            }
        }
        if (!changed)
            break;
    }
    // canonical lowest-index tie-breaking at the fixed point
    const auto vp = value_functions(spec, deterministic_policy(actions, spec.n_actions));
    OptimalPolicy out;
    out.actions = greedy_actions(vp.v_state_action);
    out.f_star = deterministic_policy(out.actions, spec.n_actions);
    out.v_star = value_functions(spec, out.f_star).v_state;
    out.j_star = spec.mu.dot(out.v_star);
    return out;
}

struct LojasiewiczReport {
    double grad_norm = 0.0;
    double rhs_unique = 0.0;
    double rhs_general = 0.0;
    double distribution_mismatch = 0.0; ///< || nu^{f*} / nu^{f_theta} ||_inf
    double min_optimal_mass = 0.0;      ///< min_x f_theta(x, a*(x))
    double min_greedy_mass = 0.0;       ///< min_x sum over greedy set of f_theta
    double gap = 0.0;                   ///< J(f*) - J(f_theta)

    bool holds(double rel_tol = 1e-10) const {
        const double slack = rel_tol * std::max(1.0, grad_norm) + 1e-14;
        return grad_norm + slack >= rhs_unique && grad_norm + slack >= rhs_general;
    }
};

/// Both sides of the non-uniform Lojasiewicz inequalities at theta.
inline LojasiewiczReport lojasiewicz_bounds(const MdpSpec& spec, const ThetaTable& theta,
                                            const PolicyTable& f_star) {
    require_valid(spec);
    if ((spec.mu.array() <= 0.0).any())
        throw std::invalid_argument("lojasiewicz_bounds: mu must have full support");
    const PolicyTable f = softmax_policy(theta);
    const auto vm = visiting_measures(spec, f);
    const auto vm_star = visiting_measures(spec, f_star);
    const auto vp = value_functions(spec, f);
    const Table grad = vm.sigma.array() * advantage(vp).array();

    LojasiewiczReport rep;
    rep.grad_norm = grad.norm();
    rep.distribution_mismatch = (vm_star.nu.array() / vm.nu.array()).maxCoeff();
    rep.gap = std::max(0.0, objective(spec, f_star) - spec.mu.dot(vp.v_state));

    double min_opt = std::numeric_limits<double>::infinity();
    double min_greedy = std::numeric_limits<double>::infinity();
    for (Eigen::Index x = 0; x < spec.n_states; ++x) {
        Eigen::Index a_star = 0;
        f_star.probs.row(x).maxCoeff(&a_star);
        min_opt = std::min(min_opt, f(x, a_star));
        const double m = vp.v_state_action.row(x).maxCoeff();
        double mass = 0.0;
        for (Eigen::Index a = 0; a < spec.n_actions; ++a)
            if (vp.v_state_action(x, a) >= m - kGreedyTieTol)
                mass += f(x, a);
        min_greedy = std::min(min_greedy, mass);
    }
    rep.min_optimal_mass = min_opt;
    rep.min_greedy_mass = min_greedy;
    const double ns = static_cast<double>(spec.n_states);
    const double na = static_cast<double>(spec.n_actions);
    rep.rhs_unique = min_opt * rep.gap / (std::sqrt(ns) * rep.distribution_mismatch);
    rep.rhs_general = min_greedy * rep.gap / (std::sqrt(ns * na) * rep.distribution_mismatch);
    return rep;
}

/**
 * Solution of the Poisson equation nu - K nu = 1{. = xi} - pi(xi) with
 * pi^T nu = 0, via the fundamental matrix system (I - K + 1 pi^T) nu = rhs.
 */
inline Vector poisson_solution(const Matrix& kernel, const Vector& pi, Eigen::Index xi) {
    detail::require_ergodic(kernel, "poisson_solution");
    const Eigen::Index n = kernel.rows();
    if (pi.size() != n || xi < 0 || xi >= n)
        throw std::invalid_argument("poisson_solution: dimension mismatch");
    const Matrix a = Matrix::Identity(n, n) - kernel + Vector::Ones(n) * pi.transpose();
    Vector rhs = Vector::Constant(n, -pi(xi));
    rhs(xi) += 1.0;
    return detail::lu_solve(a, rhs);
}

inline Vector poisson_solution(const StateActionKernel& kernel, const Vector& pi, Eigen::Index xi) {
    return poisson_solution(kernel.matrix, pi, xi);
}

/// Sup-norm residual of the Poisson equation for target xi.
inline double poisson_residual(const Matrix& kernel, const Vector& pi, Eigen::Index xi, const Vector& nu) {
    Vector rhs = Vector::Constant(pi.size(), -pi(xi));
    rhs(xi) += 1.0;
    return (nu - kernel * nu - rhs).cwiseAbs().maxCoeff();
}

struct MixingProfile {
    std::vector<double> distance; ///< d(n) for n = 0..n_max
    double rate = 0.0;            ///< fitted geometric rate rho, 0 if nothing to fit
    double log_constant = 0.0;    ///< fitted log C in d(n) ~ C rho^n
    double r_squared = 1.0;
    int fit_points = 0;
    double min_stationary = 0.0;
};

struct MixingFitWindow {
    double d_min = 1e-12;
    double d_max = 1e-2;
    int n_min = 0;
    int n_max = std::numeric_limits<int>::max();
};

/// Worst-case total variation to stationarity per step count, with a
/// least-squares fit of log d(n) on n over the window.
inline MixingProfile mixing_profile(const Matrix& kernel, int n_max, const MixingFitWindow& window = {}) {
    const Vector pi = stationary_distribution(kernel);
    const Eigen::Index n = kernel.rows();
    MixingProfile prof;
    prof.min_stationary = pi.minCoeff();
    Matrix power = Matrix::Identity(n, n);
    for (int step = 0; step <= n_max; ++step) {
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            worst = std::max(worst, 0.5 * (power.row(i).transpose() - pi).cwiseAbs().sum());
        prof.distance.push_back(worst);
        power = power * kernel;
    }

    std::vector<double> xs, ys;
    for (int step = std::max(0, window.n_min); step <= std::min(n_max, window.n_max); ++step) {
        const double d = prof.distance[step];
        if (d >= window.d_min && d <= window.d_max) {
            xs.push_back(step);
            ys.push_back(std::log(d));
        }
    }
    prof.fit_points = static_cast<int>(xs.size());
    if (xs.size() >= 2) {
        const double k = static_cast<double>(xs.size());
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            mx += xs[i] / k;
            my += ys[i] / k;
        }
        double sxx = 0, sxy = 0, syy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - mx) * (xs[i] - mx);
            sxy += (xs[i] - mx) * (ys[i] - my);
            syy += (ys[i] - my) * (ys[i] - my);
        }
        const double slope = sxy / sxx;
        prof.rate = std::exp(slope);
        prof.log_constant = my - slope * mx;
        prof.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    }
    return prof;
}

inline MixingProfile mixing_profile(const StateActionKernel& kernel, int n_max, const MixingFitWindow& window = {}) {
    return mixing_profile(kernel.matrix, n_max, window);
}

} // namespace aclab
