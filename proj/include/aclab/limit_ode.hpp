#pragma once

#include "aclab/exact.hpp"
#include "aclab/mdp.hpp"
#include "aclab/policy.hpp"
#include "aclab/schedule.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aclab {

struct OdeState {
    double t = 0.0;
    ThetaTable theta_bar;
    CriticTable q_bar;
};

/// Which occupancy measure weights the actor drift.
enum class SigmaNormalization {
    MassOne,     ///< (1 - gamma) sigma, the stationary law of the restart chain
    Unnormalized ///< sigma with total mass 1/(1 - gamma)
};

struct OdeOptions {
    double alpha = 1.0;
    RateSchedule schedule = RateSchedule::standard();
    SigmaNormalization sigma = SigmaNormalization::MassOne;
    /// Abort when any table entry exceeds this magnitude.
    double blowup = 1e6;
};

struct OdeDerivative {
    Table d_theta;
    Table d_q;
};

/// Right-hand side of the limit system at (t, theta_bar, q_bar).
inline OdeDerivative ode_rhs(double t, const OdeState& state, const MdpSpec& spec, const OdeOptions& opt) {
    if (!(t >= 0.0))
        throw std::invalid_argument("ode_rhs: t must be nonnegative");
    const Eigen::Index nS = spec.n_states, nA = spec.n_actions;
    const PolicyTable f = softmax_policy(state.theta_bar);
    const PolicyTable g = exploration_policy(f, opt.schedule.eta(t));
    const Table pi_g =
        unflatten(stationary_distribution(joint_kernel(spec, g, KernelKind::OriginalWithExploration)), nS, nA);
    const auto vm = visiting_measures(spec, f);
    const Table& sigma = opt.sigma == SigmaNormalization::MassOne ? vm.sigma_normalized : vm.sigma;

    const Table& q = state.q_bar;
    const Vector q_g = (q.array() * g.probs.array()).rowwise().sum();
    const Table bracket_q = spec.r + spec.gamma * unflatten(spec.p * q_g, nS, nA) - q;
    const Vector q_f = (q.array() * f.probs.array()).rowwise().sum();
    const Table bracket_theta = q.colwise() - q_f;

    OdeDerivative d;
    d.d_q = opt.alpha * (pi_g.array() * bracket_q.array()).matrix();
    d.d_theta = opt.schedule.zeta(t) * (sigma.array() * bracket_theta.array()).matrix();
    return d;
}

/// One classical RK4 step of size h.
inline OdeState rk4_step(const OdeState& s, double h, const MdpSpec& spec, const OdeOptions& opt) {
    auto shifted = [&](const OdeDerivative& d, double c) {
        return OdeState{s.t + c * h, s.theta_bar + c * h * d.d_theta, s.q_bar + c * h * d.d_q};
    };
    const OdeDerivative k1 = ode_rhs(s.t, s, spec, opt);
    const OdeDerivative k2 = ode_rhs(s.t + 0.5 * h, shifted(k1, 0.5), spec, opt);
    const OdeDerivative k3 = ode_rhs(s.t + 0.5 * h, shifted(k2, 0.5), spec, opt);
    const OdeDerivative k4 = ode_rhs(s.t + h, shifted(k3, 1.0), spec, opt);
    OdeState out;
    out.t = s.t + h;
    out.theta_bar = s.theta_bar + h / 6.0 * (k1.d_theta + 2.0 * k2.d_theta + 2.0 * k3.d_theta + k4.d_theta);
    out.q_bar = s.q_bar + h / 6.0 * (k1.d_q + 2.0 * k2.d_q + 2.0 * k3.d_q + k4.d_q);
    return out;
}

struct CriticError {
    Table phi;
    double y = 0.0;
};

/// phi = Q_bar - V^{g}(x,a) at the current exploration policy, Y = phi.phi / 2.
inline CriticError critic_error(const OdeState& state, const MdpSpec& spec, const RateSchedule& schedule) {
    const PolicyTable g = exploration_policy(softmax_policy(state.theta_bar), schedule.eta(state.t));
    CriticError e;
    e.phi = state.q_bar - value_functions(spec, g).v_state_action;
    e.y = 0.5 * e.phi.squaredNorm();
    return e;
}

struct OdeDiagnostics {
    Table phi;
    double y = 0.0;
    double objective = 0.0;
    double j_gap = 0.0;            ///< J(f*) - J(f_theta_bar)
    double grad_norm = 0.0;        ///< || grad J(f_theta_bar) ||_2
    double critic_error_f = 0.0;   ///< || Q_bar - V^{f_theta_bar}(.,.) ||_2
    double min_optimal_mass = 0.0; ///< min_x f_theta_bar(x, a*(x))
};

struct OdeCheckpoint {
    OdeState state;
    OdeDiagnostics diag;
};

struct OdeTrajectory {
    std::vector<OdeCheckpoint> checkpoints;
    long long steps = 0;
};

inline OdeDiagnostics diagnose(const OdeState& s, const MdpSpec& spec, const RateSchedule& schedule,
                               const OptimalPolicy& opt_policy) {
    OdeDiagnostics d;
    const auto ce = critic_error(s, spec, schedule);
    d.phi = ce.phi;
    d.y = ce.y;
    const PolicyTable f = softmax_policy(s.theta_bar);
    const auto vp = value_functions(spec, f);
    d.objective = spec.mu.dot(vp.v_state);
    d.j_gap = opt_policy.j_star - d.objective;
    d.grad_norm = policy_gradient(spec, s.theta_bar).norm();
    d.critic_error_f = (s.q_bar - vp.v_state_action).norm();
    double m = 1.0;
    for (Eigen::Index x = 0; x < spec.n_states; ++x)
        m = std::min(m, f(x, opt_policy.actions[x]));
    d.min_optimal_mass = m;
    return d;
}

/**
 * Fixed-step RK4 from t = 0 to T. Each interval between consecutive
 * checkpoints is covered by steps of size h with the last one shortened,
 * so checkpoints are hit exactly. Diagnostics are computed from the state
 * at each checkpoint, never integrated.
 */
inline OdeTrajectory integrate(const MdpSpec& spec, const ThetaTable& theta0, const CriticTable& q0, double T,
                               double h, std::vector<double> checkpoints, const OdeOptions& opt = {}) {
    require_valid(spec);
    if (!(h > 0.0))
        throw std::invalid_argument("integrate: h must be positive");
    if (!(T >= 0.0))
        throw std::invalid_argument("integrate: T must be nonnegative");
    if (theta0.rows() != spec.n_states || theta0.cols() != spec.n_actions || q0.rows() != spec.n_states ||
        q0.cols() != spec.n_actions)
        throw std::invalid_argument("integrate: initial tables do not match the MDP");
    for (std::size_t i = 0; i < checkpoints.size(); ++i)
        if (checkpoints[i] < 0.0 || checkpoints[i] > T || (i > 0 && checkpoints[i] < checkpoints[i - 1]))
            throw std::invalid_argument("integrate: checkpoints must be sorted within [0,T]");

    const OptimalPolicy opt_policy = optimal_policy(spec);
    OdeTrajectory traj;
    OdeState s{0.0, theta0, q0};
    auto guard = [&] {
        const double m = std::max(s.theta_bar.cwiseAbs().maxCoeff(), s.q_bar.cwiseAbs().maxCoeff());
        if (!(m <= opt.blowup))
            throw NumericalError("integrate: state magnitude " + std::to_string(m) + " exceeds blow-up guard at t=" +
                                 std::to_string(s.t));
    };
    auto advance_to = [&](double target) {
        const double span = target - s.t;
        if (span <= 0.0)
            return;
        const long long n = std::max(1LL, static_cast<long long>(std::ceil(span / h - 1e-9)));
        const double t_start = s.t;
        for (long long i = 0; i < n; ++i) {
            const double next = i + 1 == n ? target : t_start + static_cast<double>(i + 1) * h;
            s = rk4_step(s, next - s.t, spec, opt);
            s.t = next;
            ++traj.steps;
            guard();
        }
    };
    for (double cp : checkpoints) {
        advance_to(cp);
        traj.checkpoints.push_back({s, diagnose(s, spec, opt.schedule, opt_policy)});
    }
    advance_to(T);
    if (checkpoints.empty() || checkpoints.back() < T)
        traj.checkpoints.push_back({s, diagnose(s, spec, opt.schedule, opt_policy)});
    return traj;
}

/// n points log-spaced from lo to hi inclusive.
inline std::vector<double> log_spaced(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i)
        out.push_back(lo * std::pow(hi / lo, n == 1 ? 1.0 : static_cast<double>(i) / (n - 1)));
    out.back() = hi;
    return out;
}

struct ScalarSample {
    double t = 0.0;
    double z = 0.0;
    double x = 0.0; ///< z * log t
};

namespace detail {

/// RK4 on y' = fn(s, y) over [s0, s1], step limited by ds_max and by
/// stiffness(s) so the explicit scheme stays inside its stability region.
inline double rk4_scalar(const std::function<double(double, double)>& fn,
                         const std::function<double(double, double)>& stiffness, double s0, double s1, double y,
                         double ds_max) {
    double s = s0;
    while (s < s1) {
        const double lam = std::abs(stiffness(s, y));
        double ds = std::min(ds_max, lam > 0.0 ? 1.0 / lam : ds_max);
        if (s + ds > s1)
            ds = s1 - s;
        const double k1 = fn(s, y);
        const double k2 = fn(s + ds / 2, y + ds / 2 * k1);
        const double k3 = fn(s + ds / 2, y + ds / 2 * k2);
        const double k4 = fn(s + ds, y + ds * k3);
        y += ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        s += ds;
    }
    return y;
}

inline void check_samples(double t0, const std::vector<double>& sample_times) {
    for (std::size_t i = 0; i < sample_times.size(); ++i)
        if (sample_times[i] < t0 || (i > 0 && sample_times[i] < sample_times[i - 1]))
            throw std::invalid_argument("comparison ODE: sample times must be sorted and >= t0");
}

} // namespace detail

/**
 * dZ/dt = -C Z / log^{2 n0}(t) + 1/t from Z(t0) = y0, integrated in s = log t.
 */
inline std::vector<ScalarSample> comparison_ode_critic(double c, int n0, double t0, double y0,
                                                       const std::vector<double>& sample_times) {
    if (!(t0 >= 2.0))
        throw std::invalid_argument("comparison_ode_critic: t0 must be at least 2");
    if (!(c >= 0.0) || n0 < 0)
        throw std::invalid_argument("comparison_ode_critic: C and n0 must be nonnegative");
    detail::check_samples(t0, sample_times);
    auto rate = [&](double s) { return c * std::exp(s) / std::pow(s, 2 * n0); };
    auto fn = [&](double s, double z) { return -rate(s) * z + 1.0; };
    auto stiff = [&](double s, double) { return rate(s); };
    std::vector<ScalarSample> out;
    double s = std::log(t0), z = y0;
    for (double t : sample_times) {
        const double target = std::log(t);
        z = detail::rk4_scalar(fn, stiff, s, target, z, 1e-2);
        s = target;
        if (z < 0.0)
            throw NumericalError("comparison_ode_critic: Z became negative");
        out.push_back({t, z, z * s});
    }
    return out;
}

/// Positive fixed point of X' = (X - C X^2 + C) / (t log t); the golden ratio for C = 1.
inline double actor_comparison_fixed_point(double c) {
    return (1.0 + std::sqrt(1.0 + 4.0 * c * c)) / (2.0 * c);
}

/**
 * dZ/dt = -(C/t) Z^2 + C / (t log^2 t) from Z(t0) = z0. Integrated through
 * X = Z log t, which in s = log t obeys dX/ds = (X - C X^2 + C) / s, so X
 * stays below max(X_{t0}, fixed point).
 */
inline std::vector<ScalarSample> comparison_ode_actor(double c, double t0, double z0,
                                                      const std::vector<double>& sample_times) {
    if (!(t0 >= 2.0))
        throw std::invalid_argument("comparison_ode_actor: t0 must be at least 2");
    if (!(c > 0.0) || !(z0 >= 0.0))
        throw std::invalid_argument("comparison_ode_actor: need C > 0 and z0 >= 0");
    detail::check_samples(t0, sample_times);
    auto fn = [&](double s, double x) { return (x - c * x * x + c) / s; };
    auto stiff = [&](double s, double x) { return (1.0 - 2.0 * c * x) / s; };
    double s = std::log(t0), x = z0 * s;
    const double bound = std::max(x, actor_comparison_fixed_point(c)) + 1e-9;
    std::vector<ScalarSample> out;
    for (double t : sample_times) {
        const double target = std::log(t);
        x = detail::rk4_scalar(fn, stiff, s, target, x, 1e-2);
        s = target;
        if (x < 0.0 || x > bound)
            throw NumericalError("comparison_ode_actor: X_t = " + std::to_string(x) + " left [0, " +
                                 std::to_string(bound) + "]");
        out.push_back({t, x / s, x});
    }
    return out;
}

} // namespace aclab
