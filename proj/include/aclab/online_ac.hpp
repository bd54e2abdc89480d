#pragma once

#include "aclab/exact.hpp"
#include "aclab/mdp.hpp"
#include "aclab/policy.hpp"
#include "aclab/rng.hpp"
#include "aclab/schedule.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace aclab {

/// Number of algorithm steps covering rescaled time t, floor(N t).
/// The small offset absorbs products like 0.29 * 100 = 28.999999999999996.
inline long long steps_for(long long n, double t) {
    return static_cast<long long>(std::floor(static_cast<double>(n) * t + 1e-9));
}

struct AcConfig {
    long long N = 1000; ///< time-rescaling parameter: step size 1/N, floor(N T) steps
    double T = 1.0;
    double alpha = 1.0; ///< critic rate multiplier
    ThetaTable theta0;
    CriticTable q0;
    std::uint64_t seed = 0;
    std::uint64_t run_id = 0;
    std::vector<double> checkpoint_times;
    RateSchedule schedule = RateSchedule::standard();
    /// Chains evolve but theta and Q are never updated.
    bool freeze_updates = false;
};

/// Zero-initialized actor/critic tables for an MDP.
inline AcConfig default_config(const MdpSpec& spec) {
    AcConfig c;
    c.theta0 = ThetaTable::Zero(spec.n_states, spec.n_actions);
    c.q0 = CriticTable::Zero(spec.n_states, spec.n_actions);
    return c;
}

inline void validate_config(const MdpSpec& spec, const AcConfig& c) {
    if (c.N < 1)
        throw ValidationError("AcConfig: N must be at least 1");
    if (!(c.T >= 0.0) || !std::isfinite(c.T))
        throw ValidationError("AcConfig: T must be finite and nonnegative");
    if (!(c.alpha >= 0.0))
        throw ValidationError("AcConfig: alpha must be nonnegative");
    if (c.theta0.rows() != spec.n_states || c.theta0.cols() != spec.n_actions || !c.theta0.allFinite())
        throw ValidationError("AcConfig: theta0 shape or values invalid");
    if (c.q0.rows() != spec.n_states || c.q0.cols() != spec.n_actions || !c.q0.allFinite())
        throw ValidationError("AcConfig: q0 shape or values invalid");
    double prev = -1.0;
    for (double t : c.checkpoint_times) {
        if (t < 0.0 || t > c.T || t < prev)
            throw ValidationError("AcConfig: checkpoint times must be sorted within [0,T]");
        prev = t;
    }
}

/// Full state of one stochastic run.
struct AcRunState {
    long long k = 0;
    ThetaTable theta;
    CriticTable q;
    Eigen::Index x = 0;  ///< critic chain state x_k
    Eigen::Index a = 0;  ///< critic chain action a_k
    Eigen::Index xt = 0; ///< actor chain state x~_k
    Eigen::Index at = 0; ///< actor chain action a~_k
    CounterRng rng;

    friend bool operator==(const AcRunState& l, const AcRunState& r) {
        return l.k == r.k && l.theta == r.theta && l.q == r.q && l.x == r.x && l.a == r.a && l.xt == r.xt &&
               l.at == r.at && l.rng == r.rng;
    }
};

namespace detail {

inline Eigen::Index draw(CounterRng& rng, const Eigen::RowVectorXd& probs) {
    return static_cast<Eigen::Index>(rng.categorical(std::span<const double>(probs.data(), probs.size())));
}

inline Eigen::RowVectorXd policy_row(const ThetaTable& theta, Eigen::Index x) {
    Eigen::RowVectorXd row(theta.cols());
    softmax_row(theta, x, row);
    return row;
}

inline Eigen::RowVectorXd explore_row(const Eigen::RowVectorXd& f_row, double eta) {
    return (1.0 - eta) * f_row.array() + eta / static_cast<double>(f_row.size());
}

inline Eigen::RowVectorXd restart_row(const MdpSpec& spec, Eigen::Index x, Eigen::Index a) {
    return spec.gamma * spec.p.row(x * spec.n_actions + a) + (1.0 - spec.gamma) * spec.mu.transpose();
}

} // namespace detail

/// x_0 ~ mu, a_0 ~ g_0(x_0, .), x~_0 ~ mu, a~_0 ~ f_0(x~_0, .).
inline AcRunState init_run(const MdpSpec& spec, const AcConfig& config) {
    require_valid(spec);
    validate_config(spec, config);
    AcRunState s;
    s.theta = config.theta0;
    s.q = config.q0;
    s.rng = CounterRng(config.seed, config.run_id);
    const Eigen::RowVectorXd mu = spec.mu.transpose();
    const double eta0 = config.schedule.eta(0LL, config.N);
    s.x = detail::draw(s.rng, mu);
    s.a = detail::draw(s.rng, detail::explore_row(detail::policy_row(s.theta, s.x), eta0));
    s.xt = detail::draw(s.rng, mu);
    s.at = detail::draw(s.rng, detail::policy_row(s.theta, s.xt));
    return s;
}

/**
 * One actor-critic update in place.
 *
 * Critic: TD update of entry (x_k, a_k) with the exploration policy g_k.
 * Actor: score-function update of row x~_k weighted by Q_k(x~_k, a~_k).
 * Next actions are drawn from g_{k+1} and f_{k+1}, i.e. after the update.
 */
inline void advance(AcRunState& s, const MdpSpec& spec, const AcConfig& config) {
    if (s.k >= steps_for(config.N, config.T))
        throw std::out_of_range("step: horizon exhausted");
    const double n = static_cast<double>(config.N);
    const double zeta = config.schedule.zeta(s.k, config.N);
    const double eta = config.schedule.eta(s.k, config.N);

    const Eigen::Index x_next = detail::draw(s.rng, spec.p.row(s.x * spec.n_actions + s.a));
    const Eigen::Index xt_next = detail::draw(s.rng, detail::restart_row(spec, s.xt, s.at));

    if (!config.freeze_updates) {
        const Eigen::RowVectorXd g_next = detail::explore_row(detail::policy_row(s.theta, x_next), eta);
        const Eigen::RowVectorXd f_actor = detail::policy_row(s.theta, s.xt);
        const double q_actor = s.q(s.xt, s.at); // Q_k, read before the critic write
        const double td = spec.r(s.x, s.a) + spec.gamma * s.q.row(x_next).dot(g_next) - s.q(s.x, s.a);
        s.q(s.x, s.a) += config.alpha / n * td;

        const double scale = zeta / n * q_actor;
        for (Eigen::Index b = 0; b < spec.n_actions; ++b)
            s.theta(s.xt, b) += scale * ((b == s.at ? 1.0 : 0.0) - f_actor(b));
    }

    s.x = x_next;
    s.xt = xt_next;
    ++s.k;
    const double eta_next = config.schedule.eta(s.k, config.N);
    s.a = detail::draw(s.rng, detail::explore_row(detail::policy_row(s.theta, s.x), eta_next));
    s.at = detail::draw(s.rng, detail::policy_row(s.theta, s.xt));
}

inline AcRunState step(AcRunState state, const MdpSpec& spec, const AcConfig& config) {
    advance(state, spec, config);
    return state;
}

struct Snapshot {
    double t = 0.0;
    long long k = 0;
    ThetaTable theta;
    CriticTable q;
};

struct RunTrajectory {
    std::vector<Snapshot> snapshots;
    long long total_steps = 0;
    double max_q_sup = 0.0; ///< max over k of ||Q_k||_inf
};

/// Runs floor(N T) steps, recording (theta, Q) after step floor(N t_c) for each checkpoint.
inline RunTrajectory run(const MdpSpec& spec, const AcConfig& config) {
    AcRunState s = init_run(spec, config);
    RunTrajectory traj;
    traj.total_steps = steps_for(config.N, config.T);
    traj.max_q_sup = s.q.cwiseAbs().maxCoeff();
    std::size_t next_cp = 0;
    auto record = [&] {
        while (next_cp < config.checkpoint_times.size() &&
               steps_for(config.N, config.checkpoint_times[next_cp]) == s.k) {
            traj.snapshots.push_back({config.checkpoint_times[next_cp], s.k, s.theta, s.q});
            ++next_cp;
        }
    };
    record();
    while (s.k < traj.total_steps) {
        advance(s, spec, config);
        traj.max_q_sup = std::max(traj.max_q_sup, s.q.cwiseAbs().maxCoeff());
        record();
    }
    return traj;
}

/// Accumulated stochastic error terms at time T: the actor term and the three critic terms.
struct FluctuationResult {
    Table actor;
    std::array<Table, 3> critic;

    double actor_magnitude() const { return actor.cwiseAbs().sum(); }
    double critic_magnitude() const {
        return critic[0].cwiseAbs().sum() + critic[1].cwiseAbs().sum() + critic[2].cwiseAbs().sum();
    }
};

inline constexpr Eigen::Index kFluctuationMaxPairs = 64;

/**
 * Runs the algorithm while accumulating (1/N) sum_k [sample term - expected term]
 * for each stochastic error term. Expectations use the current policies:
 * the mass-one occupancy measure of f_k for the actor and the stationary
 * law of the exploration chain under g_k for the critic.
 */
inline FluctuationResult empirical_fluctuation(const MdpSpec& spec, const AcConfig& config) {
    if (spec.n_pairs() > kFluctuationMaxPairs)
        throw ValidationError("empirical_fluctuation: n_states * n_actions exceeds " +
                              std::to_string(kFluctuationMaxPairs));
    AcRunState s = init_run(spec, config);
    const Eigen::Index nS = spec.n_states, nA = spec.n_actions;
    const double n = static_cast<double>(config.N);
    FluctuationResult out{Table::Zero(nS, nA), {Table::Zero(nS, nA), Table::Zero(nS, nA), Table::Zero(nS, nA)}};
    const long long total = steps_for(config.N, config.T);

    while (s.k < total) {
        const double zeta = config.schedule.zeta(s.k, config.N);
        const double eta = config.schedule.eta(s.k, config.N);
        const PolicyTable f = softmax_policy(s.theta);
        const PolicyTable g = exploration_policy(f, eta);
        const Table sigma = visiting_measures(spec, f).sigma_normalized;
        const Table pi = unflatten(
            stationary_distribution(joint_kernel(spec, g, KernelKind::OriginalWithExploration)), nS, nA);
        const CriticTable q = s.q;
        const Eigen::Index x = s.x, a = s.a, xt = s.xt, at = s.at;

        advance(s, spec, config);
        const Eigen::Index x_next = s.x;

        // actor: zeta Q(xi~) d log f(xi~) against zeta sigma(x,a) [Q(x,a) - sum_a' Q(x,a') f(x,a')]
        const Vector q_bar = (q.array() * f.probs.array()).rowwise().sum();
        Table expected_actor = sigma.array() * (q.colwise() - q_bar).array();
        Table sample_actor = Table::Zero(nS, nA);
        sample_actor.row(xt) = -q(xt, at) * f.probs.row(xt);
        sample_actor(xt, at) += q(xt, at);
        out.actor += zeta / n * (sample_actor - expected_actor);

        // critic terms
        const Vector q_g = (q.array() * g.probs.array()).rowwise().sum();
        const Table next_value = unflatten(spec.p * q_g, nS, nA);
        out.critic[0] += (q.array() * pi.array()).matrix() / n;
        out.critic[0](x, a) -= q(x, a) / n;
        out.critic[1] -= (spec.r.array() * pi.array()).matrix() / n;
        out.critic[1](x, a) += spec.r(x, a) / n;
        out.critic[2] -= spec.gamma * (next_value.array() * pi.array()).matrix() / n;
        out.critic[2](x, a) += spec.gamma * q_g(x_next) / n;
    }
    return out;
}

} // namespace aclab
