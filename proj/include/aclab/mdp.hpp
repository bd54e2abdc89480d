#pragma once

#include "aclab/rng.hpp"
#include "aclab/tables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace aclab {

/// Tolerance on probability simplex constraints.
inline constexpr double kSimplexTol = 1e-9;

/**
 * Finite discounted MDP (X, A, p, mu, r, gamma).
 *
 * Transitions are stored as a (n_states * n_actions) x n_states matrix whose
 * row xi = x * n_actions + a is the law p(. | x, a).
 */
struct MdpSpec {
    Eigen::Index n_states = 0;
    Eigen::Index n_actions = 0;
    Matrix p;
    Vector mu;
    Table r;
    double gamma = 0.0;

    Eigen::Index n_pairs() const { return n_states * n_actions; }
    double prob(Eigen::Index x, Eigen::Index a, Eigen::Index next) const {
        return p(x * n_actions + a, next);
    }
    double& prob(Eigen::Index x, Eigen::Index a, Eigen::Index next) {
        return p(x * n_actions + a, next);
    }
};

struct Violation {
    std::string message;
    double magnitude = 0.0;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace detail

/// Lists every broken MdpSpec invariant; never throws.
inline ValidationReport validate_mdp(const MdpSpec& spec) {
    ValidationReport out;
    auto add = [&](std::string msg, double mag) { out.push_back({std::move(msg), mag}); };

    if (spec.n_states < 1)
        add("n_states must be positive", static_cast<double>(spec.n_states));
    if (spec.n_actions < 1)
        add("n_actions must be positive", static_cast<double>(spec.n_actions));
    if (!out.empty())
        return out;

    const bool shape_ok = spec.p.rows() == spec.n_pairs() && spec.p.cols() == spec.n_states &&
                          spec.mu.size() == spec.n_states && spec.r.rows() == spec.n_states &&
                          spec.r.cols() == spec.n_actions;
    if (!shape_ok) {
        add("array shapes do not match n_states/n_actions", 0.0);
        return out;
    }

    for (Eigen::Index x = 0; x < spec.n_states; ++x) {
        for (Eigen::Index a = 0; a < spec.n_actions; ++a) {
            const std::string at = "(" + std::to_string(x) + "," + std::to_string(a) + ")";
            const auto row = spec.p.row(x * spec.n_actions + a);
            double sum = 0.0;
            for (Eigen::Index y = 0; y < spec.n_states; ++y) {
                const double v = row(y);
                if (!std::isfinite(v) || v < 0.0)
                    add("negative or non-finite probability at " + at + " -> " + std::to_string(y), v);
                sum += v;
            }
            if (!(std::abs(sum - 1.0) <= kSimplexTol))
                add("row " + at + " sums to " + detail::fmt_num(sum), sum);

            const double rew = spec.r(x, a);
            if (!(rew >= 0.0 && rew <= 1.0))
                add("reward out of [0,1] at " + at, rew);
        }
    }

    double mu_sum = 0.0;
    for (Eigen::Index x = 0; x < spec.n_states; ++x) {
        const double v = spec.mu(x);
        if (!std::isfinite(v) || v < 0.0)
            add("negative or non-finite initial probability at " + std::to_string(x), v);
        mu_sum += v;
    }
    if (!(std::abs(mu_sum - 1.0) <= kSimplexTol))
        add("mu sums to " + detail::fmt_num(mu_sum), mu_sum);

    if (!(spec.gamma > 0.0 && spec.gamma < 1.0))
        add("gamma outside (0,1)", spec.gamma);
    return out;
}

inline std::string describe(const ValidationReport& report) {
    std::string s;
    for (const auto& v : report) {
        if (!s.empty())
            s += "; ";
        s += v.message;
    }
    return s;
}

inline void require_valid(const MdpSpec& spec) {
    auto report = validate_mdp(spec);
    if (!report.empty())
        throw ValidationError("invalid MDP: " + describe(report));
}

/// Validates, then rescales each distribution to sum exactly to one.
inline MdpSpec normalized(MdpSpec spec) {
    require_valid(spec);
    for (Eigen::Index i = 0; i < spec.p.rows(); ++i)
        spec.p.row(i) /= spec.p.row(i).sum();
    spec.mu /= spec.mu.sum();
    return spec;
}

/// p~(x'|x,a) = gamma p(x'|x,a) + (1 - gamma) mu(x'), same layout as MdpSpec::p.
inline Matrix restart_kernel(const MdpSpec& spec) {
    require_valid(spec);
    Matrix out = spec.gamma * spec.p;
    out.rowwise() += (1.0 - spec.gamma) * spec.mu.transpose();
    return out;
}

enum class KernelKind {
    OriginalWithExploration, ///< p(x'|x,a) g(x',a')
    RestartWithPolicy,       ///< p~(x'|x,a) f(x',a')
};

inline const char* to_string(KernelKind k) {
    return k == KernelKind::OriginalWithExploration ? "original-with-g" : "restart-with-f";
}

/// Markov kernel on state-action pairs in xi order.
struct StateActionKernel {
    Matrix matrix;
    KernelKind kind = KernelKind::OriginalWithExploration;

    Eigen::Index size() const { return matrix.rows(); }
};

/// Builds K(xi, xi') = kernel(x'|x,a) policy(x',a') for the chosen construction.
inline StateActionKernel joint_kernel(const MdpSpec& spec, const PolicyTable& policy,
                                      KernelKind kind) {
    if (policy.n_states() != spec.n_states || policy.n_actions() != spec.n_actions)
        throw std::invalid_argument("joint_kernel: policy shape does not match the MDP");
    const Matrix state_kernel = kind == KernelKind::RestartWithPolicy ? restart_kernel(spec) : spec.p;
    const Eigen::Index nA = spec.n_actions;
    StateActionKernel k{Matrix(spec.n_pairs(), spec.n_pairs()), kind};
    for (Eigen::Index i = 0; i < spec.n_pairs(); ++i)
        for (Eigen::Index y = 0; y < spec.n_states; ++y)
            for (Eigen::Index b = 0; b < nA; ++b)
                k.matrix(i, y * nA + b) = state_kernel(i, y) * policy(y, b);
    return k;
}

/// State-to-state kernel P_f(x,x') = sum_a f(x,a) p(x'|x,a).
inline Matrix state_kernel(const MdpSpec& spec, const PolicyTable& f) {
    Matrix out = Matrix::Zero(spec.n_states, spec.n_states);
    for (Eigen::Index x = 0; x < spec.n_states; ++x)
        for (Eigen::Index a = 0; a < spec.n_actions; ++a)
            out.row(x) += f(x, a) * spec.p.row(x * spec.n_actions + a);
    return out;
}

struct ErgodicityReport {
    bool irreducible = false;
    bool aperiodic = false;
    int period = 1;
    int n_communicating_classes = 0;
};

/**
 * Graph check on the support of a stochastic matrix. Irreducibility is strong
 * connectivity; the period is the gcd of level differences along edges of a
 * BFS tree, computed inside the class of node 0.
 */
inline ErgodicityReport check_ergodicity(const Matrix& kernel) {
    const int n = static_cast<int>(kernel.rows());
    std::vector<std::vector<int>> out(n), in(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (kernel(i, j) > 0.0) {
                out[i].push_back(j);
                in[j].push_back(i);
            }

    // Kosaraju: finishing order on the graph, then components on the reverse.
    std::vector<int> order;
    std::vector<char> seen(n, 0);
    for (int s = 0; s < n; ++s) {
        if (seen[s])
            continue;
        std::vector<std::pair<int, std::size_t>> stack{{s, 0}};
        seen[s] = 1;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            if (next < out[v].size()) {
                const int w = out[v][next++];
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.emplace_back(w, 0);
                }
            } else {
                order.push_back(v);
                stack.pop_back();
            }
        }
    }
    std::vector<int> comp(n, -1);
    int n_comp = 0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (comp[*it] >= 0)
            continue;
        std::vector<int> stack{*it};
        comp[*it] = n_comp;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : in[v])
                if (comp[w] < 0) {
                    comp[w] = n_comp;
                    stack.push_back(w);
                }
        }
        ++n_comp;
    }

    ErgodicityReport rep;
    rep.n_communicating_classes = n_comp;
    rep.irreducible = n > 0 && n_comp == 1;
    if (n == 0)
        return rep;

    const int root_comp = comp[0];
    std::vector<int> level(n, -1);
    std::vector<int> queue{0};
    level[0] = 0;
    int g = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const int v = queue[qi];
        for (int w : out[v]) {
            if (comp[w] != root_comp)
                continue;
            if (level[w] < 0) {
                level[w] = level[v] + 1;
                queue.push_back(w);
            } else {
                g = std::gcd(g, std::abs(level[v] + 1 - level[w]));
            }
        }
    }
    // g == 0 means no cycle through the class (a transient singleton).
    rep.period = g == 0 ? 0 : g;
    rep.aperiodic = rep.period == 1;
    return rep;
}

inline ErgodicityReport check_ergodicity(const StateActionKernel& kernel) {
    return check_ergodicity(kernel.matrix);
}

/**
 * Random MDP: each transition row is a flat Dirichlet draw floored at
 * min_prob and renormalized, rewards are uniform on [0,1], mu is uniform.
 */
inline MdpSpec random_mdp(Eigen::Index n_states, Eigen::Index n_actions, double gamma,
                          std::uint64_t seed, double min_prob = 0.0) {
    if (n_states < 1 || n_actions < 1)
        throw std::invalid_argument("random_mdp: n_states and n_actions must be positive");
    if (!(min_prob >= 0.0 && min_prob <= 1.0 / static_cast<double>(n_states)))
        throw std::invalid_argument("random_mdp: min_prob must lie in [0, 1/n_states]");
    if (!(gamma > 0.0 && gamma < 1.0))
        throw std::invalid_argument("random_mdp: gamma must lie in (0,1)");

    CounterRng rng(seed, 0x6d6470);
    MdpSpec spec;
    spec.n_states = n_states;
    spec.n_actions = n_actions;
    spec.gamma = gamma;
    spec.p.resize(n_states * n_actions, n_states);
    spec.r.resize(n_states, n_actions);
    for (Eigen::Index i = 0; i < spec.p.rows(); ++i) {
        for (Eigen::Index y = 0; y < n_states; ++y)
            spec.p(i, y) = rng.exponential();
        spec.p.row(i) /= spec.p.row(i).sum();
        for (Eigen::Index y = 0; y < n_states; ++y)
            spec.p(i, y) = std::max(spec.p(i, y), min_prob);
        spec.p.row(i) /= spec.p.row(i).sum();
    }
    for (Eigen::Index x = 0; x < n_states; ++x)
        for (Eigen::Index a = 0; a < n_actions; ++a)
            spec.r(x, a) = rng.uniform();
    spec.mu = Vector::Constant(n_states, 1.0 / static_cast<double>(n_states));
    return spec;
}

namespace fixtures {

/**
 * Two states, two actions. Action 0 stays with probability 0.9, action 1
 * switches with probability 0.9. Reward 1 in state 1, gamma 0.9, uniform mu.
 */
inline MdpSpec chainmdp(double gamma = 0.9) {
    MdpSpec s;
    s.n_states = 2;
    s.n_actions = 2;
    s.gamma = gamma;
    s.p.resize(4, 2);
    for (Eigen::Index x = 0; x < 2; ++x) {
        const Eigen::Index other = 1 - x;
        s.prob(x, 0, x) = 0.9;
        s.prob(x, 0, other) = 0.1;
        s.prob(x, 1, other) = 0.9;
        s.prob(x, 1, x) = 0.1;
    }
    s.r.resize(2, 2);
    s.r << 0.0, 0.0, 1.0, 1.0;
    s.mu = Vector::Constant(2, 0.5);
    return s;
}

/// One state, one action, reward r.
inline MdpSpec single_state(double reward = 0.5, double gamma = 0.5) {
    MdpSpec s;
    s.n_states = 1;
    s.n_actions = 1;
    s.gamma = gamma;
    s.p = Matrix::Ones(1, 1);
    s.mu = Vector::Ones(1);
    s.r = Table::Constant(1, 1, reward);
    return s;
}

/// chainmdp dynamics with a constant reward, so every policy is optimal.
inline MdpSpec constant_reward(double c = 0.5, double gamma = 0.9) {
    MdpSpec s = chainmdp(gamma);
    s.r.setConstant(c);
    return s;
}

} // namespace fixtures

} // namespace aclab
