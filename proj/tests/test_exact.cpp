#include "aclab/exact.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>

using namespace aclab;

namespace {

PolicyTable uniform_policy(Eigen::Index ns, Eigen::Index na) {
    return {Table::Constant(ns, na, 1.0 / static_cast<double>(na))};
}

/// chainmdp optimal actions: switch out of state 0, stay in state 1.
ThetaTable chain_near_optimal_theta(double logit) {
    ThetaTable t = ThetaTable::Zero(2, 2);
    t(0, 1) = logit;
    t(1, 0) = logit;
    return t;
}

} // namespace

TEST(Stationary, DoublyStochasticIsUniform) {
    Matrix k(3, 3);
    k << 0.2, 0.5, 0.3, 0.5, 0.1, 0.4, 0.3, 0.4, 0.3;
    const Vector pi = stationary_distribution(k);
    for (Eigen::Index i = 0; i < 3; ++i)
        EXPECT_NEAR(pi(i), 1.0 / 3.0, 1e-14);
}

TEST(Stationary, TwoStateArithmetic) {
    Matrix k(2, 2);
    k << 0.9, 0.1, 0.2, 0.8;
    const Vector pi = stationary_distribution(k);
    EXPECT_NEAR(pi(0), 2.0 / 3.0, 1e-14);
    EXPECT_NEAR(pi(1), 1.0 / 3.0, 1e-14);
}

TEST(Stationary, ChainRestartUniformMatchesNeumann) {
    const auto spec = fixtures::chainmdp();
    const auto f = uniform_policy(2, 2);
    const Vector pi = stationary_distribution(joint_kernel(spec, f, KernelKind::RestartWithPolicy));
    const Vector nu = oracle::neumann_occupancy(spec, f, spec.mu);
    for (Eigen::Index x = 0; x < 2; ++x)
        for (Eigen::Index a = 0; a < 2; ++a)
            EXPECT_NEAR(pi(x * 2 + a), (1.0 - spec.gamma) * f(x, a) * nu(x), 1e-8);
}

TEST(Stationary, ResidualAndKondaIdentityOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto spec = random_mdp(4, 3, 0.85, seed, 0.0);
        const auto f = softmax_policy(oracle::random_theta(4, 3, seed + 100));
        const auto k = joint_kernel(spec, f, KernelKind::RestartWithPolicy);
        const Vector pi = stationary_distribution(k);
        EXPECT_LE((pi.transpose() * k.matrix - pi.transpose()).cwiseAbs().maxCoeff(), 1e-10);
        const Table sn = visiting_measures(spec, f).sigma_normalized;
        EXPECT_LE((unflatten(pi, 4, 3) - sn).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Stationary, PeriodicKernelThrows) {
    Matrix k(2, 2);
    k << 0, 1, 1, 0;
    EXPECT_THROW(stationary_distribution(k), NumericalError);
    EXPECT_THROW(stationary_distribution(Matrix::Identity(2, 2)), NumericalError);
}

TEST(VisitingMeasures, SingleStateGeometric) {
    const auto vm = visiting_measures(fixtures::single_state(0.5, 0.5), uniform_policy(1, 1));
    EXPECT_NEAR(vm.nu(0), 2.0, 1e-15);
    EXPECT_NEAR(vm.sigma_normalized(0, 0), 1.0, 1e-15);
}

TEST(VisitingMeasures, MassIdentity) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto spec = random_mdp(5, 2, 0.93, seed);
        const auto f = softmax_policy(oracle::random_theta(5, 2, seed));
        const auto vm = visiting_measures(spec, f);
        EXPECT_NEAR(vm.sigma.sum(), 1.0 / (1.0 - spec.gamma), 1e-8);
        EXPECT_NEAR(vm.nu.sum(), 1.0 / (1.0 - spec.gamma), 1e-8);
        EXPECT_NEAR(vm.sigma_normalized.sum(), 1.0, 1e-10);
    }
}

TEST(VisitingMeasures, ChainMatchesTruncatedSeries) {
    const auto spec = fixtures::chainmdp();
    const auto f = uniform_policy(2, 2);
    // tail after 400 terms is 0.9^401 / 0.1, about 4.5e-18
    const Vector oracle_nu = oracle::truncated_occupancy(spec, f, 400);
    const auto vm = visiting_measures(spec, f);
    EXPECT_LE((vm.nu - oracle_nu).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ValueFunctions, SingleState) {
    const auto vp = value_functions(fixtures::single_state(0.5, 0.5), uniform_policy(1, 1));
    EXPECT_NEAR(vp.v_state(0), 1.0, 1e-15);
    EXPECT_NEAR(vp.v_state_action(0, 0), 1.0, 1e-15);
}

TEST(ValueFunctions, DefinitionalIdentityAndBellmanResidual) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto spec = random_mdp(6, 3, 0.95, seed);
        const auto f = softmax_policy(oracle::random_theta(6, 3, seed));
        const auto vp = value_functions(spec, f);
        const Vector avg = (vp.v_state_action.array() * f.probs.array()).rowwise().sum();
        EXPECT_LE((avg - vp.v_state).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE(bellman_residual(spec, f, vp.v_state_action), 1e-10);
        EXPECT_TRUE((vp.v_state.array() >= -1e-12).all());
        EXPECT_TRUE((vp.v_state.array() <= 1.0 / (1.0 - spec.gamma) + 1e-12).all());
        EXPECT_LE((vp.v_state - oracle::iterate_values(spec, f)).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ValueFunctions, ChainMatchesMonteCarlo) {
    const auto spec = fixtures::chainmdp();
    const auto f = uniform_policy(2, 2);
    const auto vp = value_functions(spec, f);
    const auto mc = oracle::rollout_value(spec, f, spec.mu, 1000000, 17);
    EXPECT_LE(std::abs(mc.mean - objective(spec, f)), 3.0 * mc.std_error);
    for (Eigen::Index x = 0; x < 2; ++x) {
        const auto mcx = oracle::rollout_value(spec, f, Vector::Unit(2, x), 200000, 18 + x);
        EXPECT_LE(std::abs(mcx.mean - vp.v_state(x)), 3.0 * mcx.std_error);
    }
}

TEST(Objective, SingleState) {
    EXPECT_NEAR(objective(fixtures::single_state(0.5, 0.5), uniform_policy(1, 1)), 1.0, 1e-15);
}

TEST(Objective, RelabelingInvariance) {
    const auto spec = random_mdp(3, 2, 0.9, 5);
    const auto f = softmax_policy(oracle::random_theta(3, 2, 5));
    const std::array<Eigen::Index, 3> perm{2, 0, 1}; // new label of old state i
    MdpSpec s2 = spec;
    PolicyTable f2 = f;
    for (Eigen::Index x = 0; x < 3; ++x) {
        s2.mu(perm[x]) = spec.mu(x);
        for (Eigen::Index a = 0; a < 2; ++a) {
            s2.r(perm[x], a) = spec.r(x, a);
            f2.probs(perm[x], a) = f(x, a);
            for (Eigen::Index y = 0; y < 3; ++y)
                s2.prob(perm[x], a, perm[y]) = spec.prob(x, a, y);
        }
    }
    EXPECT_NEAR(objective(spec, f), objective(s2, f2), 1e-12);
}

TEST(Objective, Bounds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto spec = random_mdp(4, 2, 0.9, seed);
        const double j = objective(spec, softmax_policy(oracle::random_theta(4, 2, seed)));
        EXPECT_GE(j, 0.0);
        EXPECT_LE(j, 1.0 / (1.0 - spec.gamma));
    }
}

TEST(Advantage, ConstantRewardIsZero) {
    const auto spec = fixtures::constant_reward(0.3);
    const auto a = advantage(value_functions(spec, softmax_policy(oracle::random_theta(2, 2, 1))));
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Advantage, PolicyWeightedRowsVanish) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto spec = random_mdp(4, 3, 0.9, seed);
        const auto f = softmax_policy(oracle::random_theta(4, 3, seed));
        const auto a = advantage(value_functions(spec, f));
        EXPECT_LE((a.array() * f.probs.array()).rowwise().sum().cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Advantage, ChainMatchesOracleValues) {
    const auto spec = fixtures::chainmdp();
    const auto f = uniform_policy(2, 2);
    const Vector v = oracle::iterate_values(spec, f);
    const auto a = advantage(value_functions(spec, f));
    for (Eigen::Index x = 0; x < 2; ++x)
        for (Eigen::Index b = 0; b < 2; ++b) {
            const double q = spec.r(x, b) + spec.gamma * (spec.prob(x, b, 0) * v(0) + spec.prob(x, b, 1) * v(1));
            EXPECT_NEAR(a(x, b), q - v(x), 1e-10);
        }
}

TEST(PolicyGradient, ConstantRewardIsZero) {
    const auto g = policy_gradient(fixtures::constant_reward(0.7), oracle::random_theta(2, 2, 3));
    EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PolicyGradient, MatchesFiniteDifferencesOnChain) {
    const auto spec = fixtures::chainmdp();
    const ThetaTable theta = oracle::random_theta(2, 2, 31);
    const auto fd = oracle::central_difference(
        [&](const Table& t) { return objective(spec, softmax_policy(t)); }, theta, 1e-5);
    const auto g = policy_gradient(spec, theta);
    for (Eigen::Index i = 0; i < g.size(); ++i)
        EXPECT_NEAR(g.data()[i], fd.data()[i], 1e-6 * std::abs(fd.data()[i]) + 1e-9);
}

TEST(PolicyGradient, MatchesFiniteDifferencesOnRandomMdps) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto spec = random_mdp(3, 3, 0.9, seed);
        const ThetaTable theta = oracle::random_theta(3, 3, seed + 7);
        const auto fd = oracle::central_difference(
            [&](const Table& t) { return objective(spec, softmax_policy(t)); }, theta, 1e-5);
        const auto g = policy_gradient(spec, theta);
        for (Eigen::Index i = 0; i < g.size(); ++i)
            EXPECT_NEAR(g.data()[i], fd.data()[i], 1e-6 * std::abs(fd.data()[i]) + 1e-9);
    }
}

TEST(PolicyGradient, NearDeterministicOptimumIsFlat) {
    const auto g = policy_gradient(fixtures::chainmdp(), chain_near_optimal_theta(20.0));
    EXPECT_LT(g.norm(), 1e-3);
}

TEST(PerformanceDifference, SamePolicy) {
    const auto spec = fixtures::chainmdp();
    const auto f = uniform_policy(2, 2);
    const auto pd = performance_difference(spec, f, f, 0);
    EXPECT_NEAR(pd.lhs, 0.0, 1e-14);
    EXPECT_NEAR(pd.rhs, 0.0, 1e-12);
}

TEST(PerformanceDifference, UniformVersusStayBothOrientations) {
    const auto spec = fixtures::chainmdp();
    const auto uni = uniform_policy(2, 2);
    const auto stay = deterministic_policy({0, 0}, 2);
    const auto ab = performance_difference(spec, uni, stay, 0);
    const auto ba = performance_difference(spec, stay, uni, 0);
    EXPECT_NEAR(ab.lhs, ab.rhs, 1e-8);
    EXPECT_NEAR(ba.lhs, ba.rhs, 1e-8);
    EXPECT_NEAR(ab.lhs, -ba.lhs, 1e-14);
    EXPECT_GT(std::abs(ab.lhs), 1e-3);
}

TEST(PerformanceDifference, RandomPairs) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto spec = random_mdp(4, 3, 0.9, seed);
        const auto f = softmax_policy(oracle::random_theta(4, 3, seed, 3.0));
        const auto f2 = softmax_policy(oracle::random_theta(4, 3, seed + 1000, 3.0));
        const auto pd = performance_difference(spec, f, f2, seed % 4);
        EXPECT_NEAR(pd.lhs, pd.rhs, 1e-8);
    }
}

TEST(OptimalPolicy, SingleState) {
    const auto op = optimal_policy(fixtures::single_state(0.5, 0.5));
    EXPECT_NEAR(op.j_star, 1.0, 1e-14);
}

TEST(OptimalPolicy, ChainMatchesEnumeration) {
    const auto spec = fixtures::chainmdp();
    double best = -1.0;
    std::vector<Eigen::Index> best_actions;
    for (Eigen::Index a0 = 0; a0 < 2; ++a0)
        for (Eigen::Index a1 = 0; a1 < 2; ++a1) {
            const auto f = deterministic_policy({a0, a1}, 2);
            const double j = spec.mu.dot(oracle::iterate_values(spec, f));
            if (j > best) {
                best = j;
                best_actions = {a0, a1};
            }
        }
    const auto op = optimal_policy(spec);
    EXPECT_EQ(op.actions, best_actions);
    EXPECT_EQ(op.actions, (std::vector<Eigen::Index>{1, 0}));
    EXPECT_NEAR(op.j_star, best, 1e-10);
}

TEST(OptimalPolicy, ConstantRewardTieBreak) {
    const auto op = optimal_policy(fixtures::constant_reward(0.4));
    EXPECT_EQ(op.actions, (std::vector<Eigen::Index>{0, 0}));
    EXPECT_NEAR(op.j_star, 0.4 / 0.1, 1e-12);
}

TEST(OptimalPolicy, DominatesRandomPolicies) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto spec = random_mdp(5, 3, 0.9, seed);
        const auto op = optimal_policy(spec);
        for (std::uint64_t s = 0; s < 10; ++s)
            EXPECT_GE(op.j_star + 1e-12, objective(spec, softmax_policy(oracle::random_theta(5, 3, s, 4.0))));
    }
}

TEST(Lojasiewicz, ZeroThetaOnChain) {
    const auto spec = fixtures::chainmdp();
    const auto rep = lojasiewicz_bounds(spec, ThetaTable::Zero(2, 2), optimal_policy(spec).f_star);
    EXPECT_GT(rep.rhs_unique, 0.0);
    EXPECT_GT(rep.rhs_general, 0.0);
    EXPECT_GE(rep.grad_norm, rep.rhs_unique);
    EXPECT_GE(rep.grad_norm, rep.rhs_general);
}

TEST(Lojasiewicz, NearOptimalTheta) {
    const auto spec = fixtures::chainmdp();
    const auto rep = lojasiewicz_bounds(spec, chain_near_optimal_theta(15.0), optimal_policy(spec).f_star);
    EXPECT_LT(rep.grad_norm, 1e-3);
    EXPECT_LT(rep.rhs_unique, 1e-3);
    EXPECT_TRUE(rep.holds());
}

TEST(Lojasiewicz, ConstantRewardDegenerate) {
    const auto spec = fixtures::constant_reward(0.5);
    const auto rep = lojasiewicz_bounds(spec, oracle::random_theta(2, 2, 8), optimal_policy(spec).f_star);
    EXPECT_NEAR(rep.grad_norm, 0.0, 1e-12);
    EXPECT_NEAR(rep.rhs_unique, 0.0, 1e-12);
    EXPECT_NEAR(rep.rhs_general, 0.0, 1e-12);
}

TEST(Lojasiewicz, RandomDrawsHold) {
    const std::array<MdpSpec, 3> specs{fixtures::chainmdp(), random_mdp(4, 3, 0.9, 1, 0.01),
                                       random_mdp(3, 2, 0.8, 2, 0.05)};
    for (const auto& spec : specs) {
        const auto f_star = optimal_policy(spec).f_star;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto rep = lojasiewicz_bounds(
                spec, oracle::random_theta(spec.n_states, spec.n_actions, seed, 4.0), f_star);
            EXPECT_TRUE(rep.holds()) << rep.grad_norm << " vs " << rep.rhs_unique << ", " << rep.rhs_general;
            EXPECT_TRUE(std::isfinite(rep.distribution_mismatch));
        }
    }
}

TEST(Lojasiewicz, RequiresFullSupportMu) {
    auto spec = fixtures::chainmdp();
    spec.mu << 1.0, 0.0;
    EXPECT_THROW(lojasiewicz_bounds(spec, ThetaTable::Zero(2, 2), optimal_policy(spec).f_star),
                 std::invalid_argument);
}

TEST(Poisson, InstantMixingKernel) {
    Vector pi(3);
    pi << 0.2, 0.5, 0.3;
    const Matrix k = Vector::Ones(3) * pi.transpose();
    for (Eigen::Index xi = 0; xi < 3; ++xi) {
        const Vector nu = poisson_solution(k, pi, xi);
        Vector expected = Vector::Constant(3, -pi(xi));
        expected(xi) += 1.0;
        EXPECT_LE((nu - expected).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Poisson, ChainMatchesTruncatedSeries) {
    const auto spec = fixtures::chainmdp();
    const auto f = softmax_policy(oracle::random_theta(2, 2, 4));
    for (auto kind : {KernelKind::RestartWithPolicy, KernelKind::OriginalWithExploration}) {
        const auto k = joint_kernel(spec, f, kind);
        const Vector pi = stationary_distribution(k);
        const auto prof = mixing_profile(k, 60);
        // choose the truncation so the geometric tail C rho^n / (1 - rho) is below 1e-10
        const double rho = std::max(prof.rate, 1e-3);
        const int terms = static_cast<int>(std::ceil(std::log(1e-12 * (1 - rho)) / std::log(rho))) + 10;
        for (Eigen::Index xi = 0; xi < k.size(); ++xi) {
            const Vector nu = poisson_solution(k, pi, xi);
            const Vector series = oracle::poisson_series(k.matrix, pi, xi, terms);
            EXPECT_LE((nu - series).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_LE(poisson_residual(k.matrix, pi, xi, nu), 1e-10);
            EXPECT_NEAR(pi.dot(nu - k.matrix * nu), 0.0, 1e-10);
        }
    }
}

TEST(Poisson, ResidualOnRandomErgodicKernels) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto spec = random_mdp(5, 3, 0.9, seed, 0.01);
        const auto k = joint_kernel(spec, softmax_policy(oracle::random_theta(5, 3, seed)),
                                    KernelKind::OriginalWithExploration);
        const Vector pi = stationary_distribution(k);
        for (Eigen::Index xi = 0; xi < k.size(); ++xi)
            EXPECT_LE(poisson_residual(k.matrix, pi, xi, poisson_solution(k, pi, xi)), 1e-10);
    }
}

TEST(Poisson, NonErgodicThrows) {
    Matrix k(2, 2);
    k << 0, 1, 1, 0;
    EXPECT_THROW(poisson_solution(k, Vector::Constant(2, 0.5), 0), NumericalError);
}

TEST(Mixing, InstantMixing) {
    Vector pi(2);
    pi << 0.25, 0.75;
    const auto prof = mixing_profile(Matrix(Vector::Ones(2) * pi.transpose()), 10);
    for (std::size_t n = 1; n < prof.distance.size(); ++n)
        EXPECT_NEAR(prof.distance[n], 0.0, 1e-15);
    EXPECT_NEAR(prof.min_stationary, 0.25, 1e-14);
}

TEST(Mixing, PeriodicThrows) {
    Matrix k(2, 2);
    k << 0, 1, 1, 0;
    EXPECT_THROW(mixing_profile(k, 10), NumericalError);
}

TEST(Mixing, ChainUniformPolicyMixesInTwoSteps) {
    // under the uniform policy both actions average to a fair coin, so K^2 is exact
    const auto spec = fixtures::chainmdp();
    const auto prof = mixing_profile(joint_kernel(spec, uniform_policy(2, 2), KernelKind::OriginalWithExploration), 10);
    EXPECT_GT(prof.distance[1], 0.0);
    for (std::size_t n = 2; n < prof.distance.size(); ++n)
        EXPECT_LE(prof.distance[n], 1e-15);
}

TEST(Mixing, ChainGeometricFit) {
    const auto spec = fixtures::chainmdp();
    ThetaTable theta = ThetaTable::Zero(2, 2);
    theta(0, 0) = 1.5;
    theta(1, 0) = 1.0;
    const auto k = joint_kernel(spec, softmax_policy(theta), KernelKind::OriginalWithExploration);
    MixingFitWindow w;
    w.n_min = 5;
    w.n_max = 50;
    const auto prof = mixing_profile(k, 50, w);
    ASSERT_GE(prof.fit_points, 5);
    EXPECT_GE(prof.r_squared, 0.99);
    EXPECT_GT(prof.rate, 0.0);
    EXPECT_LT(prof.rate, 1.0);
    for (int n = 5; n <= 50; ++n)
        if (prof.distance[n] > 1e-12) {
            EXPECT_LE(prof.distance[n], 1.01 * std::exp(prof.log_constant) * std::pow(prof.rate, n));
        }
    for (int n = 2; n <= 50; ++n)
        EXPECT_LE(prof.distance[n], prof.distance[n - 1] + 1e-15);
}
