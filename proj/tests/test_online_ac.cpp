#include "aclab/exact.hpp"
#include "aclab/online_ac.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace aclab;

namespace {

AcConfig chain_config(long long n, double t, std::uint64_t seed) {
    AcConfig c = default_config(fixtures::chainmdp());
    c.N = n;
    c.T = t;
    c.seed = seed;
    return c;
}

} // namespace

TEST(InitRun, SingleStateForcesPositions) {
    const auto spec = fixtures::single_state();
    const auto s = init_run(spec, default_config(spec));
    EXPECT_EQ(s.x, 0);
    EXPECT_EQ(s.a, 0);
    EXPECT_EQ(s.xt, 0);
    EXPECT_EQ(s.at, 0);
}

TEST(InitRun, Deterministic) {
    const auto spec = fixtures::chainmdp();
    const auto c = chain_config(10, 1.0, 5);
    EXPECT_EQ(init_run(spec, c), init_run(spec, c));
}

TEST(InitRun, InitialStateFrequencyMatchesMu) {
    auto spec = fixtures::chainmdp();
    spec.mu << 0.3, 0.7;
    auto c = chain_config(10, 1.0, 0);
    const int trials = 10000;
    int zeros = 0, actor_zeros = 0;
    for (int i = 0; i < trials; ++i) {
        c.run_id = static_cast<std::uint64_t>(i);
        const auto s = init_run(spec, c);
        zeros += s.x == 0;
        actor_zeros += s.xt == 0;
    }
    const double band = 3.0 * std::sqrt(0.3 * 0.7 / trials);
    EXPECT_NEAR(zeros / static_cast<double>(trials), 0.3, band);
    EXPECT_NEAR(actor_zeros / static_cast<double>(trials), 0.3, band);
}

TEST(InitRun, RejectsBadConfig) {
    const auto spec = fixtures::chainmdp();
    auto c = chain_config(0, 1.0, 0);
    EXPECT_THROW(init_run(spec, c), ValidationError);
    c = chain_config(10, 1.0, 0);
    c.checkpoint_times = {0.5, 0.2};
    EXPECT_THROW(init_run(spec, c), ValidationError);
    c = chain_config(10, 1.0, 0);
    c.theta0 = ThetaTable::Zero(3, 2);
    EXPECT_THROW(init_run(spec, c), ValidationError);
}

TEST(Step, ZeroAlphaFreezesCritic) {
    const auto spec = fixtures::chainmdp();
    auto c = chain_config(50, 2.0, 3);
    c.alpha = 0.0;
    c.q0 = oracle::random_theta(2, 2, 4);
    auto s = init_run(spec, c);
    while (s.k < steps_for(c.N, c.T)) {
        advance(s, spec, c);
        ASSERT_EQ(s.q, c.q0);
    }
}

TEST(Step, SingleActionActorIsStatic) {
    MdpSpec spec = fixtures::chainmdp();
    spec.n_actions = 1;
    spec.p = Matrix(2, 2);
    spec.p << 0.4, 0.6, 0.7, 0.3;
    spec.r = Table(2, 1);
    spec.r << 0.2, 0.9;
    AcConfig c = default_config(spec);
    c.N = 20;
    c.T = 3.0;
    c.theta0 << 0.3, -1.2;
    c.q0 << 1.0, 2.0;
    auto s = init_run(spec, c);
    while (s.k < steps_for(c.N, c.T)) {
        advance(s, spec, c);
        ASSERT_EQ(s.theta, c.theta0);
    }
}

TEST(Step, HandComputedSingleUpdate) {
    const auto spec = fixtures::chainmdp();
    AcConfig c = default_config(spec);
    c.N = 1;
    c.T = 1.0;
    c.seed = 2718;
    c.theta0 << 0.4, -0.3, 1.1, 0.2;
    c.q0 << 0.5, 1.5, -0.25, 2.0;
    const auto s0 = init_run(spec, c);

    // replay the two transition draws the step consumes
    CounterRng replay = s0.rng;
    const double x_row[2] = {spec.prob(s0.x, s0.a, 0), spec.prob(s0.x, s0.a, 1)};
    const auto x1 = static_cast<Eigen::Index>(replay.categorical(x_row));
    double xt_row[2];
    for (int y = 0; y < 2; ++y)
        xt_row[y] = spec.gamma * spec.prob(s0.xt, s0.at, y) + (1.0 - spec.gamma) * spec.mu(y);
    const auto xt1 = static_cast<Eigen::Index>(replay.categorical(xt_row));

    const auto s1 = step(s0, spec, c);
    EXPECT_EQ(s1.k, 1);
    EXPECT_EQ(s1.x, x1);
    EXPECT_EQ(s1.xt, xt1);

    // eta_0 = 1, so g_0 is uniform; zeta_0 = 1; N = 1 and alpha = 1
    const double v_next = 0.5 * c.q0(x1, 0) + 0.5 * c.q0(x1, 1);
    const double td = spec.r(s0.x, s0.a) + spec.gamma * v_next - c.q0(s0.x, s0.a);
    CriticTable q_expected = c.q0;
    q_expected(s0.x, s0.a) += td;
    for (Eigen::Index i = 0; i < 4; ++i)
        EXPECT_NEAR(s1.q.data()[i], q_expected.data()[i], 1e-15);

    const double e0 = std::exp(c.theta0(s0.xt, 0)), e1 = std::exp(c.theta0(s0.xt, 1));
    const double f[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
    const double w = c.q0(s0.xt, s0.at);
    ThetaTable theta_expected = c.theta0;
    for (int b = 0; b < 2; ++b)
        theta_expected(s0.xt, b) += w * ((b == s0.at ? 1.0 : 0.0) - f[b]);
    for (Eigen::Index i = 0; i < 4; ++i)
        EXPECT_NEAR(s1.theta.data()[i], theta_expected.data()[i], 1e-15);
}

TEST(Step, HorizonExhausted) {
    const auto spec = fixtures::chainmdp();
    const auto c = chain_config(3, 1.0, 0);
    auto s = init_run(spec, c);
    for (int i = 0; i < 3; ++i)
        advance(s, spec, c);
    EXPECT_THROW(advance(s, spec, c), std::out_of_range);
}

TEST(Step, OnlyScheduledEntriesChangeAndIncrementBoundsHold) {
    const auto spec = random_mdp(3, 3, 0.8, 21, 0.02);
    AcConfig c = default_config(spec);
    c.N = 100;
    c.T = 20.0;
    c.alpha = 1.7;
    c.seed = 9;
    c.theta0 = oracle::random_theta(3, 3, 1);
    c.q0 = oracle::random_theta(3, 3, 2, 3.0);
    auto s = init_run(spec, c);
    const double n = static_cast<double>(c.N);
    while (s.k < steps_for(c.N, c.T)) {
        const auto prev = s;
        advance(s, spec, c);
        const double q_sup = prev.q.cwiseAbs().maxCoeff();
        const Table dq = s.q - prev.q;
        const Table dtheta = s.theta - prev.theta;
        ASSERT_LE(dq.cwiseAbs().maxCoeff(), c.alpha / n * (1.0 + (1.0 + spec.gamma) * q_sup) + 1e-15);
        ASSERT_LE(dtheta.cwiseAbs().sum(), 2.0 * zeta_discrete(prev.k, c.N) / n * q_sup + 1e-15);
        for (Eigen::Index x = 0; x < 3; ++x)
            for (Eigen::Index a = 0; a < 3; ++a) {
                if (x != prev.x || a != prev.a) {
                    ASSERT_EQ(dq(x, a), 0.0);
                }
                if (x != prev.xt) {
                    ASSERT_EQ(dtheta(x, a), 0.0);
                }
            }
    }
}

TEST(Run, ZeroHorizonReturnsInitialTables) {
    const auto spec = fixtures::chainmdp();
    auto c = chain_config(100, 0.0, 1);
    c.theta0 = oracle::random_theta(2, 2, 3);
    c.checkpoint_times = {0.0};
    const auto traj = run(spec, c);
    EXPECT_EQ(traj.total_steps, 0);
    ASSERT_EQ(traj.snapshots.size(), 1u);
    EXPECT_EQ(traj.snapshots[0].theta, c.theta0);
    EXPECT_EQ(traj.snapshots[0].q, c.q0);
}

TEST(Run, RefinedCheckpointsKeepSharedSnapshots) {
    const auto spec = fixtures::chainmdp();
    auto coarse = chain_config(200, 2.0, 44);
    coarse.checkpoint_times = {0.0, 1.0, 2.0};
    auto fine = coarse;
    fine.checkpoint_times = {0.0, 0.5, 1.0, 1.5, 2.0};
    const auto a = run(spec, coarse);
    const auto b = run(spec, fine);
    ASSERT_EQ(a.snapshots.size(), 3u);
    ASSERT_EQ(b.snapshots.size(), 5u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.snapshots[i].k, b.snapshots[2 * i].k);
        EXPECT_EQ(a.snapshots[i].theta, b.snapshots[2 * i].theta);
        EXPECT_EQ(a.snapshots[i].q, b.snapshots[2 * i].q);
    }
    EXPECT_EQ(a.snapshots[1].k, 200);
}

TEST(Run, BitwiseReproducible) {
    const auto spec = random_mdp(4, 2, 0.9, 3, 0.01);
    AcConfig c = default_config(spec);
    c.N = 300;
    c.T = 3.0;
    c.seed = 77;
    c.checkpoint_times = {0.0, 1.0, 2.5, 3.0};
    const auto a = run(spec, c);
    const auto b = run(spec, c);
    ASSERT_EQ(a.snapshots.size(), b.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
        EXPECT_EQ(a.snapshots[i].theta, b.snapshots[i].theta);
        EXPECT_EQ(a.snapshots[i].q, b.snapshots[i].q);
    }
    c.seed = 78;
    EXPECT_NE(run(spec, c).snapshots.back().q, a.snapshots.back().q);
}

TEST(Run, CriticSupBoundFromGronwall) {
    const auto spec = fixtures::chainmdp();
    auto c = chain_config(10000, 2.0, 12);
    c.q0 = oracle::random_theta(2, 2, 5, 1.0);
    const auto traj = run(spec, c);
    const double q0 = c.q0.cwiseAbs().maxCoeff();
    const double bound = (q0 + c.alpha * (2.0 + spec.gamma) * c.T) * std::exp(c.alpha * (1.0 + spec.gamma) * c.T);
    EXPECT_EQ(traj.total_steps, 20000);
    EXPECT_LE(traj.max_q_sup, bound);
}

TEST(Run, FrozenChainVisitFrequenciesMatchStationaryLaws) {
    const auto spec = random_mdp(3, 2, 0.8, 5, 0.05);
    AcConfig c = default_config(spec);
    c.theta0 = oracle::random_theta(3, 2, 6);
    c.schedule = RateSchedule::constant(1.0, 0.3);
    c.freeze_updates = true;
    c.N = 1;
    c.T = 400000.0;
    c.seed = 31;
    const auto f = softmax_policy(c.theta0);
    const Vector pi_critic =
        stationary_distribution(joint_kernel(spec, exploration_policy(f, 0.3), KernelKind::OriginalWithExploration));
    const Vector pi_actor = flatten(visiting_measures(spec, f).sigma_normalized);

    // batch means give a standard error that accounts for chain autocorrelation
    const long long total = steps_for(c.N, c.T);
    const int batches = 100;
    const long long per_batch = total / batches;
    Matrix critic_batches = Matrix::Zero(batches, 6), actor_batches = Matrix::Zero(batches, 6);
    auto s = init_run(spec, c);
    for (int b = 0; b < batches; ++b) {
        for (long long i = 0; i < per_batch; ++i) {
            critic_batches(b, s.x * 2 + s.a) += 1.0;
            actor_batches(b, s.xt * 2 + s.at) += 1.0;
            advance(s, spec, c);
        }
    }
    critic_batches /= static_cast<double>(per_batch);
    actor_batches /= static_cast<double>(per_batch);
    auto check = [&](const Matrix& m, const Vector& pi) {
        for (Eigen::Index j = 0; j < 6; ++j) {
            const double mean = m.col(j).mean();
            const double var = (m.col(j).array() - mean).square().sum() / (batches - 1);
            EXPECT_NEAR(mean, pi(j), 3.0 * std::sqrt(var / batches)) << "pair " << j;
        }
    };
    check(critic_batches, pi_critic);
    check(actor_batches, pi_actor);
}

TEST(Fluctuation, SingleStateSingleActionVanishes) {
    const auto spec = fixtures::single_state(0.5, 0.5);
    AcConfig c = default_config(spec);
    c.N = 100;
    c.T = 2.0;
    c.q0 << 0.7;
    const auto m = empirical_fluctuation(spec, c);
    EXPECT_NEAR(m.actor_magnitude(), 0.0, 1e-15);
    EXPECT_NEAR(m.critic_magnitude(), 0.0, 1e-14);
}

TEST(Fluctuation, FrozenTermsHaveZeroMean) {
    const auto spec = fixtures::chainmdp();
    auto c = chain_config(100, 1.0, 0);
    c.freeze_updates = true;
    c.q0 = oracle::random_theta(2, 2, 8, 1.0);
    const int seeds = 100;
    std::vector<FluctuationResult> runs;
    for (int s = 0; s < seeds; ++s) {
        c.seed = static_cast<std::uint64_t>(s);
        runs.push_back(empirical_fluctuation(spec, c));
    }
    auto band_check = [&](auto get) {
        for (Eigen::Index i = 0; i < 4; ++i) {
            double sum = 0.0, sum2 = 0.0;
            for (const auto& r : runs) {
                const double v = get(r).data()[i];
                sum += v;
                sum2 += v * v;
            }
            const double mean = sum / seeds;
            const double sd = std::sqrt(std::max(0.0, (sum2 - seeds * mean * mean) / (seeds - 1)));
            EXPECT_LE(std::abs(mean), 4.0 * sd / 10.0 + 1e-15);
        }
    };
    band_check([](const FluctuationResult& r) -> const Table& { return r.actor; });
    for (int j = 0; j < 3; ++j)
        band_check([j](const FluctuationResult& r) -> const Table& { return r.critic[j]; });
}

TEST(Fluctuation, DecaysWithN) {
    const auto spec = fixtures::chainmdp();
    auto mean_magnitudes = [&](long long n) {
        double actor = 0.0, critic = 0.0;
        for (int s = 0; s < 20; ++s) {
            const auto m = empirical_fluctuation(spec, chain_config(n, 2.0, static_cast<std::uint64_t>(s)));
            actor += m.actor_magnitude() / 20.0;
            critic += m.critic_magnitude() / 20.0;
        }
        return std::pair{actor, critic};
    };
    const auto [a_lo, c_lo] = mean_magnitudes(200);
    const auto [a_hi, c_hi] = mean_magnitudes(3200);
    EXPECT_LE(a_hi, a_lo / 2.0);
    EXPECT_LE(c_hi, c_lo / 2.0);
}

TEST(Fluctuation, SizeGuard) {
    const auto spec = random_mdp(9, 8, 0.9, 1);
    EXPECT_THROW(empirical_fluctuation(spec, default_config(spec)), ValidationError);
}
