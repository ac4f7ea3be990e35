#include "i2rl/maxent.hpp"
#include "support/models.hpp"

#include <gtest/gtest.h>

using namespace i2rl;

TEST(TrajectoryDistribution, DynamicProgramMatchesEnumeration) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 20; ++i) {
        const std::size_t S = 2 + rng() % 3, A = 1 + rng() % 3, K = 1 + rng() % 4, T = 1 + rng() % 4;
        const Mdp m = support::random_mdp(S, A, 0.6 + 0.3 * (i % 2), rng);
        const auto f = support::random_features(S, A, K, rng);
        const Vector theta = support::random_theta(K, rng);
        const auto e = support::enumerate_distribution(m, f, theta, T);
        const auto d = trajectory_distribution(m, f, theta, T, true);
        EXPECT_NEAR(d.log_partition, e.log_z, 1e-9);
        EXPECT_NEAR(log_partition_by_enumeration(m, f, theta, T), e.log_z, 1e-9);
        EXPECT_NEAR(e.total_probability, 1.0, 1e-9);
        for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(d.feature_expectations[k], e.features[k], 1e-9);

        double entropy = 0.0;
        support::for_each_trajectory(m, f, theta, T, [&](const Trajectory&, double lw) {
            const double p = std::exp(lw - e.log_z);
            entropy -= p * std::log(p);
        });
        EXPECT_NEAR(d.entropy, entropy, 1e-9);
    }
}

TEST(TrajectoryDistribution, ProbabilitiesOfEnumeratedTrajectoriesSumToOne) {
    std::mt19937_64 rng(5);
    const Mdp m = support::random_mdp(3, 2, 0.9, rng);
    const auto f = support::random_features(3, 2, 3, rng);
    const Vector theta = support::random_theta(3, rng);
    double total = 0.0;
    support::for_each_trajectory(m, f, theta, 3,
                                 [&](const Trajectory& x, double) { total += std::exp(trajectory_log_prob(x, theta, m, f)); });
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(TrajectoryDistribution, InfeasibleTrajectoryHasZeroWeight) {
    const Mdp m = support::two_state_chain(0.5);
    const auto f = FeatureSet::from(2, 2, 1, [](std::size_t s, std::size_t, std::size_t) { return s == 1; });
    const Vector theta{0.5};
    EXPECT_EQ(trajectory_log_weight({{0, 0}, {1, 0}}, theta, m, f), kNegInf);
    EXPECT_EQ(trajectory_log_weight({{1, 0}}, theta, m, f), kNegInf); // outside the start support
    EXPECT_NEAR(trajectory_log_weight({{0, 1}, {1, 0}}, theta, m, f), 0.25 * 0.5, 1e-15);
}

TEST(Dual, GradientMatchesCenteredDifferences) {
    std::mt19937_64 rng(99);
    const Mdp m = support::random_mdp(4, 2, 0.9, rng);
    const auto f = support::random_features(4, 2, 4, rng);
    const std::size_t T = 4;
    const Vector target = model_feature_expectations(m, f, support::random_theta(4, rng), T);
    auto dual = [&](const Vector& th) { return log_partition(m, f, th, T) - dot(th, target); };
    const double h = 1e-5;
    for (int i = 0; i < 10; ++i) {
        const Vector theta = support::random_theta(4, rng);
        const Vector achieved = model_feature_expectations(m, f, theta, T);
        for (std::size_t k = 0; k < 4; ++k) {
            Vector up = theta, down = theta;
            up[k] += h;
            down[k] -= h;
            const double numeric = (dual(up) - dual(down)) / (2 * h);
            const double analytic = achieved[k] - target[k];
            EXPECT_LE(std::abs(numeric - analytic), 1e-4 * std::max(1.0, std::abs(analytic)))
                << "point " << i << " component " << k;
        }
    }
}

TEST(MaxEntSolve, MatchesReachableTarget) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 5; ++i) {
        const Mdp m = support::random_mdp(4, 3, 0.8, rng);
        const auto f = support::random_features(4, 3, 3, rng);
        const Vector truth = support::random_theta(3, rng);
        SolverConfig cfg;
        cfg.horizon = 4;
        const Vector target = model_feature_expectations(m, f, truth, cfg.horizon);
        const MaxEntResult r = maxent_solve(m, f, target, cfg, Vector(3, 0.5));
        EXPECT_NE(r.status, SolverStatus::deadline);
        EXPECT_LE(r.gradient_norm, 1e-6);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.achieved[k], target[k], 1e-5);
        // The dual is convex, so the matched point cannot lose to the generating weights.
        EXPECT_LE(r.dual, log_partition(m, f, truth, cfg.horizon) - dot(truth, target) + 1e-9);
    }
}

TEST(MaxEntSolve, FixedPointStopsImmediately) {
    std::mt19937_64 rng(8);
    const Mdp m = support::random_mdp(3, 2, 0.9, rng);
    const auto f = support::random_features(3, 2, 2, rng);
    SolverConfig cfg;
    cfg.horizon = 3;
    const Vector theta{0.3, 0.7};
    const MaxEntResult r = maxent_solve(m, f, model_feature_expectations(m, f, theta, 3), cfg, theta);
    EXPECT_EQ(r.status, SolverStatus::converged);
    EXPECT_EQ(r.iterations, 1u);
    EXPECT_EQ(r.theta, theta);
}

TEST(MaxEntSolve, IterationCapThrowsWithBestIterate) {
    std::mt19937_64 rng(4);
    const Mdp m = support::random_mdp(4, 2, 0.9, rng);
    const auto f = support::random_features(4, 2, 3, rng);
    SolverConfig cfg;
    cfg.horizon = 4;
    cfg.max_iterations = 2;
    cfg.gradient_tolerance = 1e-14;
    const Vector target = model_feature_expectations(m, f, support::random_theta(3, rng), 4);
    try {
        maxent_solve(m, f, target, cfg, Vector{0.01, 0.99, 0.5});
        FAIL() << "expected MaxEntCapError";
    } catch (const MaxEntCapError& e) {
        EXPECT_EQ(e.iterations(), 2u);
        EXPECT_EQ(e.best().theta.size(), 3u);
    }
}

TEST(MaxEntSolve, ExpiredBudgetReturnsBestSoFar) {
    std::mt19937_64 rng(6);
    const Mdp m = support::random_mdp(4, 2, 0.9, rng);
    const auto f = support::random_features(4, 2, 3, rng);
    SolverConfig cfg;
    cfg.horizon = 4;
    const Vector target = model_feature_expectations(m, f, support::random_theta(3, rng), 4);
    LearningBudget budget(ClockKind::work, 1e-12);
    const MaxEntResult r = maxent_solve(m, f, target, cfg, Vector{0.01, 0.99, 0.5}, &budget);
    EXPECT_EQ(r.status, SolverStatus::deadline);
    EXPECT_GT(budget.work_units(), 0.0);
}

TEST(MaxEntSolve, RejectsBadInput) {
    std::mt19937_64 rng(1);
    const Mdp m = support::random_mdp(3, 2, 0.9, rng);
    const auto f = support::random_features(3, 2, 2, rng);
    SolverConfig cfg;
    EXPECT_THROW(maxent_solve(m, f, Vector{0.1, 0.1}, cfg, Vector{0.5, 0.5}), DomainError); // horizon unset
    cfg.horizon = 2;
    EXPECT_THROW(maxent_solve(m, f, Vector{0.1}, cfg, Vector{0.5, 0.5}), DimensionError);
    EXPECT_THROW(maxent_solve(m, f, Vector{5.0, 0.1}, cfg, Vector{0.5, 0.5}), DomainError);
}

TEST(MaxEntSolve, AllZeroFeaturesAreDegenerate) {
    const Mdp m = support::two_state_chain(0.5);
    const auto f = FeatureSet::from(2, 2, 2, [](std::size_t, std::size_t, std::size_t) { return 0; });
    SolverConfig cfg;
    cfg.horizon = 2;
    const MaxEntResult r = maxent_solve(m, f, Vector{0.0, 0.0}, cfg, Vector{0.4, 0.6});
    EXPECT_EQ(r.status, SolverStatus::degenerate);
    EXPECT_EQ(r.theta, (Vector{0.4, 0.6}));
}
