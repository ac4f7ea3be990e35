#include "i2rl/latent.hpp"
#include "support/models.hpp"

#include <gtest/gtest.h>

using namespace i2rl;

namespace {

struct Instance {
    Mdp mdp;
    FeatureSet features;
    OcclusionModel occlusion;
    std::vector<ObservedTrajectory> ys;
};

// Random model with at least one hidden and one visible state, and masked
// random walks of length T.
Instance random_instance(std::mt19937_64& rng, std::size_t S, std::size_t A, std::size_t K, std::size_t T,
                         std::size_t n) {
    Mdp m = support::random_mdp(S, A, 0.8, rng);
    auto f = support::random_features(S, A, K, rng);
    std::vector<bool> occ(S, false);
    for (std::size_t s = 0; s < S; ++s) occ[s] = rng() % 2;
    occ[0] = false;
    occ[S - 1] = true;
    OcclusionModel o(occ);
    std::vector<ObservedTrajectory> ys;
    for (std::size_t i = 0; i < n; ++i) ys.push_back(ObservedTrajectory::mask(support::random_walk(m, T, rng), o));
    return {std::move(m), std::move(f), std::move(o), std::move(ys)};
}

// Three states, one action. State 0 is visible and moves to hidden state 1
// with probability 2/3 or hidden state 2 with 1/3; both return to 0.
Mdp fork_mdp() {
    return Mdp(3, 1, {{{1, 2.0 / 3.0}, {2, 1.0 / 3.0}}, {{0, 1.0}}, {{0, 1.0}}}, 0.5, {1.0, 0.0, 0.0});
}

} // namespace

TEST(LatentExpectations, NoOcclusionReducesToEmpirical) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 10; ++i) {
        const Mdp m = support::random_mdp(5, 3, 0.9, rng);
        const auto f = support::random_features(5, 3, 4, rng);
        Demonstration demo;
        std::vector<ObservedTrajectory> ys;
        for (int j = 0; j < 7; ++j) {
            demo.push_back(support::random_walk(m, 1 + rng() % 6, rng));
            ys.push_back(ObservedTrajectory::observed(demo.back()));
        }
        const Vector latent =
            latent_feature_expectations(ys, support::random_theta(4, rng), m, f, OcclusionModel::none(5), {});
        const Vector empirical = empirical_feature_expectations(demo, f, 0.9);
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(latent[k], empirical[k], 1e-12);
    }
}

TEST(LatentExpectations, MatchBruteForcePosterior) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 15; ++i) {
        auto inst = random_instance(rng, 4, 2, 3, 5, 3);
        const Vector theta = support::random_theta(3, rng);
        Vector brute(3, 0.0);
        for (const auto& y : inst.ys) {
            const Vector b = support::brute_latent_features(y, inst.mdp, inst.features, inst.occlusion, theta);
            for (std::size_t k = 0; k < 3; ++k) brute[k] += b[k] / 3.0;
        }
        EmConfig cfg;
        cfg.gap_cap = 5;
        const Vector exact = latent_feature_expectations(inst.ys, theta, inst.mdp, inst.features, inst.occlusion, cfg);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(exact[k], brute[k], 1e-10);
    }
}

TEST(LatentExpectations, SamplingAgreesWithEnumeration) {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 5; ++i) {
        auto inst = random_instance(rng, 4, 2, 3, 6, 2);
        const Vector theta = support::random_theta(3, rng);
        EmConfig exact_cfg;
        exact_cfg.gap_cap = 6;
        EmConfig sampled_cfg;
        sampled_cfg.gap_cap = 0;
        sampled_cfg.samples = 40000;
        sampled_cfg.seed = 17 + i;
        const Vector exact =
            latent_feature_expectations(inst.ys, theta, inst.mdp, inst.features, inst.occlusion, exact_cfg);
        const Vector sampled =
            latent_feature_expectations(inst.ys, theta, inst.mdp, inst.features, inst.occlusion, sampled_cfg);
        // Per-sample feature sums lie in [0, gamma/(1-gamma)]; 40000 draws put
        // the standard error well under 0.02.
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(sampled[k], exact[k], 0.05);
    }
}

TEST(LatentExpectations, SamplingIsDeterministicForASeed) {
    std::mt19937_64 rng(43);
    auto inst = random_instance(rng, 4, 2, 3, 6, 2);
    EmConfig cfg;
    cfg.gap_cap = 0;
    cfg.samples = 100;
    cfg.seed = 5;
    const Vector theta{0.2, 0.4, 0.6};
    EXPECT_EQ(latent_feature_expectations(inst.ys, theta, inst.mdp, inst.features, inst.occlusion, cfg),
              latent_feature_expectations(inst.ys, theta, inst.mdp, inst.features, inst.occlusion, cfg));
}

TEST(ObservedLikelihood, MatchesBruteForce) {
    std::mt19937_64 rng(53);
    for (int i = 0; i < 10; ++i) {
        auto inst = random_instance(rng, 4, 2, 3, 4, 3);
        const Vector theta = support::random_theta(3, rng);
        double brute = 0.0;
        for (const auto& y : inst.ys) brute += support::brute_observed_ll(y, inst.mdp, inst.features, inst.occlusion, theta);
        EmConfig enumerated;
        enumerated.gap_cap = 4;
        EmConfig filtered;
        filtered.gap_cap = 0;
        EXPECT_NEAR(observed_ll(theta, inst.ys, inst.mdp, inst.features, inst.occlusion, enumerated), brute, 1e-10);
        EXPECT_NEAR(observed_ll(theta, inst.ys, inst.mdp, inst.features, inst.occlusion, filtered), brute, 1e-10);
    }
}

TEST(Completions, PosteriorFollowsTransitionOdds) {
    const Mdp m = fork_mdp();
    const OcclusionModel occ({false, true, true});
    const ObservedTrajectory y{{StateAction{0, 0}, std::nullopt, StateAction{0, 0}}};
    const auto zs = enumerate_completions(y, m, occ, 4);
    ASSERT_EQ(zs.size(), 2u);
    EXPECT_EQ(zs[0].assignments[0].step.state, 1u);
    EXPECT_EQ(zs[1].assignments[0].step.state, 2u);

    const auto none = FeatureSet::from(3, 1, 1, [](std::size_t, std::size_t, std::size_t) { return 0; });
    const Vector p = posterior_over_completions(y, zs, Vector{0.7}, m, none);
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);

    // A feature on state 1 adds gamma^2 * theta to its log weight.
    const auto on1 = FeatureSet::from(3, 1, 1, [](std::size_t s, std::size_t, std::size_t) { return s == 1; });
    const Vector q = posterior_over_completions(y, zs, Vector{0.8}, m, on1);
    EXPECT_NEAR(q[0] / q[1], 2.0 * std::exp(0.25 * 0.8), 1e-12);

    // Expected features of the hidden step: gamma^2 * Pr(state 1).
    EmConfig cfg;
    const Vector phi = latent_feature_expectations(std::vector{y}, Vector{0.8}, m, on1, occ, cfg);
    EXPECT_NEAR(phi[0], 0.25 * q[0], 1e-14);
}

TEST(Completions, SamplesHaveUniformWeightAndFollowPosterior) {
    const Mdp m = fork_mdp();
    const OcclusionModel occ({false, true, true});
    const ObservedTrajectory y{{StateAction{0, 0}, std::nullopt, StateAction{0, 0}}};
    const auto none = FeatureSet::from(3, 1, 1, [](std::size_t, std::size_t, std::size_t) { return 0; });
    std::mt19937_64 rng(1);
    const auto draws = sample_completions(y, Vector{0.5}, 30000, rng, m, none, occ);
    double ones = 0.0;
    for (const auto& d : draws) {
        EXPECT_DOUBLE_EQ(d.weight, 1.0 / 30000);
        ones += d.completion.assignments.at(0).step.state == 1;
    }
    EXPECT_NEAR(ones / 30000, 2.0 / 3.0, 0.015);
}

TEST(Completions, CountMatchesBruteForce) {
    std::mt19937_64 rng(61);
    for (int i = 0; i < 10; ++i) {
        auto inst = random_instance(rng, 4, 2, 2, 4, 1);
        const auto& y = inst.ys[0];
        std::size_t brute = 0;
        const Vector theta(2, 0.0);
        support::for_each_trajectory(inst.mdp, inst.features, theta, y.size(), [&](const Trajectory& x, double) {
            for (std::size_t t = 0; t < y.size(); ++t) {
                if (y.steps[t] ? !(x[t] == *y.steps[t]) : !inst.occlusion.occluded(x[t].state)) return;
            }
            ++brute;
        });
        // Completions are counted with start support and every transition feasible.
        EXPECT_EQ(enumerate_completions(y, inst.mdp, inst.occlusion, 4).size(), brute);
    }
}

TEST(Completions, Errors) {
    const Mdp m = fork_mdp();
    const OcclusionModel occ({false, true, true});
    const ObservedTrajectory y{{StateAction{0, 0}, std::nullopt, std::nullopt, StateAction{0, 0}}};
    EXPECT_THROW(enumerate_completions(y, m, occ, 1), GapTooLongError);
    // Hidden states always return to 0, so two hidden steps in a row are impossible.
    EXPECT_THROW(latent_feature_expectations(std::vector{y}, Vector{0.5},  m,
                                             FeatureSet::from(3, 1, 1, [](auto, auto, auto) { return 1; }), occ, {}),
                 InfeasibleError);
    const ObservedTrajectory bad{{StateAction{1, 0}}};
    EXPECT_THROW(validate_observed(bad, m, occ), ModelError);
    const ObservedTrajectory jump{{StateAction{0, 0}, StateAction{0, 0}}};
    EXPECT_THROW(validate_observed(jump, m, OcclusionModel::none(3)), ModelError);
}

TEST(Em, ObservedLikelihoodNeverDecreases) {
    std::mt19937_64 rng(71);
    for (int i = 0; i < 10; ++i) {
        auto inst = random_instance(rng, 4, 2, 3, 5, 6);
        EmConfig cfg;
        cfg.restarts = 1;
        cfg.gap_cap = 5; // exact E-steps; sampled ones carry Monte Carlo noise
        cfg.track_likelihood = true;
        cfg.max_iterations = 30;
        cfg.tolerance = 1e-7;
        cfg.solver.gradient_tolerance = 1e-9;
        cfg.solver.max_iterations = 200000;
        const EmResult r =
            em_solve(inst.mdp, inst.features, inst.occlusion, inst.ys, support::random_theta(3, rng), cfg);
        ASSERT_GE(r.ll_trace.size(), 2u);
        for (std::size_t t = 1; t < r.ll_trace.size(); ++t) EXPECT_GE(r.ll_trace[t], r.ll_trace[t - 1] - 1e-9);
    }
}

TEST(Em, RestartsPickLargestEntropy) {
    std::mt19937_64 rng(81);
    auto inst = random_instance(rng, 4, 2, 3, 5, 4);
    EmConfig cfg;
    cfg.restarts = 4;
    const EmResult best = em_solve(inst.mdp, inst.features, inst.occlusion, inst.ys, Vector(3, 0.5), cfg);
    // Rerunning with fewer restarts replays a prefix of the same chains.
    for (std::size_t r = 1; r <= 4; ++r) {
        cfg.restarts = r;
        const EmResult prefix = em_solve(inst.mdp, inst.features, inst.occlusion, inst.ys, Vector(3, 0.5), cfg);
        EXPECT_LE(prefix.entropy, best.entropy);
    }
}

TEST(Em, RejectsEmptyOrMismatchedInput) {
    const Mdp m = fork_mdp();
    const OcclusionModel occ({false, true, true});
    const auto f = FeatureSet::from(3, 1, 1, [](auto, auto, auto) { return 1; });
    EXPECT_THROW(em_solve(m, f, occ, {}, Vector{0.5}, {}), EmptyInputError);
    const std::vector ys{ObservedTrajectory{{StateAction{0, 0}}}};
    EXPECT_THROW(em_solve(m, f, occ, ys, Vector{0.5, 0.5}, {}), DimensionError);
    EXPECT_THROW(em_solve(m, f, OcclusionModel::none(2), ys, Vector{0.5}, {}), DimensionError);
}
