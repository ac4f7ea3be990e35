#include "i2rl/mdp.hpp"
#include "support/models.hpp"

#include <gtest/gtest.h>

using namespace i2rl;

namespace {

// Reward 1 for staying in state 1, 0 elsewhere, discount 1/2.
RewardTable chain_reward() {
    RewardTable r(2, 2);
    r(1, 0) = 1.0;
    return r;
}

} // namespace

TEST(Mdp, RejectsBadModels) {
    EXPECT_THROW(Mdp(2, 1, {{{0, 1.0}}, {{1, 1.0}}}, 1.0, {1.0, 0.0}), ModelError);
    EXPECT_THROW(Mdp(2, 1, {{{0, 0.5}}, {{1, 1.0}}}, 0.9, {1.0, 0.0}), ModelError);
    EXPECT_THROW(Mdp(2, 1, {{{2, 1.0}}, {{1, 1.0}}}, 0.9, {1.0, 0.0}), ModelError);
    EXPECT_THROW(Mdp(2, 1, {{{0, 1.0}}}, 0.9, {1.0, 0.0}), ModelError);
    EXPECT_THROW(Mdp(2, 1, {{{0, 1.0}}, {{1, 1.0}}}, 0.9, {0.5, 0.4}), ModelError);
}

TEST(Mdp, DropsZeroProbabilityOutcomes) {
    const Mdp m(2, 1, {{{0, 1.0}, {1, 0.0}}, {{1, 1.0}}}, 0.9, {1.0, 0.0});
    EXPECT_EQ(m.outcomes(0, 0).size(), 1u);
    EXPECT_EQ(m.transition_probability(0, 0, 1), 0.0);
}

TEST(SolveOptimal, HandSolvedChain) {
    const Mdp m = support::two_state_chain(0.5);
    const OptimalSolution sol = solve_optimal(m, chain_reward(), {1e-12, 10000});
    EXPECT_NEAR(sol.values[0], 1.0, 1e-10);
    EXPECT_NEAR(sol.values[1], 2.0, 1e-10);
    EXPECT_NEAR(sol.q(0, 0), 0.5, 1e-10);
    EXPECT_NEAR(sol.q(0, 1), 1.0, 1e-10);
    EXPECT_NEAR(sol.q(1, 1), 0.5, 1e-10);
    EXPECT_EQ(sol.policy, (DeterministicPolicy{1, 0}));
}

TEST(SolveOptimal, TiesGoToLowestAction) {
    const Mdp m = support::two_state_chain(0.5);
    const OptimalSolution sol = solve_optimal(m, RewardTable(2, 2, 1.0));
    EXPECT_EQ(sol.policy, (DeterministicPolicy{0, 0}));
}

TEST(EvaluatePolicy, HandSolvedUniformPolicy) {
    // V0 = (V0 + V1)/4, V1 = 1/2 + (V0 + V1)/4  =>  V0 = 1/4, V1 = 3/4.
    const Mdp m = support::two_state_chain(0.5);
    const auto v = evaluate_policy(m, chain_reward(), StochasticPolicy::uniform(2, 2), {1e-13, 100000});
    EXPECT_NEAR(v[0], 0.25, 1e-11);
    EXPECT_NEAR(v[1], 0.75, 1e-11);
}

TEST(EvaluatePolicy, OptimalPolicyReproducesOptimalValues) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10; ++i) {
        const Mdp m = support::random_mdp(5, 3, 0.8, rng);
        const auto f = support::random_features(5, 3, 4, rng);
        const RewardTable r = reward_table(support::random_theta(4, rng), f);
        const SolveOptions opt{1e-10, 100000};
        const OptimalSolution sol = solve_optimal(m, r, opt);
        const auto v = evaluate_policy(m, r, sol.policy, opt);
        for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(v[s], sol.values[s], 1e-8);
        // No single-state deviation improves on the greedy policy.
        for (std::size_t s = 0; s < 5; ++s)
            for (std::size_t a = 0; a < 3; ++a) {
                auto pi = sol.policy;
                pi[s] = a;
                EXPECT_LE(evaluate_policy(m, r, pi, opt)[s], sol.values[s] + 1e-8);
            }
    }
}

TEST(SolveSoft, SatisfiesSoftBellmanEquation) {
    std::mt19937_64 rng(11);
    const Mdp m = support::random_mdp(4, 3, 0.7, rng);
    const auto f = support::random_features(4, 3, 3, rng);
    const RewardTable r = reward_table(support::random_theta(3, rng), f);
    const SoftSolution sol = solve_soft(m, r, {1e-12, 100000});
    for (std::size_t s = 0; s < 4; ++s) {
        double z = 0.0, total = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
            double next = 0.0;
            for (const Outcome& o : m.outcomes(s, a)) next += o.probability * sol.values[o.next];
            z += std::exp(r(s, a) + 0.7 * next);
            total += sol.policy(s, a);
        }
        EXPECT_NEAR(sol.values[s], std::log(z), 1e-10);
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Metrics, IleAndLba) {
    EXPECT_DOUBLE_EQ(ile(Vector{1.0, 2.0, 3.0}, Vector{1.5, 2.0, 1.0}), 2.5);
    EXPECT_DOUBLE_EQ(ile(Vector{1.0, 2.0}, Vector{1.0, 2.0}), 0.0);
    EXPECT_DOUBLE_EQ(lba({0, 1, 2, 0}, {0, 1, 0, 1}), 50.0);
    EXPECT_THROW(ile(Vector{1.0}, Vector{1.0, 2.0}), DimensionError);
    EXPECT_THROW(lba({}, {}), EmptyInputError);
}

TEST(Metrics, IleOfChainPolicies) {
    // Staying in state 0 forever earns nothing; the optimal values are (1, 2).
    const Mdp m = support::two_state_chain(0.5);
    const auto expert = solve_optimal(m, chain_reward(), {1e-12, 10000});
    const auto stay = evaluate_policy(m, chain_reward(), DeterministicPolicy{0, 0}, {1e-12, 10000});
    EXPECT_NEAR(ile(expert.values, stay), 1.0, 1e-9);
}
