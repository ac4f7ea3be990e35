#pragma once

#include "i2rl/errors.hpp"
#include "i2rl/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace i2rl {

/// One successor of a state-action pair.
struct Outcome {
    std::size_t next;
    double probability;
};

/**
 * Finite discounted MDP without a reward function.
 *
 * Transitions are stored sparsely per (state, action); only outcomes with
 * positive probability are kept. Every action is available in every state.
 */
class Mdp {
public:
    static constexpr double kStochasticTolerance = 1e-9;

    /// @param transitions indexed by `state * actions + action`
    Mdp(std::size_t states, std::size_t actions, std::vector<std::vector<Outcome>> transitions,
        double discount, Vector start_distribution)
        : states_(states), actions_(actions), transitions_(std::move(transitions)),
          discount_(discount), start_(std::move(start_distribution)) {
        validate();
    }

    std::size_t state_count() const noexcept { return states_; }
    std::size_t action_count() const noexcept { return actions_; }
    double discount() const noexcept { return discount_; }
    const Vector& start_distribution() const noexcept { return start_; }

    std::span<const Outcome> outcomes(std::size_t state, std::size_t action) const {
        return transitions_[state * actions_ + action];
    }

    double transition_probability(std::size_t state, std::size_t action, std::size_t next) const {
        for (const Outcome& o : outcomes(state, action))
            if (o.next == next) return o.probability;
        return 0.0;
    }

    /// Total number of stored outcomes; the cost unit of one Bellman sweep.
    std::size_t outcome_count() const {
        std::size_t n = 0;
        for (const auto& row : transitions_) n += row.size();
        return n;
    }

    /// Same dynamics with a different start distribution.
    Mdp with_start(Vector start_distribution) const {
        return Mdp(states_, actions_, transitions_, discount_, std::move(start_distribution));
    }

private:
    void validate() {
        if (states_ == 0 || actions_ == 0) throw ModelError("MDP needs at least one state and one action");
        if (!(discount_ > 0.0 && discount_ < 1.0))
            throw ModelError("discount must lie strictly inside (0,1), got " + std::to_string(discount_));
        if (transitions_.size() != states_ * actions_)
            throw ModelError("transition table has " + std::to_string(transitions_.size()) +
                             " rows, expected " + std::to_string(states_ * actions_));
        if (start_.size() != states_) throw ModelError("start distribution has wrong length");
        for (std::size_t row = 0; row < transitions_.size(); ++row) {
            auto& outs = transitions_[row];
            double total = 0.0;
            for (const Outcome& o : outs) {
                if (o.next >= states_) throw ModelError("successor index out of range in row " + std::to_string(row));
                if (!(o.probability >= 0.0 && o.probability <= 1.0))
                    throw ModelError("transition probability outside [0,1] in row " + std::to_string(row));
                total += o.probability;
            }
            if (std::abs(total - 1.0) > kStochasticTolerance)
                throw ModelError("transition row for state " + std::to_string(row / actions_) + ", action " +
                                 std::to_string(row % actions_) + " sums to " + std::to_string(total));
            std::erase_if(outs, [](const Outcome& o) { return o.probability == 0.0; });
        }
        double total = 0.0;
        for (double p : start_) {
            if (!(p >= 0.0 && p <= 1.0)) throw ModelError("start probability outside [0,1]");
            total += p;
        }
        if (std::abs(total - 1.0) > kStochasticTolerance)
            throw ModelError("start distribution sums to " + std::to_string(total));
    }

    std::size_t states_;
    std::size_t actions_;
    std::vector<std::vector<Outcome>> transitions_;
    double discount_;
    Vector start_;
};

/// Dense state-action table, row-major by state.
class RewardTable {
public:
    RewardTable() = default;
    RewardTable(std::size_t states, std::size_t actions, double fill = 0.0)
        : states_(states), actions_(actions), values_(states * actions, fill) {}
    RewardTable(std::size_t states, std::size_t actions, Vector values)
        : states_(states), actions_(actions), values_(std::move(values)) {
        if (values_.size() != states * actions) throw DimensionError("reward table size mismatch");
    }

    template <class F>
    static RewardTable from(std::size_t states, std::size_t actions, F&& f) {
        RewardTable r(states, actions);
        for (std::size_t s = 0; s < states; ++s)
            for (std::size_t a = 0; a < actions; ++a) r(s, a) = f(s, a);
        return r;
    }

    double operator()(std::size_t s, std::size_t a) const { return values_[s * actions_ + a]; }
    double& operator()(std::size_t s, std::size_t a) { return values_[s * actions_ + a]; }

    std::size_t state_count() const noexcept { return states_; }
    std::size_t action_count() const noexcept { return actions_; }
    const Vector& values() const noexcept { return values_; }

private:
    std::size_t states_ = 0;
    std::size_t actions_ = 0;
    Vector values_;
};

/// state -> action
using DeterministicPolicy = std::vector<std::size_t>;

/// state -> distribution over actions, row-major.
class StochasticPolicy {
public:
    StochasticPolicy(std::size_t states, std::size_t actions)
        : actions_(actions), probabilities_(states * actions, 0.0) {}

    double operator()(std::size_t s, std::size_t a) const { return probabilities_[s * actions_ + a]; }
    double& operator()(std::size_t s, std::size_t a) { return probabilities_[s * actions_ + a]; }

    std::span<const double> row(std::size_t s) const {
        return std::span<const double>(probabilities_).subspan(s * actions_, actions_);
    }

    std::size_t state_count() const noexcept { return probabilities_.size() / actions_; }
    std::size_t action_count() const noexcept { return actions_; }

    static StochasticPolicy uniform(std::size_t states, std::size_t actions) {
        StochasticPolicy p(states, actions);
        std::fill(p.probabilities_.begin(), p.probabilities_.end(), 1.0 / static_cast<double>(actions));
        return p;
    }

    static StochasticPolicy from_deterministic(const DeterministicPolicy& policy, std::size_t actions) {
        StochasticPolicy p(policy.size(), actions);
        for (std::size_t s = 0; s < policy.size(); ++s) p(s, policy[s]) = 1.0;
        return p;
    }

private:
    std::size_t actions_;
    Vector probabilities_;
};

/// state -> expected discounted return
using ValueFunction = Vector;

struct SolveOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 10000;
};

struct OptimalSolution {
    ValueFunction values;
    DeterministicPolicy policy;
    RewardTable q;
    double residual = 0.0;
    std::size_t iterations = 0;
    /// Sup-norm residual of every sweep, in order.
    Vector residuals;
};

struct SoftSolution {
    ValueFunction values;
    StochasticPolicy policy;
    RewardTable q;
    double residual = 0.0;
    std::size_t iterations = 0;
};

namespace detail {

inline void check_reward(const Mdp& mdp, const RewardTable& reward) {
    if (reward.state_count() != mdp.state_count() || reward.action_count() != mdp.action_count())
        throw DimensionError("reward table does not match MDP dimensions");
    for (double r : reward.values())
        if (!std::isfinite(r)) throw DomainError("reward must be finite everywhere");
}

inline void check_options(const SolveOptions& opt) {
    if (!(opt.tolerance > 0.0)) throw DomainError("solver tolerance must be positive");
    if (opt.max_iterations == 0) throw DomainError("iteration cap must be positive");
}

inline double expected_next(const Mdp& mdp, std::size_t s, std::size_t a, std::span<const double> values) {
    double e = 0.0;
    for (const Outcome& o : mdp.outcomes(s, a)) e += o.probability * values[o.next];
    return e;
}

/// Lowest index among maximal entries. Values within 1e-12 (relative) of the
/// running best count as ties so that rounding noise cannot flip a choice.
inline std::size_t greedy_action(std::span<const double> q_row) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < q_row.size(); ++a)
        if (q_row[a] > q_row[best] + 1e-12 * (1.0 + std::abs(q_row[best]))) best = a;
    return best;
}

} // namespace detail

/**
 * Value iteration to a sup-norm residual of at most `opt.tolerance`.
 *
 * The greedy policy breaks ties by the lowest action index, so repeated
 * solves of the same model yield identical policies.
 */
inline OptimalSolution solve_optimal(const Mdp& mdp, const RewardTable& reward, const SolveOptions& opt = {}) {
    detail::check_options(opt);
    detail::check_reward(mdp, reward);
    const std::size_t S = mdp.state_count(), A = mdp.action_count();
    const double gamma = mdp.discount();

    OptimalSolution sol{Vector(S, 0.0), DeterministicPolicy(S, 0), RewardTable(S, A), 0.0, 0, {}};
    Vector next(S);
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        for (std::size_t s = 0; s < S; ++s) {
            double best = kNegInf;
            for (std::size_t a = 0; a < A; ++a) {
                const double q = reward(s, a) + gamma * detail::expected_next(mdp, s, a, sol.values);
                sol.q(s, a) = q;
                best = std::max(best, q);
            }
            next[s] = best;
        }
        sol.residual = sup_norm_diff(next, sol.values);
        sol.residuals.push_back(sol.residual);
        sol.values.swap(next);
        sol.iterations = it;
        if (sol.residual <= opt.tolerance) break;
    }
    if (sol.residual > opt.tolerance)
        throw ConvergenceError("value iteration did not converge", sol.residual, sol.iterations);

    // Q against the final values so that the policy is greedy w.r.t. them.
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a)
            sol.q(s, a) = reward(s, a) + gamma * detail::expected_next(mdp, s, a, sol.values);
        sol.policy[s] = detail::greedy_action(
            std::span<const double>(sol.q.values()).subspan(s * A, A));
    }
    return sol;
}

/**
 * Soft (log-sum-exp, temperature 1) value iteration.
 *
 * V(s) = log sum_a exp(Q(s,a)),  Q(s,a) = R(s,a) + gamma E[V(s')],
 * pi(a|s) = exp(Q(s,a) - V(s)).
 */
inline SoftSolution solve_soft(const Mdp& mdp, const RewardTable& reward, const SolveOptions& opt = {}) {
    detail::check_options(opt);
    detail::check_reward(mdp, reward);
    const std::size_t S = mdp.state_count(), A = mdp.action_count();
    const double gamma = mdp.discount();

    SoftSolution sol{Vector(S, 0.0), StochasticPolicy(S, A), RewardTable(S, A), 0.0, 0};
    Vector next(S);
    Vector q_row(A);
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < A; ++a)
                q_row[a] = reward(s, a) + gamma * detail::expected_next(mdp, s, a, sol.values);
            next[s] = log_sum_exp(q_row);
        }
        sol.residual = sup_norm_diff(next, sol.values);
        sol.values.swap(next);
        sol.iterations = it;
        if (sol.residual <= opt.tolerance) break;
    }
    if (sol.residual > opt.tolerance)
        throw ConvergenceError("soft value iteration did not converge", sol.residual, sol.iterations);

    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a)
            sol.q(s, a) = reward(s, a) + gamma * detail::expected_next(mdp, s, a, sol.values);
        const double v = log_sum_exp(std::span<const double>(sol.q.values()).subspan(s * A, A));
        double total = 0.0;
        for (std::size_t a = 0; a < A; ++a) total += sol.policy(s, a) = std::exp(sol.q(s, a) - v);
        for (std::size_t a = 0; a < A; ++a) sol.policy(s, a) /= total;
    }
    return sol;
}

/// Iterative policy evaluation of a stochastic policy.
inline ValueFunction evaluate_policy(const Mdp& mdp, const RewardTable& reward, const StochasticPolicy& policy,
                                     const SolveOptions& opt = {}) {
    detail::check_options(opt);
    detail::check_reward(mdp, reward);
    const std::size_t S = mdp.state_count(), A = mdp.action_count();
    if (policy.state_count() != S || policy.action_count() != A)
        throw DimensionError("policy does not match MDP dimensions");
    const double gamma = mdp.discount();

    Vector v(S, 0.0), next(S);
    double residual = 0.0;
    std::size_t it = 0;
    while (it < opt.max_iterations) {
        ++it;
        for (std::size_t s = 0; s < S; ++s) {
            double acc = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                const double p = policy(s, a);
                if (p > 0.0) acc += p * (reward(s, a) + gamma * detail::expected_next(mdp, s, a, v));
            }
            next[s] = acc;
        }
        residual = sup_norm_diff(next, v);
        v.swap(next);
        if (residual <= opt.tolerance) return v;
    }
    throw ConvergenceError("policy evaluation did not converge", residual, it);
}

inline ValueFunction evaluate_policy(const Mdp& mdp, const RewardTable& reward, const DeterministicPolicy& policy,
                                     const SolveOptions& opt = {}) {
    if (policy.size() != mdp.state_count()) throw DimensionError("policy is not total over the state set");
    for (std::size_t a : policy)
        if (a >= mdp.action_count()) throw DimensionError("policy action out of range");
    return evaluate_policy(mdp, reward, StochasticPolicy::from_deterministic(policy, mdp.action_count()), opt);
}

/// Inverse learning error: L1 distance between two value functions over the same states.
inline double ile(std::span<const double> v_expert, std::span<const double> v_learned) {
    if (v_expert.size() != v_learned.size()) throw DimensionError("value functions cover different state sets");
    double total = 0.0;
    for (std::size_t s = 0; s < v_expert.size(); ++s) total += std::abs(v_expert[s] - v_learned[s]);
    return total;
}

/// Learned behavior accuracy: percentage of states where both policies pick the same action.
inline double lba(const DeterministicPolicy& expert, const DeterministicPolicy& learned) {
    if (expert.size() != learned.size()) throw DimensionError("policies cover different state sets");
    if (expert.empty()) throw EmptyInputError("policies have no states");
    std::size_t agree = 0;
    for (std::size_t s = 0; s < expert.size(); ++s) agree += expert[s] == learned[s];
    return 100.0 * static_cast<double>(agree) / static_cast<double>(expert.size());
}

/// Builds an MDP whose every transition is deterministic: `next(s, a)`.
template <class F>
Mdp make_deterministic_mdp(std::size_t states, std::size_t actions, F&& next, double discount, Vector start) {
    std::vector<std::vector<Outcome>> rows(states * actions);
    for (std::size_t s = 0; s < states; ++s)
        for (std::size_t a = 0; a < actions; ++a) rows[s * actions + a] = {Outcome{next(s, a), 1.0}};
    return Mdp(states, actions, std::move(rows), discount, std::move(start));
}

inline Vector uniform_distribution(std::size_t n) { return Vector(n, 1.0 / static_cast<double>(n)); }

} // namespace i2rl
