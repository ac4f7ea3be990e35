#pragma once

#include "i2rl/errors.hpp"
#include "i2rl/mdp.hpp"
#include "i2rl/numeric.hpp"

#include <compare>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace i2rl {

/**
 * K binary state-action features, stored as a dense 0/1 table.
 */
class FeatureSet {
public:
    FeatureSet(std::size_t states, std::size_t actions, std::size_t count, std::vector<std::uint8_t> table)
        : states_(states), actions_(actions), count_(count), table_(std::move(table)) {
        if (count_ == 0) throw ModelError("a feature set needs at least one feature");
        if (table_.size() != states_ * actions_ * count_) throw DimensionError("feature table size mismatch");
        for (std::uint8_t v : table_)
            if (v > 1) throw ModelError("features must be binary");
    }

    /// `f(s, a, k)` is converted to 0/1; anything other than 0 or 1 is rejected.
    template <class F>
    static FeatureSet from(std::size_t states, std::size_t actions, std::size_t count, F&& f) {
        std::vector<std::uint8_t> table(states * actions * count);
        for (std::size_t s = 0; s < states; ++s)
            for (std::size_t a = 0; a < actions; ++a)
                for (std::size_t k = 0; k < count; ++k) {
                    const auto v = f(s, a, k);
                    if (v != 0 && v != 1) throw ModelError("features must be binary");
                    table[(s * actions + a) * count + k] = static_cast<std::uint8_t>(v);
                }
        return FeatureSet(states, actions, count, std::move(table));
    }

    std::size_t count() const noexcept { return count_; }
    std::size_t state_count() const noexcept { return states_; }
    std::size_t action_count() const noexcept { return actions_; }

    std::span<const std::uint8_t> at(std::size_t s, std::size_t a) const {
        return std::span<const std::uint8_t>(table_).subspan((s * actions_ + a) * count_, count_);
    }

    bool operator()(std::size_t s, std::size_t a, std::size_t k) const {
        return table_[(s * actions_ + a) * count_ + k] != 0;
    }

    /// True when no feature ever fires.
    bool all_zero() const {
        for (std::uint8_t v : table_)
            if (v) return false;
        return true;
    }

    void check_compatible(const Mdp& mdp) const {
        if (states_ != mdp.state_count() || actions_ != mdp.action_count())
            throw DimensionError("feature set does not match MDP dimensions");
    }

private:
    std::size_t states_;
    std::size_t actions_;
    std::size_t count_;
    std::vector<std::uint8_t> table_;
};

/// Reward weights theta, componentwise in [0, 1].
class RewardWeights {
public:
    RewardWeights() = default;
    explicit RewardWeights(Vector theta) : theta_(std::move(theta)) {
        for (double v : theta_)
            if (!(v >= 0.0 && v <= 1.0)) throw DomainError("reward weights must lie in [0,1]");
    }

    std::size_t size() const noexcept { return theta_.size(); }
    double operator[](std::size_t k) const { return theta_[k]; }
    const Vector& values() const noexcept { return theta_; }
    operator std::span<const double>() const noexcept { return theta_; }

private:
    Vector theta_;
};

/// theta^T phi(s, a)
inline double reward_of(std::span<const double> theta, const FeatureSet& features, std::size_t s, std::size_t a) {
    if (theta.size() != features.count()) throw DimensionError("weight vector length differs from feature count");
    double r = 0.0;
    const auto phi = features.at(s, a);
    for (std::size_t k = 0; k < phi.size(); ++k)
        if (phi[k]) r += theta[k];
    return r;
}

inline RewardTable reward_table(std::span<const double> theta, const FeatureSet& features) {
    if (theta.size() != features.count()) throw DimensionError("weight vector length differs from feature count");
    return RewardTable::from(features.state_count(), features.action_count(),
                             [&](std::size_t s, std::size_t a) { return reward_of(theta, features, s, a); });
}

struct StateAction {
    std::size_t state = 0;
    std::size_t action = 0;

    friend auto operator<=>(const StateAction&, const StateAction&) = default;
};

/// Fully observed trajectory; step t (1-based) is element t-1.
using Trajectory = std::vector<StateAction>;

/// A finite set of trajectories; may be empty.
using Demonstration = std::vector<Trajectory>;

/// Throws ModelError unless the trajectory is non-empty, in range, and every
/// consecutive transition has positive probability.
inline void validate_trajectory(const Mdp& mdp, const Trajectory& traj) {
    if (traj.empty()) throw ModelError("trajectory must contain at least one step");
    for (std::size_t t = 0; t < traj.size(); ++t) {
        if (traj[t].state >= mdp.state_count() || traj[t].action >= mdp.action_count())
            throw ModelError("trajectory step " + std::to_string(t + 1) + " out of range");
        if (t + 1 < traj.size() && mdp.transition_probability(traj[t].state, traj[t].action, traj[t + 1].state) <= 0.0)
            throw ModelError("trajectory step " + std::to_string(t + 1) + " -> " + std::to_string(t + 2) +
                             " is not transition-feasible");
    }
}

/// Adds sum_t gamma^t phi(<s,a>_t) for one trajectory into `out`.
inline void accumulate_discounted_features(const Trajectory& traj, const FeatureSet& features, double gamma,
                                           std::span<double> out) {
    double w = 1.0;
    for (const StateAction& sa : traj) {
        w *= gamma;
        const auto phi = features.at(sa.state, sa.action);
        for (std::size_t k = 0; k < phi.size(); ++k)
            if (phi[k]) out[k] += w;
    }
}

/**
 * Empirical feature expectations: the average over trajectories of
 * sum_{t=1..T} gamma^t phi_k(<s,a>_t). The first step carries weight gamma.
 */
inline Vector empirical_feature_expectations(const Demonstration& demo, const FeatureSet& features, double gamma) {
    if (demo.empty()) throw EmptyInputError("empirical feature expectations of an empty demonstration");
    Vector phi(features.count(), 0.0);
    for (const Trajectory& traj : demo) accumulate_discounted_features(traj, features, gamma, phi);
    for (double& v : phi) v /= static_cast<double>(demo.size());
    return phi;
}

} // namespace i2rl
