#pragma once

#include "i2rl/budget.hpp"
#include "i2rl/errors.hpp"
#include "i2rl/features.hpp"
#include "i2rl/mdp.hpp"
#include "i2rl/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace i2rl {

/*
 * Log-linear distribution over fixed-length trajectories
 *
 *   Pr(X; theta) ∝ p0(s_1) · exp(sum_t gamma^t theta^T phi(s_t, a_t)) · prod_{t<T} T(s_{t+1} | s_t, a_t)
 *
 * The normalizer and the marginals are computed by a backward soft-value
 * recursion followed by a forward occupancy pass, both in log space.
 */

/// Summary of the trajectory distribution at one weight vector.
struct TrajectoryDistribution {
    double log_partition = 0.0;
    /// E_X[sum_t gamma^t phi_k]
    Vector feature_expectations;
    /// Shannon entropy in nats; NaN unless requested.
    double entropy = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void check_problem(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                          std::size_t horizon) {
    features.check_compatible(mdp);
    if (theta.size() != features.count()) throw DimensionError("weight vector length differs from feature count");
    if (horizon == 0) throw DomainError("trajectory horizon must be at least 1");
}

inline double dp_cost(const Mdp& mdp, std::size_t horizon) {
    return 2.0 * static_cast<double>(horizon) *
           static_cast<double>(mdp.outcome_count() + mdp.state_count() * mdp.action_count());
}

/// log(sum_o p_o exp(values[o]))
inline double log_expect(const Mdp& mdp, std::size_t s, std::size_t a, std::span<const double> log_values) {
    const auto outs = mdp.outcomes(s, a);
    double hi = kNegInf;
    for (const Outcome& o : outs) hi = std::max(hi, log_values[o.next]);
    if (hi == kNegInf) return kNegInf;
    double acc = 0.0;
    for (const Outcome& o : outs) acc += o.probability * std::exp(log_values[o.next] - hi);
    return hi + std::log(acc);
}

/// Backward recursion. Fills q[(t-1)][s*A+a] = gamma^t r(s,a) + log E[beta_{t+1}]
/// and log_beta[t-1][s] for t = 1..T (log_beta[T] is all zeros).
struct BackwardPass {
    std::vector<Vector> q;
    std::vector<Vector> log_beta;
    double log_partition = 0.0;
};

inline BackwardPass backward(const Mdp& mdp, const RewardTable& reward, std::size_t horizon) {
    const std::size_t S = mdp.state_count(), A = mdp.action_count();
    const double gamma = mdp.discount();
    BackwardPass bp;
    bp.q.assign(horizon, Vector(S * A));
    bp.log_beta.assign(horizon + 1, Vector(S, 0.0));
    for (std::size_t t = horizon; t >= 1; --t) {
        const double w = std::pow(gamma, static_cast<double>(t));
        Vector& q = bp.q[t - 1];
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < A; ++a) {
                const double cont = t == horizon ? 0.0 : log_expect(mdp, s, a, bp.log_beta[t]);
                q[s * A + a] = w * reward(s, a) + cont;
            }
            bp.log_beta[t - 1][s] = log_sum_exp(std::span<const double>(q).subspan(s * A, A));
        }
    }
    double z = kNegInf;
    const Vector& p0 = mdp.start_distribution();
    for (std::size_t s = 0; s < S; ++s)
        if (p0[s] > 0.0) z = log_add(z, std::log(p0[s]) + bp.log_beta[0][s]);
    bp.log_partition = z;
    return bp;
}

} // namespace detail

/// log Z(theta) over all length-`horizon` trajectories.
inline double log_partition(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                            std::size_t horizon, LearningBudget* budget = nullptr) {
    detail::check_problem(mdp, features, theta, horizon);
    charge(budget, detail::dp_cost(mdp, horizon) / 2.0);
    return detail::backward(mdp, reward_table(theta, features), horizon).log_partition;
}

/**
 * Exact marginals of the trajectory distribution: log partition, discounted
 * feature expectations and, on request, the entropy.
 */
inline TrajectoryDistribution trajectory_distribution(const Mdp& mdp, const FeatureSet& features,
                                                      std::span<const double> theta, std::size_t horizon,
                                                      bool with_entropy = false, LearningBudget* budget = nullptr) {
    detail::check_problem(mdp, features, theta, horizon);
    charge(budget, detail::dp_cost(mdp, horizon));
    const std::size_t S = mdp.state_count(), A = mdp.action_count(), K = features.count();
    const double gamma = mdp.discount();
    const RewardTable reward = reward_table(theta, features);
    const detail::BackwardPass bp = detail::backward(mdp, reward, horizon);
    const double log_z = bp.log_partition;

    TrajectoryDistribution out;
    out.log_partition = log_z;
    out.feature_expectations.assign(K, 0.0);

    const Vector& p0 = mdp.start_distribution();
    Vector log_alpha(S, kNegInf), next_alpha(S);
    for (std::size_t s = 0; s < S; ++s)
        if (p0[s] > 0.0) log_alpha[s] = std::log(p0[s]);

    double expected_log_base = 0.0; // E[log p0(s_1) + sum log T]
    if (with_entropy)
        for (std::size_t s = 0; s < S; ++s)
            if (p0[s] > 0.0) expected_log_base += std::exp(log_alpha[s] + bp.log_beta[0][s] - log_z) * std::log(p0[s]);

    for (std::size_t t = 1; t <= horizon; ++t) {
        const double w = std::pow(gamma, static_cast<double>(t));
        const Vector& q = bp.q[t - 1];
        std::fill(next_alpha.begin(), next_alpha.end(), kNegInf);
        for (std::size_t s = 0; s < S; ++s) {
            if (log_alpha[s] == kNegInf) continue;
            for (std::size_t a = 0; a < A; ++a) {
                const double p = std::exp(log_alpha[s] + q[s * A + a] - log_z);
                if (p > 0.0) {
                    const auto phi = features.at(s, a);
                    for (std::size_t k = 0; k < K; ++k)
                        if (phi[k]) out.feature_expectations[k] += w * p;
                }
                if (t == horizon) continue;
                const double step = log_alpha[s] + w * reward(s, a);
                for (const Outcome& o : mdp.outcomes(s, a)) {
                    const double lp = std::log(o.probability);
                    next_alpha[o.next] = log_add(next_alpha[o.next], step + lp);
                    if (with_entropy && lp != 0.0)
                        expected_log_base += std::exp(step + lp + bp.log_beta[t][o.next] - log_z) * lp;
                }
            }
        }
        log_alpha.swap(next_alpha);
    }
    if (with_entropy) out.entropy = log_z - dot(theta, out.feature_expectations) - expected_log_base;
    return out;
}

/// E_X[sum_t gamma^t phi_k] under Pr(X; theta) over length-`horizon` trajectories.
inline Vector model_feature_expectations(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                                         std::size_t horizon, LearningBudget* budget = nullptr) {
    return trajectory_distribution(mdp, features, theta, horizon, false, budget).feature_expectations;
}

/// Unnormalized log Pr(X; theta); -inf when X is not transition-feasible or
/// starts outside the support of p0.
inline double trajectory_log_weight(const Trajectory& traj, std::span<const double> theta, const Mdp& mdp,
                                    const FeatureSet& features) {
    if (traj.empty()) throw EmptyInputError("trajectory has no steps");
    const double gamma = mdp.discount();
    const double p0 = mdp.start_distribution()[traj.front().state];
    if (p0 <= 0.0) return kNegInf;
    double lw = std::log(p0);
    double w = 1.0;
    for (std::size_t t = 0; t < traj.size(); ++t) {
        w *= gamma;
        lw += w * reward_of(theta, features, traj[t].state, traj[t].action);
        if (t + 1 < traj.size()) {
            const double p = mdp.transition_probability(traj[t].state, traj[t].action, traj[t + 1].state);
            if (p <= 0.0) return kNegInf;
            lw += std::log(p);
        }
    }
    return lw;
}

/// Normalized log Pr(X; theta) within the set of trajectories of the same length.
inline double trajectory_log_prob(const Trajectory& traj, std::span<const double> theta, const Mdp& mdp,
                                  const FeatureSet& features) {
    const double lw = trajectory_log_weight(traj, theta, mdp, features);
    if (lw == kNegInf) return kNegInf;
    return lw - log_partition(mdp, features, theta, traj.size());
}

/// Brute-force log Z by walking every state-action sequence of length
/// `horizon`. Exponential; intended for small models only.
inline double log_partition_by_enumeration(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                                           std::size_t horizon) {
    detail::check_problem(mdp, features, theta, horizon);
    const std::size_t S = mdp.state_count(), A = mdp.action_count();
    Trajectory traj(horizon);
    double log_z = kNegInf;
    // Odometer over (s,a)^horizon.
    std::vector<std::size_t> digit(horizon, 0);
    const std::size_t base = S * A;
    while (true) {
        for (std::size_t t = 0; t < horizon; ++t) traj[t] = {digit[t] / A, digit[t] % A};
        log_z = log_add(log_z, trajectory_log_weight(traj, theta, mdp, features));
        std::size_t pos = 0;
        while (pos < horizon && ++digit[pos] == base) digit[pos++] = 0;
        if (pos == horizon) break;
    }
    return log_z;
}

enum class SolverStatus {
    converged, ///< projected gradient norm within tolerance
    stalled,   ///< no descent possible at machine precision
    degenerate, ///< no feature ever fires; weights returned unchanged
    deadline,  ///< learning budget expired; best iterate returned
};

inline const char* to_string(SolverStatus s) {
    switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::stalled: return "stalled";
    case SolverStatus::degenerate: return "degenerate";
    case SolverStatus::deadline: return "deadline";
    }
    return "unknown";
}

struct SolverConfig {
    /// Initial step of the exponentiated-gradient update.
    double learning_rate = 0.1;
    /// Step growth after an accepted update, and its ceiling.
    double step_growth = 1.5;
    double max_learning_rate = 50.0;
    std::size_t max_iterations = 5000;
    double gradient_tolerance = 1e-6;
    /// Length of model trajectories; 0 means "use the longest demonstrated trajectory".
    std::size_t horizon = 0;
    std::size_t restarts = 1;
    /// Lower clamp of the multiplicative update; keeps every weight revivable.
    double weight_floor = 1e-6;
};

struct MaxEntResult {
    Vector theta;
    Vector achieved;
    std::size_t iterations = 0;
    /// Projected gradient norm at `theta`.
    double gradient_norm = 0.0;
    /// log Z(theta) - theta^T target
    double dual = 0.0;
    SolverStatus status = SolverStatus::converged;
};

/// The M-step hit its iteration cap. Carries the best iterate found.
class MaxEntCapError : public ConvergenceError {
public:
    MaxEntCapError(MaxEntResult best, std::size_t iterations)
        : ConvergenceError("max-entropy solver hit its iteration cap (gradient norm " +
                               std::to_string(best.gradient_norm) + ")",
                           best.gradient_norm, iterations),
          best_(std::move(best)) {}

    const MaxEntResult& best() const noexcept { return best_; }

private:
    MaxEntResult best_;
};

/// Gradient norm ignoring components pinned at a box face by their own sign.
inline double projected_gradient_norm(std::span<const double> theta, std::span<const double> gradient,
                                      double floor) {
    double n = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const bool pinned_high = theta[k] >= 1.0 && gradient[k] < 0.0;
        const bool pinned_low = theta[k] <= floor && gradient[k] > 0.0;
        if (!pinned_high && !pinned_low) n = std::max(n, std::abs(gradient[k]));
    }
    return n;
}

/**
 * Fully observed max-entropy IRL: finds theta in [0,1]^K whose trajectory
 * distribution matches `target` feature expectations.
 *
 * Minimizes the convex dual log Z(theta) - theta^T target with the
 * multiplicative update theta_k <- clamp(theta_k exp(-eta g_k)), where
 * g = E_theta[phi] - target. A step that raises the dual is rejected and
 * halves eta; accepted steps grow it. Every accepted iterate therefore has a
 * dual no larger than the starting point.
 */
inline MaxEntResult maxent_solve(const Mdp& mdp, const FeatureSet& features, std::span<const double> target,
                                 const SolverConfig& cfg, std::span<const double> theta_init,
                                 LearningBudget* budget = nullptr) {
    if (cfg.horizon == 0) throw DomainError("solver horizon must be set");
    if (!(cfg.learning_rate > 0.0) || cfg.max_iterations == 0 || !(cfg.gradient_tolerance > 0.0))
        throw DomainError("solver configuration values must be positive");
    detail::check_problem(mdp, features, theta_init, cfg.horizon);
    if (target.size() != features.count()) throw DimensionError("target length differs from feature count");
    const double mass = discounted_horizon_mass(mdp.discount(), cfg.horizon);
    for (double v : target)
        if (!(v >= -1e-12 && v <= mass * (1.0 + 1e-12)))
            throw DomainError("target feature expectation " + std::to_string(v) + " outside [0, " +
                              std::to_string(mass) + "]");

    const std::size_t K = features.count();
    auto clamp_box = [&](double v) { return std::clamp(v, cfg.weight_floor, 1.0); };

    MaxEntResult cur;
    cur.theta.resize(K);
    for (std::size_t k = 0; k < K; ++k) cur.theta[k] = clamp_box(theta_init[k]);

    auto evaluate = [&](MaxEntResult& r) {
        const TrajectoryDistribution d = trajectory_distribution(mdp, features, r.theta, cfg.horizon, false, budget);
        r.achieved = d.feature_expectations;
        r.dual = d.log_partition - dot(r.theta, target);
        Vector g(K);
        for (std::size_t k = 0; k < K; ++k) g[k] = r.achieved[k] - target[k];
        r.gradient_norm = projected_gradient_norm(r.theta, g, cfg.weight_floor);
        return g;
    };

    if (features.all_zero()) {
        evaluate(cur);
        cur.status = SolverStatus::degenerate;
        return cur;
    }

    Vector grad = evaluate(cur);
    MaxEntResult best = cur;
    double eta = cfg.learning_rate;
    std::size_t evaluations = 1;
    MaxEntResult trial;
    trial.theta.resize(K);
    while (true) {
        if (cur.gradient_norm <= cfg.gradient_tolerance) {
            cur.status = SolverStatus::converged;
            cur.iterations = evaluations;
            return cur;
        }
        if (expired(budget)) {
            best.status = SolverStatus::deadline;
            best.iterations = evaluations;
            return best;
        }
        if (evaluations >= cfg.max_iterations) {
            best.iterations = evaluations;
            throw MaxEntCapError(best, evaluations);
        }
        bool moved = false;
        for (std::size_t k = 0; k < K; ++k) {
            trial.theta[k] = clamp_box(cur.theta[k] * std::exp(-eta * grad[k]));
            moved = moved || trial.theta[k] != cur.theta[k];
        }
        if (!moved) {
            cur.status = SolverStatus::stalled;
            cur.iterations = evaluations;
            return cur;
        }
        Vector trial_grad = evaluate(trial);
        ++evaluations;
        if (trial.dual <= cur.dual) {
            cur = trial;
            grad.swap(trial_grad);
            eta = std::min(eta * cfg.step_growth, cfg.max_learning_rate);
            if (cur.gradient_norm < best.gradient_norm) best = cur;
        } else {
            eta *= 0.5;
            if (eta < 1e-14) {
                cur.status = SolverStatus::stalled;
                cur.iterations = evaluations;
                return cur;
            }
        }
    }
}

/// Restarted solve from uniform random weights; keeps the lowest dual.
inline MaxEntResult maxent_solve(const Mdp& mdp, const FeatureSet& features, std::span<const double> target,
                                 const SolverConfig& cfg, std::uint64_t seed, LearningBudget* budget = nullptr) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    MaxEntResult best;
    bool have = false;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, cfg.restarts); ++r) {
        Vector init(features.count());
        for (double& v : init) v = unit(rng);
        MaxEntResult res = maxent_solve(mdp, features, target, cfg, init, budget);
        if (!have || res.dual < best.dual) {
            best = std::move(res);
            have = true;
        }
        if (best.status == SolverStatus::deadline) break;
    }
    return best;
}

} // namespace i2rl
