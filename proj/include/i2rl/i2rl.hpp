#pragma once

#include "i2rl/budget.hpp"
#include "i2rl/errors.hpp"
#include "i2rl/features.hpp"
#include "i2rl/latent.hpp"
#include "i2rl/maxent.hpp"
#include "i2rl/mdp.hpp"
#include "i2rl/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace i2rl {

/// What one session hands to the next: trajectory count, merged latent
/// feature expectations, the last weights and the last log-likelihood.
struct SessionStatistic {
    std::size_t count = 0;
    Vector features; ///< empty while count == 0
    Vector theta;
    std::optional<double> log_likelihood;
    /// Model trajectory length fixed by the first session.
    std::size_t horizon = 0;

    bool empty() const noexcept { return count == 0; }
};

/// (n0 phi0 + n1 phi1) / (n0 + n1)
inline Vector merge_feature_expectations(std::size_t prev_count, std::span<const double> prev,
                                         std::size_t cur_count, std::span<const double> cur) {
    if (prev_count == 0 && cur_count == 0) throw EmptyInputError("cannot merge two empty statistics");
    if (prev_count == 0) return Vector(cur.begin(), cur.end());
    if (cur_count == 0) return Vector(prev.begin(), prev.end());
    if (prev.size() != cur.size()) throw DimensionError("merged feature vectors differ in length");
    const double n0 = static_cast<double>(prev_count), n1 = static_cast<double>(cur_count);
    Vector out(cur.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (n0 * prev[k] + n1 * cur[k]) / (n0 + n1);
    return out;
}

enum class SessionInit {
    previous, ///< warm start at the previous session's weights
    random,   ///< fresh uniform random weights every session
};

struct SessionConfig {
    EmConfig em;
    SessionInit init = SessionInit::previous;
    /// EM restarts for sessions after the first. The first session uses em.restarts.
    std::size_t later_restarts = 1;
    /// Report the log-likelihood as a raw sum instead of per trajectory.
    bool raw_likelihood = false;
    std::uint64_t seed = 0;
};

/// Ground truth needed to score learned weights.
struct IleReference {
    RewardTable true_reward;
    ValueFunction expert_values;
    DeterministicPolicy expert_policy;
    SolveOptions solve;
};

inline IleReference make_ile_reference(const Mdp& mdp, RewardTable true_reward, const SolveOptions& opt = {}) {
    OptimalSolution sol = solve_optimal(mdp, true_reward, opt);
    return IleReference{std::move(true_reward), std::move(sol.values), std::move(sol.policy), opt};
}

/// Greedy policy of the reward induced by `theta`.
inline DeterministicPolicy learned_policy(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                                          const SolveOptions& opt = {}) {
    return solve_optimal(mdp, reward_table(theta, features), opt).policy;
}

/// ILE of the greedy policy for `theta`, valued under the true reward.
inline double learned_ile(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                          const IleReference& ref) {
    const DeterministicPolicy pi = learned_policy(mdp, features, theta, ref.solve);
    return ile(ref.expert_values, evaluate_policy(mdp, ref.true_reward, pi, ref.solve));
}

struct SessionRecord {
    std::size_t index = 0;
    Vector theta;
    std::optional<double> log_likelihood;
    std::optional<double> ile;
    double wall_seconds = 0.0;
    double work_units = 0.0;
    bool timed_out = false;
    std::size_t em_iterations = 0;
    std::size_t solver_iterations = 0;
};

struct SessionOutcome {
    SessionRecord record;
    SessionStatistic statistic;
};

namespace detail {

inline Vector random_weights(std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector theta(k);
    for (double& v : theta) v = unit(rng);
    return theta;
}

} // namespace detail

/**
 * One session of incremental latent max-entropy IRL.
 *
 * Merges this session's latent feature expectations into the statistic by
 * trajectory count and runs EM from the previous weights (or random ones).
 * `budget`, if given, is charged and checked throughout; expiry sets the
 * record's timeout flag and returns the best weights so far. An M-step that
 * hits its iteration cap propagates as EmTimeoutError.
 *
 * If `likelihood_data` is non-empty the record carries the observed-data
 * log-likelihood of the new weights over it (typically every trajectory seen
 * so far). That evaluation is not charged to the budget.
 */
inline SessionOutcome run_session(const Mdp& mdp, const FeatureSet& features, const OcclusionModel& occlusion,
                                  std::span<const ObservedTrajectory> ys, const SessionStatistic& stat,
                                  const SessionConfig& cfg, std::size_t index,
                                  std::span<const ObservedTrajectory> likelihood_data = {},
                                  LearningBudget* budget = nullptr) {
    if (ys.empty()) throw EmptyInputError("a session needs at least one trajectory");
    for (const ObservedTrajectory& y : ys) validate_observed(y, mdp, occlusion);

    EmConfig em = cfg.em;
    em.seed = mix_seed(cfg.seed, index);
    em.track_likelihood = false;
    const std::size_t horizon = std::max(stat.horizon, em.solver.horizon ? em.solver.horizon : detail::longest(ys));
    em.solver.horizon = horizon;

    Vector init;
    if (stat.theta.empty() || cfg.init == SessionInit::random) {
        init = detail::random_weights(features.count(), mix_seed(em.seed, 0x1417));
    } else {
        init = stat.theta;
    }
    if (!stat.empty()) em.restarts = cfg.later_restarts;

    const EmPrior prior{stat.count, stat.features};
    const double work_before = budget ? budget->work_units() : 0.0;
    const double wall_before = budget ? budget->wall_seconds() : 0.0;
    EmResult res;
    {
        BudgetScope scope(budget);
        res = em_solve(mdp, features, occlusion, ys, init, em, budget, stat.empty() ? nullptr : &prior);
    }

    SessionOutcome out;
    out.record.index = index;
    out.record.theta = res.theta;
    out.record.timed_out = res.timed_out;
    out.record.em_iterations = res.iterations;
    out.record.solver_iterations = res.solver_iterations;
    if (budget) {
        out.record.work_units = budget->work_units() - work_before;
        out.record.wall_seconds = budget->wall_seconds() - wall_before;
    }

    out.statistic.count = stat.count + ys.size();
    out.statistic.features = res.target.empty()
                                 ? merge_feature_expectations(stat.count, stat.features, ys.size(),
                                                              latent_feature_expectations(ys, res.theta, mdp, features,
                                                                                          occlusion, em))
                                 : res.target;
    out.statistic.theta = res.theta;
    out.statistic.horizon = horizon;
    if (!likelihood_data.empty()) {
        double ll = observed_ll(res.theta, likelihood_data, mdp, features, occlusion, em);
        if (!cfg.raw_likelihood) ll /= static_cast<double>(likelihood_data.size());
        out.record.log_likelihood = ll;
        out.statistic.log_likelihood = ll;
    } else {
        out.statistic.log_likelihood = stat.log_likelihood;
    }
    return out;
}

/// Stopping criterion on log-likelihood; never fires without a previous value.
inline bool check_stop_ll(double ll_i, std::optional<double> ll_prev, double epsilon) {
    if (!(epsilon > 0.0)) throw DomainError("stopping tolerance must be positive");
    return ll_prev.has_value() && std::abs(ll_i - *ll_prev) <= epsilon;
}

/// Stopping criterion on ILE, using the signed difference previous - current.
inline bool check_stop_ile(double ile_prev, double ile_i, double epsilon) {
    if (!(epsilon > 0.0)) throw DomainError("stopping tolerance must be positive");
    return ile_prev - ile_i <= epsilon;
}

enum class StopCriterion { none, likelihood, ile };

struct I2rlConfig {
    SessionConfig session;
    StopCriterion criterion = StopCriterion::none;
    double epsilon = 1e-3;
    std::size_t max_sessions = std::numeric_limits<std::size_t>::max();
    /// Per-session deadline in seconds on `clock`.
    double session_deadline = std::numeric_limits<double>::infinity();
    ClockKind clock = ClockKind::work;
};

/**
 * Runs sessions over `stream` until the criterion fires, the stream ends or
 * `max_sessions` is reached. `reference` is required for the ILE criterion
 * and, when present, fills every record's ILE.
 */
inline std::vector<SessionRecord> run_i2rl(const Mdp& mdp, const FeatureSet& features,
                                           const OcclusionModel& occlusion,
                                           std::span<const std::vector<ObservedTrajectory>> stream,
                                           const I2rlConfig& cfg, const IleReference* reference = nullptr) {
    if (cfg.criterion == StopCriterion::ile && !reference)
        throw DomainError("the ILE stopping criterion needs the true reward");
    std::vector<SessionRecord> history;
    std::vector<ObservedTrajectory> seen;
    SessionStatistic stat;
    const bool track_ll = cfg.criterion == StopCriterion::likelihood;
    for (std::size_t i = 0; i < stream.size() && history.size() < cfg.max_sessions; ++i) {
        seen.insert(seen.end(), stream[i].begin(), stream[i].end());
        LearningBudget budget(cfg.clock, cfg.session_deadline);
        SessionOutcome out = run_session(mdp, features, occlusion, stream[i], stat, cfg.session, i + 1,
                                         track_ll ? std::span<const ObservedTrajectory>(seen)
                                                  : std::span<const ObservedTrajectory>(),
                                         &budget);
        if (reference) out.record.ile = learned_ile(mdp, features, out.record.theta, *reference);

        bool stop = false;
        if (cfg.criterion == StopCriterion::likelihood)
            stop = check_stop_ll(*out.record.log_likelihood, stat.log_likelihood, cfg.epsilon);
        else if (cfg.criterion == StopCriterion::ile && !history.empty())
            stop = check_stop_ile(*history.back().ile, *out.record.ile, cfg.epsilon);

        stat = std::move(out.statistic);
        history.push_back(std::move(out.record));
        if (stop) break;
    }
    return history;
}

// ---- confidence ------------------------------------------------------------

namespace detail {

inline void check_confidence(double epsilon, double gamma, std::size_t k) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be a non-negative number");
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("discount must lie in (0,1)");
    if (k == 0) throw DomainError("feature count must be at least 1");
}

} // namespace detail

/// delta = 2K exp(-n eps^2 (1-gamma)^2 / (2K^2)), clamped to [0,1].
inline double confidence_fullobs(std::size_t trajectories, double epsilon, double gamma, std::size_t k) {
    detail::check_confidence(epsilon, gamma, k);
    const double K = static_cast<double>(k);
    const double e = static_cast<double>(trajectories) * epsilon * epsilon * (1.0 - gamma) * (1.0 - gamma) / (2.0 * K * K);
    return std::clamp(2.0 * K * std::exp(-e), 0.0, 1.0);
}

/// delta_sampling = 2K exp(-2 (1-gamma)^2 eps_s^2 N), clamped to [0,1].
inline double confidence_sampling(std::size_t samples, double epsilon_sampling, double gamma, std::size_t k) {
    detail::check_confidence(epsilon_sampling, gamma, k);
    const double K = static_cast<double>(k);
    const double e = 2.0 * (1.0 - gamma) * (1.0 - gamma) * epsilon_sampling * epsilon_sampling *
                     static_cast<double>(samples);
    return std::clamp(2.0 * K * std::exp(-e), 0.0, 1.0);
}

struct ConfidenceParams {
    double epsilon = 0.0;
    /// 0 means hidden features are computed exactly, without sampling.
    double epsilon_sampling = 0.0;
    std::size_t samples = 0;
    std::size_t features = 1;
    double discount = 0.9;
    std::size_t trajectories = 0;
};

struct LatentConfidence {
    double delta = 1.0;
    double delta_sampling = 0.0;
    double epsilon_latent = 0.0;
    double delta_latent = 1.0;
};

/// eps_latent = eps + 2K eps_s and delta_latent = delta + delta_sampling (clamped).
inline LatentConfidence confidence_latent(const ConfidenceParams& p) {
    LatentConfidence c;
    c.delta = confidence_fullobs(p.trajectories, p.epsilon, p.discount, p.features);
    c.delta_sampling =
        p.epsilon_sampling == 0.0 ? 0.0 : confidence_sampling(p.samples, p.epsilon_sampling, p.discount, p.features);
    c.epsilon_latent = p.epsilon + 2.0 * static_cast<double>(p.features) * p.epsilon_sampling;
    c.delta_latent = std::clamp(c.delta + c.delta_sampling, 0.0, 1.0);
    return c;
}

/// Smallest trajectory count whose full-observability delta is at most `target`.
inline std::size_t trajectories_for_confidence(double target, double epsilon, double gamma, std::size_t k) {
    detail::check_confidence(epsilon, gamma, k);
    if (!(target > 0.0)) throw DomainError("target delta must be positive");
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (target >= 1.0) return 0;
    const double K = static_cast<double>(k);
    const double raw = 2.0 * K * K * std::log(2.0 * K / target) / (epsilon * epsilon * (1.0 - gamma) * (1.0 - gamma));
    if (!(raw < 1e18)) throw DomainError("required trajectory count is too large to represent");
    auto n = static_cast<std::size_t>(std::ceil(std::max(0.0, raw)));
    while (n > 0 && confidence_fullobs(n - 1, epsilon, gamma, k) <= target) --n;
    while (confidence_fullobs(n, epsilon, gamma, k) > target) ++n;
    return n;
}

// ---- incremental baseline: value-difference reward updates -----------------

/// Constant initial reward 1/sqrt(|S|).
inline RewardTable jin_init(std::size_t states, std::size_t actions) {
    if (states == 0 || actions == 0) throw ModelError("reward table needs states and actions");
    const double v = 1.0 / std::sqrt(static_cast<double>(states));
    return RewardTable::from(states, actions, [v](std::size_t, std::size_t) { return v; });
}

struct JinUpdate {
    RewardTable reward;
    /// Q(s, observed) - max_a Q(s, a) under the previous reward; never positive.
    double value_gap = 0.0;
};

/// One update: solves the MDP under `previous` and adds alpha times the
/// value gap of the observed action to that action's reward.
inline JinUpdate jin_session(const RewardTable& previous, StateAction observed, const Mdp& mdp, double alpha,
                             const SolveOptions& opt = {}) {
    if (!(alpha > 0.0)) throw DomainError("step size must be positive");
    if (observed.state >= mdp.state_count() || observed.action >= mdp.action_count())
        throw ModelError("observed pair out of range");
    const OptimalSolution sol = solve_optimal(mdp, previous, opt);
    const std::size_t A = mdp.action_count();
    const auto row = std::span<const double>(sol.q.values()).subspan(observed.state * A, A);
    const double v = row[observed.action] - *std::max_element(row.begin(), row.end());
    JinUpdate out{previous, v};
    if (v != 0.0) {
        Vector values = previous.values();
        values[observed.state * A + observed.action] += alpha * v;
        out.reward = RewardTable(mdp.state_count(), A, std::move(values));
    }
    return out;
}

/// Applies one update per observed pair, in order, from the constant start.
inline RewardTable jin_learn(const Mdp& mdp, std::span<const StateAction> pairs, double alpha,
                             const SolveOptions& opt = {}) {
    RewardTable r = jin_init(mdp.state_count(), mdp.action_count());
    for (const StateAction& sa : pairs) r = jin_session(r, sa, mdp, alpha, opt).reward;
    return r;
}

} // namespace i2rl
