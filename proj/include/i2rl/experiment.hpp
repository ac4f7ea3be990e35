#pragma once

#include "i2rl/budget.hpp"
#include "i2rl/errors.hpp"
#include "i2rl/i2rl.hpp"
#include "i2rl/latent.hpp"
#include "i2rl/patrol.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace i2rl::patrol {

enum class Method { batch, incremental, incremental_random_weights, random_baseline };

inline const char* to_string(Method m) {
    switch (m) {
    case Method::batch: return "batch";
    case Method::incremental: return "incremental";
    case Method::incremental_random_weights: return "incremental_random_weights";
    case Method::random_baseline: return "random_baseline";
    }
    return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : {Method::batch, Method::incremental, Method::incremental_random_weights, Method::random_baseline})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

struct RunConfig {
    double observability = 100.0;
    /// Demonstrated state-action pairs per guard.
    std::size_t pairs = 16;
    /// Batch learning runs `em.restarts` EM chains.
    EmConfig em;
    /// EM chains per incremental session. A session refines one estimate, so
    /// the default is a single chain.
    std::size_t session_restarts = 1;
    ClockKind clock = ClockKind::work;
    /// Learning-time limit per IRL call: one guard's batch EM, or one
    /// incremental session.
    double deadline = std::numeric_limits<double>::infinity();
};

struct RunResult {
    bool success = false;
    bool detected = false;
    bool timed_out = false;
    /// No safe plan was found, so the learner never left the start room.
    bool held = false;
    /// Learning time on the configured clock.
    double duration = 0.0;
    double wall_seconds = 0.0;
    double work_units = 0.0;
    std::optional<double> lba;
    std::optional<double> ile;
    std::size_t sessions = 0;
    /// Observed-data log-likelihood per trajectory, averaged over guards.
    std::optional<double> final_ll;
    std::array<Vector, 2> theta;
};

/// Trajectory lengths that add up to `pairs`: full-length ones, then the remainder.
inline std::vector<std::size_t> split_pairs(std::size_t pairs, std::size_t length) {
    if (pairs == 0) throw DomainError("demonstration must contain at least one state-action pair");
    std::vector<std::size_t> out(pairs / length, length);
    if (pairs % length) out.push_back(pairs % length);
    return out;
}

struct GuardData {
    OcclusionModel occlusion;
    GeneratedDemonstration demo;
};

inline std::array<GuardData, 2> make_guard_data(const Domain& d, double observability, std::size_t pairs,
                                                std::uint64_t seed) {
    std::array<GuardData, 2> out;
    for (std::size_t g = 0; g < 2; ++g) {
        const PatrollerModel& m = d.patrollers[g];
        out[g].occlusion = observability_occlusion(m, observability);
        std::mt19937_64 rng(mix_seed(seed, 10 + g));
        for (std::size_t len : split_pairs(pairs, d.config.trajectory_length)) {
            auto part = generate_demonstration(m, 1, len, out[g].occlusion, rng);
            out[g].demo.full.push_back(std::move(part.full.front()));
            out[g].demo.observed.push_back(std::move(part.observed.front()));
        }
    }
    return out;
}

/// Learned weights for both guards and what they cost.
struct Learned {
    std::array<Vector, 2> theta;
    bool timed_out = false;
    /// Learning sessions per guard; batch learning counts as one.
    std::size_t sessions = 0;
    double duration = 0.0;
    double wall_seconds = 0.0;
    double work_units = 0.0;
};

namespace detail {

inline Learned learn_batch(const Domain& d, const std::array<GuardData, 2>& data, const RunConfig& cfg,
                           std::uint64_t seed, LearningBudget& total) {
    Learned out;
    for (std::size_t g = 0; g < 2; ++g) {
        const PatrollerModel& m = d.patrollers[g];
        EmConfig em = cfg.em;
        em.seed = mix_seed(seed, 20 + g);
        const Vector init = i2rl::detail::random_weights(m.features.count(), mix_seed(em.seed, 0x1417));
        LearningBudget budget(cfg.clock, cfg.deadline);
        {
            BudgetScope scope(&budget);
            try {
                const EmResult r =
                    em_solve(m.mdp, m.features, data[g].occlusion, data[g].demo.observed, init, em, &budget);
                out.theta[g] = r.theta;
                out.timed_out = out.timed_out || r.timed_out;
            } catch (const EmTimeoutError& e) {
                out.theta[g] = e.partial().theta;
                out.timed_out = true;
            }
        }
        total.absorb(budget);
    }
    out.sessions = 1;
    return out;
}

inline Learned learn_incremental(const Domain& d, const std::array<GuardData, 2>& data, const RunConfig& cfg,
                                 SessionInit init, std::uint64_t seed, LearningBudget& total) {
    Learned out;
    std::array<SessionStatistic, 2> stat;
    SessionConfig sc;
    sc.em = cfg.em;
    sc.em.restarts = cfg.session_restarts;
    sc.init = init;
    sc.later_restarts = cfg.session_restarts;
    const std::size_t n = std::max(data[0].demo.observed.size(), data[1].demo.observed.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t g = 0; g < 2; ++g) {
            const auto& ys = data[g].demo.observed;
            if (i >= ys.size()) continue;
            const PatrollerModel& m = d.patrollers[g];
            sc.seed = mix_seed(seed, 20 + g);
            LearningBudget budget(cfg.clock, cfg.deadline);
            try {
                SessionOutcome s = run_session(m.mdp, m.features, data[g].occlusion,
                                               std::span<const ObservedTrajectory>(&ys[i], 1), stat[g], sc, i + 1, {},
                                               &budget);
                out.timed_out = out.timed_out || s.record.timed_out;
                stat[g] = std::move(s.statistic);
            } catch (const EmTimeoutError& e) {
                // Keep the session's data: the partial result carries the merged target.
                stat[g].theta = e.partial().theta;
                if (!e.partial().target.empty()) {
                    stat[g].features = e.partial().target;
                    stat[g].count += 1;
                    stat[g].horizon = std::max(stat[g].horizon, ys[i].size());
                }
                out.timed_out = true;
            }
            total.absorb(budget);
        }
    }
    out.sessions = n;
    for (std::size_t g = 0; g < 2; ++g) {
        out.theta[g] = stat[g].theta;
        if (out.theta[g].empty())
            out.theta[g] = i2rl::detail::random_weights(kFeatures, mix_seed(mix_seed(seed, 20 + g), 0x1417));
    }
    return out;
}

} // namespace detail

/// Learns both guards' weights with an IRL method; the deadline applies to
/// each IRL call separately.
inline Learned learn(const Domain& d, const std::array<GuardData, 2>& data, Method method, const RunConfig& cfg,
                     std::uint64_t seed) {
    if (method == Method::random_baseline) throw DomainError("the random baseline does not learn");
    LearningBudget total(cfg.clock);
    Learned out = method == Method::batch
                      ? detail::learn_batch(d, data, cfg, seed, total)
                      : detail::learn_incremental(
                            d, data, cfg, method == Method::incremental ? SessionInit::previous : SessionInit::random,
                            seed, total);
    out.duration = total.elapsed();
    out.wall_seconds = total.wall_seconds();
    out.work_units = total.work_units();
    return out;
}

/// Last visible guard state in the observation window, with its tick index.
inline std::optional<std::pair<std::size_t, std::size_t>> last_seen(std::span<const std::size_t> states,
                                                                    const OcclusionModel& occlusion) {
    for (std::size_t i = states.size(); i-- > 0;)
        if (!occlusion.occluded(states[i])) return std::make_pair(i, states[i]);
    return std::nullopt;
}

/**
 * One end-to-end run: demonstrate, learn, observe the guards, plan, act.
 *
 * The seed fixes the demonstrations and the guards' phases independently of
 * the method, so methods run with the same seed see identical data.
 */
inline RunResult simulate_run(const Domain& d, Method method, const RunConfig& cfg, std::uint64_t seed) {
    RunResult res;
    const DomainConfig& dc = d.config;
    const auto data = make_guard_data(d, cfg.observability, cfg.pairs, seed);

    std::array<DeterministicPolicy, 2> predicted_policy;
    if (method != Method::random_baseline) {
        const Learned learned = learn(d, data, method, cfg, seed);
        res.timed_out = learned.timed_out;
        res.sessions = learned.sessions;
        res.duration = learned.duration;
        res.wall_seconds = learned.wall_seconds;
        res.work_units = learned.work_units;

        double lba_sum = 0.0, ile_sum = 0.0, ll_sum = 0.0;
        for (std::size_t g = 0; g < 2; ++g) {
            const PatrollerModel& m = d.patrollers[g];
            res.theta[g] = learned.theta[g];
            predicted_policy[g] = learned_policy(m.mdp, m.features, learned.theta[g]);
            const IleReference ref = make_ile_reference(m.mdp, reward_table(m.true_weights, m.features));
            lba_sum += lba(ref.expert_policy, predicted_policy[g]);
            ile_sum += learned_ile(m.mdp, m.features, learned.theta[g], ref);
            const auto& ys = data[g].demo.observed;
            ll_sum += observed_ll(learned.theta[g], ys, m.mdp, m.features, data[g].occlusion, cfg.em) /
                      static_cast<double>(ys.size());
        }
        res.lba = lba_sum / 2.0;
        res.ile = ile_sum / 2.0;
        res.final_ll = ll_sum / 2.0;
    }

    // Guards patrol for the observation window, then the learner may move.
    std::mt19937_64 rng(mix_seed(seed, 3));
    const std::size_t W = dc.observation_window, H = dc.run_horizon;
    std::array<GuardTrack, 2> truth, predicted;
    bool blind = false;
    for (std::size_t g = 0; g < 2; ++g) {
        const PatrollerModel& m = d.patrollers[g];
        std::uniform_int_distribution<std::size_t> pick(0, m.cycle_states.size() - 1);
        const auto states = roll_out(m, m.cycle_states[pick(rng)], m.expert_policy, W + H);
        truth[g] = track_of(m, std::span<const std::size_t>(states).subspan(W));
        if (method == Method::random_baseline) continue;
        const auto seen = last_seen(std::span<const std::size_t>(states).first(W + 1), data[g].occlusion);
        if (!seen) {
            blind = true;
            continue;
        }
        const auto guess = roll_out(m, seen->second, predicted_policy[g], W - seen->first + H);
        predicted[g] = track_of(m, std::span<const std::size_t>(guess).subspan(W - seen->first));
    }

    std::vector<std::size_t> cells;
    if (method == Method::random_baseline) {
        const auto route = shortest_route(d.map);
        std::uniform_int_distribution<std::size_t> when(0, H + 1 - route.size());
        cells.assign(when(rng), d.map.start_room());
        cells.insert(cells.end(), route.begin(), route.end());
        cells.resize(H + 1, d.map.goal_room());
    } else if (!blind) {
        const Plan plan = plan_penetration(d.map, predicted, H, dc.sight);
        if (plan.go) cells = plan.cells;
    }
    if (cells.empty()) {
        res.held = true;
        return res;
    }
    const Execution e = execute(d.map, truth, cells, dc.sight);
    res.detected = e.detected;
    res.success = e.reached && !e.detected;
    return res;
}

struct Summary {
    std::size_t runs = 0;
    double success_rate = 0.0;
    double timeout_rate = 0.0;
    double detection_rate = 0.0;
    std::optional<double> mean_lba;
    std::optional<double> mean_ile;
    double mean_duration = 0.0;
};

/// Percentages over all runs; a timed-out run still counts as a success if
/// its learner arrived undetected.
inline Summary aggregate(std::span<const RunResult> results) {
    if (results.empty()) throw EmptyInputError("nothing to aggregate");
    Summary s;
    s.runs = results.size();
    double lba = 0.0, ile = 0.0;
    std::size_t scored = 0;
    for (const RunResult& r : results) {
        s.success_rate += r.success;
        s.timeout_rate += r.timed_out;
        s.detection_rate += r.detected;
        s.mean_duration += r.duration;
        if (r.lba && r.ile) {
            lba += *r.lba;
            ile += *r.ile;
            ++scored;
        }
    }
    const double n = static_cast<double>(results.size());
    s.success_rate *= 100.0 / n;
    s.timeout_rate *= 100.0 / n;
    s.detection_rate *= 100.0 / n;
    s.mean_duration /= n;
    if (scored) {
        s.mean_lba = lba / static_cast<double>(scored);
        s.mean_ile = ile / static_cast<double>(scored);
    }
    return s;
}

/// Runs `count` independent jobs on up to `threads` workers; job i writes slot i.
template <class F>
void parallel_for(std::size_t count, std::size_t threads, F&& job) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace i2rl::patrol
