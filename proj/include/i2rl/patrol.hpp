#pragma once

#include "i2rl/errors.hpp"
#include "i2rl/features.hpp"
#include "i2rl/latent.hpp"
#include "i2rl/mdp.hpp"
#include "i2rl/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

// Two guards patrol a straight hallway. Each guard owns one half of it and
// is modeled by its own MDP over (cell, heading). The learner waits in a
// room off the hallway, between the two halves, and must reach a goal room
// further along without entering any guard's field of view.
//
// Hallway cells are numbered 0 .. 2n-1 from left to right. Guard A owns
// cells 0 .. n-1 and its route runs left to right; guard B owns n .. 2n-1
// and its route runs right to left. Both guards' local cell 0 is the far
// end of the hallway as seen from the learner.
namespace i2rl::patrol {

enum GuardAction : std::size_t { forward = 0, stay = 1, turn = 2 };
inline constexpr std::size_t kGuardActions = 3;
inline constexpr std::size_t kRegions = 5;
inline constexpr std::size_t kFeatures = 1 + kRegions;

inline Vector default_true_weights() { return {0.57, 0.0, 0.0, 0.0, 0.43, 0.0}; }

struct DomainConfig {
    /// Cells per guard; the hallway has twice as many.
    std::size_t segment_length = 20;
    double discount = 0.9;
    Vector true_weights = default_true_weights();
    /// Cells a guard sees in front of itself, besides its own cell.
    std::size_t sight = 3;
    /// Hallway cell below the learner's start room.
    std::size_t entry_cell = 17;
    /// Hallway cell below the goal room.
    std::size_t goal_cell = 22;
    /// Ticks the learner has to reach the goal.
    std::size_t run_horizon = 40;
    /// Ticks of guard observation just before the learner may move.
    std::size_t observation_window = 16;
    /// Length of demonstrated trajectories.
    std::size_t trajectory_length = 8;
};

/// Learner-side map. Learner cells: hallway 0 .. 2n-1, then the start room,
/// then the goal room.
struct GridMap {
    std::size_t hallway_length = 0;
    std::size_t entry_cell = 0;
    std::size_t goal_cell = 0;
    /// Region of each hallway cell within its guard's segment, 0-based in route order.
    std::vector<std::size_t> region_of;
    /// Cells where a guard following the true weights turns around.
    std::vector<std::size_t> turn_around_cells;

    std::size_t cell_count() const noexcept { return hallway_length + 2; }
    std::size_t start_room() const noexcept { return hallway_length; }
    std::size_t goal_room() const noexcept { return hallway_length + 1; }
    bool in_hallway(std::size_t c) const noexcept { return c < hallway_length; }

    /// Reachable cells in one tick, "stay" first.
    std::vector<std::size_t> moves(std::size_t c) const {
        std::vector<std::size_t> out{c};
        if (c == start_room()) {
            out.push_back(entry_cell);
        } else if (c == goal_room()) {
            out.push_back(goal_cell);
        } else {
            if (c > 0) out.push_back(c - 1);
            if (c + 1 < hallway_length) out.push_back(c + 1);
            if (c == entry_cell) out.push_back(start_room());
            if (c == goal_cell) out.push_back(goal_room());
        }
        return out;
    }
};

inline std::size_t region_of_local(std::size_t local, std::size_t segment) { return local * kRegions / segment; }

/// Guard state (local cell, heading). Heading 0 runs along the route, 1 against it.
inline std::size_t guard_state(std::size_t local, std::size_t heading) { return local * 2 + heading; }
inline std::size_t local_cell(std::size_t state) { return state / 2; }
inline std::size_t heading_of(std::size_t state) { return state % 2; }

struct PatrollerModel {
    std::string name;
    bool mirrored = false;
    std::size_t segment_length = 0;
    Mdp mdp;
    FeatureSet features;
    Vector true_weights;
    /// Optimal policy under the true weights and its states on the patrol cycle.
    DeterministicPolicy expert_policy;
    std::vector<std::size_t> cycle_states;

    std::size_t hallway_cell(std::size_t state) const {
        const std::size_t l = local_cell(state);
        return mirrored ? 2 * segment_length - 1 - l : l;
    }

    /// +1 when facing increasing hallway cells, -1 otherwise.
    int hallway_heading(std::size_t state) const {
        const int along = heading_of(state) == 0 ? 1 : -1;
        return mirrored ? -along : along;
    }

    /// Successor under a deterministic policy.
    std::size_t step(std::size_t state, const DeterministicPolicy& policy) const {
        const auto outs = mdp.outcomes(state, policy[state]);
        return std::max_element(outs.begin(), outs.end(), [](const Outcome& a, const Outcome& b) {
                   return a.probability < b.probability;
               })->next;
    }
};

namespace detail {

inline std::size_t guard_next(std::size_t state, std::size_t action, std::size_t segment) {
    const std::size_t l = local_cell(state), h = heading_of(state);
    switch (action) {
    case forward: {
        if (h == 0) return l + 1 < segment ? guard_state(l + 1, h) : state;
        return l > 0 ? guard_state(l - 1, h) : state;
    }
    case turn: return guard_state(l, 1 - h);
    default: return state;
    }
}

/// States reached again when following `policy` from `start`.
inline std::vector<std::size_t> cycle_from(const PatrollerModel& m, std::size_t start) {
    std::vector<std::size_t> order;
    std::vector<int> seen(m.mdp.state_count(), -1);
    std::size_t s = start;
    while (seen[s] < 0) {
        seen[s] = static_cast<int>(order.size());
        order.push_back(s);
        s = m.step(s, m.expert_policy);
    }
    return {order.begin() + seen[s], order.end()};
}

} // namespace detail

/// Movement bit followed by the one-hot region of the guard's cell.
inline std::array<int, kFeatures> patrol_features(std::size_t state, std::size_t action, std::size_t segment) {
    std::array<int, kFeatures> phi{};
    phi[0] = local_cell(detail::guard_next(state, action, segment)) != local_cell(state);
    phi[1 + region_of_local(local_cell(state), segment)] = 1;
    return phi;
}

inline PatrollerModel make_patroller(std::string name, bool mirrored, const DomainConfig& cfg) {
    const std::size_t n = cfg.segment_length, S = 2 * n;
    Mdp mdp = make_deterministic_mdp(
        S, kGuardActions, [n](std::size_t s, std::size_t a) { return detail::guard_next(s, a, n); }, cfg.discount,
        uniform_distribution(S));
    FeatureSet features = FeatureSet::from(S, kGuardActions, kFeatures, [n](std::size_t s, std::size_t a, std::size_t k) {
        return patrol_features(s, a, n)[k];
    });
    PatrollerModel m{std::move(name), mirrored, n, std::move(mdp), std::move(features), cfg.true_weights, {}, {}};
    m.expert_policy = solve_optimal(m.mdp, reward_table(m.true_weights, m.features)).policy;

    // Every start funnels into the same cycle for the default weights; keep
    // the union in case several coexist.
    std::set<std::size_t> on_cycle;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c : detail::cycle_from(m, s)) on_cycle.insert(c);
    m.cycle_states.assign(on_cycle.begin(), on_cycle.end());
    return m;
}

struct Domain {
    DomainConfig config;
    GridMap map;
    std::array<PatrollerModel, 2> patrollers;
};

inline void validate(const DomainConfig& cfg) {
    std::vector<std::string> problems;
    if (cfg.segment_length < kRegions)
        problems.push_back("segment_length " + std::to_string(cfg.segment_length) + " is smaller than the region count");
    const std::size_t hall = 2 * cfg.segment_length;
    if (cfg.entry_cell >= hall) problems.push_back("entry_cell " + std::to_string(cfg.entry_cell) + " is outside the hallway");
    if (cfg.goal_cell >= hall) problems.push_back("goal_cell " + std::to_string(cfg.goal_cell) + " is outside the hallway");
    if (cfg.entry_cell == cfg.goal_cell) problems.push_back("entry_cell and goal_cell coincide at " + std::to_string(cfg.goal_cell));
    if (cfg.true_weights.size() != kFeatures) problems.push_back("true_weights must have 6 entries");
    for (double v : cfg.true_weights)
        if (!(v >= 0.0 && v <= 1.0)) problems.push_back("true weight " + std::to_string(v) + " outside [0,1]");
    if (!(cfg.discount > 0.0 && cfg.discount < 1.0)) problems.push_back("discount must lie in (0,1)");
    if (cfg.run_horizon == 0) problems.push_back("run_horizon must be positive");
    if (cfg.trajectory_length == 0) problems.push_back("trajectory_length must be positive");
    if (problems.empty()) return;
    std::string msg = "invalid patrol domain:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ModelError(msg);
}

inline Domain build_domain(const DomainConfig& cfg) {
    validate(cfg);
    Domain d{cfg, {}, {make_patroller("A", false, cfg), make_patroller("B", true, cfg)}};
    const std::size_t n = cfg.segment_length;
    d.map.hallway_length = 2 * n;
    d.map.entry_cell = cfg.entry_cell;
    d.map.goal_cell = cfg.goal_cell;
    d.map.region_of.resize(2 * n);
    for (std::size_t c = 0; c < 2 * n; ++c) d.map.region_of[c] = region_of_local(c < n ? c : 2 * n - 1 - c, n);
    std::set<std::size_t> turns;
    for (const PatrollerModel& m : d.patrollers)
        for (std::size_t s : m.cycle_states)
            if (m.expert_policy[s] == turn) turns.insert(m.hallway_cell(s));
    d.map.turn_around_cells.assign(turns.begin(), turns.end());
    return d;
}

/// Visible share of a guard's cells, nearest to the learner first.
inline OcclusionModel observability_occlusion(const PatrollerModel& m, double percent) {
    if (!(percent >= 0.0 && percent <= 100.0)) throw DomainError("observability must lie in [0,100]");
    const std::size_t n = m.segment_length;
    const auto visible = static_cast<std::size_t>(std::lround(percent / 100.0 * static_cast<double>(n)));
    std::vector<bool> occluded(m.mdp.state_count());
    for (std::size_t s = 0; s < occluded.size(); ++s) occluded[s] = local_cell(s) + visible < n;
    return OcclusionModel(std::move(occluded));
}

struct GeneratedDemonstration {
    std::vector<Trajectory> full;
    std::vector<ObservedTrajectory> observed;
};

/// Trajectories of the expert policy, each starting at a uniformly drawn
/// state of the patrol cycle, masked by `occlusion`.
inline GeneratedDemonstration generate_demonstration(const PatrollerModel& m, std::size_t trajectories,
                                                     std::size_t length, const OcclusionModel& occlusion,
                                                     std::mt19937_64& rng) {
    if (trajectories == 0 || length == 0) throw DomainError("trajectory count and length must be positive");
    std::uniform_int_distribution<std::size_t> start(0, m.cycle_states.size() - 1);
    GeneratedDemonstration out;
    for (std::size_t i = 0; i < trajectories; ++i) {
        Trajectory x;
        std::size_t s = m.cycle_states[start(rng)];
        for (std::size_t t = 0; t < length; ++t) {
            x.push_back({s, m.expert_policy[s]});
            s = m.step(s, m.expert_policy);
        }
        out.observed.push_back(ObservedTrajectory::mask(x, occlusion));
        out.full.push_back(std::move(x));
    }
    return out;
}

/// Hallway positions of one guard over ticks 0..H.
struct GuardTrack {
    std::vector<std::size_t> cells;
    std::vector<int> headings;
};

inline GuardTrack track_of(const PatrollerModel& m, std::span<const std::size_t> states) {
    GuardTrack t;
    for (std::size_t s : states) {
        t.cells.push_back(m.hallway_cell(s));
        t.headings.push_back(m.hallway_heading(s));
    }
    return t;
}

/// States visited from `state` under `policy`, `ticks` + 1 entries.
inline std::vector<std::size_t> roll_out(const PatrollerModel& m, std::size_t state, const DeterministicPolicy& policy,
                                         std::size_t ticks) {
    std::vector<std::size_t> out{state};
    for (std::size_t t = 0; t < ticks; ++t) out.push_back(state = m.step(state, policy));
    return out;
}

/// A guard sees its own cell and `sight` cells ahead.
inline bool sees(std::size_t guard_cell, int heading, std::size_t cell, std::size_t sight) {
    const long d = (static_cast<long>(cell) - static_cast<long>(guard_cell)) * heading;
    return d >= 0 && d <= static_cast<long>(sight);
}

/// Whether the learner moving `from` -> `to` during tick t -> t+1 is spotted.
/// Rooms are never visible; swapping cells with a guard counts as spotted.
inline bool spotted(const GridMap& map, std::span<const GuardTrack> guards, std::size_t t, std::size_t from,
                    std::size_t to, std::size_t sight) {
    if (!map.in_hallway(to)) return false;
    for (const GuardTrack& g : guards) {
        if (sees(g.cells[t + 1], g.headings[t + 1], to, sight)) return true;
        if (map.in_hallway(from) && g.cells[t] == to && g.cells[t + 1] == from) return true;
    }
    return false;
}

struct Plan {
    bool go = false;
    /// Learner cell at each tick 0..H, when going.
    std::vector<std::size_t> cells;
    double value = 0.0;
};

/**
 * Time-expanded learner MDP over (cell, tick): being spotted is absorbing
 * with value -1, the goal room absorbing with value 1, running out of ticks
 * is worth 0. A discount below one prefers early arrival. If no plan from
 * the start room is worth more than 0 the learner holds.
 */
inline Plan plan_penetration(const GridMap& map, std::span<const GuardTrack> predicted, std::size_t horizon,
                             std::size_t sight, double discount = 0.99) {
    for (const GuardTrack& g : predicted)
        if (g.cells.size() < horizon + 1) throw DimensionError("guard prediction shorter than the planning horizon");
    const std::size_t C = map.cell_count();
    std::vector<Vector> value(horizon + 1, Vector(C, 0.0));
    std::vector<std::vector<std::size_t>> choice(horizon, std::vector<std::size_t>(C, 0));
    value[horizon][map.goal_room()] = 1.0;
    for (std::size_t t = horizon; t-- > 0;) {
        for (std::size_t c = 0; c < C; ++c) {
            if (c == map.goal_room()) {
                value[t][c] = 1.0;
                choice[t][c] = c;
                continue;
            }
            double best = kNegInf;
            for (std::size_t next : map.moves(c)) {
                const double v = spotted(map, predicted, t, c, next, sight) ? -1.0 : discount * value[t + 1][next];
                if (v > best) {
                    best = v;
                    choice[t][c] = next;
                }
            }
            value[t][c] = best;
        }
    }
    Plan plan;
    plan.value = value[0][map.start_room()];
    plan.go = plan.value > 0.0;
    if (plan.go) {
        std::size_t c = map.start_room();
        plan.cells.push_back(c);
        for (std::size_t t = 0; t < horizon; ++t) plan.cells.push_back(c = choice[t][c]);
    }
    return plan;
}

/// Start room, hallway to the goal cell, goal room.
inline std::vector<std::size_t> shortest_route(const GridMap& map) {
    std::vector<std::size_t> route{map.start_room()};
    std::size_t c = map.entry_cell;
    route.push_back(c);
    while (c != map.goal_cell) route.push_back(c = c < map.goal_cell ? c + 1 : c - 1);
    route.push_back(map.goal_room());
    return route;
}

struct Execution {
    bool reached = false;
    bool detected = false;
    std::size_t ticks = 0;
};

/// Plays a learner cell sequence (index = tick) against true guard tracks.
inline Execution execute(const GridMap& map, std::span<const GuardTrack> truth, std::span<const std::size_t> cells,
                         std::size_t sight) {
    Execution e;
    for (std::size_t t = 0; t + 1 < cells.size(); ++t) {
        if (cells[t] == map.goal_room()) break;
        if (spotted(map, truth, t, cells[t], cells[t + 1], sight)) {
            e.detected = true;
            e.ticks = t + 1;
            return e;
        }
        e.ticks = t + 1;
    }
    e.reached = !cells.empty() && cells.back() == map.goal_room();
    return e;
}

} // namespace i2rl::patrol
