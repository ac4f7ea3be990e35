#pragma once

#include "i2rl/budget.hpp"
#include "i2rl/errors.hpp"
#include "i2rl/features.hpp"
#include "i2rl/maxent.hpp"
#include "i2rl/mdp.hpp"
#include "i2rl/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace i2rl {

/// All-or-nothing visibility per state.
class OcclusionModel {
public:
    OcclusionModel() = default;
    explicit OcclusionModel(std::vector<bool> occluded) : occluded_(std::move(occluded)) {}

    static OcclusionModel none(std::size_t states) { return OcclusionModel(std::vector<bool>(states, false)); }

    bool occluded(std::size_t s) const { return occluded_[s]; }
    std::size_t state_count() const noexcept { return occluded_.size(); }

    std::size_t occluded_count() const {
        return static_cast<std::size_t>(std::count(occluded_.begin(), occluded_.end(), true));
    }

    /// Percentage of states that are visible.
    double observability_percent() const {
        if (occluded_.empty()) return 100.0;
        return 100.0 * (1.0 - static_cast<double>(occluded_count()) / static_cast<double>(occluded_.size()));
    }

    void check_compatible(const Mdp& mdp) const {
        if (occluded_.size() != mdp.state_count()) throw DimensionError("occlusion model does not match MDP states");
    }

private:
    std::vector<bool> occluded_;
};

/// A step is either an observed (state, action) pair or hidden.
using ObservedStep = std::optional<StateAction>;

struct ObservedTrajectory {
    std::vector<ObservedStep> steps;

    std::size_t size() const noexcept { return steps.size(); }
    bool hidden(std::size_t t) const { return !steps[t].has_value(); }

    bool fully_observed() const {
        return std::all_of(steps.begin(), steps.end(), [](const ObservedStep& s) { return s.has_value(); });
    }

    std::size_t hidden_count() const {
        return static_cast<std::size_t>(
            std::count_if(steps.begin(), steps.end(), [](const ObservedStep& s) { return !s.has_value(); }));
    }

    /// Masks every step whose state is occluded.
    static ObservedTrajectory mask(const Trajectory& traj, const OcclusionModel& occlusion) {
        ObservedTrajectory y;
        y.steps.reserve(traj.size());
        for (const StateAction& sa : traj) {
            if (occlusion.occluded(sa.state)) y.steps.emplace_back(std::nullopt);
            else y.steps.emplace_back(sa);
        }
        return y;
    }

    static ObservedTrajectory observed(const Trajectory& traj) {
        ObservedTrajectory y;
        for (const StateAction& sa : traj) y.steps.emplace_back(sa);
        return y;
    }

    friend bool operator==(const ObservedTrajectory&, const ObservedTrajectory&) = default;
};

/// Ingest check: non-empty, indices in range, observed states visible, and
/// adjacent observed steps transition-feasible.
inline void validate_observed(const ObservedTrajectory& y, const Mdp& mdp, const OcclusionModel& occlusion) {
    occlusion.check_compatible(mdp);
    if (y.steps.empty()) throw ModelError("observed trajectory must contain at least one step");
    for (std::size_t t = 0; t < y.size(); ++t) {
        if (!y.steps[t]) continue;
        const StateAction& sa = *y.steps[t];
        if (sa.state >= mdp.state_count() || sa.action >= mdp.action_count())
            throw ModelError("observed step " + std::to_string(t + 1) + " out of range");
        if (occlusion.occluded(sa.state))
            throw ModelError("observed step " + std::to_string(t + 1) + " lies in an occluded state");
        if (t + 1 < y.size() && y.steps[t + 1] &&
            mdp.transition_probability(sa.state, sa.action, y.steps[t + 1]->state) <= 0.0)
            throw ModelError("observed steps " + std::to_string(t + 1) + " -> " + std::to_string(t + 2) +
                             " are not transition-feasible");
    }
}

/// Maximal run of hidden steps, 0-based half-open [begin, end).
struct Gap {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const noexcept { return end - begin; }
};

inline std::vector<Gap> hidden_gaps(const ObservedTrajectory& y) {
    std::vector<Gap> gaps;
    for (std::size_t t = 0; t < y.size();) {
        if (!y.hidden(t)) {
            ++t;
            continue;
        }
        Gap g{t, t};
        while (g.end < y.size() && y.hidden(g.end)) ++g.end;
        gaps.push_back(g);
        t = g.end;
    }
    return gaps;
}

struct HiddenAssignment {
    std::size_t index = 0; ///< 0-based step index
    StateAction step;

    friend auto operator<=>(const HiddenAssignment&, const HiddenAssignment&) = default;
};

/// One way of filling every hidden step of a specific observed trajectory.
struct Completion {
    std::vector<HiddenAssignment> assignments;

    friend auto operator<=>(const Completion&, const Completion&) = default;
};

inline Trajectory complete(const ObservedTrajectory& y, const Completion& z) {
    Trajectory x(y.size());
    for (std::size_t t = 0; t < y.size(); ++t)
        if (y.steps[t]) x[t] = *y.steps[t];
    std::size_t filled = 0;
    for (const HiddenAssignment& h : z.assignments) {
        if (h.index >= y.size() || !y.hidden(h.index)) throw DimensionError("completion assigns a non-hidden step");
        x[h.index] = h.step;
        ++filled;
    }
    if (filled != y.hidden_count()) throw DimensionError("completion does not cover every hidden step");
    return x;
}

struct EmConfig {
    std::size_t max_iterations = 50;
    /// Sup-norm change of theta below which EM stops.
    double tolerance = 1e-4;
    std::size_t restarts = 5;
    /// Gaps up to this length are enumerated exactly; longer gaps are sampled.
    std::size_t gap_cap = 4;
    std::size_t samples = 1000;
    std::uint64_t seed = 0;
    SolverConfig solver;
    /// Record the observed-data log-likelihood after every E/M iteration.
    bool track_likelihood = false;
};

namespace detail {

/// Everything needed to score completions of one gap under fixed weights.
class GapScorer {
public:
    GapScorer(const Mdp& mdp, const FeatureSet& features, const OcclusionModel& occlusion, const RewardTable& reward,
              const ObservedTrajectory& y, Gap gap)
        : mdp_(mdp), features_(features), occlusion_(occlusion), reward_(reward), gap_(gap) {
        if (gap.begin > 0) left_ = *y.steps[gap.begin - 1];
        if (gap.end < y.size()) right_ = y.steps[gap.end]->state;
    }

    std::size_t length() const noexcept { return gap_.length(); }
    Gap gap() const noexcept { return gap_; }

    /// gamma^t for gap position j (time t = begin + j + 1).
    double discount_at(std::size_t j) const {
        return std::pow(mdp_.discount(), static_cast<double>(gap_.begin + j + 1));
    }

    double entry(std::size_t s) const {
        if (!occlusion_.occluded(s)) return kNegInf;
        const double p = left_ ? mdp_.transition_probability(left_->state, left_->action, s)
                               : mdp_.start_distribution()[s];
        return p > 0.0 ? std::log(p) : kNegInf;
    }

    double exit(std::size_t s, std::size_t a) const {
        if (!right_) return 0.0;
        const double p = mdp_.transition_probability(s, a, *right_);
        return p > 0.0 ? std::log(p) : kNegInf;
    }

    double step(std::size_t j, std::size_t s, std::size_t a) const { return discount_at(j) * reward_(s, a); }

    void add_features(std::size_t j, StateAction sa, double weight, std::span<double> out) const {
        const double w = discount_at(j) * weight;
        const auto phi = features_.at(sa.state, sa.action);
        for (std::size_t k = 0; k < phi.size(); ++k)
            if (phi[k]) out[k] += w;
    }

    const Mdp& mdp() const noexcept { return mdp_; }
    const OcclusionModel& occlusion() const noexcept { return occlusion_; }

    [[noreturn]] void infeasible() const {
        throw InfeasibleError("no feasible completion for hidden steps " + std::to_string(gap_.begin + 1) + ".." +
                                  std::to_string(gap_.end),
                              gap_.begin, gap_.end);
    }

private:
    const Mdp& mdp_;
    const FeatureSet& features_;
    const OcclusionModel& occlusion_;
    const RewardTable& reward_;
    Gap gap_;
    std::optional<StateAction> left_;
    std::optional<std::size_t> right_;
};

struct GapPath {
    std::vector<StateAction> steps;
    double log_weight = 0.0;
};

/// Depth-first enumeration of every feasible path through occluded states.
inline std::vector<GapPath> enumerate_gap(const GapScorer& sc) {
    const Mdp& mdp = sc.mdp();
    const std::size_t L = sc.length(), A = mdp.action_count();
    std::vector<GapPath> out;
    GapPath cur;
    cur.steps.resize(L);

    auto recurse = [&](auto&& self, std::size_t j, std::size_t s, double lw) -> void {
        for (std::size_t a = 0; a < A; ++a) {
            cur.steps[j] = {s, a};
            const double w = lw + sc.step(j, s, a);
            if (j + 1 == L) {
                const double x = sc.exit(s, a);
                if (x == kNegInf) continue;
                cur.log_weight = w + x;
                out.push_back(cur);
                continue;
            }
            for (const Outcome& o : mdp.outcomes(s, a))
                if (sc.occlusion().occluded(o.next)) self(self, j + 1, o.next, w + std::log(o.probability));
        }
    };
    for (std::size_t s = 0; s < mdp.state_count(); ++s) {
        const double e = sc.entry(s);
        if (e != kNegInf) recurse(recurse, 0, s, e);
    }
    if (out.empty()) sc.infeasible();
    return out;
}

/// Forward filter over one gap: f[j][s] is the log mass of all partial paths
/// that occupy state s at gap position j, excluding position j's own weight.
struct ForwardFilter {
    std::vector<Vector> f;
    double log_mass = kNegInf;
};

inline ForwardFilter forward_filter(const GapScorer& sc) {
    const Mdp& mdp = sc.mdp();
    const std::size_t L = sc.length(), S = mdp.state_count(), A = mdp.action_count();
    ForwardFilter ff;
    ff.f.assign(L, Vector(S, kNegInf));
    for (std::size_t s = 0; s < S; ++s) ff.f[0][s] = sc.entry(s);
    for (std::size_t j = 0; j < L; ++j) {
        for (std::size_t s = 0; s < S; ++s) {
            const double base = ff.f[j][s];
            if (base == kNegInf) continue;
            for (std::size_t a = 0; a < A; ++a) {
                const double w = base + sc.step(j, s, a);
                if (j + 1 == L) {
                    ff.log_mass = log_add(ff.log_mass, w + sc.exit(s, a));
                    continue;
                }
                for (const Outcome& o : mdp.outcomes(s, a))
                    if (sc.occlusion().occluded(o.next))
                        ff.f[j + 1][o.next] = log_add(ff.f[j + 1][o.next], w + std::log(o.probability));
            }
        }
    }
    if (ff.log_mass == kNegInf) sc.infeasible();
    return ff;
}

/// Backward sampler built on a forward filter; caches the conditional
/// distribution of (s_j, a_j) for each (j, s_{j+1}).
class BackwardSampler {
public:
    BackwardSampler(const GapScorer& sc, const ForwardFilter& ff) : sc_(sc), ff_(ff) {}

    std::vector<StateAction> draw(std::mt19937_64& rng) {
        const std::size_t L = sc_.length();
        std::vector<StateAction> path(L);
        path[L - 1] = pick(table(L - 1, kTerminal), rng);
        for (std::size_t j = L - 1; j-- > 0;) path[j] = pick(table(j, path[j + 1].state), rng);
        return path;
    }

private:
    static constexpr std::size_t kTerminal = static_cast<std::size_t>(-1);

    struct Table {
        std::vector<StateAction> options;
        Vector cumulative;
    };

    const Table& table(std::size_t j, std::size_t next) {
        auto key = std::make_pair(j, next);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const Mdp& mdp = sc_.mdp();
        std::vector<StateAction> opts;
        Vector logw;
        for (std::size_t s = 0; s < mdp.state_count(); ++s) {
            const double base = ff_.f[j][s];
            if (base == kNegInf) continue;
            for (std::size_t a = 0; a < mdp.action_count(); ++a) {
                double lw = base + sc_.step(j, s, a);
                if (next == kTerminal) {
                    lw += sc_.exit(s, a);
                } else {
                    const double p = mdp.transition_probability(s, a, next);
                    lw = p > 0.0 ? lw + std::log(p) : kNegInf;
                }
                if (lw == kNegInf) continue;
                opts.push_back({s, a});
                logw.push_back(lw);
            }
        }
        const double norm = log_sum_exp(logw);
        Table t{std::move(opts), Vector(logw.size())};
        double acc = 0.0;
        for (std::size_t i = 0; i < logw.size(); ++i) t.cumulative[i] = acc += std::exp(logw[i] - norm);
        return cache_.emplace(key, std::move(t)).first->second;
    }

    static StateAction pick(const Table& t, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> unit(0.0, t.cumulative.back());
        const double u = unit(rng);
        auto it = std::upper_bound(t.cumulative.begin(), t.cumulative.end(), u);
        if (it == t.cumulative.end()) --it;
        return t.options[static_cast<std::size_t>(it - t.cumulative.begin())];
    }

    const GapScorer& sc_;
    const ForwardFilter& ff_;
    std::map<std::pair<std::size_t, std::size_t>, Table> cache_;
};

inline double filter_cost(const Mdp& mdp, std::size_t length) {
    return static_cast<double>(length * (mdp.outcome_count() + mdp.state_count() * mdp.action_count()));
}

/// An enumerated gap with weights factored out. Each path keeps its
/// weight-free log factor (anchors and transitions) and its discounted
/// feature sums, so rescoring under new weights is one dot product per path.
struct EnumeratedGap {
    Gap gap;
    std::size_t paths = 0;
    Vector base;
    Vector features; ///< paths x K, row-major
};

inline EnumeratedGap enumerate_factored(const GapScorer& sc, const FeatureSet& features, LearningBudget* budget) {
    const Mdp& mdp = sc.mdp();
    const std::size_t L = sc.length(), A = mdp.action_count(), K = features.count();
    EnumeratedGap g;
    g.gap = sc.gap();
    std::vector<Vector> acc(L + 1, Vector(K, 0.0));
    double work = 0.0;

    auto recurse = [&](auto&& self, std::size_t j, std::size_t s, double lw) -> void {
        for (std::size_t a = 0; a < A; ++a) {
            work += 1.0 + static_cast<double>(K);
            acc[j + 1] = acc[j];
            sc.add_features(j, {s, a}, 1.0, acc[j + 1]);
            if (j + 1 == L) {
                const double x = sc.exit(s, a);
                if (x == kNegInf) continue;
                g.base.push_back(lw + x);
                g.features.insert(g.features.end(), acc[L].begin(), acc[L].end());
                ++g.paths;
                continue;
            }
            for (const Outcome& o : mdp.outcomes(s, a))
                if (sc.occlusion().occluded(o.next)) self(self, j + 1, o.next, lw + std::log(o.probability));
        }
    };
    for (std::size_t s = 0; s < mdp.state_count(); ++s) {
        const double e = sc.entry(s);
        if (e != kNegInf) recurse(recurse, 0, s, e);
    }
    charge(budget, work);
    if (g.paths == 0) sc.infeasible();
    return g;
}

/// The weight-independent parts of one observed trajectory, computed once
/// and reused across EM iterations and restarts.
struct PreparedTrajectory {
    const ObservedTrajectory* y = nullptr;
    Vector observed_features; ///< discounted sums over observed steps
    double observed_base = 0.0; ///< log start and transition factors between observed steps
    std::vector<EnumeratedGap> exact;
    std::vector<Gap> sampled;
};

inline PreparedTrajectory prepare(const ObservedTrajectory& y, const Mdp& mdp, const FeatureSet& features,
                                  const OcclusionModel& occlusion, std::size_t gap_cap, LearningBudget* budget) {
    const double gamma = mdp.discount();
    PreparedTrajectory p;
    p.y = &y;
    p.observed_features.assign(features.count(), 0.0);
    double w = 1.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        w *= gamma;
        if (!y.steps[t]) continue;
        const StateAction sa = *y.steps[t];
        const auto phi = features.at(sa.state, sa.action);
        for (std::size_t k = 0; k < phi.size(); ++k)
            if (phi[k]) p.observed_features[k] += w;
        if (t + 1 < y.size() && y.steps[t + 1]) {
            const double tp = mdp.transition_probability(sa.state, sa.action, y.steps[t + 1]->state);
            p.observed_base += tp > 0.0 ? std::log(tp) : kNegInf;
        }
    }
    if (y.steps.front()) {
        const double p0 = mdp.start_distribution()[y.steps.front()->state];
        p.observed_base += p0 > 0.0 ? std::log(p0) : kNegInf;
    }
    charge(budget, static_cast<double>(y.size() * features.count()));

    const RewardTable zero(mdp.state_count(), mdp.action_count());
    for (const Gap& gap : hidden_gaps(y)) {
        if (gap.length() <= gap_cap)
            p.exact.push_back(enumerate_factored(GapScorer(mdp, features, occlusion, zero, y, gap), features, budget));
        else
            p.sampled.push_back(gap);
    }
    return p;
}

inline std::vector<PreparedTrajectory> prepare_all(std::span<const ObservedTrajectory> ys, const Mdp& mdp,
                                                   const FeatureSet& features, const OcclusionModel& occlusion,
                                                   std::size_t gap_cap, LearningBudget* budget) {
    std::vector<PreparedTrajectory> out;
    out.reserve(ys.size());
    for (const auto& y : ys) out.push_back(prepare(y, mdp, features, occlusion, gap_cap, budget));
    return out;
}

/// Expected discounted features of one observed trajectory (observed part
/// plus posterior expectation over each gap) and its unnormalized log mass.
struct TrajectorySummary {
    Vector features;
    double log_mass = 0.0; ///< log sum_Z weight(Y u Z)
};

inline TrajectorySummary summarize(const PreparedTrajectory& p, std::span<const double> theta, const Mdp& mdp,
                                   const FeatureSet& features, const OcclusionModel& occlusion,
                                   const RewardTable& reward, const EmConfig& cfg, std::uint64_t seed,
                                   bool want_features, LearningBudget* budget) {
    const std::size_t K = features.count();
    TrajectorySummary out;
    out.features = p.observed_features;
    out.log_mass = p.observed_base + dot(theta, p.observed_features);

    for (const EnumeratedGap& g : p.exact) {
        Vector logw(g.paths);
        for (std::size_t i = 0; i < g.paths; ++i)
            logw[i] = g.base[i] + dot(theta, std::span<const double>(g.features).subspan(i * K, K));
        const double norm = log_sum_exp(logw);
        out.log_mass += norm;
        if (want_features)
            for (std::size_t i = 0; i < g.paths; ++i) {
                const double pr = std::exp(logw[i] - norm);
                for (std::size_t k = 0; k < K; ++k) out.features[k] += pr * g.features[i * K + k];
            }
        charge(budget, static_cast<double>(g.paths * K * (want_features ? 2 : 1)));
    }

    std::mt19937_64 rng(seed);
    for (const Gap& gap : p.sampled) {
        GapScorer sc(mdp, features, occlusion, reward, *p.y, gap);
        const ForwardFilter ff = forward_filter(sc);
        charge(budget, filter_cost(mdp, gap.length()));
        out.log_mass += ff.log_mass;
        if (!want_features) continue;
        BackwardSampler sampler(sc, ff);
        const double w = 1.0 / static_cast<double>(cfg.samples);
        for (std::size_t n = 0; n < cfg.samples; ++n) {
            const auto path = sampler.draw(rng);
            for (std::size_t j = 0; j < gap.length(); ++j) sc.add_features(j, path[j], w, out.features);
        }
        charge(budget, static_cast<double>(cfg.samples * gap.length() * (1 + K)));
    }
    return out;
}

inline Vector expected_features(std::span<const PreparedTrajectory> ps, std::span<const double> theta, const Mdp& mdp,
                                const FeatureSet& features, const OcclusionModel& occlusion, const EmConfig& cfg,
                                LearningBudget* budget) {
    const RewardTable reward = reward_table(theta, features);
    Vector phi(features.count(), 0.0);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto sum =
            summarize(ps[i], theta, mdp, features, occlusion, reward, cfg, mix_seed(cfg.seed, i), true, budget);
        for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += sum.features[k];
    }
    for (double& v : phi) v /= static_cast<double>(ps.size());
    return phi;
}

inline double prepared_ll(std::span<const PreparedTrajectory> ps, std::span<const double> theta, const Mdp& mdp,
                          const FeatureSet& features, const OcclusionModel& occlusion, const EmConfig& cfg,
                          LearningBudget* budget) {
    const RewardTable reward = reward_table(theta, features);
    std::map<std::size_t, double> log_z;
    double ll = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto sum =
            summarize(ps[i], theta, mdp, features, occlusion, reward, cfg, mix_seed(cfg.seed, i), false, budget);
        const std::size_t n = ps[i].y->size();
        auto it = log_z.find(n);
        if (it == log_z.end()) it = log_z.emplace(n, log_partition(mdp, features, theta, n, budget)).first;
        ll += sum.log_mass - it->second;
    }
    return ll;
}

inline std::size_t longest(std::span<const ObservedTrajectory> ys) {
    std::size_t n = 0;
    for (const auto& y : ys) n = std::max(n, y.size());
    return n;
}

} // namespace detail

/**
 * Every feasible completion of `y` through occluded states. Gaps are
 * enumerated independently and combined as a cross product.
 *
 * Throws GapTooLongError if any gap exceeds `gap_cap` and InfeasibleError if
 * some gap has no feasible completion.
 */
inline std::vector<Completion> enumerate_completions(const ObservedTrajectory& y, const Mdp& mdp,
                                                     const OcclusionModel& occlusion, std::size_t gap_cap) {
    occlusion.check_compatible(mdp);
    const auto gaps = hidden_gaps(y);
    for (const Gap& g : gaps)
        if (g.length() > gap_cap)
            throw GapTooLongError("hidden gap of length " + std::to_string(g.length()) + " exceeds cap " +
                                      std::to_string(gap_cap) + "; sample completions instead",
                                  g.length(), gap_cap);

    // Dynamics-only scoring; weights do not affect feasibility.
    const RewardTable zero(mdp.state_count(), mdp.action_count());
    const FeatureSet none = FeatureSet::from(mdp.state_count(), mdp.action_count(), 1,
                                             [](std::size_t, std::size_t, std::size_t) { return 0; });
    std::vector<Completion> result{Completion{}};
    for (const Gap& g : gaps) {
        detail::GapScorer sc(mdp, none, occlusion, zero, y, g);
        const auto paths = detail::enumerate_gap(sc);
        std::vector<Completion> next;
        next.reserve(result.size() * paths.size());
        for (const Completion& prefix : result)
            for (const auto& path : paths) {
                Completion c = prefix;
                for (std::size_t j = 0; j < path.steps.size(); ++j) c.assignments.push_back({g.begin + j, path.steps[j]});
                next.push_back(std::move(c));
            }
        result = std::move(next);
    }
    return result;
}

/// Log weight of a completion: everything in log Pr(Y u Z) that depends on Z.
inline double completion_log_weight(const ObservedTrajectory& y, const Completion& z, std::span<const double> theta,
                                    const Mdp& mdp, const FeatureSet& features) {
    const Trajectory x = complete(y, z);
    const double gamma = mdp.discount();
    double lw = 0.0;
    if (y.hidden(0)) {
        const double p0 = mdp.start_distribution()[x[0].state];
        if (p0 <= 0.0) return kNegInf;
        lw += std::log(p0);
    }
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (y.hidden(t)) lw += std::pow(gamma, static_cast<double>(t + 1)) * reward_of(theta, features, x[t].state, x[t].action);
        if (t + 1 < x.size() && (y.hidden(t) || y.hidden(t + 1))) {
            const double p = mdp.transition_probability(x[t].state, x[t].action, x[t + 1].state);
            if (p <= 0.0) return kNegInf;
            lw += std::log(p);
        }
    }
    return lw;
}

/// Pr(Z | Y; theta) for every completion in the set.
inline Vector posterior_over_completions(const ObservedTrajectory& y, std::span<const Completion> completions,
                                         std::span<const double> theta, const Mdp& mdp, const FeatureSet& features) {
    if (completions.empty()) throw EmptyInputError("posterior over an empty completion set");
    Vector logw(completions.size());
    for (std::size_t i = 0; i < completions.size(); ++i)
        logw[i] = completion_log_weight(y, completions[i], theta, mdp, features);
    const double norm = log_sum_exp(logw);
    if (norm == kNegInf) throw InfeasibleError("every completion has zero probability", 0, y.size());
    for (double& v : logw) v = std::exp(v - norm);
    return logw;
}

struct WeightedCompletion {
    Completion completion;
    double weight = 0.0;
};

/// Exact draws from Pr(Z | Y; theta) by forward filtering and backward
/// sampling each gap; every sample carries weight 1/N.
inline std::vector<WeightedCompletion> sample_completions(const ObservedTrajectory& y, std::span<const double> theta,
                                                          std::size_t n, std::mt19937_64& rng, const Mdp& mdp,
                                                          const FeatureSet& features,
                                                          const OcclusionModel& occlusion) {
    if (n == 0) throw DomainError("sample count must be at least 1");
    occlusion.check_compatible(mdp);
    const RewardTable reward = reward_table(theta, features);
    const auto gaps = hidden_gaps(y);
    std::vector<detail::GapScorer> scorers;
    std::vector<detail::ForwardFilter> filters;
    scorers.reserve(gaps.size());
    filters.reserve(gaps.size());
    for (const Gap& g : gaps) {
        scorers.emplace_back(mdp, features, occlusion, reward, y, g);
        filters.push_back(detail::forward_filter(scorers.back()));
    }
    std::vector<detail::BackwardSampler> samplers;
    samplers.reserve(gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) samplers.emplace_back(scorers[i], filters[i]);

    std::vector<WeightedCompletion> out(n);
    for (auto& wc : out) {
        wc.weight = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < gaps.size(); ++i) {
            const auto path = samplers[i].draw(rng);
            for (std::size_t j = 0; j < path.size(); ++j) wc.completion.assignments.push_back({gaps[i].begin + j, path[j]});
        }
    }
    return out;
}

/**
 * Latent feature expectations: for each observed trajectory, the observed
 * feature sums plus the posterior-expected sums over its hidden steps,
 * averaged over the set. Gaps up to `cfg.gap_cap` are enumerated, longer ones
 * sampled with `cfg.samples` draws.
 */
inline Vector latent_feature_expectations(std::span<const ObservedTrajectory> ys, std::span<const double> theta,
                                          const Mdp& mdp, const FeatureSet& features, const OcclusionModel& occlusion,
                                          const EmConfig& cfg, LearningBudget* budget = nullptr) {
    if (ys.empty()) throw EmptyInputError("latent feature expectations of an empty set");
    features.check_compatible(mdp);
    occlusion.check_compatible(mdp);
    const auto ps = detail::prepare_all(ys, mdp, features, occlusion, cfg.gap_cap, budget);
    return detail::expected_features(ps, theta, mdp, features, occlusion, cfg, budget);
}

/**
 * Observed-data log-likelihood sum_Y log sum_Z Pr(Y u Z; theta), with each
 * trajectory normalized over trajectories of its own length. Hidden sums are
 * exact: enumerated up to the gap cap, forward-filtered beyond it.
 */
inline double observed_ll(std::span<const double> theta, std::span<const ObservedTrajectory> ys, const Mdp& mdp,
                          const FeatureSet& features, const OcclusionModel& occlusion, const EmConfig& cfg,
                          LearningBudget* budget = nullptr) {
    if (ys.empty()) throw EmptyInputError("log-likelihood of an empty set");
    features.check_compatible(mdp);
    occlusion.check_compatible(mdp);
    const auto ps = detail::prepare_all(ys, mdp, features, occlusion, cfg.gap_cap, budget);
    return detail::prepared_ll(ps, theta, mdp, features, occlusion, cfg, budget);
}

/// Previous sessions' sufficient statistic, merged into every E-step.
struct EmPrior {
    std::size_t count = 0;
    Vector features;
};

struct EmResult {
    Vector theta;
    /// Merged feature expectations used by the final M-step.
    Vector target;
    std::size_t iterations = 0;
    /// Total M-step solver evaluations.
    std::size_t solver_iterations = 0;
    double entropy = 0.0;
    /// Observed-data LL over the given trajectories at `theta`, when tracked.
    std::optional<double> log_likelihood;
    /// LL at the start point and after each E/M iteration, when tracked.
    Vector ll_trace;
    std::size_t restart = 0;
    bool timed_out = false;
};

/// An M-step hit its iteration cap inside EM. Carries the best-so-far result.
class EmTimeoutError : public ConvergenceError {
public:
    EmTimeoutError(EmResult partial, const MaxEntCapError& cause)
        : ConvergenceError(std::string("EM timed out: ") + cause.what(), cause.residual(), cause.iterations()),
          partial_(std::move(partial)) {}

    const EmResult& partial() const noexcept { return partial_; }

private:
    EmResult partial_;
};

namespace detail {

inline Vector merge_prior(const EmPrior* prior, std::size_t count, const Vector& phi) {
    if (!prior || prior->count == 0) return phi;
    const double n0 = static_cast<double>(prior->count), n1 = static_cast<double>(count);
    Vector out(phi.size());
    for (std::size_t k = 0; k < phi.size(); ++k) out[k] = (n0 * prior->features[k] + n1 * phi[k]) / (n0 + n1);
    return out;
}

inline EmResult em_single(const Mdp& mdp, const FeatureSet& features, const OcclusionModel& occlusion,
                          std::span<const PreparedTrajectory> ps, Vector theta, const EmConfig& cfg,
                          std::size_t horizon, LearningBudget* budget, const EmPrior* prior) {
    SolverConfig solver = cfg.solver;
    solver.horizon = horizon;
    for (double& v : theta) v = std::clamp(v, solver.weight_floor, 1.0);

    EmResult res;
    res.theta = theta;
    if (cfg.track_likelihood) res.ll_trace.push_back(prepared_ll(ps, theta, mdp, features, occlusion, cfg, budget));
    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        if (expired(budget)) {
            res.timed_out = true;
            break;
        }
        const Vector target =
            merge_prior(prior, ps.size(), expected_features(ps, res.theta, mdp, features, occlusion, cfg, budget));
        MaxEntResult m;
        try {
            m = maxent_solve(mdp, features, target, solver, res.theta, budget);
        } catch (const MaxEntCapError& e) {
            res.iterations = it;
            res.solver_iterations += e.iterations();
            res.theta = e.best().theta;
            res.target = target;
            throw EmTimeoutError(res, e);
        }
        const double delta = sup_norm_diff(m.theta, res.theta);
        res.theta = m.theta;
        res.target = target;
        res.iterations = it;
        res.solver_iterations += m.iterations;
        if (cfg.track_likelihood && m.status != SolverStatus::deadline)
            res.ll_trace.push_back(prepared_ll(ps, res.theta, mdp, features, occlusion, cfg, budget));
        if (m.status == SolverStatus::deadline) {
            res.timed_out = true;
            break;
        }
        if (delta <= cfg.tolerance) break;
    }
    if (!res.ll_trace.empty()) res.log_likelihood = res.ll_trace.back();
    return res;
}

} // namespace detail

/**
 * Latent max-entropy IRL by expectation-maximization.
 *
 * Restart 0 starts at `theta_init`; the remaining `cfg.restarts - 1` start at
 * uniform random weights. The restart whose trajectory distribution has the
 * largest entropy wins. With a prior statistic, every E-step merges the
 * current trajectories' expectations with it by trajectory count.
 *
 * When the budget expires the best completed restart is returned (or the
 * running one if none completed) with `timed_out` set.
 */
inline EmResult em_solve(const Mdp& mdp, const FeatureSet& features, const OcclusionModel& occlusion,
                         std::span<const ObservedTrajectory> ys, std::span<const double> theta_init,
                         const EmConfig& cfg, LearningBudget* budget = nullptr, const EmPrior* prior = nullptr) {
    if (ys.empty()) throw EmptyInputError("EM needs at least one observed trajectory");
    if (theta_init.size() != features.count()) throw DimensionError("initial weights differ from feature count");
    if (prior && prior->count > 0 && prior->features.size() != features.count())
        throw DimensionError("prior statistic differs from feature count");
    features.check_compatible(mdp);
    occlusion.check_compatible(mdp);
    const std::size_t horizon = cfg.solver.horizon ? cfg.solver.horizon : detail::longest(ys);
    const auto ps = detail::prepare_all(ys, mdp, features, occlusion, cfg.gap_cap, budget);

    std::mt19937_64 rng(mix_seed(cfg.seed, 0x5eed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::optional<EmResult> best;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, cfg.restarts); ++r) {
        Vector init(theta_init.begin(), theta_init.end());
        if (r > 0)
            for (double& v : init) v = unit(rng);
        EmResult res = detail::em_single(mdp, features, occlusion, ps, std::move(init), cfg, horizon, budget, prior);
        res.restart = r;
        res.entropy = trajectory_distribution(mdp, features, res.theta, horizon, true, budget).entropy;
        if (res.timed_out) {
            if (best) {
                best->timed_out = true;
                return *best;
            }
            return res;
        }
        if (!best || res.entropy > best->entropy) best = std::move(res);
    }
    return *best;
}

} // namespace i2rl
