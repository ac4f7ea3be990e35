#pragma once

// Small models and brute-force oracles shared by the unit tests and the
// acceptance binary.

#include "i2rl/features.hpp"
#include "i2rl/latent.hpp"
#include "i2rl/maxent.hpp"
#include "i2rl/mdp.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace support {

using i2rl::FeatureSet;
using i2rl::Mdp;
using i2rl::Outcome;
using i2rl::StateAction;
using i2rl::Trajectory;
using i2rl::Vector;

/// Each (s, a) gets one to three successors with random probabilities.
inline Mdp random_mdp(std::size_t S, std::size_t A, double gamma, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, S - 1), fan(1, std::min<std::size_t>(3, S));
    std::vector<std::vector<Outcome>> rows(S * A);
    for (auto& row : rows) {
        std::vector<std::size_t> nexts;
        const std::size_t n = fan(rng);
        while (nexts.size() < n) {
            const std::size_t s = pick(rng);
            if (std::find(nexts.begin(), nexts.end(), s) == nexts.end()) nexts.push_back(s);
        }
        double total = 0.0;
        for (std::size_t s : nexts) {
            row.push_back({s, unit(rng)});
            total += row.back().probability;
        }
        for (auto& o : row) o.probability /= total;
        // Exact unit sums keep the MDP validator quiet.
        double rest = 1.0;
        for (std::size_t i = 0; i + 1 < row.size(); ++i) rest -= row[i].probability;
        row.back().probability = rest;
    }
    Vector start(S);
    double total = 0.0;
    for (double& p : start) total += p = unit(rng);
    for (double& p : start) p /= total;
    return Mdp(S, A, std::move(rows), gamma, std::move(start));
}

inline FeatureSet random_features(std::size_t S, std::size_t A, std::size_t K, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.4);
    std::vector<std::uint8_t> table(S * A * K);
    for (auto& v : table) v = coin(rng);
    table[0] = 1;
    return FeatureSet(S, A, K, std::move(table));
}

inline Vector random_theta(std::size_t K, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector t(K);
    for (double& v : t) v = unit(rng);
    return t;
}

/// Two states, actions {stay, switch}, deterministic.
inline Mdp two_state_chain(double gamma) {
    return i2rl::make_deterministic_mdp(
        2, 2, [](std::size_t s, std::size_t a) { return a == 0 ? s : 1 - s; }, gamma, Vector{1.0, 0.0});
}

/// Calls f(trajectory, log_weight) for every length-T state-action sequence
/// with positive weight under theta.
inline void for_each_trajectory(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                                std::size_t T, const std::function<void(const Trajectory&, double)>& f) {
    const std::size_t S = mdp.state_count(), A = mdp.action_count();
    Trajectory x(T);
    std::function<void(std::size_t)> rec = [&](std::size_t t) {
        if (t == T) {
            const double lw = i2rl::trajectory_log_weight(x, theta, mdp, features);
            if (lw != i2rl::kNegInf) f(x, lw);
            return;
        }
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) {
                x[t] = {s, a};
                rec(t + 1);
            }
    };
    rec(0);
}

inline Vector discounted_features(const Trajectory& x, const FeatureSet& features, double gamma) {
    Vector out(features.count(), 0.0);
    i2rl::accumulate_discounted_features(x, features, gamma, out);
    return out;
}

struct Enumerated {
    double log_z = i2rl::kNegInf;
    double total_probability = 0.0;
    Vector features;
};

/// Normalizer, probability mass and feature expectations by enumeration.
inline Enumerated enumerate_distribution(const Mdp& mdp, const FeatureSet& features, std::span<const double> theta,
                                         std::size_t T) {
    Enumerated e;
    std::vector<std::pair<Trajectory, double>> all;
    for_each_trajectory(mdp, features, theta, T, [&](const Trajectory& x, double lw) {
        all.emplace_back(x, lw);
        e.log_z = i2rl::log_add(e.log_z, lw);
    });
    e.features.assign(features.count(), 0.0);
    for (const auto& [x, lw] : all) {
        const double p = std::exp(lw - e.log_z);
        e.total_probability += p;
        const Vector phi = discounted_features(x, features, mdp.discount());
        for (std::size_t k = 0; k < phi.size(); ++k) e.features[k] += p * phi[k];
    }
    return e;
}

/// Posterior-expected features of one observed trajectory, by enumerating
/// every full trajectory consistent with it.
inline Vector brute_latent_features(const i2rl::ObservedTrajectory& y, const Mdp& mdp, const FeatureSet& features,
                                    const i2rl::OcclusionModel& occlusion, std::span<const double> theta) {
    double log_z = i2rl::kNegInf;
    std::vector<std::pair<Trajectory, double>> hits;
    for_each_trajectory(mdp, features, theta, y.size(), [&](const Trajectory& x, double lw) {
        for (std::size_t t = 0; t < y.size(); ++t) {
            if (y.steps[t]) {
                if (!(x[t] == *y.steps[t])) return;
            } else if (!occlusion.occluded(x[t].state)) {
                return;
            }
        }
        hits.emplace_back(x, lw);
        log_z = i2rl::log_add(log_z, lw);
    });
    Vector out(features.count(), 0.0);
    for (const auto& [x, lw] : hits) {
        const Vector phi = discounted_features(x, features, mdp.discount());
        for (std::size_t k = 0; k < phi.size(); ++k) out[k] += std::exp(lw - log_z) * phi[k];
    }
    return out;
}

/// log sum over consistent full trajectories of Pr(X; theta).
inline double brute_observed_ll(const i2rl::ObservedTrajectory& y, const Mdp& mdp, const FeatureSet& features,
                                const i2rl::OcclusionModel& occlusion, std::span<const double> theta) {
    double log_z = i2rl::kNegInf, log_hit = i2rl::kNegInf;
    for_each_trajectory(mdp, features, theta, y.size(), [&](const Trajectory& x, double lw) {
        log_z = i2rl::log_add(log_z, lw);
        for (std::size_t t = 0; t < y.size(); ++t) {
            if (y.steps[t]) {
                if (!(x[t] == *y.steps[t])) return;
            } else if (!occlusion.occluded(x[t].state)) {
                return;
            }
        }
        log_hit = i2rl::log_add(log_hit, lw);
    });
    return log_hit - log_z;
}

/// Samples a trajectory from the MDP under a uniform random policy.
inline Trajectory random_walk(const Mdp& mdp, std::size_t T, std::mt19937_64& rng) {
    std::discrete_distribution<std::size_t> start(mdp.start_distribution().begin(), mdp.start_distribution().end());
    std::uniform_int_distribution<std::size_t> act(0, mdp.action_count() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Trajectory x;
    std::size_t s = start(rng);
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t a = act(rng);
        x.push_back({s, a});
        double u = unit(rng);
        const auto outs = mdp.outcomes(s, a);
        s = outs.back().next;
        for (const Outcome& o : outs) {
            if (u < o.probability) {
                s = o.next;
                break;
            }
            u -= o.probability;
        }
    }
    return x;
}

/// A confidence parameter point with values from 50-digit arithmetic.
struct ConfidencePoint {
    std::size_t n;
    double epsilon, gamma;
    std::size_t k, samples;
    double epsilon_sampling;
    double delta, delta_sampling, epsilon_latent, delta_latent;
};

inline const std::vector<ConfidencePoint>& confidence_points() {
    static const std::vector<ConfidencePoint> pts{
        {10000, 0.5, 0.5, 2, 10000, 0.1, 4.7076437756866891926e-34, 7.7149993918556283052e-22, 0.9000000000000000222,
         7.714999391860335949e-22},
        {2000000, 0.2, 0.9, 6, 2000000, 0.02, 0.00017934406229737801041, 1.3504220966311180699e-6, 0.4400000000000000161,
         0.00018069448439400912848},
        {400000, 0.5, 0.9, 6, 300000, 0.05, 0.000011150990397656875659, 3.6708278460219277999e-6,
         1.1000000000000000333, 0.000014821818243678803459},
        {100, 1.0, 0.5, 1, 100, 0.5, 7.4533063441573419858e-6, 7.4533063441573419858e-6, 2.0,
         0.000014906612688314683972},
        {50000, 0.3, 0.8, 3, 20000, 0.03, 0.00027239957857491052053, 1.0, 0.47999999999999998224, 1.0},
        {30000000, 0.05, 0.95, 6, 3000000, 0.01, 0.88757698575793481243, 1.0, 0.17000000000000000527, 1.0},
        {300, 2.0, 0.7, 2, 400, 0.2, 5.4838363455363155402e-6, 0.22453905133653462264, 2.8000000000000000444,
         0.22454453517288015896},
        {7, 0.9, 0.1, 1, 3, 0.9, 0.20125091432981317674, 0.03902890242741612145, 2.7000000000000000666,
         0.24027981675722929819},
        {123456, 0.25, 0.75, 4, 54321, 0.03, 2.281058522866518626e-6, 0.017744654589191346553, 0.48999999999999999112,
         0.017746935647714213072},
        {2500, 0.6, 0.6, 5, 800, 0.08, 0.56134762834133715489, 1.0, 1.3999999999999999944, 1.0},
    };
    return pts;
}

} // namespace support
