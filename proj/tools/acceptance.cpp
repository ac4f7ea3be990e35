// Acceptance suite: one PASS/FAIL line per criterion with the measured values.
// Exits 0 unless it crashes; --strict turns any FAIL into exit status 1.

#include "i2rl/config.hpp"
#include "i2rl/experiment.hpp"
#include "i2rl/i2rl.hpp"
#include "support/models.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace i2rl;
using namespace i2rl::patrol;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* title;
    double limit_seconds;
    std::function<Verdict()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string join(const std::vector<double>& v, const char* f = "%.4g") {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(f, v[i]);
    return s;
}

const Domain& patrol_domain() {
    static const Domain d = build_domain({});
    return d;
}

// ---- 1 ----------------------------------------------------------------------

Verdict merge_exactness() {
    std::mt19937_64 rng(1);
    double worst = 0.0;
    std::size_t checks = 0;
    for (int demo_i = 0; demo_i < 50; ++demo_i) {
        const std::size_t S = 2 + rng() % 5, A = 1 + rng() % 3, K = 1 + rng() % 6;
        const Mdp m = support::random_mdp(S, A, 0.5 + 0.45 * static_cast<double>(rng() % 100) / 100.0, rng);
        const auto f = support::random_features(S, A, K, rng);
        Demonstration demo;
        const std::size_t n = 8 + rng() % 40;
        for (std::size_t i = 0; i < n; ++i) demo.push_back(support::random_walk(m, 1 + rng() % 10, rng));
        const Vector batch = empirical_feature_expectations(demo, f, m.discount());
        for (std::size_t parts = 1; parts <= 8; ++parts) {
            // Random cut points; every batch non-empty.
            std::set<std::size_t> cuts;
            while (cuts.size() + 1 < parts) cuts.insert(1 + rng() % (n - 1));
            cuts.insert(n);
            std::size_t count = 0;
            Vector stat;
            for (std::size_t end : cuts) {
                const Demonstration part(demo.begin() + count, demo.begin() + end);
                stat = merge_feature_expectations(count, stat, part.size(),
                                                  empirical_feature_expectations(part, f, m.discount()));
                count = end;
            }
            worst = std::max(worst, sup_norm_diff(stat, batch));
            ++checks;
        }
    }
    return {worst <= 1e-12, fmt("max |merged - batch| = %.3g over %zu splits of 50 demonstrations (tol 1e-12)", worst,
                                checks)};
}

// ---- 2 ----------------------------------------------------------------------

Verdict occlusion_reduction() {
    std::mt19937_64 rng(2);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t S = 2 + rng() % 6, A = 1 + rng() % 3, K = 1 + rng() % 6;
        const Mdp m = support::random_mdp(S, A, 0.9, rng);
        const auto f = support::random_features(S, A, K, rng);
        Demonstration demo;
        std::vector<ObservedTrajectory> ys;
        for (int j = 0; j < 10; ++j) {
            demo.push_back(support::random_walk(m, 1 + rng() % 10, rng));
            ys.push_back(ObservedTrajectory::observed(demo.back()));
        }
        const Vector latent =
            latent_feature_expectations(ys, support::random_theta(K, rng), m, f, OcclusionModel::none(S), {});
        worst = std::max(worst, sup_norm_diff(latent, empirical_feature_expectations(demo, f, 0.9)));
    }
    return {worst <= 1e-12, fmt("max |latent - empirical| = %.3g over 50 instances (tol 1e-12)", worst)};
}

// ---- 3 ----------------------------------------------------------------------

Verdict oracle_equivalence() {
    std::mt19937_64 rng(3);
    double feat = 0.0, mass = 0.0, logz = 0.0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t S = 1 + rng() % 4, A = 1 + rng() % 3, K = 1 + rng() % 4, T = 1 + rng() % 4;
        const Mdp m = support::random_mdp(S, A, 0.5 + 0.45 * static_cast<double>(rng() % 100) / 100.0, rng);
        const auto f = support::random_features(S, A, K, rng);
        const Vector theta = support::random_theta(K, rng);
        const auto e = support::enumerate_distribution(m, f, theta, T);
        const auto d = trajectory_distribution(m, f, theta, T);
        feat = std::max(feat, sup_norm_diff(d.feature_expectations, e.features));
        logz = std::max(logz, std::abs(d.log_partition - e.log_z));
        // Probabilities normalized by the dynamic program's partition function.
        double total = 0.0;
        support::for_each_trajectory(m, f, theta, T,
                                     [&](const Trajectory&, double lw) { total += std::exp(lw - d.log_partition); });
        mass = std::max(mass, std::abs(total - 1.0));
    }
    return {feat <= 1e-9 && mass <= 1e-9,
            fmt("20 MDPs: max feature diff %.3g, max |sum Pr - 1| %.3g, max log Z diff %.3g (tol 1e-9)", feat, mass,
                logz)};
}

// ---- 4 ----------------------------------------------------------------------

Verdict gradient_check() {
    std::mt19937_64 rng(4);
    const Mdp m = support::random_mdp(4, 3, 0.9, rng);
    const auto f = support::random_features(4, 3, 5, rng);
    const std::size_t T = 5;
    const Vector target = model_feature_expectations(m, f, support::random_theta(5, rng), T);
    auto dual = [&](const Vector& th) { return log_partition(m, f, th, T) - dot(th, target); };
    const double h = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const Vector theta = support::random_theta(5, rng);
        const Vector achieved = model_feature_expectations(m, f, theta, T);
        for (std::size_t k = 0; k < 5; ++k) {
            Vector up = theta, down = theta;
            up[k] += h;
            down[k] -= h;
            const double numeric = (dual(up) - dual(down)) / (2 * h);
            const double analytic = achieved[k] - target[k];
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            worst = std::max(worst, std::abs(numeric - analytic) / scale);
        }
    }
    return {worst <= 1e-4, fmt("max componentwise relative error %.3g at 10 points, h = 1e-5 (tol 1e-4)", worst)};
}

// ---- 5 ----------------------------------------------------------------------

Verdict em_ascent() {
    const Domain& d = patrol_domain();
    const double tol = EmConfig{}.tolerance;

    // Within a run: every E/M iteration on patrol data and on random models.
    std::size_t iterations = 0, drops = 0;
    double worst_drop = 0.0;
    auto check_trace = [&](const Vector& trace) {
        for (std::size_t t = 1; t < trace.size(); ++t) {
            ++iterations;
            const double change = trace[t] - trace[t - 1];
            worst_drop = std::min(worst_drop, change);
            drops += change < -1e-9;
        }
    };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto data = make_guard_data(d, 30.0, 64, 500 + seed);
        for (std::size_t g = 0; g < 2; ++g) {
            const PatrollerModel& m = d.patrollers[g];
            EmConfig cfg;
            cfg.restarts = 1;
            cfg.track_likelihood = true;
            const EmResult r = em_solve(m.mdp, m.features, data[g].occlusion, data[g].demo.observed,
                                        i2rl::detail::random_weights(kFeatures, seed * 2 + g), cfg);
            check_trace(r.ll_trace);
        }
    }
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
        const Mdp m = support::random_mdp(5, 2, 0.8, rng);
        const auto f = support::random_features(5, 2, 3, rng);
        std::vector<bool> occ(5);
        for (std::size_t s = 0; s < 5; ++s) occ[s] = s > 0 && rng() % 2;
        const OcclusionModel o(occ);
        std::vector<ObservedTrajectory> ys;
        for (int j = 0; j < 6; ++j) ys.push_back(ObservedTrajectory::mask(support::random_walk(m, 5, rng), o));
        EmConfig cfg;
        cfg.restarts = 1;
        cfg.gap_cap = 5;
        cfg.track_likelihood = true;
        check_trace(em_solve(m, f, o, ys, support::random_theta(3, rng), cfg).ll_trace);
    }

    // Across sessions: one trajectory per session, so the prior holds at
    // least ten times the new data from session 11 on.
    std::size_t sessions = 0, lemma_drops = 0, step_drops = 0;
    double lemma_worst = 0.0, step_worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto data = make_guard_data(d, 30.0, 20 * d.config.trajectory_length, 900 + seed);
        for (std::size_t g = 0; g < 2; ++g) {
            const PatrollerModel& m = d.patrollers[g];
            const auto& ys = data[g].demo.observed;
            SessionConfig sc;
            sc.em.restarts = 1;
            sc.seed = mix_seed(seed, g);
            SessionStatistic stat;
            for (std::size_t i = 0; i < ys.size(); ++i) {
                const auto out = run_session(m.mdp, m.features, data[g].occlusion,
                                             std::span<const ObservedTrajectory>(&ys[i], 1), stat, sc, i + 1,
                                             std::span<const ObservedTrajectory>(ys.data(), i + 1));
                if (stat.count >= 10) {
                    const double change = *out.record.log_likelihood - *stat.log_likelihood;
                    ++sessions;
                    lemma_worst = std::min(lemma_worst, change);
                    lemma_drops += change < -10.0 * tol;
                    // The same comparison with both weights scored on Y_1:i
                    // separates the learning step from the new data.
                    const std::span<const ObservedTrajectory> seen(ys.data(), i + 1);
                    const double before = observed_ll(stat.theta, seen, m.mdp, m.features, data[g].occlusion, sc.em) /
                                          static_cast<double>(i + 1);
                    const double step = *out.record.log_likelihood - before;
                    step_worst = std::min(step_worst, step);
                    step_drops += step < -10.0 * tol;
                }
                stat = out.statistic;
            }
        }
    }
    const double share = 100.0 * static_cast<double>(lemma_drops) / static_cast<double>(sessions);
    return {drops == 0 && share <= 5.0,
            fmt("within runs: %zu decreases > 1e-9 in %zu E/M iterations (worst change %.3g); across sessions with "
                "prior/current >= 10: %zu of %zu decrease by more than %.0e (%.1f%%, limit 5%%), worst %.3g; "
                "scored on the same data Y_1:i: %zu decreases, worst %.3g",
                drops, iterations, worst_drop, lemma_drops, sessions, 10.0 * tol, share, lemma_worst, step_drops,
                step_worst)};
}

// ---- 6 ----------------------------------------------------------------------

Verdict confidence() {
    double worst = 0.0;
    auto rel = [](double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); };
    for (const auto& p : support::confidence_points()) {
        const LatentConfidence r =
            confidence_latent({p.epsilon, p.epsilon_sampling, p.samples, p.k, p.gamma, p.n});
        worst = std::max({worst, rel(r.delta, p.delta), rel(r.delta_sampling, p.delta_sampling),
                          rel(r.epsilon_latent, p.epsilon_latent), rel(r.delta_latent, p.delta_latent)});
    }
    std::size_t violations = 0, grid = 0;
    for (std::size_t k : {1u, 2u, 6u, 20u})
        for (double gamma : {0.1, 0.5, 0.9, 0.99})
            for (double eps : {0.01, 0.1, 1.0, 5.0}) {
                double pd = 1.0, ps = 1.0, pl = 1.0;
                for (std::size_t n = 1; n <= 100000000; n *= 3) {
                    const double dd = confidence_fullobs(n, eps, gamma, k);
                    const double ds = confidence_sampling(n, eps / 10, gamma, k);
                    const double dl = confidence_latent({eps, eps / 10, n, k, gamma, n}).delta_latent;
                    for (double v : {dd, ds, dl}) violations += !(v >= 0.0 && v <= 1.0);
                    violations += (dd > pd) + (ds > ps) + (dl > pl);
                    pd = dd;
                    ps = ds;
                    pl = dl;
                    ++grid;
                }
            }
    return {worst <= 1e-10 && violations == 0,
            fmt("max relative error %.3g at 10 points (tol 1e-10); %zu monotonicity or range violations over %zu grid "
                "points",
                worst, violations, grid)};
}

// ---- 7, 8 -------------------------------------------------------------------

const std::vector<std::size_t> kSizes{4, 8, 16, 32, 64};
constexpr std::size_t kTrials = 20;

struct Grid {
    // [observability][method][size][trial]
    std::map<double, std::map<Method, std::map<std::size_t, std::vector<RunResult>>>> runs;
};

const Grid& quality_grid() {
    static const Grid grid = [] {
        Grid g;
        const Domain& d = patrol_domain();
        ExperimentConfig cfg;
        auto fill = [&](double obs, std::size_t pairs) {
            for (Method m : {Method::batch, Method::incremental}) {
                auto& cell = g.runs[obs][m][pairs];
                for (std::size_t t = 0; t < kTrials; ++t)
                    cell.push_back(simulate_run(d, m, cfg.run_config(obs, pairs), trial_seed(cfg.seed, obs, pairs, t)));
            }
        };
        for (std::size_t p : kSizes) fill(70.0, p);
        fill(30.0, 64);
        fill(100.0, 64);
        return g;
    }();
    return grid;
}

Verdict learning_quality() {
    const Grid& g = quality_grid();
    bool ok = true;
    std::string detail;
    for (Method m : {Method::batch, Method::incremental}) {
        std::vector<double> med, mean;
        for (std::size_t p : kSizes) {
            std::vector<double> iles;
            for (const RunResult& r : g.runs.at(70.0).at(m).at(p)) iles.push_back(*r.ile);
            med.push_back(median(iles));
            mean.push_back(std::accumulate(iles.begin(), iles.end(), 0.0) / static_cast<double>(iles.size()));
        }
        std::size_t rises = 0;
        for (std::size_t i = 1; i < med.size(); ++i) rises += med[i] > med[i - 1];
        ok = ok && rises <= 1;
        detail += fmt("%s median ILE [%s] (%zu rises), mean [%s]; ", to_string(m), join(med).c_str(), rises,
                      join(mean).c_str());
    }
    auto mean_lba = [&](Method m) {
        double s = 0.0;
        for (const RunResult& r : g.runs.at(70.0).at(m).at(64)) s += *r.lba;
        return s / kTrials;
    };
    const double lb = mean_lba(Method::batch), li = mean_lba(Method::incremental);
    ok = ok && std::abs(li - lb) <= 10.0;
    detail += fmt("LBA at 64 pairs: batch %.1f%%, incremental %.1f%% (gap limit 10 points)", lb, li);
    return {ok, detail};
}

Verdict timing_trend() {
    const Grid& g = quality_grid();
    bool ok = true;
    std::string detail;
    for (double obs : {30.0, 70.0, 100.0}) {
        const auto& b = g.runs.at(obs).at(Method::batch).at(64);
        const auto& i = g.runs.at(obs).at(Method::incremental).at(64);
        std::vector<double> work, wall;
        for (std::size_t t = 0; t < kTrials; ++t) {
            work.push_back(i[t].duration / b[t].duration);
            wall.push_back(i[t].wall_seconds / b[t].wall_seconds);
        }
        const double r = median(work);
        ok = ok && r <= 0.67;
        detail += fmt("%g%%: median ratio %.3f (wall clock %.3f); ", obs, r, median(wall));
    }
    detail += "incremental/batch learning time at 64 pairs over 20 paired trials, limit 0.67";
    return {ok, detail};
}

// ---- 9 ----------------------------------------------------------------------

Verdict success_timeout() {
    const Domain& d = patrol_domain();
    constexpr std::size_t kRuns = 40, kPairs = 64;
    ExperimentConfig cfg;
    auto cell = [&](Method m, double obs, double deadline) {
        ExperimentConfig c = cfg;
        c.deadline = deadline;
        std::vector<RunResult> out;
        for (std::size_t t = 0; t < kRuns; ++t)
            out.push_back(simulate_run(d, m, c.run_config(obs, kPairs), trial_seed(c.seed, obs, kPairs, t)));
        return aggregate(out);
    };
    // Largest deadline on a descending grid at which batch times out in at
    // least 30% of the 30%-observability runs.
    double deadline = 0.0;
    double batch_timeouts = 0.0;
    for (double D = 0.2; D > 1e-3; D *= 0.9) {
        const Summary s = cell(Method::batch, 30.0, D);
        if (s.timeout_rate >= 30.0) {
            deadline = D;
            batch_timeouts = s.timeout_rate;
            break;
        }
    }
    if (deadline == 0.0) return {false, "no deadline on the grid makes batch time out in 30% of runs"};

    bool timeout_ok = true, success_ok = true, full_ok = true;
    double tb = 0.0, ti = 0.0;
    std::string detail = fmt("deadline %.4g s per IRL call (batch times out in %.0f%% at 30%%); ", deadline,
                             batch_timeouts);
    for (double obs : {30.0, 70.0, 100.0}) {
        const Summary b = cell(Method::batch, obs, deadline);
        const Summary i = cell(Method::incremental, obs, deadline);
        tb += b.timeout_rate;
        ti += i.timeout_rate;
        timeout_ok = timeout_ok && i.timeout_rate <= b.timeout_rate;
        success_ok = success_ok && i.success_rate >= b.success_rate - 5.0;
        if (obs == 100.0) full_ok = i.success_rate > b.success_rate;
        detail += fmt("%g%%: timeout %.1f%% vs %.1f%%, success %.1f%% vs %.1f%% (incremental vs batch); ", obs,
                      i.timeout_rate, b.timeout_rate, i.success_rate, b.success_rate);
    }
    timeout_ok = timeout_ok && ti < tb;
    detail += fmt("timeouts strictly lower overall and never higher: %s; success within 5 points everywhere: %s; "
                  "success strictly greater at 100%%: %s; %zu runs per cell",
                  timeout_ok ? "yes" : "no", success_ok ? "yes" : "no", full_ok ? "yes" : "no", kRuns);
    return {timeout_ok && success_ok && full_ok, detail};
}

// ---- 10 ---------------------------------------------------------------------

Verdict jin_baseline() {
    bool ok = true;
    for (std::size_t S : {1u, 4u, 16u, 40u}) {
        const RewardTable r = jin_init(S, 3);
        for (double v : r.values()) ok = ok && v == 1.0 / std::sqrt(static_cast<double>(S));
    }
    const bool init16 = jin_init(16, 3)(0, 0) == 0.25;

    const Mdp chain = support::two_state_chain(0.5);
    const RewardTable flat = jin_init(2, 2);
    const JinUpdate same = jin_session(flat, {0, 1}, chain, 0.2);
    const bool unchanged = same.value_gap == 0.0 && same.reward.values() == flat.values();

    // r(1, stay) = 1: Q(0, stay) = 0.5 and Q(0, switch) = 1, so v = -0.5.
    RewardTable r(2, 2);
    r(1, 0) = 1.0;
    const JinUpdate u = jin_session(r, {0, 0}, chain, 0.2, {1e-13, 100000});
    const bool hand = std::abs(u.value_gap + 0.5) <= 1e-10 && std::abs(u.reward(0, 0) + 0.1) <= 1e-10 &&
                      u.reward(1, 0) == 1.0 && u.reward(0, 1) == 0.0 && u.reward(1, 1) == 0.0;
    return {ok && init16 && unchanged && hand,
            fmt("initial reward 1/sqrt|S| exact: %s (16 states -> %.17g); v = 0 keeps reward: %s; chain update v = %.12g, "
                "r(0,stay) = %.12g (expected -0.5, -0.1)",
                ok ? "yes" : "no", jin_init(16, 3)(0, 0), unchanged ? "yes" : "no", u.value_gap, u.reward(0, 0))};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    bool strict = false;
    std::vector<int> only;
    app.add_flag("--strict", strict, "exit with status 1 if any criterion fails");
    app.add_option("--only", only, "run just these criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all{
        {1, "incremental merge equals batch expectations", 5, merge_exactness},
        {2, "no occlusion reduces latent expectations to empirical ones", 5, occlusion_reduction},
        {3, "dynamic program matches trajectory enumeration", 30, oracle_equivalence},
        {4, "dual gradient matches finite differences", 30, gradient_check},
        {5, "EM ascent and session likelihood check", 600, em_ascent},
        {6, "confidence calculators", 5, confidence},
        {7, "learning quality trend at 70% observability", 1200, learning_quality},
        {8, "incremental learning time at least 1.5x faster at 64 pairs", 1200, timing_trend},
        {9, "success and timeout trend under a tuned deadline", 1800, success_timeout},
        {10, "value-difference baseline", 5, jin_baseline},
    };

    int failed = 0;
    double grid_seconds = 0.0;
    for (const Criterion& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // Criteria 7 and 8 share one grid and one time budget.
        if (c.id == 7) grid_seconds = secs;
        if (c.id == 8) secs += grid_seconds;
        const bool in_time = secs <= c.limit_seconds;
        const bool pass = v.pass && in_time;
        failed += !pass;
        std::printf("criterion %2d %s: %s. %s [%.2f s, limit %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.title,
                    v.detail.c_str(), secs, c.limit_seconds, in_time ? "" : ", over time");
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return strict && failed ? 1 : 0;
}
