#include "i2rl/config.hpp"
#include "i2rl/experiment.hpp"
#include "i2rl/i2rl.hpp"
#include "i2rl/results.hpp"
#include "i2rl/trajectory_io.hpp"

#include "CLI11.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

using namespace i2rl;
using namespace i2rl::patrol;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> deadline;
    std::string out;
};

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.deadline) {
        if (!(*c.deadline > 0.0)) throw ConfigError("--deadline must be positive");
        cfg.deadline = *c.deadline;
    }
    return cfg;
}

std::filesystem::path ensure_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    return p;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

int cmd_run(const Common& c, std::optional<std::size_t> trials, std::optional<std::size_t> threads) {
    ExperimentConfig cfg = load_config(c);
    if (trials) cfg.trials = *trials;
    if (threads) cfg.threads = *threads;
    if (cfg.trials == 0 || cfg.threads == 0) throw ConfigError("--trials and --threads must be at least 1");
    const auto dir = ensure_dir(c.out.empty() ? cfg.output : c.out);
    const auto rows = run_grid(cfg);
    std::ostringstream csv;
    write_csv(csv, rows);
    write_file(dir / "results.csv", csv.str());
    print_summary(std::cout, rows);
    std::cout << "wrote " << rows.size() << " rows to " << (dir / "results.csv").string() << '\n';
    return 0;
}

struct ConfidenceArgs {
    double epsilon = 0.1;
    double epsilon_sampling = 0.0;
    std::size_t samples = 1000;
    std::size_t features = 6;
    double discount = 0.9;
    std::size_t trajectories = 0;
    std::optional<double> target;
};

int cmd_confidence(const ConfidenceArgs& a) {
    if (a.target) {
        std::cout << "trajectories=" << trajectories_for_confidence(*a.target, a.epsilon, a.discount, a.features)
                  << '\n';
        return 0;
    }
    ConfidenceParams p;
    p.epsilon = a.epsilon;
    p.epsilon_sampling = a.epsilon_sampling;
    p.samples = a.samples;
    p.features = a.features;
    p.discount = a.discount;
    p.trajectories = a.trajectories;
    const LatentConfidence r = confidence_latent(p);
    std::printf("delta=%.17g\ndelta_sampling=%.17g\nepsilon_latent=%.17g\ndelta_latent=%.17g\n", r.delta,
                r.delta_sampling, r.epsilon_latent, r.delta_latent);
    return 0;
}

int cmd_demo_gen(const Common& c, double observability, std::size_t pairs, const std::string& file) {
    const ExperimentConfig cfg = load_config(c);
    const Domain d = build_domain(cfg.domain);
    const auto data = make_guard_data(d, observability, pairs, cfg.seed);
    TrajectoryFile tf;
    tf.attributes["observability"] = format_number(observability);
    tf.attributes["pairs"] = std::to_string(pairs);
    tf.attributes["segment_length"] = std::to_string(cfg.domain.segment_length);
    tf.attributes["seed"] = std::to_string(cfg.seed);
    for (std::size_t g = 0; g < 2; ++g)
        for (const auto& y : data[g].demo.observed) tf.trajectories.push_back({d.patrollers[g].name, y});
    save_trajectories(file, tf);
    std::size_t steps = 0, hidden = 0;
    for (const auto& t : tf.trajectories) {
        steps += t.steps.size();
        hidden += t.steps.hidden_count();
    }
    std::cout << "wrote " << tf.trajectories.size() << " trajectories (" << steps << " steps, " << hidden
              << " hidden) to " << file << '\n';
    return 0;
}

std::string attribute(const TrajectoryFile& tf, const std::string& key) {
    auto it = tf.attributes.find(key);
    if (it == tf.attributes.end()) throw FormatError("trajectory file lacks attribute '" + key + "'");
    return it->second;
}

int cmd_replay(const Common& c, const std::string& file, const std::string& method_name) {
    const ExperimentConfig cfg = load_config(c);
    const auto method = parse_method(method_name);
    if (!method || *method == Method::random_baseline)
        throw ConfigError("--method must be batch, incremental or incremental_random_weights");
    const TrajectoryFile tf = load_trajectories(file);
    const Domain d = build_domain(cfg.domain);
    if (attribute(tf, "segment_length") != std::to_string(cfg.domain.segment_length))
        throw ConfigError("trajectory file was made with segment_length " + attribute(tf, "segment_length") +
                          ", the configuration has " + std::to_string(cfg.domain.segment_length));
    const double observability = std::stod(attribute(tf, "observability"));

    std::array<GuardData, 2> data;
    for (std::size_t g = 0; g < 2; ++g) {
        const PatrollerModel& m = d.patrollers[g];
        data[g].occlusion = observability_occlusion(m, observability);
        data[g].demo.observed = tf.with_label(m.name);
        if (data[g].demo.observed.empty()) throw FormatError("no trajectories labeled " + m.name);
        for (const auto& y : data[g].demo.observed) validate_observed(y, m.mdp, data[g].occlusion);
    }
    const Learned learned = learn(d, data, *method, cfg.run_config(observability, 0), cfg.seed);

    std::ostringstream policies;
    policies << "guard,state,cell,heading,expert_action,learned_action\n";
    for (std::size_t g = 0; g < 2; ++g) {
        const PatrollerModel& m = d.patrollers[g];
        const auto pi = learned_policy(m.mdp, m.features, learned.theta[g]);
        const IleReference ref = make_ile_reference(m.mdp, reward_table(m.true_weights, m.features));
        std::cout << "guard " << m.name << ": theta =";
        for (double v : learned.theta[g]) std::printf(" %.6f", v);
        std::printf("  LBA %.1f%%  ILE %.6g\n", lba(ref.expert_policy, pi),
                    learned_ile(m.mdp, m.features, learned.theta[g], ref));
        for (std::size_t s = 0; s < m.mdp.state_count(); ++s)
            policies << m.name << ',' << s << ',' << m.hallway_cell(s) << ',' << m.hallway_heading(s) << ','
                     << m.expert_policy[s] << ',' << pi[s] << '\n';
    }
    std::printf("sessions %zu  duration %.6g s  timeout %s\n", learned.sessions, learned.duration,
                learned.timed_out ? "yes" : "no");
    if (!c.out.empty()) {
        const auto dir = ensure_dir(c.out);
        write_file(dir / "policies.csv", policies.str());
        std::cout << "wrote " << (dir / "policies.csv").string() << '\n';
    }
    return 0;
}

void add_common(CLI::App* app, Common& c, bool with_out) {
    app->add_option("-c,--config", c.config, "experiment configuration file");
    app->add_option("-s,--seed", c.seed, "base random seed");
    app->add_option("-d,--deadline", c.deadline, "learning-time limit per IRL call, seconds");
    if (with_out) app->add_option("-o,--out", c.out, "output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Incremental latent max-entropy IRL on a perimeter patrol domain"};
    app.require_subcommand(1);

    Common common;
    std::optional<std::size_t> trials, threads;
    auto* run = app.add_subcommand("run", "run the experiment grid and write results.csv");
    add_common(run, common, true);
    run->add_option("-t,--trials", trials, "trials per grid cell");
    run->add_option("-j,--threads", threads, "worker threads");

    ConfidenceArgs conf;
    auto* confidence = app.add_subcommand("confidence", "confidence of learned feature expectations");
    confidence->add_option("--epsilon", conf.epsilon, "feature-expectation tolerance")->capture_default_str();
    confidence->add_option("--epsilon-sampling", conf.epsilon_sampling, "sampling tolerance, 0 for exact hidden sums")
        ->capture_default_str();
    confidence->add_option("--samples", conf.samples, "samples per hidden gap")->capture_default_str();
    confidence->add_option("--features", conf.features, "feature count K")->capture_default_str();
    confidence->add_option("--discount", conf.discount, "discount factor")->capture_default_str();
    auto* n_opt = confidence->add_option("--trajectories", conf.trajectories, "trajectories seen so far");
    auto* t_opt = confidence->add_option("--target-delta", conf.target, "report trajectories needed for this delta");
    n_opt->excludes(t_opt);

    Common gen_common;
    double gen_obs = 100.0;
    std::size_t gen_pairs = 16;
    std::string gen_file;
    auto* gen = app.add_subcommand("demo-gen", "generate demonstrations and save them as a trajectory file");
    add_common(gen, gen_common, false);
    gen->add_option("--observability", gen_obs, "percent of guard cells visible")->capture_default_str();
    gen->add_option("--pairs", gen_pairs, "state-action pairs per guard")->capture_default_str();
    gen->add_option("-o,--out", gen_file, "trajectory file to write")->required();

    Common rep_common;
    std::string rep_file, rep_method = "incremental";
    auto* rep = app.add_subcommand("replay", "learn from a saved trajectory file");
    add_common(rep, rep_common, true);
    rep->add_option("-f,--file", rep_file, "trajectory file")->required();
    rep->add_option("-m,--method", rep_method, "batch, incremental or incremental_random_weights")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(common, trials, threads);
        if (confidence->parsed()) return cmd_confidence(conf);
        if (gen->parsed()) return cmd_demo_gen(gen_common, gen_obs, gen_pairs, gen_file);
        if (rep->parsed()) return cmd_replay(rep_common, rep_file, rep_method);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
