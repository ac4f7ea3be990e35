#include "i2rl/config.hpp"
#include "i2rl/results.hpp"
#include "i2rl/trajectory_io.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace i2rl;
using namespace i2rl::patrol;

namespace {

TrajectoryFile sample_file() {
    TrajectoryFile f;
    f.attributes["observability"] = "30";
    f.attributes["seed"] = "5";
    f.trajectories.push_back({"A", ObservedTrajectory{{StateAction{3, 1}, std::nullopt, std::nullopt, StateAction{7, 0}}}});
    f.trajectories.push_back({"B", ObservedTrajectory{{std::nullopt}}});
    f.trajectories.push_back({"A", ObservedTrajectory{{StateAction{0, 2}}}});
    return f;
}

std::size_t format_error_line(const std::string& text) {
    std::istringstream in(text);
    try {
        read_trajectories(in);
    } catch (const FormatError& e) {
        return e.line();
    }
    return 0;
}

std::size_t config_error_line(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_experiment_config(parse_ini(in));
    } catch (const ConfigError& e) {
        return e.line();
    }
    return 0;
}

ExperimentConfig config_from(const std::string& text) {
    std::istringstream in(text);
    return parse_experiment_config(parse_ini(in));
}

} // namespace

TEST(TrajectoryFile, RoundTripPreservesHiddenSteps) {
    const TrajectoryFile f = sample_file();
    std::stringstream buf;
    write_trajectories(buf, f);
    const std::string text = buf.str();
    EXPECT_EQ(text.rfind("i2rl-trajectories 1\n", 0), 0u);
    EXPECT_NE(text.find("1 HIDDEN"), std::string::npos);
    const TrajectoryFile back = read_trajectories(buf);
    EXPECT_EQ(back, f);
    EXPECT_EQ(back.with_label("A").size(), 2u);
    EXPECT_EQ(back.with_label("B")[0].hidden_count(), 1u);
    EXPECT_TRUE(back.with_label("C").empty());
}

TEST(TrajectoryFile, ToleratesBlankLinesAndExtraSpace) {
    const std::string text = "i2rl-trajectories 1\n\nattr k v\n  trajectory   A 2\n0 1 0\n\n1   HIDDEN\n";
    std::istringstream in(text);
    const TrajectoryFile f = read_trajectories(in);
    ASSERT_EQ(f.trajectories.size(), 1u);
    EXPECT_EQ(f.trajectories[0].steps.size(), 2u);
    EXPECT_EQ(f.attributes.at("k"), "v");
}

TEST(TrajectoryFile, ErrorsNameTheLine) {
    EXPECT_EQ(format_error_line("nonsense\n"), 1u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 2\n"), 1u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 1\nattr a 1\nattr a 2\n"), 3u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 1\ntrajectory A 2\n0 1 1\n2 1 1\n"), 4u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 1\ntrajectory A 2\n0 1 x\n"), 3u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 1\ntrajectory A 3\n0 1 1\n1 HIDDEN\n"), 4u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 1\ntrajectory A 0\n"), 2u);
    EXPECT_EQ(format_error_line("i2rl-trajectories 1\ntrajectory A 1\n0 -1 2\n"), 3u);
}

TEST(TrajectoryFile, MissingFileIsAnIoError) {
    EXPECT_THROW(load_trajectories("/nonexistent/dir/file.traj"), IoError);
}

TEST(Config, DefaultsWithoutSections) {
    const ExperimentConfig c = config_from("");
    EXPECT_EQ(c.trials, 20u);
    EXPECT_EQ(c.pairs, (std::vector<std::size_t>{4, 8, 16, 32, 64}));
    EXPECT_EQ(c.methods.size(), 4u);
    EXPECT_TRUE(std::isinf(c.deadline));
}

TEST(Config, ReadsEverySection) {
    const ExperimentConfig c = config_from(R"(# comment
[domain]
segment_length = 10
true_weights = 0.5, 0, 0, 0, 0.5, 0
goal_cell = 12
entry_cell = 7

[experiment]
methods = batch, incremental
observability = 30, 100
pairs = 8
trials = 3
deadline = 0.25
clock = wall
seed = 42   ; trailing comment

[em]
restarts = 2
gap_cap = 3

[solver]
learning_rate = 0.05
)");
    EXPECT_EQ(c.domain.segment_length, 10u);
    EXPECT_EQ(c.domain.true_weights[0], 0.5);
    EXPECT_EQ(c.methods, (std::vector<Method>{Method::batch, Method::incremental}));
    EXPECT_EQ(c.observability, (std::vector<double>{30.0, 100.0}));
    EXPECT_EQ(c.trials, 3u);
    EXPECT_EQ(c.deadline, 0.25);
    EXPECT_EQ(c.clock, ClockKind::wall);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.em.restarts, 2u);
    EXPECT_EQ(c.em.gap_cap, 3u);
    EXPECT_EQ(c.em.solver.learning_rate, 0.05);
    const RunConfig rc = c.run_config(30.0, 8);
    EXPECT_EQ(rc.deadline, 0.25);
    EXPECT_EQ(rc.em.restarts, 2u);
}

TEST(Config, ErrorsNameTheLine) {
    EXPECT_EQ(config_error_line("[experiment]\ntrials = 0\n"), 2u);
    EXPECT_EQ(config_error_line("[experiment]\n\ntrials = many\n"), 3u);
    EXPECT_EQ(config_error_line("[experiment]\nbogus = 1\n"), 2u);
    EXPECT_EQ(config_error_line("[nope]\n"), 1u);
    EXPECT_EQ(config_error_line("trials = 3\n"), 1u);
    EXPECT_EQ(config_error_line("[em]\nrestarts = 2\nrestarts = 3\n"), 3u);
    EXPECT_EQ(config_error_line("[experiment]\nmethods = batch, magic\n"), 2u);
    EXPECT_EQ(config_error_line("[experiment]\npairs = 4,,8\n"), 2u);
    EXPECT_EQ(config_error_line("[experiment]\nobservability = 150\n"), 2u);
    EXPECT_EQ(config_error_line("[experiment]\ndeadline = -1\n"), 2u);
    EXPECT_EQ(config_error_line("[solver]\nweight_floor = 1\n"), 2u);
    EXPECT_EQ(config_error_line("[domain\n"), 1u);
    EXPECT_EQ(config_error_line("[domain]\nsegment_length = 3\n"), 1u);
    EXPECT_EQ(config_error_line("[experiment]\ntrials =\n"), 2u);
    EXPECT_EQ(config_from("[experiment]\ndeadline = inf\n").deadline, std::numeric_limits<double>::infinity());
}

TEST(Csv, NumbersRoundTripAndNonFiniteIsEmpty) {
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(100.0), "100");
    EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
    EXPECT_EQ(format_number(std::nan("")), "");
    EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "");
}

TEST(Csv, GridRowsFollowSchema) {
    ExperimentConfig cfg;
    cfg.observability = {30.0, 100.0};
    cfg.pairs = {4};
    cfg.trials = 2;
    const auto rows = run_grid(cfg);
    ASSERT_EQ(rows.size(), 2u * 4u * 2u);
    std::ostringstream out;
    write_csv(out, rows);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kCsvHeader);
    const std::size_t columns = std::count(line.begin(), line.end(), ',') + 1;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        EXPECT_EQ(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1, columns);
        EXPECT_EQ(line.find("nan"), std::string::npos);
        EXPECT_EQ(line.find("inf"), std::string::npos);
    }
    EXPECT_EQ(n, rows.size());
    // Methods within a cell share the trial seed.
    EXPECT_EQ(rows[0].seed, rows[2].seed);
    EXPECT_EQ(rows[0].observability, 30.0);
    EXPECT_EQ(rows.back().observability, 100.0);
    EXPECT_EQ(std::string(row_status(rows[6])), "no_irl");
}

TEST(Csv, OutputIsIndependentOfThreadCount) {
    ExperimentConfig cfg;
    cfg.observability = {30.0};
    cfg.pairs = {8};
    cfg.trials = 3;
    cfg.methods = {Method::batch, Method::incremental};
    std::ostringstream one, many;
    write_csv(one, run_grid(cfg));
    cfg.threads = 3;
    write_csv(many, run_grid(cfg));
    EXPECT_EQ(one.str(), many.str());
}
