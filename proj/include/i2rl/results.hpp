#pragma once

#include "i2rl/config.hpp"
#include "i2rl/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

// CSV schema v1: one row per (observability, pairs, method, trial), in that
// nesting order. Metric cells are empty when a method has no such metric;
// NaN is never written.
namespace i2rl::patrol {

inline constexpr const char* kCsvHeader =
    "method,observability,pairs,trial,seed,lba,ile,duration_s,work_units,success,detected,timeout,held,sessions,"
    "final_ll,status";

struct ResultRow {
    Method method = Method::batch;
    double observability = 0.0;
    std::size_t pairs = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    RunResult result;
};

/// Shortest text that reads back to the same double; empty for NaN or infinities.
inline std::string format_number(double v) {
    if (!std::isfinite(v)) return {};
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

inline const char* row_status(const ResultRow& r) {
    if (r.method == Method::random_baseline) return "no_irl";
    return r.result.timed_out ? "timeout" : "ok";
}

inline void write_csv_row(std::ostream& out, const ResultRow& r) {
    const RunResult& x = r.result;
    out << to_string(r.method) << ',' << format_number(r.observability) << ',' << r.pairs << ',' << r.trial << ','
        << r.seed << ',' << format_optional(x.lba) << ',' << format_optional(x.ile) << ','
        << format_number(x.duration) << ',' << format_number(x.work_units) << ',' << int(x.success) << ','
        << int(x.detected) << ',' << int(x.timed_out) << ',' << int(x.held) << ',' << x.sessions << ','
        << format_optional(x.final_ll) << ',' << row_status(r) << '\n';
}

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kCsvHeader << '\n';
    for (const ResultRow& r : rows) write_csv_row(out, r);
}

/// Runs the whole grid; rows come back in schema order whatever the thread count.
inline std::vector<ResultRow> run_grid(const ExperimentConfig& cfg) {
    const Domain d = build_domain(cfg.domain);
    std::vector<ResultRow> rows;
    for (double obs : cfg.observability)
        for (std::size_t p : cfg.pairs)
            for (Method m : cfg.methods)
                for (std::size_t t = 0; t < cfg.trials; ++t)
                    rows.push_back({m, obs, p, t, trial_seed(cfg.seed, obs, p, t), {}});
    parallel_for(rows.size(), cfg.threads, [&](std::size_t i) {
        ResultRow& r = rows[i];
        r.result = simulate_run(d, r.method, cfg.run_config(r.observability, r.pairs), r.seed);
    });
    return rows;
}

/// Per-cell summary lines, in row order.
inline void print_summary(std::ostream& out, const std::vector<ResultRow>& rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%-27s %5s %5s %8s %8s %7s %8s %10s\n", "method", "obs", "pairs", "success%",
                  "timeout%", "LBA", "ILE", "duration_s");
    out << line;
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        std::vector<RunResult> cell;
        while (j < rows.size() && rows[j].method == rows[i].method && rows[j].pairs == rows[i].pairs &&
               rows[j].observability == rows[i].observability)
            cell.push_back(rows[j++].result);
        const Summary s = aggregate(cell);
        std::snprintf(line, sizeof line, "%-27s %5g %5zu %8.1f %8.1f %7s %8s %10.4g\n", to_string(rows[i].method),
                      rows[i].observability, rows[i].pairs, s.success_rate, s.timeout_rate,
                      s.mean_lba ? format_number(std::round(*s.mean_lba * 10) / 10).c_str() : "-",
                      s.mean_ile ? format_number(std::round(*s.mean_ile * 1000) / 1000).c_str() : "-",
                      s.mean_duration);
        out << line;
        i = j;
    }
}

} // namespace i2rl::patrol
