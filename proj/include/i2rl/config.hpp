#pragma once

#include "i2rl/budget.hpp"
#include "i2rl/errors.hpp"
#include "i2rl/experiment.hpp"
#include "i2rl/patrol.hpp"

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

// Experiment configuration: flat `key = value` text grouped in [sections].
// Lines starting with '#' or ';' are comments. List values are separated by
// commas. See README for the keys.
namespace i2rl {

struct IniValue {
    std::string text;
    std::size_t line = 0;
};

struct IniDocument {
    std::map<std::string, std::map<std::string, IniValue>> sections;
    /// Line of each section header, for messages about whole sections.
    std::map<std::string, std::size_t> section_lines;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace detail

inline IniDocument parse_ini(std::istream& in) {
    IniDocument doc;
    std::string raw, section;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        // A comment may also trail a value after whitespace.
        for (std::size_t i = 1; i < s.size(); ++i)
            if ((s[i] == '#' || s[i] == ';') && (s[i - 1] == ' ' || s[i - 1] == '\t')) {
                s = detail::trim(s.substr(0, i));
                break;
            }
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("unterminated section header", line);
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError("empty section name", line);
            if (!doc.section_lines.emplace(section, line).second)
                throw ConfigError("section [" + section + "] appears twice", line);
            doc.sections[section];
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
        if (section.empty()) throw ConfigError("key outside of any [section]", line);
        const std::string key = detail::trim(s.substr(0, eq));
        if (key.empty()) throw ConfigError("missing key before '='", line);
        const std::string value = detail::trim(s.substr(eq + 1));
        if (value.empty()) throw ConfigError("missing value for '" + key + "'", line);
        auto& keys = doc.sections[section];
        if (keys.count(key)) {
            throw ConfigError("'" + key + "' already set at line " + std::to_string(keys[key].line), line);
        }
        keys[key] = {value, line};
    }
    return doc;
}

/// Reads typed values from one section and rejects keys nobody asked for.
class SectionReader {
public:
    SectionReader(const IniDocument& doc, std::string name) : name_(std::move(name)) {
        auto it = doc.sections.find(name_);
        if (it != doc.sections.end()) keys_ = &it->second;
    }

    template <class T>
    void get(const std::string& key, T& out) {
        if (const IniValue* v = find(key)) out = parse<T>(*v, key);
    }

    template <class T>
    void get_list(const std::string& key, std::vector<T>& out) {
        const IniValue* v = find(key);
        if (!v) return;
        out.clear();
        for (const std::string& item : detail::split_list(v->text)) {
            if (item.empty()) throw ConfigError("empty item in list '" + key + "'", v->line);
            out.push_back(parse<T>({item, v->line}, key));
        }
    }

    std::size_t line_of(const std::string& key) const {
        if (!keys_) return 0;
        auto it = keys_->find(key);
        return it == keys_->end() ? 0 : it->second.line;
    }

    void finish() const {
        if (!keys_) return;
        for (const auto& [key, value] : *keys_)
            if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in [" + name_ + "]", value.line);
    }

private:
    const IniValue* find(const std::string& key) {
        if (!keys_) return nullptr;
        auto it = keys_->find(key);
        if (it == keys_->end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    template <class T>
    static T parse(const IniValue& v, const std::string& key) {
        const std::string& t = v.text;
        auto bad = [&](const char* what) {
            return ConfigError("'" + key + "' expects " + what + ", got '" + t + "'", v.line);
        };
        if constexpr (std::is_same_v<T, std::string>) {
            return t;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (t == "true" || t == "1") return true;
            if (t == "false" || t == "0") return false;
            throw bad("true or false");
        } else if constexpr (std::is_same_v<T, double>) {
            if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
            double out = 0.0;
            auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
            if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(out)) throw bad("a number");
            return out;
        } else if constexpr (std::is_same_v<T, patrol::Method>) {
            if (auto m = patrol::parse_method(t)) return *m;
            throw bad("batch, incremental, incremental_random_weights or random_baseline");
        } else if constexpr (std::is_same_v<T, ClockKind>) {
            if (t == "work") return ClockKind::work;
            if (t == "wall") return ClockKind::wall;
            throw bad("work or wall");
        } else {
            static_assert(std::is_unsigned_v<T>);
            T out{};
            auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
            if (ec != std::errc() || p != t.data() + t.size()) throw bad("a non-negative integer");
            return out;
        }
    }

    std::string name_;
    const std::map<std::string, IniValue>* keys_ = nullptr;
    std::set<std::string> used_;
};

} // namespace i2rl

namespace i2rl::patrol {

struct ExperimentConfig {
    DomainConfig domain;
    std::vector<Method> methods{Method::batch, Method::incremental, Method::incremental_random_weights,
                                Method::random_baseline};
    std::vector<double> observability{30.0, 70.0, 100.0};
    /// Demonstrated state-action pairs per guard.
    std::vector<std::size_t> pairs{4, 8, 16, 32, 64};
    std::size_t trials = 20;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    /// Learning-time limit per IRL call, in seconds on `clock`.
    double deadline = std::numeric_limits<double>::infinity();
    ClockKind clock = ClockKind::work;
    EmConfig em;
    std::size_t session_restarts = 1;
    std::string output = "results";

    RunConfig run_config(double obs, std::size_t n_pairs) const {
        RunConfig rc;
        rc.observability = obs;
        rc.pairs = n_pairs;
        rc.em = em;
        rc.session_restarts = session_restarts;
        rc.clock = clock;
        rc.deadline = deadline;
        return rc;
    }
};

/// Seed of one grid cell and trial; independent of the method so every
/// method sees the same demonstrations and guard phases.
inline std::uint64_t trial_seed(std::uint64_t base, double observability, std::size_t pairs, std::size_t trial) {
    const auto obs = static_cast<std::uint64_t>(std::llround(observability * 1000.0));
    return mix_seed(mix_seed(mix_seed(base, obs), pairs), trial);
}

/// Reads a configuration, starting from the defaults. Every error names its line.
inline ExperimentConfig parse_experiment_config(const IniDocument& doc) {
    static const std::set<std::string> known{"domain", "experiment", "em", "solver"};
    for (const auto& [name, line] : doc.section_lines)
        if (!known.count(name)) throw ConfigError("unknown section [" + name + "]", line);

    ExperimentConfig c;
    SectionReader dom(doc, "domain");
    dom.get("segment_length", c.domain.segment_length);
    dom.get("discount", c.domain.discount);
    dom.get_list("true_weights", c.domain.true_weights);
    dom.get("sight", c.domain.sight);
    dom.get("entry_cell", c.domain.entry_cell);
    dom.get("goal_cell", c.domain.goal_cell);
    dom.get("run_horizon", c.domain.run_horizon);
    dom.get("observation_window", c.domain.observation_window);
    dom.get("trajectory_length", c.domain.trajectory_length);
    dom.finish();
    try {
        validate(c.domain);
    } catch (const ModelError& e) {
        auto it = doc.section_lines.find("domain");
        throw ConfigError(e.what(), it == doc.section_lines.end() ? 0 : it->second);
    }

    SectionReader ex(doc, "experiment");
    ex.get_list("methods", c.methods);
    ex.get_list("observability", c.observability);
    ex.get_list("pairs", c.pairs);
    ex.get("trials", c.trials);
    ex.get("seed", c.seed);
    ex.get("threads", c.threads);
    ex.get("deadline", c.deadline);
    ex.get("clock", c.clock);
    ex.get("output", c.output);
    ex.finish();
    for (double o : c.observability)
        if (o < 0.0 || o > 100.0) throw ConfigError("observability must lie in [0,100]", ex.line_of("observability"));
    for (std::size_t p : c.pairs)
        if (p == 0) throw ConfigError("pairs must be positive", ex.line_of("pairs"));
    if (c.trials == 0) throw ConfigError("trials must be at least 1", ex.line_of("trials"));
    if (c.threads == 0) throw ConfigError("threads must be at least 1", ex.line_of("threads"));
    if (!(c.deadline > 0.0)) throw ConfigError("deadline must be positive", ex.line_of("deadline"));

    SectionReader em(doc, "em");
    em.get("max_iterations", c.em.max_iterations);
    em.get("tolerance", c.em.tolerance);
    em.get("restarts", c.em.restarts);
    em.get("session_restarts", c.session_restarts);
    em.get("gap_cap", c.em.gap_cap);
    em.get("samples", c.em.samples);
    em.finish();
    if (c.em.max_iterations == 0) throw ConfigError("max_iterations must be positive", em.line_of("max_iterations"));
    if (!(c.em.tolerance > 0.0)) throw ConfigError("tolerance must be positive", em.line_of("tolerance"));
    if (c.em.restarts == 0) throw ConfigError("restarts must be at least 1", em.line_of("restarts"));
    if (c.session_restarts == 0)
        throw ConfigError("session_restarts must be at least 1", em.line_of("session_restarts"));
    if (c.em.samples == 0) throw ConfigError("samples must be at least 1", em.line_of("samples"));

    SectionReader sol(doc, "solver");
    sol.get("learning_rate", c.em.solver.learning_rate);
    sol.get("step_growth", c.em.solver.step_growth);
    sol.get("max_learning_rate", c.em.solver.max_learning_rate);
    sol.get("max_iterations", c.em.solver.max_iterations);
    sol.get("gradient_tolerance", c.em.solver.gradient_tolerance);
    sol.get("weight_floor", c.em.solver.weight_floor);
    sol.finish();
    if (!(c.em.solver.learning_rate > 0.0))
        throw ConfigError("learning_rate must be positive", sol.line_of("learning_rate"));
    if (!(c.em.solver.step_growth >= 1.0)) throw ConfigError("step_growth must be at least 1", sol.line_of("step_growth"));
    if (!(c.em.solver.gradient_tolerance > 0.0))
        throw ConfigError("gradient_tolerance must be positive", sol.line_of("gradient_tolerance"));
    if (!(c.em.solver.weight_floor > 0.0 && c.em.solver.weight_floor < 1.0))
        throw ConfigError("weight_floor must lie in (0,1)", sol.line_of("weight_floor"));
    if (c.em.solver.max_iterations == 0)
        throw ConfigError("max_iterations must be positive", sol.line_of("max_iterations"));

    if (c.methods.empty() || c.observability.empty() || c.pairs.empty())
        throw ConfigError("methods, observability and pairs must not be empty");
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + ": " + std::strerror(errno));
    try {
        return parse_experiment_config(parse_ini(in));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

} // namespace i2rl::patrol
