#pragma once

#include "i2rl/errors.hpp"
#include "i2rl/latent.hpp"

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

// Plain-text trajectory files.
//
//   i2rl-trajectories 1
//   attr observability 30
//   trajectory A 3
//   0 25 0
//   1 HIDDEN
//   2 HIDDEN
//
// One header line, any number of `attr <key> <value>` lines, then for each
// trajectory a `trajectory <label> <length>` line followed by exactly
// `length` step lines `t state action` or `t HIDDEN`, with t counting from 0.
namespace i2rl {

inline constexpr const char* kTrajectoryMagic = "i2rl-trajectories";
inline constexpr int kTrajectoryVersion = 1;

struct LabeledTrajectory {
    std::string label;
    ObservedTrajectory steps;

    friend bool operator==(const LabeledTrajectory&, const LabeledTrajectory&) = default;
};

struct TrajectoryFile {
    std::map<std::string, std::string> attributes;
    std::vector<LabeledTrajectory> trajectories;

    /// Trajectories carrying `label`, in file order.
    std::vector<ObservedTrajectory> with_label(const std::string& label) const {
        std::vector<ObservedTrajectory> out;
        for (const auto& t : trajectories)
            if (t.label == label) out.push_back(t.steps);
        return out;
    }

    friend bool operator==(const TrajectoryFile&, const TrajectoryFile&) = default;
};

namespace detail {

inline bool plain_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (std::isspace(static_cast<unsigned char>(c))) return false;
    return true;
}

template <class T>
T parse_number(const std::string& tok, std::size_t line, const char* what) {
    T v{};
    const char* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || p != end) throw FormatError(std::string("bad ") + what + " '" + tok + "'", line);
    return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

} // namespace detail

inline void write_trajectories(std::ostream& out, const TrajectoryFile& file) {
    out << kTrajectoryMagic << ' ' << kTrajectoryVersion << '\n';
    for (const auto& [k, v] : file.attributes) {
        if (!detail::plain_token(k) || !detail::plain_token(v))
            throw FormatError("attribute keys and values must be single words: '" + k + "'");
        out << "attr " << k << ' ' << v << '\n';
    }
    for (const auto& t : file.trajectories) {
        if (!detail::plain_token(t.label)) throw FormatError("trajectory label must be a single word");
        out << "trajectory " << t.label << ' ' << t.steps.size() << '\n';
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            out << i << ' ';
            if (t.steps.steps[i]) out << t.steps.steps[i]->state << ' ' << t.steps.steps[i]->action << '\n';
            else out << "HIDDEN\n";
        }
    }
    if (!out) throw IoError("failed writing trajectory file");
}

inline TrajectoryFile read_trajectories(std::istream& in) {
    TrajectoryFile file;
    std::string text;
    std::size_t line_no = 0;
    auto next = [&](std::vector<std::string>& toks) {
        while (std::getline(in, text)) {
            ++line_no;
            toks = detail::split_ws(text);
            if (!toks.empty()) return true;
        }
        return false;
    };

    std::vector<std::string> toks;
    if (!next(toks) || toks.size() != 2 || toks[0] != kTrajectoryMagic)
        throw FormatError("missing '" + std::string(kTrajectoryMagic) + "' header", line_no ? line_no : 1);
    if (detail::parse_number<int>(toks[1], line_no, "version") != kTrajectoryVersion)
        throw FormatError("unsupported version " + toks[1], line_no);

    bool more = next(toks);
    while (more && toks[0] == "attr") {
        if (toks.size() != 3) throw FormatError("expected 'attr <key> <value>'", line_no);
        if (!file.attributes.emplace(toks[1], toks[2]).second)
            throw FormatError("duplicate attribute '" + toks[1] + "'", line_no);
        more = next(toks);
    }
    while (more) {
        if (toks[0] != "trajectory" || toks.size() != 3)
            throw FormatError("expected 'trajectory <label> <length>'", line_no);
        LabeledTrajectory t;
        t.label = toks[1];
        const auto length = detail::parse_number<std::size_t>(toks[2], line_no, "length");
        if (length == 0) throw FormatError("trajectory length must be positive", line_no);
        const std::size_t header_line = line_no;
        for (std::size_t i = 0; i < length; ++i) {
            if (!next(toks))
                throw FormatError("trajectory declared at line " + std::to_string(header_line) + " has " +
                                      std::to_string(i) + " of " + std::to_string(length) + " steps",
                                  line_no);
            if (detail::parse_number<std::size_t>(toks[0], line_no, "step index") != i)
                throw FormatError("expected step index " + std::to_string(i), line_no);
            if (toks.size() == 2 && toks[1] == "HIDDEN") {
                t.steps.steps.emplace_back(std::nullopt);
            } else if (toks.size() == 3) {
                t.steps.steps.emplace_back(StateAction{detail::parse_number<std::size_t>(toks[1], line_no, "state"),
                                                       detail::parse_number<std::size_t>(toks[2], line_no, "action")});
            } else {
                throw FormatError("expected 't state action' or 't HIDDEN'", line_no);
            }
        }
        file.trajectories.push_back(std::move(t));
        more = next(toks);
    }
    return file;
}

inline void save_trajectories(const std::string& path, const TrajectoryFile& file) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing: " + std::strerror(errno));
    write_trajectories(out, file);
}

inline TrajectoryFile load_trajectories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + ": " + std::strerror(errno));
    try {
        return read_trajectories(in);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

} // namespace i2rl
