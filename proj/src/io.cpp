#include "scopekit/io.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scopekit/errors.hpp"

namespace scopekit::io {

using nlohmann::json;

std::string formatReal(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string readText(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void writeText(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void ensureDirectory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

namespace {

std::vector<std::string> splitLine(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parseReal(const std::string& s, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw DataError("line " + std::to_string(line) + ": bad number \"" + s + "\"");
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectories, pyramids, schedules, logs

std::string trajectoryCsv(const Trajectory& traj) {
    std::string out = std::string(kTrajectoryHeader) + "\n";
    for (std::size_t t = 0; t < traj.points.size(); ++t) {
        out += std::to_string(t);
        for (double c : traj.points[t].channels()) out += "," + formatReal(c);
        out += "\n";
    }
    return out;
}

Trajectory parseTrajectoryCsv(const std::string& text, double dt) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || splitLine(line) != splitLine(kTrajectoryHeader)) {
        throw DataError(std::string("trajectory CSV must start with the header ") + kTrajectoryHeader);
    }
    Trajectory traj;
    traj.dt = dt;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty() || line == "\r") continue;
        const auto f = splitLine(line);
        if (f.size() != 7) throw DataError("line " + std::to_string(n) + ": expected 7 fields");
        Waypoint w{parseReal(f[1], n), parseReal(f[2], n), parseReal(f[3], n),
                   parseReal(f[4], n), parseReal(f[5], n), parseReal(f[6], n)};
        traj.points.push_back(w);
    }
    return traj;
}

Trajectory readTrajectoryCsv(const fs::path& path, double dt) { return parseTrajectoryCsv(readText(path), dt); }

std::string matrixCsv(const Matrix& m, const std::vector<std::string>& names) {
    if (names.size() != m.cols()) throw ShapeError("column name count does not match the matrix");
    std::string out = "idx";
    for (const auto& n : names) out += "," + n;
    out += "\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out += std::to_string(r);
        for (std::size_t c = 0; c < m.cols(); ++c) out += "," + formatReal(m(r, c));
        out += "\n";
    }
    return out;
}

std::vector<fs::path> writePyramid(const fs::path& dir, const wavelet::WaveletPyramid& p,
                                   const std::vector<std::string>& names) {
    ensureDirectory(dir);
    std::vector<fs::path> files;
    const std::string tag = "_l" + std::to_string(p.levels);
    files.push_back(dir / ("approx" + tag + ".csv"));
    writeText(files.back(), matrixCsv(p.approximation, names));
    for (std::size_t l = 1; l <= p.details.size(); ++l) {
        files.push_back(dir / ("detail_l" + std::to_string(l) + ".csv"));
        writeText(files.back(), matrixCsv(p.details[l - 1], names));
    }
    json meta = {{"levels", p.levels},
                 {"convention", wavelet::kConvention},
                 {"mode", "dwt"},
                 {"source_length", p.source_length},
                 {"channels", names}};
    writeText(dir / "metadata.json", meta.dump(2) + "\n");
    return files;
}

std::vector<fs::path> writeScopedStack(const fs::path& dir, const wavelet::ScopedStack& s,
                                       const std::vector<std::string>& names, std::size_t source_length) {
    ensureDirectory(dir);
    std::vector<fs::path> files;
    for (std::size_t l = 1; l <= s.levels.size(); ++l) {
        files.push_back(dir / ("level_l" + std::to_string(l) + ".csv"));
        writeText(files.back(), matrixCsv(s.levels[l - 1], names));
    }
    json meta = {{"levels", s.levels.size()},
                 {"convention", "dwh-stride"},
                 {"mode", "dwh"},
                 {"horizon", s.horizon},
                 {"source_length", source_length},
                 {"channels", names}};
    writeText(dir / "metadata.json", meta.dump(2) + "\n");
    return files;
}

std::string scheduleCsv(const weights::WeightSchedule& s) {
    std::string out = "t,w\n";
    for (std::size_t t = 0; t < s.weights.size(); ++t) out += std::to_string(t) + "," + formatReal(s.weights[t]) + "\n";
    return out;
}

std::string trainingLogCsv(const std::vector<train::LogRow>& rows) {
    std::string out = std::string(kTrainingLogHeader) + "\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + formatReal(r.loss.reg) + "," + formatReal(r.loss.cls) + "," +
               formatReal(r.loss.col) + "," + formatReal(r.loss.ds) + "," + formatReal(r.loss.total) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenarios

namespace {

struct RealField {
    const char* name;
    double sim::ScenarioConfig::*member;
};

constexpr RealField kRealFields[] = {
    {"dt", &sim::ScenarioConfig::dt},
    {"v_ref_min", &sim::ScenarioConfig::v_ref_min},
    {"v_ref_max", &sim::ScenarioConfig::v_ref_max},
    {"half_width", &sim::ScenarioConfig::half_width},
    {"event_probability", &sim::ScenarioConfig::event_probability},
    {"signal_fraction", &sim::ScenarioConfig::signal_fraction},
    {"first_event_time", &sim::ScenarioConfig::first_event_time},
    {"min_event_gap", &sim::ScenarioConfig::min_event_gap},
    {"obstacle_radius_min", &sim::ScenarioConfig::obstacle_radius_min},
    {"obstacle_radius_max", &sim::ScenarioConfig::obstacle_radius_max},
    {"obstacle_lateral_max", &sim::ScenarioConfig::obstacle_lateral_max},
    {"popup_ttc_min", &sim::ScenarioConfig::popup_ttc_min},
    {"popup_ttc_max", &sim::ScenarioConfig::popup_ttc_max},
    {"stop_distance_min", &sim::ScenarioConfig::stop_distance_min},
    {"stop_distance_max", &sim::ScenarioConfig::stop_distance_max},
    {"red_wait_min", &sim::ScenarioConfig::red_wait_min},
    {"red_wait_max", &sim::ScenarioConfig::red_wait_max},
    {"lead_time", &sim::ScenarioConfig::lead_time},
    {"margin", &sim::ScenarioConfig::margin},
    {"ego_radius", &sim::ScenarioConfig::ego_radius},
    {"brake_duration", &sim::ScenarioConfig::brake_duration},
    {"launch_duration", &sim::ScenarioConfig::launch_duration},
    {"stop_offset", &sim::ScenarioConfig::stop_offset},
    {"a_max", &sim::ScenarioConfig::a_max},
    {"lat_rate_max", &sim::ScenarioConfig::lat_rate_max},
};

const char* colorName(SignalColor c) { return c == SignalColor::Red ? "red" : "green"; }

SignalColor parseColor(const std::string& s) {
    if (s == "red") return SignalColor::Red;
    if (s == "green") return SignalColor::Green;
    throw DataError("unknown signal colour \"" + s + "\"");
}

}  // namespace

json toJson(const sim::ScenarioConfig& c) {
    json j;
    j["episode_steps"] = c.episode_steps;
    j["history_steps"] = c.history_steps;
    j["future_steps"] = c.future_steps;
    for (const auto& f : kRealFields) j[f.name] = c.*f.member;
    return j;
}

sim::ScenarioConfig scenarioConfigFromJson(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
    sim::ScenarioConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "episode_steps") {
                if (!value.is_number_integer()) throw ConfigError("episode_steps: expected an integer");
                c.episode_steps = value.get<int>();
                continue;
            }
            if (key == "history_steps" || key == "future_steps") {
                if (!value.is_number_unsigned()) throw ConfigError(key + ": expected a non-negative integer");
                (key == "history_steps" ? c.history_steps : c.future_steps) = value.get<std::size_t>();
                continue;
            }
            bool found = false;
            for (const auto& f : kRealFields) {
                if (key != f.name) continue;
                if (!value.is_number()) throw ConfigError(key + ": expected a number");
                c.*f.member = value.get<double>();
                found = true;
            }
            if (!found) throw ConfigError("scenario config: unknown key \"" + key + "\"");
        } catch (const json::exception& e) {
            throw ConfigError("scenario config: " + key + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

json toJson(const sim::Scenario& s) {
    json events = json::array();
    for (const auto& e : s.events) {
        json je;
        je["kind"] = e.kind == sim::EventKind::PopupObstacle ? "popup_obstacle" : "signal_switch";
        je["trigger_step"] = e.trigger_step;
        je["position"] = {e.position.x, e.position.y};
        if (e.kind == sim::EventKind::PopupObstacle) {
            je["radius"] = e.radius;
        } else {
            je["switch_to"] = colorName(e.switch_to);
        }
        events.push_back(je);
    }
    return {{"seed", s.seed}, {"v_ref", s.v_ref}, {"config", toJson(s.config)}, {"events", events}};
}

sim::Scenario scenarioFromJson(const json& j) {
    sim::Scenario s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.v_ref = j.at("v_ref").get<double>();
        s.config = scenarioConfigFromJson(j.at("config"));
        for (const auto& je : j.at("events")) {
            sim::Event e;
            const auto kind = je.at("kind").get<std::string>();
            if (kind == "popup_obstacle") {
                e.kind = sim::EventKind::PopupObstacle;
                e.radius = je.at("radius").get<double>();
            } else if (kind == "signal_switch") {
                e.kind = sim::EventKind::SignalSwitch;
                e.switch_to = parseColor(je.at("switch_to").get<std::string>());
            } else {
                throw DataError("unknown event kind \"" + kind + "\"");
            }
            e.trigger_step = je.at("trigger_step").get<int>();
            const auto pos = je.at("position").get<std::vector<double>>();
            if (pos.size() != 2) throw DataError("event position must have two coordinates");
            e.position = {pos[0], pos[1]};
            s.events.push_back(e);
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed scenario: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("malformed scenario: ") + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Episodes

std::string observationsCsv(const sim::EpisodeLog& log) {
    std::string out =
        "step,ego_px,ego_py,ego_cos_h,ego_sin_h,ego_vx,ego_vy,signal,stop_line_x,stop_line_y,visible_obstacles\n";
    for (std::size_t t = 0; t < log.states.size(); ++t) {
        const Observation obs = sim::observationAt(log, static_cast<int>(t));
        out += std::to_string(t);
        for (double c : obs.current().channels()) out += "," + formatReal(c);
        out += std::string(",") + colorName(obs.signal.color);
        if (obs.signal.has_stop_line) {
            out += "," + formatReal(obs.signal.stop_line.x) + "," + formatReal(obs.signal.stop_line.y);
        } else {
            out += ",,";
        }
        out += ",";
        for (std::size_t i = 0; i < obs.visible_obstacles.size(); ++i) {
            const auto& o = obs.visible_obstacles[i];
            out += (i ? ";" : "") + formatReal(o.center.x) + ":" + formatReal(o.center.y) + ":" + formatReal(o.radius);
        }
        out += "\n";
    }
    return out;
}

void writeEpisode(const fs::path& dir, const sim::EpisodeLog& log) {
    ensureDirectory(dir);
    Trajectory states{log.states, log.scenario.config.dt};
    writeText(dir / "states.csv", trajectoryCsv(states));
    writeText(dir / "observations.csv", observationsCsv(log));
    json j = toJson(log.scenario);
    json act = json::array();
    for (const auto& a : log.activations) act.push_back({{"event", a.event_index}, {"step", a.step}});
    j["activations"] = act;
    j["truncated"] = log.truncated;
    j["diagnostics"] = log.diagnostics;
    writeText(dir / "events.json", j.dump(2) + "\n");
    if (!log.plans.empty()) {
        const fs::path plans = dir / "plans";
        ensureDirectory(plans);
        for (const auto& p : log.plans) {
            char name[32];
            std::snprintf(name, sizeof name, "plan_%04d.csv", p.step);
            writeText(plans / name, trajectoryCsv(p.plan));
        }
    }
}

sim::EpisodeLog readEpisode(const fs::path& dir) {
    sim::EpisodeLog log;
    json j;
    try {
        j = json::parse(readText(dir / "events.json"));
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/events.json: " + e.what());
    }
    log.scenario = scenarioFromJson(j);
    log.truncated = j.value("truncated", false);
    log.diagnostics = j.value("diagnostics", std::string{});
    if (j.contains("activations")) {
        for (const auto& a : j["activations"]) {
            log.activations.push_back({a.at("event").get<std::size_t>(), a.at("step").get<int>()});
        }
    }
    log.states = readTrajectoryCsv(dir / "states.csv", log.scenario.config.dt).points;
    for (std::size_t t = 0; t < log.states.size(); ++t) {
        log.signals.push_back(sim::signalAt(log.scenario, static_cast<int>(t)));
    }
    return log;
}

std::vector<fs::path> episodeDirectories(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "events.json")) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Scores and manifests

std::string scoresCsv(const eval::RunScores& run) {
    std::string out = std::string(kScoresHeader) + "\n";
    for (std::size_t i = 0; i < run.scores.size(); ++i) {
        const auto& s = run.scores[i];
        out += std::to_string(run.scenario_seeds[i]) + "," + formatReal(s.no_collision) + "," +
               formatReal(s.drivable) + "," + formatReal(s.progress) + "," + formatReal(s.comfort) + "," +
               formatReal(s.speed_compliance) + "," + formatReal(s.composite) + "," + (s.truncated ? "1" : "0") +
               "\n";
    }
    return out;
}

eval::RunScores parseScoresCsv(const std::string& text, const std::string& config) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kScoresHeader) throw DataError("scores CSV has an unexpected header");
    eval::RunScores run;
    run.config = config;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const auto f = splitLine(line);
        if (f.size() != 8) throw DataError("scores line " + std::to_string(n) + ": expected 8 fields");
        try {
            run.scenario_seeds.push_back(std::stoull(f[0]));
        } catch (const std::exception&) {
            throw DataError("scores line " + std::to_string(n) + ": bad seed");
        }
        eval::DrivingScore s;
        s.no_collision = parseReal(f[1], n);
        s.drivable = parseReal(f[2], n);
        s.progress = parseReal(f[3], n);
        s.comfort = parseReal(f[4], n);
        s.speed_compliance = parseReal(f[5], n);
        s.composite = parseReal(f[6], n);
        s.truncated = f[7] == "1";
        run.scores.push_back(s);
    }
    return run;
}

void writeManifest(const fs::path& dir, const Manifest& m) {
    json j;
    j["tool"] = "scopekit";
#ifdef SCOPEKIT_VERSION
    j["version"] = SCOPEKIT_VERSION;
#else
    j["version"] = "unknown";
#endif
    j["command"] = m.command;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    for (const auto& [k, v] : m.extra.items()) j[k] = v;
    writeText(dir / kManifestName, j.dump(2) + "\n");
}

json readManifest(const fs::path& dir) {
    try {
        return json::parse(readText(dir / kManifestName));
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/manifest.json: " + e.what());
    }
}

}  // namespace scopekit::io
