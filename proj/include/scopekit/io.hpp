#pragma once

// CSV / JSON persistence for trajectories, pyramids, schedules, episode logs
// and run manifests. Reals are written with 17 significant digits so every
// file round-trips bit-exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopekit/core.hpp"
#include "scopekit/evaluation.hpp"
#include "scopekit/simulator.hpp"
#include "scopekit/training.hpp"
#include "scopekit/wavelet.hpp"
#include "scopekit/weights.hpp"

namespace scopekit::io {

namespace fs = std::filesystem;

std::string formatReal(double x);

std::string readText(const fs::path& path);
void writeText(const fs::path& path, const std::string& text);
void ensureDirectory(const fs::path& dir);

inline constexpr const char* kTrajectoryHeader = "t,px,py,cos_h,sin_h,vx,vy";

std::string trajectoryCsv(const Trajectory& traj);
Trajectory parseTrajectoryCsv(const std::string& text, double dt = kDefaultDt);
Trajectory readTrajectoryCsv(const fs::path& path, double dt = kDefaultDt);

/// `idx,<name>...`, one row per matrix row.
std::string matrixCsv(const Matrix& m, const std::vector<std::string>& column_names);

/// Component files plus metadata.json; returns the files written.
std::vector<fs::path> writePyramid(const fs::path& dir, const wavelet::WaveletPyramid& p,
                                   const std::vector<std::string>& column_names);
std::vector<fs::path> writeScopedStack(const fs::path& dir, const wavelet::ScopedStack& s,
                                       const std::vector<std::string>& column_names, std::size_t source_length);

std::string scheduleCsv(const weights::WeightSchedule& s);

inline constexpr const char* kTrainingLogHeader = "step,reg,cls,col,ds,total";
std::string trainingLogCsv(const std::vector<train::LogRow>& rows);

nlohmann::json toJson(const sim::ScenarioConfig& c);
/// Unknown keys or bad values raise ConfigError.
sim::ScenarioConfig scenarioConfigFromJson(const nlohmann::json& j);
nlohmann::json toJson(const sim::Scenario& s);
sim::Scenario scenarioFromJson(const nlohmann::json& j);

std::string observationsCsv(const sim::EpisodeLog& log);

/// states.csv, observations.csv, events.json and, for closed-loop logs, plans/.
void writeEpisode(const fs::path& dir, const sim::EpisodeLog& log);
/// Reads states and the event script back; observations are recomputed on demand.
sim::EpisodeLog readEpisode(const fs::path& dir);
/// Episode subdirectories of a dataset directory in name order.
std::vector<fs::path> episodeDirectories(const fs::path& dir);

inline constexpr const char* kScoresHeader =
    "scenario_seed,no_collision,drivable,progress,comfort,speed_compliance,composite,truncated";
std::string scoresCsv(const eval::RunScores& run);
eval::RunScores parseScoresCsv(const std::string& text, const std::string& config);

struct Manifest {
    std::string command;
    std::string config_hash;  // hex
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_clock_seconds = 0.0;
    nlohmann::json extra = nlohmann::json::object();
};

inline constexpr const char* kManifestName = "manifest.json";
void writeManifest(const fs::path& dir, const Manifest& m);
nlohmann::json readManifest(const fs::path& dir);

std::string hex64(std::uint64_t v);

}  // namespace scopekit::io
