#pragma once

// Closed-loop driving score and multi-run comparison.

#include <cstdint>
#include <string>
#include <vector>

#include "scopekit/simulator.hpp"

namespace scopekit::eval {

struct ScoreLimits {
    double comfort_accel = 2.0;   // m/s^2, longitudinal
    double comfort_jerk = 4.0;    // m/s^3
    double speed_ratio = 1.05;    // of v_ref
    double red_crawl_speed = 0.5; // allowed past a red stop line
};

struct DrivingScore {
    double no_collision = 0.0;
    double drivable = 0.0;
    double progress = 0.0;
    double comfort = 0.0;
    double speed_compliance = 0.0;
    double composite = 0.0;
    bool truncated = false;
    std::string diagnostic;
};

/// composite = no_collision * drivable * (0.5 progress + 0.25 comfort + 0.25 speed)
double compositeOf(const DrivingScore& s);

/// Smallest (centre distance - radii sum) over all steps and visible obstacles.
double minClearance(const sim::EpisodeLog& log, const sim::Scenario& scenario);

DrivingScore scoreEpisode(const sim::EpisodeLog& log, const sim::Scenario& scenario,
                          const sim::EpisodeLog& expert_log, const ScoreLimits& limits = {});

struct RunScores {
    std::string config;
    std::vector<std::uint64_t> scenario_seeds;
    std::vector<DrivingScore> scores;
};

struct SummaryRow {
    std::string config;
    std::size_t episodes = 0;
    double mean_composite = 0.0;
    double std_composite = 0.0;
    double no_collision_rate = 0.0;
    double drivable_rate = 0.0;
    double mean_progress = 0.0;
    double mean_comfort = 0.0;
    double mean_speed = 0.0;
    double std_progress = 0.0;
    double std_comfort = 0.0;
    double std_speed = 0.0;
    std::size_t rank = 0;  // 1 = best mean composite
};

struct Report {
    std::vector<SummaryRow> rows;  // input order
    /// Row indices from best to worst mean composite (stable on ties).
    std::vector<std::size_t> ranking;
};

SummaryRow summarize(const RunScores& run);

/// DataError if the runs were not scored on the same scenario seeds.
Report compareRuns(const std::vector<RunScores>& runs);

std::string reportCsv(const Report& report);

}  // namespace scopekit::eval
