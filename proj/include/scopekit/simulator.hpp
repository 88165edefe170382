#pragma once

// Desk-scale closed-loop driving world: a straight lane, scripted popup
// obstacles and traffic-signal switches, a scripted expert that knows the whole
// script in advance, and a feasibility-clamped waypoint tracker.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scopekit/core.hpp"
#include "scopekit/policy.hpp"

namespace scopekit::sim {

enum class EventKind { PopupObstacle, SignalSwitch };

struct Event {
    EventKind kind = EventKind::PopupObstacle;
    int trigger_step = 0;
    Vec2 position;  // obstacle centre, or the stop line for a switch to red
    double radius = 0.0;
    SignalColor switch_to = SignalColor::Green;
    bool operator==(const Event&) const = default;
};

struct ScenarioConfig {
    int episode_steps = 300;
    double dt = kDefaultDt;
    std::size_t history_steps = 21;
    std::size_t future_steps = 80;

    double v_ref_min = 7.0;
    double v_ref_max = 9.0;
    double half_width = 4.0;

    double event_probability = 0.8;  // per scheduling slot
    double signal_fraction = 0.35;
    double first_event_time = 2.0;
    double min_event_gap = 3.0;

    double obstacle_radius_min = 0.5;
    double obstacle_radius_max = 1.5;
    double obstacle_lateral_max = 1.0;
    double popup_ttc_min = 2.5;  // seconds from popup to the expert's closest approach
    double popup_ttc_max = 4.0;

    double stop_distance_min = 20.0;  // stop line ahead of the expert at the switch to red
    double stop_distance_max = 40.0;
    double red_wait_min = 1.0;        // seconds stopped before the switch back to green
    double red_wait_max = 3.0;

    // expert
    double lead_time = 1.5;
    double margin = 0.5;
    double ego_radius = 1.0;
    double brake_duration = 8.0;
    double launch_duration = 8.0;
    double stop_offset = 0.5;

    // tracker
    double a_max = 4.0;
    double lat_rate_max = 3.0;

    void validate() const;
    bool operator==(const ScenarioConfig&) const = default;
};

struct Scenario {
    std::uint64_t seed = 0;
    ScenarioConfig config;
    double v_ref = 8.0;
    std::vector<Event> events;  // sorted by trigger step
    bool operator==(const Scenario&) const = default;
};

Scenario sampleScenario(std::uint64_t seed, const ScenarioConfig& config);

/// Reference polyline points in a window around the given longitudinal position.
std::vector<Vec2> laneWindow(double x);

struct WorldState {
    int step = 0;
    Waypoint ego;
    SignalColor signal = SignalColor::Green;
    std::vector<Waypoint> history;  // last H ego states, current last
};

SignalColor signalAt(const Scenario& scenario, int step);

/// Only events with trigger_step <= world.step are reflected.
Observation observe(const WorldState& world, const Scenario& scenario);

/// The scripted expert as a closed-form function of time.
class ExpertOracle {
public:
    explicit ExpertOracle(const Scenario& scenario);

    Vec2 positionAt(double t) const;
    /// Sampled state at a step; velocity is the backward difference of positions.
    Waypoint stateAt(int step) const;
    /// Lateral avoidance windows [start, end] in seconds, one per popup.
    struct Bump {
        double start, ramp, plateau_start, plateau_end, end, offset;
    };
    const std::vector<Bump>& bumps() const { return bumps_; }

private:
    struct Segment {
        enum Kind { Cruise, Brake, Stop, Launch } kind;
        double t0;
        double x0;
        double duration;  // infinite for the last segment
    };
    double longitudinal(double t) const;
    double lateral(double t) const;
    double timeAtX(double x) const;

    Scenario scenario_;
    std::vector<Segment> segments_;
    std::vector<Bump> bumps_;
};

struct EventActivation {
    std::size_t event_index = 0;
    int step = 0;
};

struct PlanRecord {
    int step = 0;
    Trajectory plan;  // world frame
};

struct EpisodeLog {
    Scenario scenario;
    std::vector<Waypoint> states;  // executed ego state per step
    std::vector<SignalColor> signals;
    std::vector<Observation> observations;  // empty unless recorded
    std::vector<PlanRecord> plans;          // closed loop only
    std::vector<EventActivation> activations;
    bool truncated = false;
    std::string diagnostics;

    std::size_t size() const { return states.size(); }
};

struct RolloutOptions {
    bool record_observations = true;
    bool record_plans = true;
};

EpisodeLog expertRollout(const Scenario& scenario, const RolloutOptions& options = {});

/// World state at `step` of a logged episode (history rebuilt from the log).
WorldState worldAt(const EpisodeLog& log, int step);

/// Observation at `step`, recomputed when the log did not record it.
Observation observationAt(const EpisodeLog& log, int step);

/// Follows the first R waypoints of a world-frame plan with clamped
/// longitudinal acceleration and lateral rate. Advances `world`.
std::vector<WorldState> executePlan(WorldState& world, const Trajectory& plan, std::size_t exec_steps,
                                    const Scenario& scenario);

class Planner {
public:
    virtual ~Planner() = default;
    /// World-frame plan starting one step after the observation.
    virtual Trajectory plan(const Observation& obs) const = 0;
};

/// Replays the scripted expert's own future.
class ExpertPlanner : public Planner {
public:
    explicit ExpertPlanner(const Scenario& scenario, std::size_t horizon = 80);
    Trajectory plan(const Observation& obs) const override;

private:
    ExpertOracle oracle_;
    std::size_t horizon_;
};

/// featurize -> forward -> highest-scoring mode, mapped to the world frame.
class PolicyPlanner : public Planner {
public:
    PolicyPlanner(std::shared_ptr<const policy::PolicyParams> params, std::size_t history_steps);
    Trajectory plan(const Observation& obs) const override;

private:
    std::shared_ptr<const policy::PolicyParams> params_;
    std::size_t history_steps_;
};

EpisodeLog closedLoopRollout(const Planner& planner, const Scenario& scenario, std::size_t replan_interval,
                             const RolloutOptions& options = {});

}  // namespace scopekit::sim
