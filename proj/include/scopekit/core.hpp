#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "scopekit/matrix.hpp"

namespace scopekit {

inline constexpr double kDefaultDt = 0.1;
inline constexpr double kHeadingTolerance = 1e-6;
inline constexpr std::size_t kChannels = 6;

/// Channel order of a waypoint row: px, py, cos_h, sin_h, vx, vy.
enum Channel : std::size_t { kPx = 0, kPy, kCos, kSin, kVx, kVy };

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

struct Waypoint {
    double px = 0.0;
    double py = 0.0;
    double cos_h = 1.0;
    double sin_h = 0.0;
    double vx = 0.0;
    double vy = 0.0;

    std::array<double, kChannels> channels() const { return {px, py, cos_h, sin_h, vx, vy}; }
    double speed() const;
    bool operator==(const Waypoint&) const = default;
};

struct Trajectory {
    std::vector<Waypoint> points;
    double dt = kDefaultDt;

    std::size_t size() const { return points.size(); }
    bool operator==(const Trajectory&) const = default;
};

/// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validateTrajectory(const Trajectory& traj);

Matrix channelMatrix(const Trajectory& traj);
Trajectory trajectoryFromMatrix(const Matrix& m, double dt = kDefaultDt);

/// Extracts the (px, py) columns as a T x 2 matrix.
Matrix positionChannels(const Matrix& channels);

enum class SignalColor { Green, Red };

struct ObstacleView {
    Vec2 center;
    double radius = 0.0;
    int first_visible_step = 0;
    bool operator==(const ObstacleView&) const = default;
};

struct SignalView {
    SignalColor color = SignalColor::Green;
    bool has_stop_line = false;
    Vec2 stop_line;  // point on the lane where the ego must stop while red
    bool operator==(const SignalView&) const = default;
};

struct Observation {
    std::vector<Waypoint> ego_history;  // oldest first, last entry is the current pose
    std::vector<ObstacleView> visible_obstacles;
    SignalView signal;
    std::vector<Vec2> lane;  // sampled reference polyline
    double v_ref = 0.0;
    int current_step = 0;

    const Waypoint& current() const { return ego_history.back(); }
    bool operator==(const Observation&) const = default;
};

struct PlanConfig {
    std::size_t future_steps = 80;
    std::size_t history_steps = 21;
    std::size_t mode_count = 3;
    std::size_t wavelet_levels = 3;
    std::size_t ds_horizon = 20;
    double dt = kDefaultDt;

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

/// World <-> ego frame transforms for a pose given by position and unit heading.
struct Frame {
    Vec2 origin;
    double cos_h = 1.0;
    double sin_h = 0.0;

    static Frame of(const Waypoint& pose) { return {{pose.px, pose.py}, pose.cos_h, pose.sin_h}; }

    Vec2 toLocal(Vec2 world) const;
    Vec2 toWorld(Vec2 local) const;
    Vec2 rotateToLocal(Vec2 v) const;
    Vec2 rotateToWorld(Vec2 v) const;
    Waypoint toLocal(const Waypoint& w) const;
    Waypoint toWorld(const Waypoint& w) const;
};

}  // namespace scopekit
