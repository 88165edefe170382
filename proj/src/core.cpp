#include "scopekit/core.hpp"

#include <cmath>
#include <sstream>

#include "scopekit/errors.hpp"

namespace scopekit {

double Waypoint::speed() const { return std::hypot(vx, vy); }

std::vector<std::string> validateTrajectory(const Trajectory& traj) {
    std::vector<std::string> issues;
    if (traj.points.empty()) issues.emplace_back("empty trajectory");
    if (!(traj.dt > 0.0)) issues.emplace_back("non-positive dt");
    for (std::size_t t = 0; t < traj.points.size(); ++t) {
        const auto& w = traj.points[t];
        for (double c : w.channels()) {
            if (!std::isfinite(c)) {
                issues.push_back("non-finite channel at step " + std::to_string(t));
                break;
            }
        }
        const double norm2 = w.cos_h * w.cos_h + w.sin_h * w.sin_h;
        if (!(std::abs(norm2 - 1.0) <= kHeadingTolerance)) {
            issues.push_back("heading not unit-norm at step " + std::to_string(t));
        }
    }
    return issues;
}

Matrix channelMatrix(const Trajectory& traj) {
    Matrix m(traj.points.size(), kChannels);
    for (std::size_t t = 0; t < traj.points.size(); ++t) {
        const auto ch = traj.points[t].channels();
        for (std::size_t c = 0; c < kChannels; ++c) m(t, c) = ch[c];
    }
    return m;
}

Trajectory trajectoryFromMatrix(const Matrix& m, double dt) {
    if (m.cols() != kChannels) {
        throw ShapeError("trajectory matrix must have 6 columns, got " + std::to_string(m.cols()));
    }
    Trajectory traj;
    traj.dt = dt;
    traj.points.reserve(m.rows());
    for (std::size_t t = 0; t < m.rows(); ++t) {
        traj.points.push_back({m(t, kPx), m(t, kPy), m(t, kCos), m(t, kSin), m(t, kVx), m(t, kVy)});
    }
    return traj;
}

Matrix positionChannels(const Matrix& channels) {
    Matrix out(channels.rows(), 2);
    for (std::size_t t = 0; t < channels.rows(); ++t) {
        out(t, 0) = channels(t, kPx);
        out(t, 1) = channels(t, kPy);
    }
    return out;
}

void PlanConfig::validate() const {
    std::ostringstream err;
    if (future_steps == 0) err << "future_steps must be positive; ";
    if (wavelet_levels > 16 || (future_steps % (std::size_t{1} << wavelet_levels)) != 0) {
        err << "future_steps " << future_steps << " not divisible by 2^" << wavelet_levels << "; ";
    }
    if (mode_count < 1) err << "mode_count must be >= 1; ";
    if (history_steps < 1) err << "history_steps must be >= 1; ";
    if (ds_horizon < 1 || ds_horizon > future_steps) err << "ds_horizon must lie in [1, future_steps]; ";
    if (!(dt > 0.0)) err << "dt must be positive; ";
    const auto msg = err.str();
    if (!msg.empty()) throw ConfigError("invalid plan config: " + msg);
}

Vec2 Frame::rotateToLocal(Vec2 v) const { return {cos_h * v.x + sin_h * v.y, -sin_h * v.x + cos_h * v.y}; }

Vec2 Frame::rotateToWorld(Vec2 v) const { return {cos_h * v.x - sin_h * v.y, sin_h * v.x + cos_h * v.y}; }

Vec2 Frame::toLocal(Vec2 world) const { return rotateToLocal({world.x - origin.x, world.y - origin.y}); }

Vec2 Frame::toWorld(Vec2 local) const {
    const Vec2 r = rotateToWorld(local);
    return {r.x + origin.x, r.y + origin.y};
}

Waypoint Frame::toLocal(const Waypoint& w) const {
    const Vec2 p = toLocal(Vec2{w.px, w.py});
    const Vec2 h = rotateToLocal({w.cos_h, w.sin_h});
    const Vec2 v = rotateToLocal({w.vx, w.vy});
    return {p.x, p.y, h.x, h.y, v.x, v.y};
}

Waypoint Frame::toWorld(const Waypoint& w) const {
    const Vec2 p = toWorld(Vec2{w.px, w.py});
    const Vec2 h = rotateToWorld({w.cos_h, w.sin_h});
    const Vec2 v = rotateToWorld({w.vx, w.vy});
    return {p.x, p.y, h.x, h.y, v.x, v.y};
}

}  // namespace scopekit
