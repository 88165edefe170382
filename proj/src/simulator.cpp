#include "scopekit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "scopekit/errors.hpp"
#include "scopekit/rng.hpp"

namespace scopekit::sim {

namespace {

constexpr double kClearanceBuffer = 0.1;  // expert keeps strictly more than radii + margin
constexpr double kSpeedLimitRatio = 1.05;
constexpr double kLateralRateShare = 0.9;
constexpr double kQuinticPeakSlope = 1.875;
constexpr double kMovingSpeed = 1e-6;
constexpr double kSteerSpeed = 0.5;  // below this the tracker holds its heading
constexpr double kLaneSpacing = 10.0;

double quintic(double tau) {
    tau = std::clamp(tau, 0.0, 1.0);
    return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

void requireRange(std::ostringstream& err, const char* name, double lo, double hi) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) err << name << " range is empty; ";
}

double expertClearance(const ScenarioConfig& c, double radius) {
    return radius + c.ego_radius + c.margin + kClearanceBuffer;
}

double expertLateralRate(const ScenarioConfig& c, double v_ref) {
    const double speed_share = std::sqrt(kSpeedLimitRatio * kSpeedLimitRatio - 1.0) * v_ref;
    return kLateralRateShare * std::min(c.lat_rate_max, speed_share);
}

struct BumpTiming {
    double ramp;
    double hold;
    double offset;
};

BumpTiming bumpTiming(const ScenarioConfig& c, double v_ref, double speed, Vec2 obstacle, double radius) {
    const double clearance = expertClearance(c, radius);
    const double offset = obstacle.y >= 0.0 ? obstacle.y - clearance : obstacle.y + clearance;
    const double ramp = std::max(c.lead_time, kQuinticPeakSlope * std::abs(offset) / expertLateralRate(c, v_ref));
    const double hold = clearance / std::max(speed, 1.0) + 0.2;
    return {ramp, hold, offset};
}

}  // namespace

void ScenarioConfig::validate() const {
    std::ostringstream err;
    if (episode_steps < 2) err << "episode_steps must be >= 2; ";
    if (!(dt > 0.0)) err << "dt must be positive; ";
    if (history_steps < 1) err << "history_steps must be >= 1; ";
    if (future_steps < 1) err << "future_steps must be >= 1; ";
    requireRange(err, "v_ref", v_ref_min, v_ref_max);
    if (!(v_ref_min > 0.0)) err << "v_ref_min must be positive; ";
    if (!(half_width > 0.0)) err << "half_width must be positive; ";
    if (!(event_probability >= 0.0 && event_probability <= 1.0)) err << "event_probability must be in [0,1]; ";
    if (!(signal_fraction >= 0.0 && signal_fraction <= 1.0)) err << "signal_fraction must be in [0,1]; ";
    if (!(min_event_gap > 0.0)) err << "min_event_gap must be positive; ";
    if (!(first_event_time >= 0.0)) err << "first_event_time must be non-negative; ";
    requireRange(err, "obstacle_radius", obstacle_radius_min, obstacle_radius_max);
    if (!(obstacle_radius_min > 0.0)) err << "obstacle radii must be positive; ";
    if (obstacle_radius_max > half_width) err << "obstacle radius exceeds the drivable half-width; ";
    if (!(obstacle_lateral_max >= 0.0)) err << "obstacle_lateral_max must be non-negative; ";
    requireRange(err, "popup_ttc", popup_ttc_min, popup_ttc_max);
    if (!(popup_ttc_min > 0.0)) err << "popup_ttc_min must be positive; ";
    requireRange(err, "stop_distance", stop_distance_min, stop_distance_max);
    if (!(stop_distance_min > 0.0)) err << "stop_distance_min must be positive; ";
    requireRange(err, "red_wait", red_wait_min, red_wait_max);
    if (!(red_wait_min >= 0.0)) err << "red_wait_min must be non-negative; ";
    if (!(lead_time > 0.0) || !(margin >= 0.0) || !(ego_radius > 0.0)) err << "expert geometry invalid; ";
    if (!(brake_duration > 0.0) || !(launch_duration > 0.0) || !(stop_offset >= 0.0)) err << "expert timing invalid; ";
    if (!(a_max > 0.0) || !(lat_rate_max > 0.0)) err << "tracker limits must be positive; ";
    if (expertClearance(*this, obstacle_radius_max) > half_width) {
        err << "expert avoidance offset would leave the drivable area; ";
    }
    const auto msg = err.str();
    if (!msg.empty()) throw ConfigError("invalid scenario config: " + msg);
}

// ---------------------------------------------------------------------------
// Scenario sampling

Scenario sampleScenario(std::uint64_t seed, const ScenarioConfig& c) {
    c.validate();
    Rng rng(subSeed(seed, "scenario"));
    Scenario sc;
    sc.seed = seed;
    sc.config = c;
    sc.v_ref = rng.uniform(c.v_ref_min, c.v_ref_max);
    const double v = sc.v_ref;
    const double end_t = c.episode_steps * c.dt;
    const double last_trigger_t = end_t - 1.0;

    // The expert cruises at v from x = 0 at t = 0; the cursor marks the first
    // time at which it is cruising again after the previous event.
    double cursor_t = c.first_event_time;
    double cursor_x = v * cursor_t;
    auto advance = [&](double new_t) {
        cursor_x += v * (new_t - cursor_t);
        cursor_t = new_t;
    };
    auto toStep = [&](double t) { return static_cast<int>(std::ceil(t / c.dt - 1e-9)); };

    while (cursor_t < last_trigger_t) {
        if (!rng.bernoulli(c.event_probability)) {
            advance(cursor_t + c.min_event_gap);
            continue;
        }
        if (rng.bernoulli(c.signal_fraction)) {
            const double distance = rng.uniform(c.stop_distance_min, c.stop_distance_max);
            const double brake_len = c.stop_offset + v * c.brake_duration / 2.0;
            const double earliest = cursor_t + std::max(0.0, (brake_len - distance) / v);
            const int red_step = toStep(earliest + rng.uniform(0.0, 1.0));
            const double red_t = red_step * c.dt;
            if (red_t > last_trigger_t) break;
            const double stop_x = cursor_x + v * (red_t - cursor_t) + distance;
            const double brake_t = cursor_t + (stop_x - brake_len - cursor_x) / v;
            const double stopped_t = brake_t + c.brake_duration;
            const int green_step = toStep(stopped_t + rng.uniform(c.red_wait_min, c.red_wait_max));
            sc.events.push_back({EventKind::SignalSwitch, red_step, {stop_x, 0.0}, 0.0, SignalColor::Red});
            if (green_step >= c.episode_steps) break;
            sc.events.push_back({EventKind::SignalSwitch, green_step, {stop_x, 0.0}, 0.0, SignalColor::Green});
            const double resume_t = green_step * c.dt + c.launch_duration;
            cursor_t = resume_t;
            cursor_x = stop_x - c.stop_offset + v * c.launch_duration / 2.0;
            advance(cursor_t + c.min_event_gap);
        } else {
            const double ttc = rng.uniform(c.popup_ttc_min, c.popup_ttc_max);
            const double radius = rng.uniform(c.obstacle_radius_min, c.obstacle_radius_max);
            const double lateral = rng.uniform(-c.obstacle_lateral_max, c.obstacle_lateral_max);
            const auto timing = bumpTiming(c, v, v, {0.0, lateral}, radius);
            const double lead = timing.hold + timing.ramp;
            const double earliest = cursor_t + std::max(0.0, lead - ttc);
            const int popup_step = toStep(earliest + rng.uniform(0.0, 1.0));
            const double popup_t = popup_step * c.dt;
            if (popup_t > last_trigger_t) break;
            const double obstacle_x = cursor_x + v * (popup_t - cursor_t) + v * ttc;
            sc.events.push_back({EventKind::PopupObstacle, popup_step, {obstacle_x, lateral}, radius, SignalColor::Green});
            advance(popup_t + ttc + timing.hold + timing.ramp + c.min_event_gap);
        }
    }
    std::stable_sort(sc.events.begin(), sc.events.end(),
                     [](const Event& a, const Event& b) { return a.trigger_step < b.trigger_step; });
    return sc;
}

std::vector<Vec2> laneWindow(double x) {
    const double start = std::floor(x / kLaneSpacing) * kLaneSpacing - 2.0 * kLaneSpacing;
    std::vector<Vec2> pts;
    for (int i = 0; i < 13; ++i) pts.push_back({start + i * kLaneSpacing, 0.0});
    return pts;
}

// ---------------------------------------------------------------------------
// Expert

ExpertOracle::ExpertOracle(const Scenario& scenario) : scenario_(scenario) {
    const auto& c = scenario.config;
    const double v = scenario.v_ref;
    const double inf = std::numeric_limits<double>::infinity();
    segments_.push_back({Segment::Cruise, 0.0, 0.0, inf});

    const auto& ev = scenario.events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].kind != EventKind::SignalSwitch || ev[i].switch_to != SignalColor::Red) continue;
        auto& cruise = segments_.back();
        if (cruise.kind != Segment::Cruise) throw ConfigError("expert cannot handle overlapping signal events");
        const double stop_x = ev[i].position.x - c.stop_offset;
        const double brake_x = stop_x - v * c.brake_duration / 2.0;
        const double brake_t = cruise.t0 + (brake_x - cruise.x0) / v;
        if (brake_t < cruise.t0 - 1e-9) throw ConfigError("stop line too close for the expert to brake");
        cruise.duration = brake_t - cruise.t0;
        segments_.push_back({Segment::Brake, brake_t, brake_x, c.brake_duration});
        const double stopped_t = brake_t + c.brake_duration;
        std::size_t green = ev.size();
        for (std::size_t j = i + 1; j < ev.size(); ++j) {
            if (ev[j].kind == EventKind::SignalSwitch && ev[j].switch_to == SignalColor::Green) {
                green = j;
                break;
            }
        }
        if (green == ev.size()) {
            segments_.push_back({Segment::Stop, stopped_t, stop_x, inf});
            break;
        }
        const double green_t = ev[green].trigger_step * c.dt;
        if (green_t < stopped_t - 1e-9) throw ConfigError("signal turns green before the expert has stopped");
        segments_.push_back({Segment::Stop, stopped_t, stop_x, green_t - stopped_t});
        segments_.push_back({Segment::Launch, green_t, stop_x, c.launch_duration});
        segments_.push_back({Segment::Cruise, green_t + c.launch_duration, stop_x + v * c.launch_duration / 2.0, inf});
    }

    for (const auto& e : ev) {
        if (e.kind != EventKind::PopupObstacle) continue;
        const double t_ca = timeAtX(e.position.x);
        const double h = 1e-3;
        const double speed = (longitudinal(t_ca + h) - longitudinal(t_ca - h)) / (2.0 * h);
        const auto timing = bumpTiming(c, v, speed, e.position, e.radius);
        Bump b;
        b.ramp = timing.ramp;
        b.offset = timing.offset;
        b.plateau_start = t_ca - timing.hold;
        b.start = b.plateau_start - timing.ramp;
        b.plateau_end = t_ca + timing.hold;
        b.end = b.plateau_end + timing.ramp;
        bumps_.push_back(b);
    }
}

double ExpertOracle::longitudinal(double t) const {
    const double v = scenario_.v_ref;
    std::size_t k = 0;
    while (k + 1 < segments_.size() && segments_[k + 1].t0 <= t) ++k;
    const auto& s = segments_[k];
    switch (s.kind) {
        case Segment::Cruise: return s.x0 + v * (t - s.t0);
        case Segment::Stop: return s.x0;
        case Segment::Brake: {
            const double tau = std::clamp((t - s.t0) / s.duration, 0.0, 1.0);
            return s.x0 + v * s.duration * (tau - tau * tau * tau + 0.5 * tau * tau * tau * tau);
        }
        case Segment::Launch: {
            const double tau = std::clamp((t - s.t0) / s.duration, 0.0, 1.0);
            return s.x0 + v * s.duration * (tau * tau * tau - 0.5 * tau * tau * tau * tau);
        }
    }
    return s.x0;
}

double ExpertOracle::lateral(double t) const {
    double y = 0.0;
    for (const auto& b : bumps_) {
        if (t <= b.start || t >= b.end) continue;
        if (t < b.plateau_start) {
            y += b.offset * quintic((t - b.start) / b.ramp);
        } else if (t <= b.plateau_end) {
            y += b.offset;
        } else {
            y += b.offset * (1.0 - quintic((t - b.plateau_end) / b.ramp));
        }
    }
    return y;
}

double ExpertOracle::timeAtX(double x) const {
    // x(t) is non-decreasing; bracket then bisect.
    double lo = 0.0;
    double hi = 1.0;
    while (longitudinal(hi) < x) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) throw ConfigError("expert never reaches the obstacle");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (longitudinal(mid) < x) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

Vec2 ExpertOracle::positionAt(double t) const { return {longitudinal(t), lateral(t)}; }

Waypoint ExpertOracle::stateAt(int step) const {
    const double dt = scenario_.config.dt;
    const Vec2 p = positionAt(step * dt);
    const Vec2 q = positionAt((step - 1) * dt);
    Waypoint w;
    w.px = p.x;
    w.py = p.y;
    w.vx = (p.x - q.x) / dt;
    w.vy = (p.y - q.y) / dt;
    const double speed = std::hypot(w.vx, w.vy);
    if (speed > kMovingSpeed) {
        w.cos_h = w.vx / speed;
        w.sin_h = w.vy / speed;
    }
    return w;
}

// ---------------------------------------------------------------------------
// World

SignalColor signalAt(const Scenario& scenario, int step) {
    SignalColor color = SignalColor::Green;
    for (const auto& e : scenario.events) {
        if (e.kind == EventKind::SignalSwitch && e.trigger_step <= step) color = e.switch_to;
    }
    return color;
}

Observation observe(const WorldState& world, const Scenario& scenario) {
    Observation obs;
    obs.ego_history = world.history;
    obs.current_step = world.step;
    obs.v_ref = scenario.v_ref;
    obs.signal.color = signalAt(scenario, world.step);
    for (const auto& e : scenario.events) {
        if (e.trigger_step > world.step) continue;
        if (e.kind == EventKind::PopupObstacle) {
            obs.visible_obstacles.push_back({e.position, e.radius, e.trigger_step});
        } else if (e.switch_to == SignalColor::Red && obs.signal.color == SignalColor::Red) {
            obs.signal.has_stop_line = true;
            obs.signal.stop_line = e.position;
        }
    }
    obs.lane = laneWindow(world.ego.px);
    return obs;
}

namespace {

std::vector<Waypoint> initialHistory(const ExpertOracle& oracle, std::size_t h) {
    std::vector<Waypoint> out;
    for (int k = -static_cast<int>(h) + 1; k <= 0; ++k) out.push_back(oracle.stateAt(k));
    return out;
}

void pushHistory(std::vector<Waypoint>& history, const Waypoint& w, std::size_t h) {
    history.push_back(w);
    if (history.size() > h) history.erase(history.begin(), history.begin() + (history.size() - h));
}

std::vector<EventActivation> activations(const Scenario& scenario) {
    std::vector<EventActivation> out;
    for (std::size_t i = 0; i < scenario.events.size(); ++i) {
        if (scenario.events[i].trigger_step < scenario.config.episode_steps) {
            out.push_back({i, scenario.events[i].trigger_step});
        }
    }
    return out;
}

WorldState initialWorld(const Scenario& scenario, const ExpertOracle& oracle) {
    WorldState w;
    w.step = 0;
    w.history = initialHistory(oracle, scenario.config.history_steps);
    w.ego = w.history.back();
    w.signal = signalAt(scenario, 0);
    return w;
}

}  // namespace

EpisodeLog expertRollout(const Scenario& scenario, const RolloutOptions& options) {
    const ExpertOracle oracle(scenario);
    EpisodeLog log;
    log.scenario = scenario;
    WorldState world = initialWorld(scenario, oracle);
    for (int step = 0; step < scenario.config.episode_steps; ++step) {
        if (step > 0) {
            world.step = step;
            world.ego = oracle.stateAt(step);
            world.signal = signalAt(scenario, step);
            pushHistory(world.history, world.ego, scenario.config.history_steps);
        }
        log.states.push_back(world.ego);
        log.signals.push_back(world.signal);
        if (options.record_observations) log.observations.push_back(observe(world, scenario));
    }
    log.activations = activations(scenario);
    return log;
}

WorldState worldAt(const EpisodeLog& log, int step) {
    const auto& sc = log.scenario;
    const std::size_t h = sc.config.history_steps;
    WorldState w;
    w.step = step;
    w.ego = log.states.at(static_cast<std::size_t>(step));
    w.signal = signalAt(sc, step);
    const int first = step - static_cast<int>(h) + 1;
    if (first < 0) {
        const ExpertOracle oracle(sc);
        for (int k = first; k < 0; ++k) w.history.push_back(oracle.stateAt(k));
    }
    for (int k = std::max(first, 0); k <= step; ++k) w.history.push_back(log.states[static_cast<std::size_t>(k)]);
    return w;
}

Observation observationAt(const EpisodeLog& log, int step) {
    if (static_cast<std::size_t>(step) < log.observations.size()) return log.observations[static_cast<std::size_t>(step)];
    return observe(worldAt(log, step), log.scenario);
}

std::vector<WorldState> executePlan(WorldState& world, const Trajectory& plan, std::size_t exec_steps,
                                    const Scenario& scenario) {
    if (plan.points.size() < exec_steps) {
        throw ParameterError("plan has " + std::to_string(plan.points.size()) + " waypoints, fewer than " +
                             std::to_string(exec_steps) + " execution steps");
    }
    const auto& c = scenario.config;
    std::vector<WorldState> out;
    out.reserve(exec_steps);
    for (std::size_t k = 0; k < exec_steps; ++k) {
        const Waypoint& target = plan.points[k];
        Waypoint& ego = world.ego;
        const double dv = c.a_max * c.dt;
        double vx = std::clamp((target.px - ego.px) / c.dt, ego.vx - dv, ego.vx + dv);
        vx = std::max(vx, 0.0);
        const double vy = std::clamp((target.py - ego.py) / c.dt, -c.lat_rate_max, c.lat_rate_max);
        Waypoint next = ego;
        next.px = ego.px + vx * c.dt;
        next.py = ego.py + vy * c.dt;
        next.vx = vx;
        next.vy = vy;
        const double speed = std::hypot(vx, vy);
        if (speed > kSteerSpeed) {
            next.cos_h = vx / speed;
            next.sin_h = vy / speed;
        }
        world.ego = next;
        world.step += 1;
        world.signal = signalAt(scenario, world.step);
        pushHistory(world.history, next, c.history_steps);
        out.push_back(world);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Planners and closed loop

ExpertPlanner::ExpertPlanner(const Scenario& scenario, std::size_t horizon) : oracle_(scenario), horizon_(horizon) {}

Trajectory ExpertPlanner::plan(const Observation& obs) const {
    Trajectory t;
    for (std::size_t k = 1; k <= horizon_; ++k) t.points.push_back(oracle_.stateAt(obs.current_step + static_cast<int>(k)));
    return t;
}

PolicyPlanner::PolicyPlanner(std::shared_ptr<const policy::PolicyParams> params, std::size_t history_steps)
    : params_(std::move(params)), history_steps_(history_steps) {}

Trajectory PolicyPlanner::plan(const Observation& obs) const {
    const auto features = policy::featurize(obs, history_steps_);
    const auto out = policy::forward(*params_, features);
    const Matrix& local = out.trajectories[policy::selectMode(out)];
    const Frame frame = Frame::of(obs.current());
    Trajectory t;
    t.points.reserve(local.rows());
    for (std::size_t r = 0; r < local.rows(); ++r) {
        t.points.push_back(frame.toWorld(Waypoint{local(r, kPx), local(r, kPy), local(r, kCos), local(r, kSin),
                                                  local(r, kVx), local(r, kVy)}));
    }
    return t;
}

EpisodeLog closedLoopRollout(const Planner& planner, const Scenario& scenario, std::size_t replan_interval,
                             const RolloutOptions& options) {
    if (replan_interval == 0) throw ParameterError("replan interval must be at least one step");
    const ExpertOracle oracle(scenario);
    EpisodeLog log;
    log.scenario = scenario;
    log.activations = activations(scenario);
    WorldState world = initialWorld(scenario, oracle);
    log.states.push_back(world.ego);
    log.signals.push_back(world.signal);
    const int last = scenario.config.episode_steps - 1;
    if (options.record_observations) log.observations.push_back(observe(world, scenario));
    while (world.step < last) {
        const Observation obs = options.record_observations ? log.observations.back() : observe(world, scenario);
        const Trajectory plan = planner.plan(obs);
        const std::size_t exec = std::min<std::size_t>(replan_interval, static_cast<std::size_t>(last - world.step));
        bool finite = plan.points.size() >= exec;
        for (const auto& p : plan.points) {
            for (double ch : p.channels()) finite = finite && std::isfinite(ch);
        }
        if (!finite) {
            log.truncated = true;
            log.diagnostics = "planner returned a non-finite or short plan at step " + std::to_string(world.step);
            break;
        }
        if (options.record_plans) log.plans.push_back({world.step, plan});
        for (const auto& s : executePlan(world, plan, exec, scenario)) {
            log.states.push_back(s.ego);
            log.signals.push_back(s.signal);
            if (options.record_observations) log.observations.push_back(observe(s, scenario));
        }
    }
    return log;
}

}  // namespace scopekit::sim
