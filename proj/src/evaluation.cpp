#include "scopekit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "scopekit/errors.hpp"

namespace scopekit::eval {

double compositeOf(const DrivingScore& s) {
    return s.no_collision * s.drivable * (0.5 * s.progress + 0.25 * s.comfort + 0.25 * s.speed_compliance);
}

double minClearance(const sim::EpisodeLog& log, const sim::Scenario& scenario) {
    double best = std::numeric_limits<double>::infinity();
    const double ego_r = scenario.config.ego_radius;
    for (std::size_t t = 0; t < log.states.size(); ++t) {
        const auto& ego = log.states[t];
        for (const auto& e : scenario.events) {
            if (e.kind != sim::EventKind::PopupObstacle || e.trigger_step > static_cast<int>(t)) continue;
            const double d = std::hypot(ego.px - e.position.x, ego.py - e.position.y);
            best = std::min(best, d - (e.radius + ego_r));
        }
    }
    return best;
}

namespace {

/// Position of the stop line shown while red at `step`, if any.
const sim::Event* activeStopLine(const sim::Scenario& sc, int step) {
    const sim::Event* line = nullptr;
    for (const auto& e : sc.events) {
        if (e.kind != sim::EventKind::SignalSwitch || e.trigger_step > step) continue;
        line = e.switch_to == SignalColor::Red ? &e : nullptr;
    }
    return line;
}

}  // namespace

DrivingScore scoreEpisode(const sim::EpisodeLog& log, const sim::Scenario& scenario, const sim::EpisodeLog& expert_log,
                          const ScoreLimits& limits) {
    DrivingScore s;
    if (log.truncated || log.states.size() != static_cast<std::size_t>(scenario.config.episode_steps)) {
        s.truncated = true;
        s.diagnostic = log.diagnostics.empty() ? "episode log is incomplete" : log.diagnostics;
        return s;
    }
    if (expert_log.states.empty()) throw DataError("expert log is empty");
    const auto& st = log.states;
    const double dt = scenario.config.dt;

    s.no_collision = minClearance(log, scenario) > 0.0 ? 1.0 : 0.0;
    s.drivable = 1.0;
    for (const auto& w : st) {
        if (std::abs(w.py) > scenario.config.half_width) s.drivable = 0.0;
    }

    const double expert_dist = expert_log.states.back().px - expert_log.states.front().px;
    const double dist = st.back().px - st.front().px;
    s.progress = expert_dist > 0.0 ? std::clamp(dist / expert_dist, 0.0, 1.0) : 1.0;

    std::size_t comfy = 0;
    std::size_t counted = 0;
    double prev_accel = 0.0;
    for (std::size_t t = 1; t < st.size(); ++t) {
        const double accel = (st[t].vx - st[t - 1].vx) / dt;
        bool ok = std::abs(accel) <= limits.comfort_accel;
        if (t >= 2) ok = ok && std::abs((accel - prev_accel) / dt) <= limits.comfort_jerk;
        prev_accel = accel;
        comfy += ok ? 1 : 0;
        ++counted;
    }
    s.comfort = counted ? static_cast<double>(comfy) / static_cast<double>(counted) : 1.0;

    std::size_t lawful = 0;
    for (std::size_t t = 0; t < st.size(); ++t) {
        const double speed = st[t].speed();
        bool ok = speed <= limits.speed_ratio * scenario.v_ref;
        if (const auto* line = activeStopLine(scenario, static_cast<int>(t)); line && st[t].px > line->position.x) {
            ok = ok && speed <= limits.red_crawl_speed;
        }
        lawful += ok ? 1 : 0;
    }
    s.speed_compliance = static_cast<double>(lawful) / static_cast<double>(st.size());
    s.composite = compositeOf(s);
    return s;
}

namespace {

double mean(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

double sampleStd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double sq = 0.0;
    for (double x : v) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

}  // namespace

SummaryRow summarize(const RunScores& run) {
    if (run.scores.empty()) throw DataError("run \"" + run.config + "\" has no scores");
    std::vector<double> comp, nc, dr, pr, cf, sp;
    for (const auto& s : run.scores) {
        comp.push_back(s.composite);
        nc.push_back(s.no_collision);
        dr.push_back(s.drivable);
        pr.push_back(s.progress);
        cf.push_back(s.comfort);
        sp.push_back(s.speed_compliance);
    }
    SummaryRow r;
    r.config = run.config;
    r.episodes = run.scores.size();
    r.mean_composite = mean(comp);
    r.std_composite = sampleStd(comp);
    r.no_collision_rate = mean(nc);
    r.drivable_rate = mean(dr);
    r.mean_progress = mean(pr);
    r.mean_comfort = mean(cf);
    r.mean_speed = mean(sp);
    r.std_progress = sampleStd(pr);
    r.std_comfort = sampleStd(cf);
    r.std_speed = sampleStd(sp);
    return r;
}

Report compareRuns(const std::vector<RunScores>& runs) {
    if (runs.empty()) throw DataError("nothing to compare");
    for (const auto& r : runs) {
        if (r.scenario_seeds.size() != r.scores.size()) {
            throw DataError("run \"" + r.config + "\" has " + std::to_string(r.scores.size()) + " scores for " +
                            std::to_string(r.scenario_seeds.size()) + " scenarios");
        }
        if (r.scenario_seeds != runs.front().scenario_seeds) {
            throw DataError("run \"" + r.config + "\" was evaluated on a different scenario set than \"" +
                            runs.front().config + "\"");
        }
    }
    Report rep;
    for (const auto& r : runs) rep.rows.push_back(summarize(r));
    rep.ranking.resize(rep.rows.size());
    std::iota(rep.ranking.begin(), rep.ranking.end(), std::size_t{0});
    std::stable_sort(rep.ranking.begin(), rep.ranking.end(), [&](std::size_t a, std::size_t b) {
        return rep.rows[a].mean_composite > rep.rows[b].mean_composite;
    });
    for (std::size_t i = 0; i < rep.ranking.size(); ++i) rep.rows[rep.ranking[i]].rank = i + 1;
    return rep;
}

std::string reportCsv(const Report& report) {
    std::string out = "config,mean_composite,std_composite,no_collision_rate,drivable_rate,mean_progress,mean_comfort,mean_speed\n";
    char buf[512];
    for (std::size_t idx : report.ranking) {
        const auto& r = report.rows[idx];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.mean_composite,
                      r.std_composite, r.no_collision_rate, r.drivable_rate, r.mean_progress, r.mean_comfort,
                      r.mean_speed);
        out += r.config + buf;
    }
    return out;
}

}  // namespace scopekit::eval
