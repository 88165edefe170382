#include "scopekit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scopekit/errors.hpp"
#include "scopekit/kernels/kernels.hpp"
#include "scopekit/rng.hpp"
#include "scopekit/wavelet.hpp"

namespace scopekit::policy {

std::string_view decoderName(DetailDecoder d) {
    switch (d) {
        case DetailDecoder::None: return "none";
        case DetailDecoder::Mdd: return "mdd";
        case DetailDecoder::Idd: return "idd";
    }
    return "none";
}

std::string_view targetName(DetailTarget t) { return t == DetailTarget::Dwt ? "dwt" : "dwh"; }

DetailDecoder parseDecoder(std::string_view s) {
    if (s == "none") return DetailDecoder::None;
    if (s == "mdd") return DetailDecoder::Mdd;
    if (s == "idd") return DetailDecoder::Idd;
    throw ConfigError("unknown detail decoder '" + std::string(s) + "' (expected none|mdd|idd)");
}

DetailTarget parseTarget(std::string_view s) {
    if (s == "dwt") return DetailTarget::Dwt;
    if (s == "dwh") return DetailTarget::Dwh;
    throw ConfigError("unknown detail target '" + std::string(s) + "' (expected dwt|dwh)");
}

// ---------------------------------------------------------------------------
// Features

namespace {

constexpr double kHistoryPosScale = 10.0;
constexpr double kSpeedScale = 10.0;
constexpr double kObstacleLonScale = 20.0;
constexpr double kObstacleLatScale = 5.0;
constexpr double kStopLineScale = 50.0;
constexpr double kLaneScale = 4.0;
constexpr double kObstacleBehindLimit = -10.0;
constexpr double kLaneLookahead[] = {0.0, 10.0, 20.0, 40.0};
constexpr std::size_t kTailFeatures = 1 + 4 + 3 + 4;

/// Point on the polyline at arc length `s`, extrapolating past either end.
Vec2 pointAtArcLength(const std::vector<Vec2>& lane, double s) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
        const double seg = std::hypot(lane[i + 1].x - lane[i].x, lane[i + 1].y - lane[i].y);
        if (seg <= 0.0) continue;
        if (s <= acc + seg || i + 2 == lane.size()) {
            const double u = (s - acc) / seg;
            return {lane[i].x + u * (lane[i + 1].x - lane[i].x), lane[i].y + u * (lane[i + 1].y - lane[i].y)};
        }
        acc += seg;
    }
    return lane.empty() ? Vec2{} : lane.front();
}

/// Arc length of the orthogonal projection of p onto the polyline.
double projectArcLength(const std::vector<Vec2>& lane, Vec2 p) {
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
        const double ex = lane[i + 1].x - lane[i].x;
        const double ey = lane[i + 1].y - lane[i].y;
        const double seg2 = ex * ex + ey * ey;
        if (seg2 <= 0.0) continue;
        double u = ((p.x - lane[i].x) * ex + (p.y - lane[i].y) * ey) / seg2;
        const bool first = i == 0;
        const bool last = i + 2 == lane.size();
        if (!first) u = std::max(u, 0.0);
        if (!last) u = std::min(u, 1.0);
        const double qx = lane[i].x + u * ex - p.x;
        const double qy = lane[i].y + u * ey - p.y;
        const double d = qx * qx + qy * qy;
        const double seg = std::sqrt(seg2);
        if (d < best_d) {
            best_d = d;
            best_s = acc + u * seg;
        }
        acc += seg;
    }
    return best_s;
}

}  // namespace

std::size_t featureLength(std::size_t history_steps) { return 4 * history_steps + kTailFeatures; }

std::vector<double> featurize(const Observation& obs, std::size_t history_steps) {
    if (obs.ego_history.empty()) throw DataError("observation without ego history");
    std::vector<double> f;
    f.reserve(featureLength(history_steps));
    const Waypoint& cur = obs.current();
    const Frame frame = Frame::of(cur);

    // History, oldest first, left-padded with the oldest available state.
    const std::size_t have = obs.ego_history.size();
    for (std::size_t i = 0; i < history_steps; ++i) {
        const std::size_t missing = history_steps > have ? history_steps - have : 0;
        const std::size_t src = i < missing ? 0 : i - missing + (have > history_steps ? have - history_steps : 0);
        const Waypoint local = frame.toLocal(obs.ego_history[src]);
        f.push_back(local.px / kHistoryPosScale);
        f.push_back(local.py / kHistoryPosScale);
        f.push_back(std::atan2(local.sin_h, local.cos_h));
        f.push_back(obs.ego_history[src].speed() / kSpeedScale);
    }

    f.push_back(obs.v_ref / kSpeedScale);

    // Nearest obstacle not far behind.
    const ObstacleView* nearest = nullptr;
    double nearest_d = std::numeric_limits<double>::infinity();
    Vec2 nearest_local;
    for (const auto& ob : obs.visible_obstacles) {
        if (ob.first_visible_step > obs.current_step) continue;
        const Vec2 local = frame.toLocal(ob.center);
        if (local.x < kObstacleBehindLimit) continue;
        const double d = std::hypot(local.x, local.y);
        if (d < nearest_d) {
            nearest_d = d;
            nearest = &ob;
            nearest_local = local;
        }
    }
    if (nearest) {
        f.push_back(1.0);
        f.push_back(nearest_local.x / kObstacleLonScale);
        f.push_back(nearest_local.y / kObstacleLatScale);
        f.push_back(nearest->radius);
    } else {
        f.insert(f.end(), {0.0, 0.0, 0.0, 0.0});
    }

    const bool red = obs.signal.color == SignalColor::Red;
    f.push_back(red ? 1.0 : 0.0);
    if (obs.signal.has_stop_line) {
        const double ego_s = projectArcLength(obs.lane, {cur.px, cur.py});
        const double line_s = projectArcLength(obs.lane, obs.signal.stop_line);
        f.push_back(1.0);
        f.push_back(std::clamp((line_s - ego_s) / kStopLineScale, -1.0, 2.0));
    } else {
        f.push_back(0.0);
        f.push_back(0.0);
    }

    const double s0 = obs.lane.size() >= 2 ? projectArcLength(obs.lane, {cur.px, cur.py}) : 0.0;
    for (double ahead : kLaneLookahead) {
        if (obs.lane.size() < 2) {
            f.push_back(0.0);
            continue;
        }
        const Vec2 local = frame.toLocal(pointAtArcLength(obs.lane, s0 + ahead));
        f.push_back(local.y / kLaneScale);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Layout and parameters

void PolicyConfig::validate() const {
    if (feature_dim == 0 || hidden == 0 || future_steps == 0 || mode_count == 0) {
        throw ConfigError("policy dimensions must be positive");
    }
    if (decoder != DetailDecoder::None) {
        if (levels > 16 || future_steps % (std::size_t{1} << levels) != 0) {
            throw ConfigError("future_steps " + std::to_string(future_steps) + " must be divisible by 2^" +
                              std::to_string(levels));
        }
        if (target == DetailTarget::Dwh && dwh_horizon == 0) throw ConfigError("dwh horizon must be positive");
    }
    if (!(position_scale > 0.0) || !(velocity_scale > 0.0)) throw ConfigError("output scales must be positive");
}

ParameterLayout ParameterLayout::build(const PolicyConfig& cfg) {
    ParameterLayout layout;
    std::size_t offset = 0;
    auto dense = [&offset](std::size_t in, std::size_t out) {
        DenseLayer d{in, out, offset, offset + in * out};
        offset += in * out + out;
        return d;
    };
    layout.trunk1 = dense(cfg.feature_dim, cfg.hidden);
    layout.trunk2 = dense(cfg.hidden, cfg.hidden);
    const std::size_t n = cfg.detailLevels();
    if (cfg.decoder == DetailDecoder::Idd) {
        for (std::size_t i = 0; i < n; ++i) layout.refine.push_back(dense(cfg.hidden, cfg.hidden));
    }
    layout.trajectory_head = dense(cfg.hidden, cfg.mode_count * cfg.future_steps * kChannels);
    layout.score_head = dense(cfg.hidden, cfg.mode_count);
    if (n > 0) {
        layout.approx_head = dense(cfg.hidden, cfg.future_steps * 2);
        for (std::size_t i = 0; i < n; ++i) layout.detail_heads.push_back(dense(cfg.hidden, cfg.future_steps * 2));
    }
    layout.total = offset;
    return layout;
}

PolicyParams PolicyParams::zeros(const PolicyConfig& cfg) {
    cfg.validate();
    PolicyParams p;
    p.config = cfg;
    p.layout = ParameterLayout::build(cfg);
    p.values.assign(p.layout.total, 0.0);
    return p;
}

PolicyParams PolicyParams::initialize(const PolicyConfig& cfg, std::uint64_t seed) {
    PolicyParams p = zeros(cfg);
    Rng rng(subSeed(seed, "policy-init"));
    auto fill = [&](const DenseLayer& d) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d.in));
        for (std::size_t i = 0; i < d.in * d.out; ++i) p.values[d.weight_offset + i] = rng.uniform(-bound, bound);
    };
    fill(p.layout.trunk1);
    fill(p.layout.trunk2);
    for (const auto& r : p.layout.refine) fill(r);
    return p;
}

bool PolicyParams::allFinite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::size_t approxStride(const PolicyConfig& cfg) { return std::size_t{1} << cfg.levels; }

std::size_t detailStride(const PolicyConfig& cfg, std::size_t level) {
    // Head l is compared with pyramid level l (1-based). A DWT detail at level l
    // has T / 2^l samples; a DWH level samples the source every 2^(l-1) steps.
    return cfg.target == DetailTarget::Dwt ? (std::size_t{1} << level) : (std::size_t{1} << (level - 1));
}

std::size_t detailLength(const PolicyConfig& cfg, std::size_t level) {
    const std::size_t full = cfg.future_steps / detailStride(cfg, level);
    return cfg.target == DetailTarget::Dwt ? full : std::min(full, cfg.dwh_horizon);
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void denseForward(const DenseLayer& d, const std::vector<double>& params, const double* x, double* y) {
    kernels::active().gemv(params.data() + d.weight_offset, x, params.data() + d.bias_offset, y, d.out, d.in);
}

/// Accumulates parameter gradients of a dense layer and, if gx is given, input gradients.
void denseBackward(const DenseLayer& d, const std::vector<double>& params, const double* x, const double* gy,
                   double* gparams, double* gx) {
    const auto& k = kernels::active();
    k.outerAcc(gy, x, gparams + d.weight_offset, d.out, d.in);
    k.axpy(1.0, gy, gparams + d.bias_offset, d.out);
    if (gx) k.gemvTransposeAcc(params.data() + d.weight_offset, gy, gx, d.out, d.in);
}

double channelScale(const PolicyConfig& cfg, std::size_t c) {
    switch (c) {
        case kPx:
        case kPy: return cfg.position_scale;
        case kVx:
        case kVy: return cfg.velocity_scale;
        default: return 1.0;
    }
}

double approxScale(const PolicyConfig& cfg) {
    // A DWT approximation at level N sums 2^N samples under the sum/difference convention.
    return cfg.target == DetailTarget::Dwt ? cfg.position_scale * static_cast<double>(approxStride(cfg))
                                           : cfg.position_scale;
}

Matrix scaledPositions(const std::vector<double>& raw, double scale, std::size_t steps) {
    Matrix m(steps, 2);
    for (std::size_t i = 0; i < steps * 2; ++i) m.data()[i] = scale * raw[i];
    return m;
}

}  // namespace

PolicyOutput forward(const PolicyParams& params, std::span<const double> features, ForwardCache* cache) {
    const auto& cfg = params.config;
    const auto& lay = params.layout;
    if (features.size() != cfg.feature_dim) {
        throw ShapeError("feature length " + std::to_string(features.size()) + " does not match policy input " +
                         std::to_string(cfg.feature_dim));
    }
    const auto& w = params.values;
    std::vector<double> h1(cfg.hidden);
    denseForward(lay.trunk1, w, features.data(), h1.data());
    for (auto& v : h1) v = std::tanh(v);
    std::vector<double> h2(cfg.hidden);
    denseForward(lay.trunk2, w, h1.data(), h2.data());
    for (auto& v : h2) v = std::tanh(v);

    std::vector<std::vector<double>> hidden{h2};
    std::vector<std::vector<double>> refine_act;
    for (const auto& block : lay.refine) {
        const auto& prev = hidden.back();
        std::vector<double> act(cfg.hidden);
        denseForward(block, w, prev.data(), act.data());
        std::vector<double> next(cfg.hidden);
        for (std::size_t i = 0; i < cfg.hidden; ++i) {
            act[i] = std::tanh(act[i]);
            next[i] = prev[i] + act[i];
        }
        refine_act.push_back(std::move(act));
        hidden.push_back(std::move(next));
    }
    const auto& final_hidden = hidden.back();

    PolicyOutput out;
    const std::size_t steps = cfg.future_steps;
    std::vector<double> raw(lay.trajectory_head.out);
    denseForward(lay.trajectory_head, w, final_hidden.data(), raw.data());
    for (std::size_t m = 0; m < cfg.mode_count; ++m) {
        Matrix traj(steps, kChannels);
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t c = 0; c < kChannels; ++c) {
                traj(t, c) = channelScale(cfg, c) * raw[(m * steps + t) * kChannels + c];
            }
        }
        out.trajectories.push_back(std::move(traj));
    }
    out.scores.resize(cfg.mode_count);
    denseForward(lay.score_head, w, final_hidden.data(), out.scores.data());

    const std::size_t n = cfg.detailLevels();
    if (n > 0) {
        const bool idd = cfg.decoder == DetailDecoder::Idd;
        std::vector<double> buf(steps * 2);
        denseForward(lay.approx_head, w, (idd ? hidden.front() : final_hidden).data(), buf.data());
        out.approx_raw = scaledPositions(buf, approxScale(cfg), steps);
        out.approx_pred = wavelet::downsample(out.approx_raw, approxStride(cfg));
        for (std::size_t l = 1; l <= n; ++l) {
            denseForward(lay.detail_heads[l - 1], w, (idd ? hidden[l] : final_hidden).data(), buf.data());
            out.details_raw.push_back(scaledPositions(buf, cfg.position_scale, steps));
            out.detail_preds.push_back(
                wavelet::downsample(out.details_raw.back(), detailStride(cfg, l), detailLength(cfg, l)));
        }
    }

    if (cache) {
        cache->features.assign(features.begin(), features.end());
        cache->h1 = std::move(h1);
        cache->hidden = std::move(hidden);
        cache->refine_act = std::move(refine_act);
    }
    return out;
}

OutputGradient OutputGradient::zerosLike(const PolicyOutput& out) {
    OutputGradient g;
    for (const auto& t : out.trajectories) g.trajectories.emplace_back(t.rows(), t.cols());
    g.scores.assign(out.scores.size(), 0.0);
    g.approx_pred = Matrix(out.approx_pred.rows(), out.approx_pred.cols());
    for (const auto& d : out.detail_preds) g.detail_preds.emplace_back(d.rows(), d.cols());
    return g;
}

void backward(const PolicyParams& params, const ForwardCache& cache, const OutputGradient& up,
              std::span<double> param_grad) {
    const auto& cfg = params.config;
    const auto& lay = params.layout;
    const auto& w = params.values;
    if (param_grad.size() != params.count()) throw ShapeError("parameter gradient size mismatch");
    double* gp = param_grad.data();
    const std::size_t steps = cfg.future_steps;
    const std::size_t n = cfg.detailLevels();
    const bool idd = cfg.decoder == DetailDecoder::Idd;

    // One gradient accumulator per recorded hidden state.
    std::vector<std::vector<double>> g_hidden(cache.hidden.size(), std::vector<double>(cfg.hidden, 0.0));
    auto& g_final = g_hidden.back();
    const auto& final_hidden = cache.hidden.back();

    if (up.trajectories.size() != cfg.mode_count || up.scores.size() != cfg.mode_count) {
        throw ShapeError("upstream gradient does not match mode count");
    }
    std::vector<double> g_raw(lay.trajectory_head.out);
    for (std::size_t m = 0; m < cfg.mode_count; ++m) {
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t c = 0; c < kChannels; ++c) {
                g_raw[(m * steps + t) * kChannels + c] = channelScale(cfg, c) * up.trajectories[m](t, c);
            }
        }
    }
    denseBackward(lay.trajectory_head, w, final_hidden.data(), g_raw.data(), gp, g_final.data());
    denseBackward(lay.score_head, w, final_hidden.data(), up.scores.data(), gp, g_final.data());

    if (n > 0) {
        std::vector<double> g_buf(steps * 2);
        auto scatter = [&](const Matrix& g_pred, std::size_t stride, double scale) {
            std::fill(g_buf.begin(), g_buf.end(), 0.0);
            for (std::size_t i = 0; i < g_pred.rows(); ++i) {
                g_buf[i * stride * 2] = scale * g_pred(i, 0);
                g_buf[i * stride * 2 + 1] = scale * g_pred(i, 1);
            }
        };
        scatter(up.approx_pred, approxStride(cfg), approxScale(cfg));
        const std::size_t approx_src = idd ? 0 : cache.hidden.size() - 1;
        denseBackward(lay.approx_head, w, cache.hidden[approx_src].data(), g_buf.data(), gp,
                      g_hidden[approx_src].data());
        for (std::size_t l = 1; l <= n; ++l) {
            scatter(up.detail_preds[l - 1], detailStride(cfg, l), cfg.position_scale);
            const std::size_t src = idd ? l : cache.hidden.size() - 1;
            denseBackward(lay.detail_heads[l - 1], w, cache.hidden[src].data(), g_buf.data(), gp,
                          g_hidden[src].data());
        }
    }

    // Residual refinement blocks, last to first: h_i = h_{i-1} + tanh(R_i h_{i-1} + c_i).
    std::vector<double> g_pre(cfg.hidden);
    for (std::size_t i = lay.refine.size(); i >= 1; --i) {
        const auto& h_prev = cache.hidden[i - 1];
        const auto& act_i = cache.refine_act[i - 1];
        for (std::size_t j = 0; j < cfg.hidden; ++j) {
            const double act = act_i[j];
            g_pre[j] = g_hidden[i][j] * (1.0 - act * act);
            g_hidden[i - 1][j] += g_hidden[i][j];
        }
        denseBackward(lay.refine[i - 1], w, h_prev.data(), g_pre.data(), gp, g_hidden[i - 1].data());
    }

    const auto& h2 = cache.hidden.front();
    std::vector<double> g_pre2(cfg.hidden);
    for (std::size_t j = 0; j < cfg.hidden; ++j) g_pre2[j] = g_hidden.front()[j] * (1.0 - h2[j] * h2[j]);
    std::vector<double> g_h1(cfg.hidden, 0.0);
    denseBackward(lay.trunk2, w, cache.h1.data(), g_pre2.data(), gp, g_h1.data());
    for (std::size_t j = 0; j < cfg.hidden; ++j) g_h1[j] *= 1.0 - cache.h1[j] * cache.h1[j];
    denseBackward(lay.trunk1, w, cache.features.data(), g_h1.data(), gp, nullptr);
}

std::size_t selectMode(const PolicyOutput& out) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < out.scores.size(); ++m) {
        if (out.scores[m] > out.scores[best]) best = m;
    }
    return best;
}

}  // namespace scopekit::policy
