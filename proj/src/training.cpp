#include "scopekit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "scopekit/errors.hpp"
#include "scopekit/kernels/kernels.hpp"
#include "scopekit/rng.hpp"
#include "scopekit/wavelet.hpp"

namespace scopekit::train {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset

Dataset buildDataset(const std::vector<sim::EpisodeLog>& episodes, std::size_t stride, std::size_t history_steps,
                     std::size_t future_steps) {
    if (episodes.empty()) throw DataError("cannot build a dataset from zero episodes");
    if (stride == 0) throw ParameterError("dataset stride must be positive");
    if (future_steps == 0 || history_steps == 0) throw ParameterError("history and future lengths must be positive");
    Dataset data;
    data.history_steps = history_steps;
    data.future_steps = future_steps;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
        const auto& log = episodes[e];
        if (log.truncated) throw DataError("episode " + std::to_string(e) + " is truncated; expert logs only");
        const std::size_t n = log.states.size();
        for (std::size_t t = 0; t + future_steps < n; t += stride) {
            const Observation obs = sim::observationAt(log, static_cast<int>(t));
            Sample s;
            s.episode = e;
            s.step = static_cast<int>(t);
            s.features = policy::featurize(obs, history_steps);
            const Frame frame = Frame::of(log.states[t]);
            s.target = Matrix(future_steps, kChannels);
            for (std::size_t k = 0; k < future_steps; ++k) {
                const auto ch = frame.toLocal(log.states[t + 1 + k]).channels();
                for (std::size_t c = 0; c < kChannels; ++c) s.target(k, c) = ch[c];
            }
            for (const auto& o : obs.visible_obstacles) s.obstacles.push_back({frame.toLocal(o.center), o.radius});
            data.samples.push_back(std::move(s));
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Config

std::string_view weightSchemeName(WeightScheme s) {
    switch (s) {
        case WeightScheme::Baseline: return "baseline";
        case WeightScheme::Truncation: return "truncation";
        case WeightScheme::TimeDecay: return "timedecay";
        case WeightScheme::TimeNorm: return "timenorm";
    }
    return "?";
}

void TrainConfig::validate() const {
    const std::size_t horizon = policy.future_steps;
    if (scheme == WeightScheme::Truncation && (t_cut < 1 || t_cut > horizon)) {
        throw ConfigError("truncation t_cut must lie in [1, " + std::to_string(horizon) + "]");
    }
    if (scheme == WeightScheme::TimeDecay) {
        try {
            gp.validate();
        } catch (const ParameterError& e) {
            throw ConfigError(std::string("timedecay: ") + e.what());
        }
    }
    if (!(eps_guard > 0.0)) throw ConfigError("timenorm eps_guard must be positive");
    if (dataset_stride == 0) throw ConfigError("dataset stride must be positive");
    if (history_steps == 0) throw ConfigError("history_steps must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0,1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
    if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be non-negative");
    if (detailEnabled() && ds_horizon == 0) throw ConfigError("detail horizon must be positive");
    if (detailEnabled() && policy.levels == 0) throw ConfigError("detail decoder needs at least one level");
    if (!level_horizons.empty() && (!detailEnabled() || level_horizons.size() != policy.levels)) {
        throw ConfigError("level_horizons needs one entry per detail level");
    }
    policyConfigFor(*this).validate();
}

namespace {

void checkKeys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        const json& v = j.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
                throw ConfigError(where + "." + key + ": expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
        }
        out = v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace

TrainConfig parseTrainConfig(const json& j) {
    TrainConfig cfg;
    checkKeys(j, {"name", "seed", "dataset", "model", "optimizer", "loss"}, "config");
    read(j, "name", cfg.name, "config");
    read(j, "seed", cfg.seed, "config");
    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        checkKeys(d, {"stride"}, "dataset");
        read(d, "stride", cfg.dataset_stride, "dataset");
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        checkKeys(m, {"hidden", "mode_count", "levels", "future_steps", "history_steps", "position_scale",
                      "velocity_scale"},
                  "model");
        read(m, "hidden", cfg.policy.hidden, "model");
        read(m, "mode_count", cfg.policy.mode_count, "model");
        read(m, "levels", cfg.policy.levels, "model");
        read(m, "future_steps", cfg.policy.future_steps, "model");
        read(m, "history_steps", cfg.history_steps, "model");
        read(m, "position_scale", cfg.policy.position_scale, "model");
        read(m, "velocity_scale", cfg.policy.velocity_scale, "model");
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        checkKeys(o, {"lr", "beta1", "beta2", "epsilon", "batch_size", "epochs", "warmup_epochs", "max_grad_norm"},
                  "optimizer");
        read(o, "lr", cfg.lr, "optimizer");
        read(o, "beta1", cfg.beta1, "optimizer");
        read(o, "beta2", cfg.beta2, "optimizer");
        read(o, "epsilon", cfg.adam_epsilon, "optimizer");
        read(o, "batch_size", cfg.batch_size, "optimizer");
        read(o, "epochs", cfg.epochs, "optimizer");
        read(o, "warmup_epochs", cfg.warmup_epochs, "optimizer");
        read(o, "max_grad_norm", cfg.max_grad_norm, "optimizer");
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        checkKeys(l, {"truncation", "timedecay", "timenorm", "detail", "terms", "coefficients", "footprint"}, "loss");
        std::vector<std::string> enabled;
        if (l.contains("truncation")) {
            const auto& s = l["truncation"];
            checkKeys(s, {"enabled", "t_cut"}, "loss.truncation");
            bool on = false;
            read(s, "enabled", on, "loss.truncation");
            read(s, "t_cut", cfg.t_cut, "loss.truncation");
            if (on) {
                enabled.push_back("truncation");
                cfg.scheme = WeightScheme::Truncation;
            }
        }
        if (l.contains("timedecay")) {
            const auto& s = l["timedecay"];
            checkKeys(s, {"enabled", "length", "order", "sigma_f2", "t0"}, "loss.timedecay");
            bool on = false;
            read(s, "enabled", on, "loss.timedecay");
            read(s, "length", cfg.gp.length, "loss.timedecay");
            read(s, "order", cfg.gp.order, "loss.timedecay");
            read(s, "sigma_f2", cfg.gp.sigma_f2, "loss.timedecay");
            read(s, "t0", cfg.gp.t0, "loss.timedecay");
            if (on) {
                enabled.push_back("timedecay");
                cfg.scheme = WeightScheme::TimeDecay;
            }
        }
        if (l.contains("timenorm")) {
            const auto& s = l["timenorm"];
            checkKeys(s, {"enabled", "eps_guard", "stop_gradient"}, "loss.timenorm");
            bool on = false;
            read(s, "enabled", on, "loss.timenorm");
            read(s, "eps_guard", cfg.eps_guard, "loss.timenorm");
            read(s, "stop_gradient", cfg.timenorm_stop_gradient, "loss.timenorm");
            if (on) {
                enabled.push_back("timenorm");
                cfg.scheme = WeightScheme::TimeNorm;
            }
        }
        if (enabled.size() > 1) {
            std::string names;
            for (const auto& n : enabled) names += (names.empty() ? "" : ", ") + n;
            throw ConfigError("weight schemes are mutually exclusive, but several are enabled: " + names);
        }
        if (l.contains("detail")) {
            const auto& s = l["detail"];
            checkKeys(s, {"decoder", "target", "horizon", "level_horizons"}, "loss.detail");
            std::string decoder = "none";
            std::string target = "dwt";
            read(s, "decoder", decoder, "loss.detail");
            read(s, "target", target, "loss.detail");
            cfg.policy.decoder = policy::parseDecoder(decoder);
            cfg.policy.target = policy::parseTarget(target);
            read(s, "horizon", cfg.ds_horizon, "loss.detail");
            read(s, "level_horizons", cfg.level_horizons, "loss.detail");
        }
        if (l.contains("terms")) {
            const auto& s = l["terms"];
            checkKeys(s, {"reg", "cls", "col"}, "loss.terms");
            read(s, "reg", cfg.terms.reg, "loss.terms");
            read(s, "cls", cfg.terms.cls, "loss.terms");
            read(s, "col", cfg.terms.col, "loss.terms");
        }
        if (l.contains("coefficients")) {
            const auto& s = l["coefficients"];
            checkKeys(s, {"reg", "cls", "col", "ds"}, "loss.coefficients");
            read(s, "reg", cfg.coefficients.reg, "loss.coefficients");
            read(s, "cls", cfg.coefficients.cls, "loss.coefficients");
            read(s, "col", cfg.coefficients.col, "loss.coefficients");
            read(s, "ds", cfg.coefficients.ds, "loss.coefficients");
        }
        if (l.contains("footprint")) {
            const auto& s = l["footprint"];
            checkKeys(s, {"offsets", "radius", "tolerance"}, "loss.footprint");
            read(s, "offsets", cfg.footprint.offsets, "loss.footprint");
            read(s, "radius", cfg.footprint.radius, "loss.footprint");
            read(s, "tolerance", cfg.footprint.tolerance, "loss.footprint");
        }
    }
    cfg.validate();
    return cfg;
}

TrainConfig parseTrainConfig(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parseTrainConfig(j);
}

json toJson(const TrainConfig& c) {
    json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["dataset"] = {{"stride", c.dataset_stride}};
    j["model"] = {{"hidden", c.policy.hidden},
                  {"mode_count", c.policy.mode_count},
                  {"levels", c.policy.levels},
                  {"future_steps", c.policy.future_steps},
                  {"history_steps", c.history_steps},
                  {"position_scale", c.policy.position_scale},
                  {"velocity_scale", c.policy.velocity_scale}};
    j["optimizer"] = {{"lr", c.lr},
                      {"beta1", c.beta1},
                      {"beta2", c.beta2},
                      {"epsilon", c.adam_epsilon},
                      {"batch_size", c.batch_size},
                      {"epochs", c.epochs},
                      {"warmup_epochs", c.warmup_epochs},
                      {"max_grad_norm", c.max_grad_norm}};
    json loss;
    loss["truncation"] = {{"enabled", c.scheme == WeightScheme::Truncation}, {"t_cut", c.t_cut}};
    loss["timedecay"] = {{"enabled", c.scheme == WeightScheme::TimeDecay},
                         {"length", c.gp.length},
                         {"order", c.gp.order},
                         {"sigma_f2", c.gp.sigma_f2},
                         {"t0", c.gp.t0}};
    loss["timenorm"] = {{"enabled", c.scheme == WeightScheme::TimeNorm},
                        {"eps_guard", c.eps_guard},
                        {"stop_gradient", c.timenorm_stop_gradient}};
    loss["detail"] = {{"decoder", policy::decoderName(c.policy.decoder)},
                      {"target", policy::targetName(c.policy.target)},
                      {"horizon", c.ds_horizon},
                      {"level_horizons", c.level_horizons}};
    loss["terms"] = {{"reg", c.terms.reg}, {"cls", c.terms.cls}, {"col", c.terms.col}};
    loss["coefficients"] = {
        {"reg", c.coefficients.reg}, {"cls", c.coefficients.cls}, {"col", c.coefficients.col}, {"ds", c.coefficients.ds}};
    loss["footprint"] = {
        {"offsets", c.footprint.offsets}, {"radius", c.footprint.radius}, {"tolerance", c.footprint.tolerance}};
    j["loss"] = loss;
    return j;
}

std::uint64_t configHash(const TrainConfig& cfg) { return fnv1a64(toJson(cfg).dump()); }

std::string configSchema() {
    return R"(Training config (JSON object, every key optional, unknown keys rejected):
  name            string   run label used in reports            (default "baseline")
  seed            integer  root seed for init and shuffling      (default 1)
  dataset.stride  integer  steps between samples in an episode   (default 10)
  model.hidden, model.mode_count, model.levels, model.future_steps, model.history_steps,
  model.position_scale, model.velocity_scale                     (64, 3, 3, 80, 21, 20, 10)
  optimizer.lr, .beta1, .beta2, .epsilon                         (1e-3, 0.9, 0.999, 1e-8)
  optimizer.batch_size, .epochs, .warmup_epochs, .max_grad_norm  (32, 25, 3, 0 = no clipping)
  loss.truncation {enabled, t_cut}                               (false, 20)
  loss.timedecay  {enabled, length, order, sigma_f2, t0}         (false, e, 1, 1, 0)
  loss.timenorm   {enabled, eps_guard, stop_gradient}            (false, 1e-6, true)
    at most one of truncation / timedecay / timenorm may be enabled
  loss.detail     {decoder: none|mdd|idd, target: dwt|dwh, horizon, level_horizons: [..]}
  loss.terms      {reg, cls, col}                                (all true)
  loss.coefficients {reg, cls, col, ds}                          (all 1)
  loss.footprint  {offsets: [..], radius, tolerance}             ([-1, 1], 1, 0.1)
)";
}

policy::PolicyConfig policyConfigFor(const TrainConfig& cfg) {
    policy::PolicyConfig p = cfg.policy;
    p.feature_dim = policy::featureLength(cfg.history_steps);
    p.dwh_horizon = cfg.ds_horizon;
    return p;
}

// ---------------------------------------------------------------------------
// Losses over a batch

losses::ScopeComponents scopeTargets(const TrainConfig& cfg, const Matrix& target) {
    const Matrix pos = positionChannels(target);
    const std::size_t n = cfg.policy.levels;
    if (cfg.policy.target == policy::DetailTarget::Dwt) return losses::componentsOf(wavelet::decompose(pos, n));
    return losses::componentsOf(wavelet::dwhDecompose(pos, n, cfg.ds_horizon),
                                wavelet::downsample(pos, std::size_t{1} << n));
}

std::vector<std::size_t> scopeMasks(const TrainConfig& cfg, const losses::ScopeComponents& target) {
    if (!cfg.level_horizons.empty()) return cfg.level_horizons;
    if (cfg.policy.target == policy::DetailTarget::Dwt) return losses::horizonMasks(cfg.ds_horizon, target);
    std::vector<std::size_t> full;
    for (const auto& d : target.details) full.push_back(d.rows());
    return full;
}

std::size_t closestModeStep(const TrainConfig&, std::span<const double> weights) {
    for (std::size_t t = weights.size(); t >= 1; --t) {
        if (weights[t - 1] != 0.0) return t - 1;
    }
    return weights.empty() ? 0 : weights.size() - 1;
}

namespace {

std::vector<double> staticWeights(const TrainConfig& cfg, std::size_t horizon) {
    switch (cfg.scheme) {
        case WeightScheme::Truncation: return weights::truncationWeights(cfg.t_cut, horizon).weights;
        case WeightScheme::TimeDecay: return weights::decayWeights(horizon, cfg.gp).weights;
        case WeightScheme::Baseline:
        case WeightScheme::TimeNorm: return weights::uniformWeights(horizon).weights;
    }
    return {};
}

void addScaled(Matrix& dst, const Matrix& src, double k) {
    for (std::size_t i = 0; i < dst.flat().size(); ++i) dst.data()[i] += k * src.data()[i];
}

}  // namespace

BatchResult batchLoss(const policy::PolicyParams& params, const TrainConfig& cfg,
                      std::span<const Sample* const> batch, const BatchOptions& options) {
    const std::size_t b_count = batch.size();
    if (b_count == 0) throw ParameterError("empty batch");
    const std::size_t horizon = params.config.future_steps;
    const bool timenorm = cfg.scheme == WeightScheme::TimeNorm;
    const bool detail = params.config.decoder != policy::DetailDecoder::None;

    std::vector<policy::PolicyOutput> outs(b_count);
    std::vector<policy::ForwardCache> caches(b_count);
    for (std::size_t b = 0; b < b_count; ++b) {
        if (batch[b]->target.rows() != horizon) throw ShapeError("sample horizon does not match the policy");
        outs[b] = policy::forward(params, batch[b]->features, options.want_gradient ? &caches[b] : nullptr);
    }

    BatchResult res;
    if (options.frozen_weights) {
        if (options.frozen_weights->size() != horizon) throw ShapeError("frozen weights length mismatch");
        res.weights = *options.frozen_weights;
    } else {
        res.weights = staticWeights(cfg, horizon);
    }
    const std::size_t pick_step = closestModeStep(cfg, res.weights);

    Matrix step_losses(b_count, horizon);
    for (std::size_t b = 0; b < b_count; ++b) {
        res.closest.push_back(losses::closestMode(outs[b].trajectories, batch[b]->target, pick_step));
        const auto per_step = losses::perStepRegression(outs[b].trajectories[res.closest[b]], batch[b]->target);
        for (std::size_t t = 0; t < horizon; ++t) step_losses(b, t) = per_step[t];
    }
    std::vector<bool> frozen_column(horizon, false);
    if (timenorm && !options.frozen_weights) {
        res.weights = weights::timenormWeights(step_losses, cfg.eps_guard).weights;
        if (!cfg.timenorm_stop_gradient) {
            // d/dL of mean_b(L_bt) / mean_b(L_bt) vanishes wherever the guard is inactive
            for (std::size_t t = 0; t < horizon; ++t) frozen_column[t] = res.weights[t] < 1.0 / cfg.eps_guard;
        }
    }

    losses::LossTerms terms = cfg.terms;
    terms.ds = detail;
    const auto& k = cfg.coefficients;
    const double inv_b = 1.0 / static_cast<double>(b_count);

    losses::LossBreakdown sum;
    sum.per_step_reg.assign(horizon, 0.0);
    if (options.want_gradient) res.gradient.assign(params.count(), 0.0);

    for (std::size_t b = 0; b < b_count; ++b) {
        const Sample& s = *batch[b];
        const auto& out = outs[b];
        const std::size_t m = res.closest[b];
        const Matrix& traj = out.trajectories[m];
        const bool g = options.want_gradient;

        Matrix g_reg;
        const auto reg = losses::weightedRegressionLoss(traj, s.target, res.weights, g ? &g_reg : nullptr);
        std::vector<double> g_cls;
        const double cls = losses::modeScoreLoss(out.scores, m, g ? &g_cls : nullptr);
        Matrix g_col;
        const double col = losses::trajectoryCollisionLoss(traj, s.obstacles, cfg.footprint, g ? &g_col : nullptr);
        double ds = 0.0;
        losses::ScopeComponents g_ds;
        if (detail) {
            const auto target = scopeTargets(cfg, s.target);
            const losses::ScopeComponents pred{out.approx_pred, out.detail_preds};
            ds = losses::scopeLoss(pred, target, scopeMasks(cfg, target), g ? &g_ds : nullptr);
        }
        sum.reg += reg.value;
        sum.cls += cls;
        sum.col += col;
        sum.ds += ds;
        for (std::size_t t = 0; t < horizon; ++t) sum.per_step_reg[t] += step_losses(b, t);

        if (!g) continue;
        auto up = policy::OutputGradient::zerosLike(out);
        if (terms.reg) {
            for (std::size_t t = 0; t < horizon; ++t) {
                if (!frozen_column[t]) continue;
                for (std::size_t c = 0; c < kChannels; ++c) g_reg(t, c) = 0.0;
            }
            addScaled(up.trajectories[m], g_reg, k.reg * inv_b);
        }
        if (terms.col) addScaled(up.trajectories[m], g_col, k.col * inv_b);
        if (terms.cls) {
            for (std::size_t i = 0; i < g_cls.size(); ++i) up.scores[i] = k.cls * inv_b * g_cls[i];
        }
        if (detail) {
            addScaled(up.approx_pred, g_ds.approx, k.ds * inv_b);
            for (std::size_t l = 0; l < g_ds.details.size(); ++l) addScaled(up.detail_preds[l], g_ds.details[l], k.ds * inv_b);
        }
        policy::backward(params, caches[b], up, res.gradient);
    }

    losses::LossBreakdown parts;
    parts.reg = sum.reg * inv_b;
    parts.cls = sum.cls * inv_b;
    parts.col = sum.col * inv_b;
    parts.ds = sum.ds * inv_b;
    parts.per_step_reg = sum.per_step_reg;
    for (double& v : parts.per_step_reg) v *= inv_b;
    res.loss = losses::totalLoss(parts, terms, k);
    return res;
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<std::size_t> epochOrder(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(subSeed(seed, "shuffle", epoch));
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

TrainResult trainRun(const TrainConfig& cfg, const Dataset& data, const std::function<void(const LogRow&)>& on_step) {
    cfg.validate();
    if (data.samples.empty()) throw DataError("training dataset is empty");
    if (cfg.batch_size > data.size()) {
        throw ParameterError("batch size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                             std::to_string(data.size()));
    }
    if (data.history_steps != cfg.history_steps || data.future_steps != cfg.policy.future_steps) {
        throw ConfigError("dataset horizons do not match the config");
    }
    TrainResult res;
    res.params = policy::PolicyParams::initialize(policyConfigFor(cfg), cfg.seed);
    const std::size_t n_params = res.params.count();
    std::vector<double> m(n_params, 0.0);
    std::vector<double> v(n_params, 0.0);
    std::vector<double> backup;

    const std::size_t per_epoch = data.size() / cfg.batch_size;
    const double warm_steps = static_cast<double>(cfg.warmup_epochs * per_epoch);
    const auto& kern = kernels::active();
    std::vector<const Sample*> batch(cfg.batch_size);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epochOrder(cfg.seed, epoch, data.size());
        for (std::size_t k = 0; k < per_epoch; ++k) {
            for (std::size_t i = 0; i < cfg.batch_size; ++i) batch[i] = &data.samples[order[k * cfg.batch_size + i]];
            auto br = batchLoss(res.params, cfg, batch);
            bool finite = std::isfinite(br.loss.total);
            for (double g : br.gradient) finite = finite && std::isfinite(g);
            if (!finite) {
                res.aborted = true;
                res.diagnostics = "non-finite loss at step " + std::to_string(res.steps);
                return res;
            }
            if (cfg.max_grad_norm > 0.0) {
                const double norm = std::sqrt(kern.dot(br.gradient.data(), br.gradient.data(), n_params));
                if (norm > cfg.max_grad_norm) {
                    const double scale = cfg.max_grad_norm / norm;
                    for (double& g : br.gradient) g *= scale;
                }
            }
            const double step = static_cast<double>(res.steps + 1);
            const double ramp = warm_steps > 0.0 ? std::min(1.0, step / warm_steps) : 1.0;
            kernels::AdamStep a;
            a.lr = cfg.lr * ramp / (1.0 - std::pow(cfg.beta1, step));
            a.beta1 = cfg.beta1;
            a.beta2 = cfg.beta2;
            a.epsilon = cfg.adam_epsilon;
            a.bias2_sqrt = std::sqrt(1.0 - std::pow(cfg.beta2, step));
            backup = res.params.values;
            kern.adamUpdate(res.params.values.data(), m.data(), v.data(), br.gradient.data(), n_params, a);
            if (!res.params.allFinite()) {
                res.params.values = std::move(backup);
                res.aborted = true;
                res.diagnostics = "non-finite parameters after step " + std::to_string(res.steps + 1);
                return res;
            }
            res.steps += 1;
            LogRow row{res.steps, std::move(br.loss)};
            if (on_step) on_step(row);
            res.log.push_back(std::move(row));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "scopekit-checkpoint";

json policyConfigJson(const policy::PolicyConfig& p) {
    return {{"feature_dim", p.feature_dim},       {"hidden", p.hidden},
            {"future_steps", p.future_steps},     {"mode_count", p.mode_count},
            {"levels", p.levels},                 {"decoder", policy::decoderName(p.decoder)},
            {"target", policy::targetName(p.target)}, {"dwh_horizon", p.dwh_horizon},
            {"position_scale", p.position_scale}, {"velocity_scale", p.velocity_scale}};
}

policy::PolicyConfig policyConfigFromJson(const json& j) {
    policy::PolicyConfig p;
    p.feature_dim = j.at("feature_dim").get<std::size_t>();
    p.hidden = j.at("hidden").get<std::size_t>();
    p.future_steps = j.at("future_steps").get<std::size_t>();
    p.mode_count = j.at("mode_count").get<std::size_t>();
    p.levels = j.at("levels").get<std::size_t>();
    p.decoder = policy::parseDecoder(j.at("decoder").get<std::string>());
    p.target = policy::parseTarget(j.at("target").get<std::string>());
    p.dwh_horizon = j.at("dwh_horizon").get<std::size_t>();
    p.position_scale = j.at("position_scale").get<double>();
    p.velocity_scale = j.at("velocity_scale").get<double>();
    return p;
}

}  // namespace

std::string serializeCheckpoint(const Checkpoint& ck) {
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["kind"] = ck.kind;
    j["name"] = ck.name;
    j["seed"] = ck.seed;
    j["step"] = ck.step;
    if (ck.config) j["config"] = toJson(*ck.config);
    if (ck.params) {
        j["policy"] = policyConfigJson(ck.params->config);
        j["parameter_count"] = ck.params->count();
        j["parameters"] = ck.params->values;
    }
    return j.dump(1) + "\n";
}

Checkpoint parseCheckpoint(const std::string& text) {
    Checkpoint ck;
    try {
        const json j = json::parse(text);
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw DataError("not a scopekit checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
        ck.kind = j.at("kind").get<std::string>();
        ck.name = j.value("name", std::string{});
        ck.seed = j.value("seed", std::uint64_t{0});
        ck.step = j.value("step", std::size_t{0});
        if (ck.kind == "expert") return ck;
        if (ck.kind != "policy") throw DataError("unknown checkpoint kind \"" + ck.kind + "\"");
        if (j.contains("config")) ck.config = parseTrainConfig(j["config"]);
        policy::PolicyParams p = policy::PolicyParams::zeros(policyConfigFromJson(j.at("policy")));
        const auto values = j.at("parameters").get<std::vector<double>>();
        if (values.size() != p.count() || j.at("parameter_count").get<std::size_t>() != p.count()) {
            throw DataError("checkpoint parameter count does not match its policy config");
        }
        p.values = values;
        if (!p.allFinite()) throw DataError("checkpoint contains non-finite parameters");
        ck.params = std::move(p);
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    }
    return ck;
}

Checkpoint expertCheckpoint() {
    Checkpoint ck;
    ck.kind = "expert";
    ck.name = "expert";
    return ck;
}

}  // namespace scopekit::train
