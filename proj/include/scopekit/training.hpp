#pragma once

// Demonstration datasets, mini-batch imitation training and checkpoints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scopekit/losses.hpp"
#include "scopekit/policy.hpp"
#include "scopekit/simulator.hpp"
#include "scopekit/weights.hpp"

namespace scopekit::train {

struct Sample {
    std::vector<double> features;
    Matrix target;                         // T x 6, ego frame at the sample step
    std::vector<losses::Circle> obstacles; // visible at the sample step, ego frame
    std::size_t episode = 0;
    int step = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t history_steps = 21;
    std::size_t future_steps = 80;

    std::size_t size() const { return samples.size(); }
};

/// One sample every `stride` steps whose whole future lies inside the log.
Dataset buildDataset(const std::vector<sim::EpisodeLog>& episodes, std::size_t stride,
                     std::size_t history_steps = 21, std::size_t future_steps = 80);

enum class WeightScheme { Baseline, Truncation, TimeDecay, TimeNorm };

std::string_view weightSchemeName(WeightScheme s);

struct TrainConfig {
    std::string name = "baseline";
    std::uint64_t seed = 1;
    std::size_t dataset_stride = 10;

    WeightScheme scheme = WeightScheme::Baseline;
    std::size_t t_cut = 20;
    weights::GpParams gp{1.0, 2.718281828459045, 0.0, 1.0};
    double eps_guard = weights::kDefaultEpsGuard;
    bool timenorm_stop_gradient = true;

    policy::PolicyConfig policy;  // decoder / target / dwh_horizon carry the detail scheme
    std::size_t history_steps = 21;
    std::size_t ds_horizon = 20;
    std::vector<std::size_t> level_horizons;  // per-level override of the masks

    losses::LossTerms terms;
    losses::LossCoefficients coefficients;
    losses::EgoFootprint footprint;

    std::size_t batch_size = 32;
    std::size_t epochs = 25;
    std::size_t warmup_epochs = 3;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double max_grad_norm = 0.0;  // 0 disables clipping

    bool detailEnabled() const { return policy.decoder != policy::DetailDecoder::None; }
    void validate() const;
};

/// Parses the JSON config. Unknown keys, bad values and more than one enabled
/// weight scheme raise ConfigError.
TrainConfig parseTrainConfig(const nlohmann::json& j);
TrainConfig parseTrainConfig(const std::string& text);
nlohmann::json toJson(const TrainConfig& cfg);
std::uint64_t configHash(const TrainConfig& cfg);

/// Human-readable description of the config file.
std::string configSchema();

/// Scope-loss targets of one sample for the configured detail scheme.
losses::ScopeComponents scopeTargets(const TrainConfig& cfg, const Matrix& target);
std::vector<std::size_t> scopeMasks(const TrainConfig& cfg, const losses::ScopeComponents& target);

/// Step at which the closest mode is picked: the last step with nonzero weight.
std::size_t closestModeStep(const TrainConfig& cfg, std::span<const double> weights);

struct BatchOptions {
    bool want_gradient = true;
    /// Use these per-step weights instead of recomputing them from the batch.
    const std::vector<double>* frozen_weights = nullptr;
};

struct BatchResult {
    losses::LossBreakdown loss;  // batch means
    std::vector<double> gradient;
    std::vector<double> weights;
    std::vector<std::size_t> closest;
};

BatchResult batchLoss(const policy::PolicyParams& params, const TrainConfig& cfg,
                      std::span<const Sample* const> batch, const BatchOptions& options = {});

struct LogRow {
    std::size_t step = 0;
    losses::LossBreakdown loss;
};

struct TrainResult {
    policy::PolicyParams params;
    std::vector<LogRow> log;
    std::size_t steps = 0;
    bool aborted = false;
    std::string diagnostics;
};

/// Builds the policy config implied by a training config and dataset.
policy::PolicyConfig policyConfigFor(const TrainConfig& cfg);

TrainResult trainRun(const TrainConfig& cfg, const Dataset& data,
                     const std::function<void(const LogRow&)>& on_step = {});

/// Per-epoch batch order (seeded Fisher-Yates).
std::vector<std::size_t> epochOrder(std::uint64_t seed, std::size_t epoch, std::size_t n);

struct Checkpoint {
    std::string kind = "policy";  // "policy" or "expert"
    std::string name;
    std::optional<TrainConfig> config;
    std::uint64_t seed = 0;
    std::size_t step = 0;
    std::optional<policy::PolicyParams> params;
};

inline constexpr int kCheckpointVersion = 1;

std::string serializeCheckpoint(const Checkpoint& ck);
/// DataError on anything malformed.
Checkpoint parseCheckpoint(const std::string& text);
Checkpoint expertCheckpoint();

}  // namespace scopekit::train
