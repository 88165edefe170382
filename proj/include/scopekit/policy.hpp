#pragma once

// Small differentiable planning policy: a tanh MLP trunk, multi-modal
// trajectory and score heads, and optional detail heads arranged either as
// parallel read-outs of the final hidden state (multi-head detail decoder) or
// as read-outs of successive residual refinements (iterative detail decoder).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "scopekit/core.hpp"
#include "scopekit/matrix.hpp"

namespace scopekit::policy {

enum class DetailDecoder { None, Mdd, Idd };
enum class DetailTarget { Dwt, Dwh };

std::string_view decoderName(DetailDecoder d);
std::string_view targetName(DetailTarget t);
DetailDecoder parseDecoder(std::string_view s);
DetailTarget parseTarget(std::string_view s);

/// Feature vector length for a given history length.
std::size_t featureLength(std::size_t history_steps);

/// Fixed-length, ego-frame encoding of an observation.
std::vector<double> featurize(const Observation& obs, std::size_t history_steps);

struct PolicyConfig {
    std::size_t feature_dim = featureLength(21);
    std::size_t hidden = 64;
    std::size_t future_steps = 80;
    std::size_t mode_count = 3;
    std::size_t levels = 3;  // wavelet / detail levels N
    DetailDecoder decoder = DetailDecoder::None;
    DetailTarget target = DetailTarget::Dwt;
    std::size_t dwh_horizon = 20;
    double position_scale = 20.0;
    double velocity_scale = 10.0;

    std::size_t detailLevels() const { return decoder == DetailDecoder::None ? 0 : levels; }
    void validate() const;
};

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

/// Offsets of every layer inside the flat parameter vector.
struct ParameterLayout {
    DenseLayer trunk1;
    DenseLayer trunk2;
    std::vector<DenseLayer> refine;  // iterative decoder only
    DenseLayer trajectory_head;
    DenseLayer score_head;
    DenseLayer approx_head;          // absent when no detail decoder
    std::vector<DenseLayer> detail_heads;
    std::size_t total = 0;

    static ParameterLayout build(const PolicyConfig& cfg);
};

struct PolicyParams {
    PolicyConfig config;
    ParameterLayout layout;
    std::vector<double> values;

    /// Trunk and refinement weights uniform in +-1/sqrt(fan_in), biases and output heads zero.
    static PolicyParams initialize(const PolicyConfig& cfg, std::uint64_t seed);
    static PolicyParams zeros(const PolicyConfig& cfg);

    std::size_t count() const { return values.size(); }
    bool allFinite() const;
};

struct PolicyOutput {
    std::vector<Matrix> trajectories;  // M modes, each T x 6 (ego frame)
    std::vector<double> scores;        // M
    Matrix approx_raw;                 // T x 2 full-resolution head output
    std::vector<Matrix> details_raw;   // N x (T x 2)
    Matrix approx_pred;                // downsampled to the target approximation length
    std::vector<Matrix> detail_preds;  // downsampled to each target detail length
};

/// Activations recorded by forward for the backward pass.
struct ForwardCache {
    std::vector<double> features;
    std::vector<double> h1;
    std::vector<std::vector<double>> hidden;      // h_0 (trunk output) .. h_N (idd)
    std::vector<std::vector<double>> refine_act;  // tanh activations of each refinement block
};

PolicyOutput forward(const PolicyParams& params, std::span<const double> features,
                     ForwardCache* cache = nullptr);

/// Gradients of a scalar loss w.r.t. each forward output (downsampled detail predictions).
struct OutputGradient {
    std::vector<Matrix> trajectories;
    std::vector<double> scores;
    Matrix approx_pred;
    std::vector<Matrix> detail_preds;

    static OutputGradient zerosLike(const PolicyOutput& out);
};

/// Accumulates dL/dparams into `param_grad` (size params.count()).
void backward(const PolicyParams& params, const ForwardCache& cache, const OutputGradient& upstream,
              std::span<double> param_grad);

/// Sampling stride and kept length of the approximation / level-l detail prediction.
std::size_t approxStride(const PolicyConfig& cfg);
std::size_t detailStride(const PolicyConfig& cfg, std::size_t level);
std::size_t detailLength(const PolicyConfig& cfg, std::size_t level);

/// Index of the highest-scoring mode (lowest index on ties).
std::size_t selectMode(const PolicyOutput& out);

}  // namespace scopekit::policy
