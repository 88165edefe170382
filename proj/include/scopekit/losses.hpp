#pragma once

// Training loss terms. Every term that a prediction flows into also exposes
// its analytic gradient with respect to that prediction.

#include <cstddef>
#include <span>
#include <vector>

#include "scopekit/core.hpp"
#include "scopekit/matrix.hpp"
#include "scopekit/wavelet.hpp"
#include "scopekit/weights.hpp"

namespace scopekit::losses {

double smoothL1(double diff);
double smoothL1Grad(double diff);

/// Elementwise smooth-L1 of pred - target.
std::vector<double> smoothL1(std::span<const double> pred, std::span<const double> target);

struct RegressionLoss {
    double value = 0.0;
    std::vector<double> per_step;  // mean smooth-L1 over the channels at each step
};

/// (1/T) sum_t w_t L_t. Steps with zero weight are skipped entirely so the
/// result never depends on targets there. `grad`, if given, receives dL/dpred.
RegressionLoss weightedRegressionLoss(const Matrix& pred, const Matrix& target,
                                      std::span<const double> weights, Matrix* grad = nullptr);
RegressionLoss weightedRegressionLoss(const Trajectory& pred, const Trajectory& target,
                                      const weights::WeightSchedule& schedule);

/// Per-step losses only (what the timenorm statistic is built from).
std::vector<double> perStepRegression(const Matrix& pred, const Matrix& target);

/// Approximation plus per-level detail components, each rows x channels.
struct ScopeComponents {
    Matrix approx;
    std::vector<Matrix> details;
};

ScopeComponents componentsOf(const wavelet::WaveletPyramid& pyramid);
/// DWH stack plus the coarse (source strided by 2^N) approximation term.
ScopeComponents componentsOf(const wavelet::ScopedStack& stack, const Matrix& coarse_approx);

/// (1/(N+1)) (sum_l ||D_l[:H_l] - D^_l[:H_l]||_2 + ||A - A^||_2), norms taken
/// jointly over masked rows and all channels. The approximation is unmasked.
double scopeLoss(const ScopeComponents& pred, const ScopeComponents& target,
                 std::span<const std::size_t> horizons, ScopeComponents* grad = nullptr);

/// H_l = floor(h / 2^(l-1)) clamped to each level's length.
std::vector<std::size_t> horizonMasks(std::size_t ds_horizon, const ScopeComponents& target);

struct CirclePair {
    Vec2 ego_center;
    Vec2 agent_center;
    double summed_radius = 0.0;
    double tolerance = 0.0;
};

struct CircleSet {
    std::vector<std::vector<CirclePair>> steps;  // one list per future step
};

/// (1/T_f) sum_t sum_i max(0, R_c + eps - d_i^t). `ego_grad`, if given, is
/// shaped like `circles.steps` and receives dL/d(ego_center).
double collisionLoss(const CircleSet& circles, std::vector<std::vector<Vec2>>* ego_grad = nullptr);

/// Static circle obstacle in the prediction's frame.
struct Circle {
    Vec2 center;
    double radius = 0.0;
};

struct EgoFootprint {
    std::vector<double> offsets{-1.0, 1.0};  // circle centres along the heading, metres
    double radius = 1.0;
    double tolerance = 0.1;
};

/// Places the footprint circles on every waypoint of a T x 6 prediction.
CircleSet buildCircleSet(const Matrix& pred, std::span<const Circle> obstacles, const EgoFootprint& ego);

/// Collision loss of a T x 6 prediction with gradient w.r.t. the prediction
/// (position and heading channels).
double trajectoryCollisionLoss(const Matrix& pred, std::span<const Circle> obstacles,
                               const EgoFootprint& ego, Matrix* grad = nullptr);

/// -log softmax(scores)[closest].
double modeScoreLoss(std::span<const double> scores, std::size_t closest,
                     std::vector<double>* grad = nullptr);

/// Mode whose waypoint at `step` lies closest (Euclidean) to the target's; ties go to the lowest index.
std::size_t closestMode(std::span<const Matrix> modes, const Matrix& target, std::size_t step);

struct LossTerms {
    bool reg = true;
    bool cls = true;
    bool col = true;
    bool ds = false;
};

struct LossCoefficients {
    double reg = 1.0;
    double cls = 1.0;
    double col = 1.0;
    double ds = 1.0;
};

struct LossBreakdown {
    double reg = 0.0;
    double cls = 0.0;
    double col = 0.0;
    double ds = 0.0;
    double total = 0.0;
    std::vector<double> per_step_reg;
};

/// Sums the enabled terms; disabled ones are reported as exactly 0.
LossBreakdown totalLoss(const LossBreakdown& parts, const LossTerms& enabled,
                        const LossCoefficients& coefficients = {});

}  // namespace scopekit::losses
