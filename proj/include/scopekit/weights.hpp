#pragma once

// Per-timestep weights for the regression loss: hard time truncation,
// GP-compensation decay and batch-statistic time normalization.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "scopekit/matrix.hpp"

namespace scopekit::weights {

enum class Scheme { Uniform, Truncation, Decay, TimeNorm };

std::string_view schemeName(Scheme scheme);

inline constexpr double kDefaultEpsGuard = 1e-6;

struct GpParams {
    double sigma_f2 = 1.0;  // maximum (function) uncertainty
    double length = 1.0;    // time length scale, in steps
    double t0 = 0.0;        // observable current time, in steps
    double order = 2.0;     // exponent p of the time difference; 2 is the RBF case

    void validate() const;
};

struct ScheduleParams {
    std::size_t t_cut = 0;
    GpParams gp;
    double eps_guard = kDefaultEpsGuard;
    double normalizer = 1.0;  // Z for the decay scheme
};

struct WeightSchedule {
    std::vector<double> weights;
    Scheme scheme = Scheme::Uniform;
    ScheduleParams params;

    std::size_t size() const { return weights.size(); }
};

WeightSchedule uniformWeights(std::size_t horizon);

/// w_t = 1 for t < t_cut, else 0.
WeightSchedule truncationWeights(std::size_t t_cut, std::size_t horizon);

/// Predictive variance of a zero-noise GP with RBF kernel conditioned on the
/// current point: sigma_f^2 [1 - exp(-(t - t0)^2 / l^2)].
double gpVariance(double t, const GpParams& gp);

/// Compensation sigma_f^2 - sigma_t^2.
double gpCompensation(double t, const GpParams& gp);

/// w_t = exp(-(|t - t0| / l)^p) / Z with Z the mean of the unnormalized weights.
WeightSchedule decayWeights(std::size_t horizon, const GpParams& gp);

/// w_t = 1 / max(mean_b loss[b, t], eps_guard) for a B x T matrix of per-step losses.
WeightSchedule timenormWeights(const Matrix& batch_step_losses, double eps_guard = kDefaultEpsGuard);

}  // namespace scopekit::weights
