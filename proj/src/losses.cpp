#include "scopekit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "scopekit/errors.hpp"

namespace scopekit::losses {

double smoothL1(double diff) {
    const double a = std::abs(diff);
    return a < 1.0 ? 0.5 * diff * diff : a - 0.5;
}

double smoothL1Grad(double diff) {
    if (diff >= 1.0) return 1.0;
    if (diff <= -1.0) return -1.0;
    return diff;
}

std::vector<double> smoothL1(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ShapeError("smoothL1 shape mismatch: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
    }
    std::vector<double> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) out[i] = smoothL1(pred[i] - target[i]);
    return out;
}

namespace {

void requireSameShape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

}  // namespace

std::vector<double> perStepRegression(const Matrix& pred, const Matrix& target) {
    requireSameShape(pred, target, "regression shape mismatch");
    std::vector<double> out(pred.rows(), 0.0);
    const double inv_c = 1.0 / static_cast<double>(pred.cols());
    for (std::size_t t = 0; t < pred.rows(); ++t) {
        double sum = 0.0;
        for (std::size_t c = 0; c < pred.cols(); ++c) sum += smoothL1(pred(t, c) - target(t, c));
        out[t] = sum * inv_c;
    }
    return out;
}

RegressionLoss weightedRegressionLoss(const Matrix& pred, const Matrix& target,
                                      std::span<const double> weights, Matrix* grad) {
    requireSameShape(pred, target, "regression shape mismatch");
    if (weights.size() != pred.rows()) {
        throw ShapeError("weight schedule length " + std::to_string(weights.size()) +
                         " does not match trajectory length " + std::to_string(pred.rows()));
    }
    const std::size_t steps = pred.rows();
    const std::size_t cols = pred.cols();
    RegressionLoss out;
    out.per_step.assign(steps, 0.0);
    if (grad) *grad = Matrix(steps, cols);
    if (steps == 0) return out;
    const double inv_t = 1.0 / static_cast<double>(steps);
    const double inv_c = 1.0 / static_cast<double>(cols);
    double total = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        const double w = weights[t];
        if (w == 0.0) continue;
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += smoothL1(pred(t, c) - target(t, c));
        out.per_step[t] = sum * inv_c;
        total += out.per_step[t] * w;
        if (grad) {
            const double scale = w * inv_t * inv_c;
            for (std::size_t c = 0; c < cols; ++c) (*grad)(t, c) = scale * smoothL1Grad(pred(t, c) - target(t, c));
        }
    }
    out.value = total * inv_t;
    return out;
}

RegressionLoss weightedRegressionLoss(const Trajectory& pred, const Trajectory& target,
                                      const weights::WeightSchedule& schedule) {
    return weightedRegressionLoss(channelMatrix(pred), channelMatrix(target), schedule.weights);
}

ScopeComponents componentsOf(const wavelet::WaveletPyramid& pyramid) {
    return {pyramid.approximation, pyramid.details};
}

ScopeComponents componentsOf(const wavelet::ScopedStack& stack, const Matrix& coarse_approx) {
    return {coarse_approx, stack.levels};
}

namespace {

/// ||pred[:rows] - target[:rows]||_2 over all channels, with optional gradient.
double maskedNorm(const Matrix& pred, const Matrix& target, std::size_t rows, Matrix* grad) {
    double sq = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            const double d = pred(r, c) - target(r, c);
            sq += d * d;
        }
    }
    const double norm = std::sqrt(sq);
    if (grad) {
        *grad = Matrix(pred.rows(), pred.cols());
        // subgradient 0 at the non-differentiable point
        if (norm > 0.0) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < pred.cols(); ++c) (*grad)(r, c) = (pred(r, c) - target(r, c)) / norm;
            }
        }
    }
    return norm;
}

}  // namespace

double scopeLoss(const ScopeComponents& pred, const ScopeComponents& target,
                 std::span<const std::size_t> horizons, ScopeComponents* grad) {
    requireSameShape(pred.approx, target.approx, "scope approximation shape mismatch");
    if (pred.details.size() != target.details.size()) {
        throw ShapeError("scope loss level count mismatch: " + std::to_string(pred.details.size()) + " vs " +
                         std::to_string(target.details.size()));
    }
    if (horizons.size() != target.details.size()) {
        throw ParameterError("scope loss needs one horizon per detail level");
    }
    const std::size_t levels = target.details.size();
    for (std::size_t l = 0; l < levels; ++l) {
        requireSameShape(pred.details[l], target.details[l], "scope detail shape mismatch");
        if (horizons[l] > target.details[l].rows()) {
            throw ParameterError("horizon " + std::to_string(horizons[l]) + " exceeds detail level " +
                                 std::to_string(l + 1) + " length " + std::to_string(target.details[l].rows()));
        }
    }
    const double inv_terms = 1.0 / static_cast<double>(levels + 1);
    if (grad) grad->details.assign(levels, Matrix());
    double sum = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
        sum += maskedNorm(pred.details[l], target.details[l], horizons[l], grad ? &grad->details[l] : nullptr);
    }
    sum += maskedNorm(pred.approx, target.approx, pred.approx.rows(), grad ? &grad->approx : nullptr);
    if (grad) {
        for (auto& m : grad->details) {
            for (auto& v : m.flat()) v *= inv_terms;
        }
        for (auto& v : grad->approx.flat()) v *= inv_terms;
    }
    return sum * inv_terms;
}

std::vector<std::size_t> horizonMasks(std::size_t ds_horizon, const ScopeComponents& target) {
    std::vector<std::size_t> out;
    for (std::size_t l = 1; l <= target.details.size(); ++l) {
        const std::size_t h = ds_horizon >> (l - 1);
        out.push_back(std::min(h, target.details[l - 1].rows()));
    }
    return out;
}

double collisionLoss(const CircleSet& circles, std::vector<std::vector<Vec2>>* ego_grad) {
    const std::size_t steps = circles.steps.size();
    if (ego_grad) {
        ego_grad->assign(steps, {});
        for (std::size_t t = 0; t < steps; ++t) (*ego_grad)[t].assign(circles.steps[t].size(), Vec2{});
    }
    if (steps == 0) return 0.0;
    const double inv_t = 1.0 / static_cast<double>(steps);
    double total = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < circles.steps[t].size(); ++i) {
            const auto& p = circles.steps[t][i];
            const double dx = p.ego_center.x - p.agent_center.x;
            const double dy = p.ego_center.y - p.agent_center.y;
            const double d = std::hypot(dx, dy);
            const double invasion = p.summed_radius + p.tolerance - d;
            if (invasion <= 0.0) continue;
            total += invasion;
            if (ego_grad && d > 0.0) (*ego_grad)[t][i] = {-dx / d * inv_t, -dy / d * inv_t};
        }
    }
    return total * inv_t;
}

CircleSet buildCircleSet(const Matrix& pred, std::span<const Circle> obstacles, const EgoFootprint& ego) {
    CircleSet set;
    set.steps.resize(pred.rows());
    for (std::size_t t = 0; t < pred.rows(); ++t) {
        for (double off : ego.offsets) {
            const Vec2 c{pred(t, kPx) + off * pred(t, kCos), pred(t, kPy) + off * pred(t, kSin)};
            for (const auto& ob : obstacles) {
                set.steps[t].push_back({c, ob.center, ego.radius + ob.radius, ego.tolerance});
            }
        }
    }
    return set;
}

double trajectoryCollisionLoss(const Matrix& pred, std::span<const Circle> obstacles,
                               const EgoFootprint& ego, Matrix* grad) {
    const CircleSet set = buildCircleSet(pred, obstacles, ego);
    std::vector<std::vector<Vec2>> center_grad;
    const double value = collisionLoss(set, grad ? &center_grad : nullptr);
    if (grad) {
        *grad = Matrix(pred.rows(), pred.cols());
        for (std::size_t t = 0; t < pred.rows(); ++t) {
            std::size_t i = 0;
            for (double off : ego.offsets) {
                for (std::size_t o = 0; o < obstacles.size(); ++o, ++i) {
                    const Vec2 g = center_grad[t][i];
                    (*grad)(t, kPx) += g.x;
                    (*grad)(t, kPy) += g.y;
                    (*grad)(t, kCos) += off * g.x;
                    (*grad)(t, kSin) += off * g.y;
                }
            }
        }
    }
    return value;
}

double modeScoreLoss(std::span<const double> scores, std::size_t closest, std::vector<double>* grad) {
    if (closest >= scores.size()) {
        throw ParameterError("closest mode index " + std::to_string(closest) + " out of range for " +
                             std::to_string(scores.size()) + " modes");
    }
    double max_score = -std::numeric_limits<double>::infinity();
    for (double s : scores) max_score = std::max(max_score, s);
    double denom = 0.0;
    for (double s : scores) denom += std::exp(s - max_score);
    const double log_z = max_score + std::log(denom);
    if (grad) {
        grad->resize(scores.size());
        for (std::size_t m = 0; m < scores.size(); ++m) {
            (*grad)[m] = std::exp(scores[m] - log_z) - (m == closest ? 1.0 : 0.0);
        }
    }
    if (scores.size() == 1) return 0.0;
    return log_z - scores[closest];
}

std::size_t closestMode(std::span<const Matrix> modes, const Matrix& target, std::size_t step) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < modes.size(); ++m) {
        const double d = std::hypot(modes[m](step, kPx) - target(step, kPx), modes[m](step, kPy) - target(step, kPy));
        if (d < best_d) {
            best_d = d;
            best = m;
        }
    }
    return best;
}

LossBreakdown totalLoss(const LossBreakdown& parts, const LossTerms& enabled, const LossCoefficients& k) {
    LossBreakdown out;
    out.per_step_reg = parts.per_step_reg;
    out.reg = enabled.reg ? k.reg * parts.reg : 0.0;
    out.cls = enabled.cls ? k.cls * parts.cls : 0.0;
    out.col = enabled.col ? k.col * parts.col : 0.0;
    out.ds = enabled.ds ? k.ds * parts.ds : 0.0;
    out.total = out.reg + out.cls + out.col + out.ds;
    return out;
}

}  // namespace scopekit::losses
