#include "scopekit/weights.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scopekit/errors.hpp"

namespace scopekit::weights {

std::string_view schemeName(Scheme scheme) {
    switch (scheme) {
        case Scheme::Uniform: return "uniform";
        case Scheme::Truncation: return "truncation";
        case Scheme::Decay: return "timedecay";
        case Scheme::TimeNorm: return "timenorm";
    }
    return "unknown";
}

void GpParams::validate() const {
    if (!(sigma_f2 > 0.0) || !(length > 0.0) || !(order > 0.0) || !std::isfinite(t0)) {
        throw ParameterError("GP parameters need sigma_f2 > 0, l > 0, p > 0 and finite t0");
    }
}

WeightSchedule uniformWeights(std::size_t horizon) {
    WeightSchedule s;
    s.weights.assign(horizon, 1.0);
    s.scheme = Scheme::Uniform;
    return s;
}

WeightSchedule truncationWeights(std::size_t t_cut, std::size_t horizon) {
    if (t_cut < 1 || t_cut > horizon) {
        throw ParameterError("truncation T_cut must lie in [1, " + std::to_string(horizon) + "], got " +
                             std::to_string(t_cut));
    }
    WeightSchedule s;
    s.scheme = Scheme::Truncation;
    s.params.t_cut = t_cut;
    s.weights.assign(horizon, 0.0);
    std::fill_n(s.weights.begin(), t_cut, 1.0);
    return s;
}

double gpVariance(double t, const GpParams& gp) {
    const double dt = (t - gp.t0) / gp.length;
    return gp.sigma_f2 * (1.0 - std::exp(-dt * dt));
}

double gpCompensation(double t, const GpParams& gp) {
    const double dt = (t - gp.t0) / gp.length;
    return gp.sigma_f2 * std::exp(-dt * dt);
}

WeightSchedule decayWeights(std::size_t horizon, const GpParams& gp) {
    gp.validate();
    if (horizon == 0) throw ParameterError("decay weights need a positive horizon");
    WeightSchedule s;
    s.scheme = Scheme::Decay;
    s.params.gp = gp;
    s.weights.resize(horizon);
    double total = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const double scaled = std::abs(static_cast<double>(t) - gp.t0) / gp.length;
        s.weights[t] = std::exp(-std::pow(scaled, gp.order));
        total += s.weights[t];
    }
    const double z = total / static_cast<double>(horizon);
    s.params.normalizer = z;
    for (auto& w : s.weights) w /= z;
    return s;
}

WeightSchedule timenormWeights(const Matrix& losses, double eps_guard) {
    if (losses.rows() == 0) throw DataError("timenorm needs at least one batch row");
    if (!(eps_guard > 0.0)) throw ParameterError("timenorm eps_guard must be positive");
    WeightSchedule s;
    s.scheme = Scheme::TimeNorm;
    s.params.eps_guard = eps_guard;
    s.weights.assign(losses.cols(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(losses.rows());
    for (std::size_t t = 0; t < losses.cols(); ++t) {
        double sum = 0.0;
        for (std::size_t b = 0; b < losses.rows(); ++b) {
            const double v = losses(b, t);
            if (!std::isfinite(v)) {
                throw DataError("non-finite loss at batch row " + std::to_string(b) + ", step " +
                                std::to_string(t));
            }
            sum += v;
        }
        s.weights[t] = 1.0 / std::max(sum * inv_b, eps_guard);
    }
    return s;
}

}  // namespace scopekit::weights
