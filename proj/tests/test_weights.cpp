#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "scopekit/errors.hpp"
#include "scopekit/rng.hpp"
#include "scopekit/weights.hpp"

using namespace scopekit;
using namespace scopekit::weights;

TEST(Truncation, Examples) {
    EXPECT_EQ(truncationWeights(2, 4).weights, (std::vector<double>{1, 1, 0, 0}));
    EXPECT_EQ(truncationWeights(4, 4).weights, uniformWeights(4).weights);
    EXPECT_THROW(truncationWeights(0, 4), ParameterError);
    EXPECT_THROW(truncationWeights(5, 4), ParameterError);
}

TEST(Truncation, PrefixOfOnes) {
    const auto w = truncationWeights(20, 80);
    EXPECT_EQ(w.scheme, Scheme::Truncation);
    for (std::size_t t = 0; t < 80; ++t) EXPECT_EQ(w.weights[t], t < 20 ? 1.0 : 0.0);
}

TEST(Gp, VarianceExamples) {
    GpParams gp{1.0, 2.0, 0.0, 2.0};
    EXPECT_EQ(gpVariance(0.0, gp), 0.0);
    EXPECT_NEAR(gpVariance(2.0, gp), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(gpVariance(2.0, gp), 0.632121, 1e-6);
    EXPECT_NEAR(gpVariance(1e6, gp), 1.0, 1e-15);
    gp.sigma_f2 = 3.0;
    EXPECT_NEAR(gpCompensation(1.5, gp), 3.0 * std::exp(-1.5 * 1.5 / 4.0), 1e-14);
    EXPECT_NEAR(gpCompensation(1.5, gp) + gpVariance(1.5, gp), 3.0, 1e-14);
}

TEST(Gp, VarianceMonotoneInDistance) {
    GpParams gp{1.5, 3.0, 2.0, 2.0};
    double prev = -1.0;
    for (double d = 0.0; d < 20.0; d += 0.25) {
        const double v = gpVariance(gp.t0 + d, gp);
        EXPECT_GE(v, prev);
        EXPECT_NEAR(v, gpVariance(gp.t0 - d, gp), 1e-15);
        EXPECT_LT(v, gp.sigma_f2 + 1e-15);
        prev = v;
    }
}

TEST(Gp, InvalidParams) {
    EXPECT_THROW((GpParams{0.0, 1.0, 0.0, 2.0}.validate()), ParameterError);
    EXPECT_THROW((GpParams{1.0, 0.0, 0.0, 2.0}.validate()), ParameterError);
    EXPECT_THROW((GpParams{1.0, 1.0, 0.0, 0.0}.validate()), ParameterError);
}

TEST(Decay, SingleStep) { EXPECT_EQ(decayWeights(1, GpParams{}).weights, (std::vector<double>{1.0})); }

TEST(Decay, TableExample) {
    const double e = std::exp(1.0);
    const auto w = decayWeights(4, GpParams{1.0, e, 0.0, 1.0});
    const double raw[] = {1.0, std::exp(-1.0 / e), std::exp(-2.0 / e), std::exp(-3.0 / e)};
    const double z = (raw[0] + raw[1] + raw[2] + raw[3]) / 4.0;
    for (int t = 0; t < 4; ++t) EXPECT_NEAR(w.weights[t], raw[t] / z, 1e-15);
    EXPECT_NEAR(w.params.normalizer, z, 1e-15);
}

TEST(Decay, RbfOrder) {
    const auto w = decayWeights(5, GpParams{1.0, 2.0, 0.0, 2.0});
    for (int t = 1; t < 5; ++t) EXPECT_NEAR(w.weights[t] / w.weights[0], std::exp(-(t * t) / 4.0), 1e-14);
}

TEST(Decay, MeanOneAndMonotone) {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
        const std::size_t horizon = 1 + rng.next() % 120;
        GpParams gp{rng.uniform(0.1, 3.0), rng.uniform(0.5, 30.0), 0.0, rng.uniform(0.5, 3.0)};
        const auto w = decayWeights(horizon, gp);
        const double sum = std::accumulate(w.weights.begin(), w.weights.end(), 0.0);
        EXPECT_NEAR(sum / static_cast<double>(horizon), 1.0, 1e-12);
        EXPECT_NEAR(sum, static_cast<double>(horizon), 1e-12 * static_cast<double>(horizon));
        for (std::size_t t = 1; t < horizon; ++t) EXPECT_LE(w.weights[t], w.weights[t - 1]);
    }
}

TEST(TimeNorm, Examples) {
    Matrix two(2, 1);
    two(0, 0) = 2.0;
    two(1, 0) = 4.0;
    const auto w = timenormWeights(two);
    EXPECT_NEAR(w.weights[0], 1.0 / 3.0, 1e-16);
    EXPECT_NEAR((w.weights[0] * 2.0 + w.weights[0] * 4.0) / 2.0, 1.0, 1e-15);

    const auto z = timenormWeights(Matrix(3, 2, 0.0), 1e-6);
    EXPECT_EQ(z.weights[0], 1e6);
    EXPECT_EQ(z.weights[1], 1e6);

    Matrix single(1, 3);
    single(0, 0) = 0.5;
    single(0, 1) = 2.0;
    single(0, 2) = 0.0;
    const auto s = timenormWeights(single, 1e-6);
    EXPECT_NEAR(s.weights[0] * 0.5, 1.0, 1e-15);
    EXPECT_NEAR(s.weights[1] * 2.0, 1.0, 1e-15);
    EXPECT_EQ(s.weights[2], 1e6);
}

TEST(TimeNorm, WeightedBatchMeanIsOne) {
    Rng rng(22);
    const std::size_t b = 16, t = 80;
    Matrix l(b, t);
    for (auto& v : l.flat()) v = rng.uniform(0.0, 5.0) * rng.uniform(0.0, 1.0);
    const auto w = timenormWeights(l);
    for (std::size_t s = 0; s < t; ++s) {
        double acc = 0.0;
        for (std::size_t r = 0; r < b; ++r) acc += w.weights[s] * l(r, s);
        EXPECT_NEAR(acc / static_cast<double>(b), 1.0, 1e-9);
    }
}

TEST(TimeNorm, RejectsBadInput) {
    Matrix l(2, 2, 1.0);
    l(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(timenormWeights(l), DataError);
    EXPECT_THROW(timenormWeights(Matrix(0, 3)), DataError);
}

TEST(Schedule, Names) {
    EXPECT_EQ(schemeName(Scheme::Truncation), "truncation");
    EXPECT_EQ(schemeName(Scheme::Decay), "timedecay");
    EXPECT_EQ(schemeName(Scheme::TimeNorm), "timenorm");
}
