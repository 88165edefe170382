#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <functional>
#include <vector>

#include "scopekit/errors.hpp"
#include "scopekit/losses.hpp"
#include "scopekit/rng.hpp"
#include "scopekit/wavelet.hpp"

using namespace scopekit;
using namespace scopekit::losses;

namespace {

Matrix randomMatrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.flat()) v = rng.uniform(-scale, scale);
    return m;
}

// central difference of f with respect to every entry of m
Matrix numericGrad(Matrix& m, const std::function<double()>& f, double h = 1e-5) {
    Matrix g(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.flat().size(); ++i) {
        const double keep = m.flat()[i];
        m.flat()[i] = keep + h;
        const double up = f();
        m.flat()[i] = keep - h;
        const double down = f();
        m.flat()[i] = keep;
        g.flat()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

void expectGradClose(const Matrix& analytic, const Matrix& numeric) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < analytic.flat().size(); ++i) {
        diff += std::pow(analytic.flat()[i] - numeric.flat()[i], 2);
        scale += std::pow(numeric.flat()[i], 2);
    }
    diff = std::sqrt(diff);
    scale = std::sqrt(scale);
    if (scale < 1e-8) {
        EXPECT_LT(diff, 1e-8);
    } else {
        EXPECT_LE(diff / scale, 1e-4);
    }
}

}  // namespace

TEST(SmoothL1, Examples) {
    EXPECT_EQ(smoothL1(0.0), 0.0);
    EXPECT_EQ(smoothL1(0.5), 0.125);
    EXPECT_EQ(smoothL1(2.0), 1.5);
    EXPECT_EQ(smoothL1(-2.0), 1.5);
    EXPECT_EQ(smoothL1(1.0), 0.5);
}

TEST(SmoothL1, Elementwise) {
    const std::vector<double> p{0.0, 1.5, -3.0}, t{0.5, 1.5, -1.0};
    const auto out = smoothL1(p, t);
    EXPECT_EQ(out, (std::vector<double>{0.125, 0.0, 1.5}));
    const std::vector<double> short_t{1.0};
    EXPECT_THROW(smoothL1(p, short_t), ShapeError);
}

TEST(WeightedRegression, Examples) {
    Matrix target(4, kChannels, 0.0);
    Matrix pred(4, kChannels, 0.0);
    // diff 1.5 on every channel gives per-step loss exactly 1
    for (auto& v : pred.flat()) v = 1.5;
    const std::vector<double> w{2, 2, 0, 0};
    const auto r = weightedRegressionLoss(pred, target, w);
    EXPECT_EQ(r.value, 1.0);
    EXPECT_EQ(r.per_step, (std::vector<double>{1, 1, 0, 0}));  // skipped steps report 0
    EXPECT_EQ(perStepRegression(pred, target), (std::vector<double>{1, 1, 1, 1}));

    const std::vector<double> ones(4, 1.0);
    EXPECT_EQ(weightedRegressionLoss(target, target, ones).value, 0.0);

    Rng rng(3);
    const Matrix a = randomMatrix(rng, 7, kChannels, 3.0), b = randomMatrix(rng, 7, kChannels, 3.0);
    const auto per_step = perStepRegression(a, b);
    double mean = 0.0;
    for (double v : per_step) mean += v;
    mean /= 7.0;
    EXPECT_NEAR(weightedRegressionLoss(a, b, std::vector<double>(7, 1.0)).value, mean, 1e-15);

    EXPECT_THROW(weightedRegressionLoss(a, b, ones), ShapeError);
    EXPECT_THROW(weightedRegressionLoss(a, Matrix(6, kChannels), std::vector<double>(7, 1.0)), ShapeError);
}

TEST(WeightedRegression, PerStepIsChannelMean) {
    Matrix pred(1, kChannels, 0.0), target(1, kChannels, 0.0);
    pred(0, 0) = 2.0;  // 1.5
    pred(0, 3) = 0.5;  // 0.125
    const auto r = weightedRegressionLoss(pred, target, std::vector<double>{1.0});
    EXPECT_NEAR(r.per_step[0], (1.5 + 0.125) / 6.0, 1e-16);
}

TEST(WeightedRegression, TruncationIgnoresTargetsBeyondCut) {
    Rng rng(4);
    const auto w = weights::truncationWeights(20, 80);
    for (int i = 0; i < 50; ++i) {
        const Matrix pred = randomMatrix(rng, 80, kChannels, 5.0);
        Matrix target = randomMatrix(rng, 80, kChannels, 5.0);
        Matrix g1, g2;
        const double a = weightedRegressionLoss(pred, target, w.weights, &g1).value;
        for (std::size_t t = 20; t < 80; ++t) {
            for (std::size_t c = 0; c < kChannels; ++c) target(t, c) = rng.uniform(-1e6, 1e6);
        }
        target(79, 0) = std::nan("");
        const double b = weightedRegressionLoss(pred, target, w.weights, &g2).value;
        EXPECT_EQ(a, b);
        EXPECT_TRUE(std::equal(g1.flat().begin(), g1.flat().end(), g2.flat().begin()));
    }
}

TEST(WeightedRegression, GradientMatchesFiniteDifference) {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const std::size_t t = 1 + rng.next() % 12;
        Matrix pred = randomMatrix(rng, t, kChannels, 3.0);
        const Matrix target = randomMatrix(rng, t, kChannels, 3.0);
        std::vector<double> w(t);
        for (auto& v : w) v = rng.uniform(0.0, 2.0);
        Matrix g;
        weightedRegressionLoss(pred, target, w, &g);
        const Matrix n = numericGrad(pred, [&] { return weightedRegressionLoss(pred, target, w).value; });
        expectGradClose(g, n);
    }
}

TEST(ScopeLoss, Examples) {
    ScopeComponents target{Matrix(2, 1, 0.0), {Matrix(2, 1, 0.0)}};
    EXPECT_EQ(scopeLoss(target, target, std::vector<std::size_t>{2}), 0.0);

    ScopeComponents pred = target;
    pred.approx(0, 0) = 3.0;
    pred.details[0](1, 0) = 1.0;
    EXPECT_EQ(scopeLoss(pred, target, std::vector<std::size_t>{2}), 2.0);
    // the detail error sits at row 1, outside a horizon of 1
    EXPECT_EQ(scopeLoss(pred, target, std::vector<std::size_t>{1}), 1.5);

    ScopeComponents outside = target;
    outside.details[0](1, 0) = 100.0;
    EXPECT_EQ(scopeLoss(outside, target, std::vector<std::size_t>{1}), 0.0);

    EXPECT_THROW(scopeLoss(pred, target, std::vector<std::size_t>{3}), ParameterError);
    EXPECT_THROW(scopeLoss(pred, target, std::vector<std::size_t>{}), ParameterError);
}

TEST(ScopeLoss, JointNormAcrossChannels) {
    ScopeComponents target{Matrix(1, 2, 0.0), {Matrix(2, 2, 0.0)}};
    ScopeComponents pred = target;
    pred.details[0](0, 0) = 3.0;
    pred.details[0](1, 1) = 4.0;
    EXPECT_EQ(scopeLoss(pred, target, std::vector<std::size_t>{2}), 2.5);
}

TEST(ScopeLoss, MatchesBruteForceFromRawSignals) {
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        const std::size_t half = 1 + rng.next() % 20;
        const std::size_t k = 1 + rng.next() % 3;
        const Matrix a = randomMatrix(rng, 2 * half, k, 4.0), b = randomMatrix(rng, 2 * half, k, 4.0);
        const auto pa = componentsOf(wavelet::decompose(a, 1));
        const auto pb = componentsOf(wavelet::decompose(b, 1));
        const double got = scopeLoss(pa, pb, std::vector<std::size_t>{half});

        double sq_a = 0.0, sq_d = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> xa(2 * half), xb(2 * half);
            for (std::size_t r = 0; r < 2 * half; ++r) {
                xa[r] = a(r, c);
                xb[r] = b(r, c);
            }
            const auto ha = wavelet::haarForward(xa), hb = wavelet::haarForward(xb);
            for (std::size_t r = 0; r < half; ++r) {
                sq_a += std::pow(ha.approx[r] - hb.approx[r], 2);
                sq_d += std::pow(ha.detail[r] - hb.detail[r], 2);
            }
        }
        EXPECT_NEAR(got, 0.5 * (std::sqrt(sq_a) + std::sqrt(sq_d)), 1e-12 * (1.0 + got));
    }
}

TEST(ScopeLoss, GradientMatchesFiniteDifference) {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const std::size_t levels = 1 + rng.next() % 3;
        const std::size_t rows = (1u << levels) * (1 + rng.next() % 4);
        const auto target = componentsOf(wavelet::decompose(randomMatrix(rng, rows, 2, 3.0), levels));
        auto pred = componentsOf(wavelet::decompose(randomMatrix(rng, rows, 2, 3.0), levels));
        std::vector<std::size_t> h;
        for (const auto& d : target.details) h.push_back(rng.next() % (d.rows() + 1));
        ScopeComponents g;
        scopeLoss(pred, target, h, &g);
        auto f = [&] { return scopeLoss(pred, target, h); };
        expectGradClose(g.approx, numericGrad(pred.approx, f));
        for (std::size_t l = 0; l < levels; ++l) expectGradClose(g.details[l], numericGrad(pred.details[l], f));
    }
}

TEST(ScopeLoss, HorizonMasksHalvePerLevel) {
    const auto c = componentsOf(wavelet::decompose(Matrix(80, 2, 0.0), 3));
    EXPECT_EQ(horizonMasks(20, c), (std::vector<std::size_t>{20, 10, 5}));
    EXPECT_EQ(horizonMasks(100, c), (std::vector<std::size_t>{40, 20, 10}));
    EXPECT_EQ(horizonMasks(0, c), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Collision, Examples) {
    CircleSet far;
    far.steps.resize(10);
    far.steps[3].push_back({{0.0, 0.0}, {50.0, 0.0}, 2.0, 0.1});
    EXPECT_EQ(collisionLoss(far), 0.0);

    CircleSet one;
    one.steps.resize(10);
    one.steps[4].push_back({{0.0, 0.0}, {1.5, 0.0}, 2.0, 0.1});
    EXPECT_NEAR(collisionLoss(one), 0.06, 1e-12);

    CircleSet tangent;
    tangent.steps.resize(10);
    tangent.steps[0].push_back({{0.0, 0.0}, {2.5, 0.0}, 2.0, 0.5});
    EXPECT_EQ(collisionLoss(tangent), 0.0);

    EXPECT_EQ(collisionLoss(CircleSet{}), 0.0);
}

TEST(Collision, TrajectoryFootprint) {
    Matrix pred(1, kChannels, 0.0);
    pred(0, kCos) = 1.0;
    const std::vector<Circle> far{{{30.0, 0.0}, 1.0}};
    EXPECT_EQ(trajectoryCollisionLoss(pred, far, EgoFootprint{}), 0.0);
    // front circle at x=1, obstacle at x=3 radius 1: invasion 1 + 1 + 0.1 - 2
    const std::vector<Circle> near{{{3.0, 0.0}, 1.0}};
    EXPECT_NEAR(trajectoryCollisionLoss(pred, near, EgoFootprint{}), 0.1, 1e-15);
    EXPECT_EQ(buildCircleSet(pred, near, EgoFootprint{}).steps[0].size(), 2u);
}

TEST(Collision, GradientMatchesFiniteDifference) {
    Rng rng(8);
    int checked = 0;
    while (checked < 100) {
        const std::size_t t = 1 + rng.next() % 6;
        Matrix pred = randomMatrix(rng, t, kChannels, 2.0);
        std::vector<Circle> obs;
        const std::size_t n = 1 + rng.next() % 3;
        for (std::size_t i = 0; i < n; ++i) obs.push_back({{rng.uniform(-3, 3), rng.uniform(-3, 3)}, rng.uniform(0.3, 1.5)});
        Matrix g;
        const double v = trajectoryCollisionLoss(pred, obs, EgoFootprint{}, &g);
        if (v == 0.0) continue;
        // keep away from the hinge where the derivative jumps
        bool near_kink = false;
        for (const auto& step : buildCircleSet(pred, obs, EgoFootprint{}).steps) {
            for (const auto& p : step) {
                const double d = std::hypot(p.ego_center.x - p.agent_center.x, p.ego_center.y - p.agent_center.y);
                if (std::abs(d - p.summed_radius - p.tolerance) < 1e-3 || d < 1e-3) near_kink = true;
            }
        }
        if (near_kink) continue;
        const Matrix num = numericGrad(pred, [&] { return trajectoryCollisionLoss(pred, obs, EgoFootprint{}); });
        expectGradClose(g, num);
        ++checked;
    }
}

TEST(ModeScore, Examples) {
    const std::vector<double> uniform(6, 0.3);
    EXPECT_NEAR(modeScoreLoss(uniform, 2), std::log(6.0), 1e-15);
    EXPECT_NEAR(modeScoreLoss(uniform, 2), 1.791759, 1e-6);
    const std::vector<double> single{4.2};
    EXPECT_EQ(modeScoreLoss(single, 0), 0.0);
    const std::vector<double> margin{0.0, 800.0, 0.0};
    EXPECT_LT(modeScoreLoss(margin, 1), 1e-300);
    EXPECT_THROW(modeScoreLoss(uniform, 6), ParameterError);
}

TEST(ModeScore, GradientMatchesFiniteDifference) {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
        const std::size_t m = 1 + rng.next() % 6;
        Matrix s = randomMatrix(rng, 1, m, 3.0);
        const std::size_t hot = rng.next() % m;
        std::vector<double> g;
        modeScoreLoss(s.flat(), hot, &g);
        Matrix gm(1, m);
        for (std::size_t j = 0; j < m; ++j) gm(0, j) = g[j];
        expectGradClose(gm, numericGrad(s, [&] { return modeScoreLoss(s.flat(), hot); }));
    }
}

TEST(ClosestMode, FinalPositionWithLowestIndexTie) {
    Matrix target(3, kChannels, 0.0);
    target(2, kPx) = 10.0;
    std::vector<Matrix> modes(3, Matrix(3, kChannels, 0.0));
    modes[0](2, kPx) = 7.0;
    modes[1](2, kPx) = 13.0;
    modes[2](2, kPx) = 9.5;
    EXPECT_EQ(closestMode(modes, target, 2), 2u);
    modes[2](2, kPx) = 7.0;
    EXPECT_EQ(closestMode(modes, target, 2), 0u);
    EXPECT_EQ(closestMode(modes, target, 0), 0u);
}

TEST(Total, Examples) {
    LossBreakdown p;
    p.reg = 0.3;
    LossTerms only_reg{true, false, false, false};
    EXPECT_EQ(totalLoss(p, only_reg).total, 0.3);

    p.ds = 0.1;
    p.col = 0.0;
    p.cls = 0.05;
    const auto all = totalLoss(p, LossTerms{true, true, true, true});
    EXPECT_NEAR(all.total, 0.45, 1e-12);
    EXPECT_NEAR(all.total, all.reg + all.cls + all.col + all.ds, 1e-12);

    const auto off = totalLoss(p, LossTerms{true, true, true, false});
    EXPECT_EQ(off.ds, 0.0);
    EXPECT_EQ(totalLoss(LossBreakdown{}, LossTerms{true, true, true, true}).total, 0.0);
}
