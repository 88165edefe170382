#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "scopekit/kernels/kernels.hpp"
#include "scopekit/rng.hpp"

using namespace scopekit;
using namespace scopekit::kernels;

namespace {

std::vector<double> randomVec(Rng& r, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = r.uniform(-2.0, 2.0);
    return v;
}

class KernelEquivalence : public ::testing::Test {
protected:
    void SetUp() override {
        vec_ = avx2Kernels();
        if (!vec_) GTEST_SKIP() << "no vector backend on this machine";
    }
    const KernelTable& ref_ = scalarKernels();
    const KernelTable* vec_ = nullptr;
    Rng rng_{42};
};

}  // namespace

TEST_F(KernelEquivalence, Dot) {
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 64u, 97u, 1000u}) {
        const auto a = randomVec(rng_, n);
        const auto b = randomVec(rng_, n);
        const double x = ref_.dot(a.data(), b.data(), n);
        const double y = vec_->dot(a.data(), b.data(), n);
        EXPECT_NEAR(x, y, 1e-12 * (1.0 + std::abs(x))) << n;
    }
}

TEST_F(KernelEquivalence, AxpyBitExact) {
    for (std::size_t n : {1u, 5u, 8u, 33u}) {
        const auto x = randomVec(rng_, n);
        auto y1 = randomVec(rng_, n);
        auto y2 = y1;
        ref_.axpy(0.37, x.data(), y1.data(), n);
        vec_->axpy(0.37, x.data(), y2.data(), n);
        EXPECT_EQ(y1, y2);
    }
}

TEST_F(KernelEquivalence, Gemv) {
    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 5}, {64, 96}, {17, 64}, {1440, 64}}) {
        const auto w = randomVec(rng_, rows * cols);
        const auto x = randomVec(rng_, cols);
        const auto b = randomVec(rng_, rows);
        std::vector<double> y1(rows), y2(rows);
        ref_.gemv(w.data(), x.data(), b.data(), y1.data(), rows, cols);
        vec_->gemv(w.data(), x.data(), b.data(), y2.data(), rows, cols);
        for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-11);
        ref_.gemv(w.data(), x.data(), nullptr, y1.data(), rows, cols);
        vec_->gemv(w.data(), x.data(), nullptr, y2.data(), rows, cols);
        for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-11);
    }
}

TEST_F(KernelEquivalence, GemvTransposeAndOuter) {
    const std::size_t rows = 37, cols = 21;
    const auto w = randomVec(rng_, rows * cols);
    auto g = randomVec(rng_, rows);
    g[3] = 0.0;
    const auto x = randomVec(rng_, cols);
    std::vector<double> gx1(cols, 0.5), gx2(cols, 0.5);
    ref_.gemvTransposeAcc(w.data(), g.data(), gx1.data(), rows, cols);
    vec_->gemvTransposeAcc(w.data(), g.data(), gx2.data(), rows, cols);
    for (std::size_t i = 0; i < cols; ++i) EXPECT_NEAR(gx1[i], gx2[i], 1e-12);
    std::vector<double> gw1(rows * cols, 0.25), gw2(rows * cols, 0.25);
    ref_.outerAcc(g.data(), x.data(), gw1.data(), rows, cols);
    vec_->outerAcc(g.data(), x.data(), gw2.data(), rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) EXPECT_NEAR(gw1[i], gw2[i], 1e-14);
}

TEST_F(KernelEquivalence, HaarBitExact) {
    for (std::size_t pairs : {1u, 2u, 3u, 4u, 5u, 8u, 40u}) {
        const auto x = randomVec(rng_, 2 * pairs);
        std::vector<double> a1(pairs), d1(pairs), a2(pairs), d2(pairs);
        ref_.haarForward(x.data(), a1.data(), d1.data(), pairs, 1.0);
        vec_->haarForward(x.data(), a2.data(), d2.data(), pairs, 1.0);
        EXPECT_EQ(a1, a2);
        EXPECT_EQ(d1, d2);
        std::vector<double> x1(2 * pairs), x2(2 * pairs);
        ref_.haarInverse(a1.data(), d1.data(), x1.data(), pairs, 0.5);
        vec_->haarInverse(a1.data(), d1.data(), x2.data(), pairs, 0.5);
        EXPECT_EQ(x1, x2);
    }
}

TEST_F(KernelEquivalence, AdamBitExact) {
    const std::size_t n = 103;
    auto p1 = randomVec(rng_, n), m1 = randomVec(rng_, n), v1 = randomVec(rng_, n);
    for (auto& v : v1) v = std::abs(v);
    auto p2 = p1, m2 = m1, v2 = v1;
    const auto g = randomVec(rng_, n);
    AdamStep s;
    s.lr = 1e-3 / (1.0 - 0.9 * 0.9);
    s.bias2_sqrt = std::sqrt(1.0 - 0.999 * 0.999);
    ref_.adamUpdate(p1.data(), m1.data(), v1.data(), g.data(), n, s);
    vec_->adamUpdate(p2.data(), m2.data(), v2.data(), g.data(), n, s);
    EXPECT_EQ(p1, p2);
    EXPECT_EQ(m1, m2);
    EXPECT_EQ(v1, v2);
}

TEST(KernelDispatch, OverrideAndReset) {
    EXPECT_TRUE(selectBackend(Backend::Scalar));
    EXPECT_EQ(active().backend, Backend::Scalar);
    resetBackend();
    if (avx2Kernels()) {
        EXPECT_EQ(active().backend, Backend::Avx2);
        EXPECT_TRUE(selectBackend(Backend::Avx2));
    } else {
        EXPECT_FALSE(selectBackend(Backend::Avx2));
    }
    resetBackend();
}

TEST(KernelScalar, AdamZeroLearningRateKeepsParams) {
    std::vector<double> p{1.0, -2.0, 0.0}, m(3, 0.0), v(3, 0.0), g{0.5, -0.1, 3.0};
    const auto before = p;
    AdamStep s;
    s.lr = 0.0;
    s.bias2_sqrt = std::sqrt(1.0 - 0.999);
    scalarKernels().adamUpdate(p.data(), m.data(), v.data(), g.data(), 3, s);
    EXPECT_EQ(p, before);
}
