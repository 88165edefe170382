#pragma once

// Data-parallel inner loops used by the wavelet, policy and optimizer code.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2/FMA variant is compiled into its own translation unit and selected at
// runtime when the CPU supports it. Elementwise kernels (Haar, Adam) produce
// bit-identical results across backends; reductions (dot, gemv) differ only
// in summation order.

#include <cstddef>
#include <optional>
#include <string_view>

namespace scopekit::kernels {

enum class Backend { Scalar, Avx2 };

struct AdamStep {
    double lr = 0.0;          // already bias-corrected step size
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double bias2_sqrt = 1.0;  // sqrt(1 - beta2^t)
};

struct KernelTable {
    Backend backend;
    std::string_view name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    /// y = W x + b, W row-major rows x cols; bias may be null.
    void (*gemv)(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                 std::size_t cols);
    /// gx += W^T g
    void (*gemvTransposeAcc)(const double* w, const double* g, double* gx, std::size_t rows,
                             std::size_t cols);
    /// gW += g x^T
    void (*outerAcc)(const double* g, const double* x, double* gw, std::size_t rows, std::size_t cols);
    /// a[i] = s (x[2i] + x[2i+1]), d[i] = s (x[2i] - x[2i+1])
    void (*haarForward)(const double* x, double* approx, double* detail, std::size_t pairs,
                        double scale);
    /// x[2i] = k (a[i] + d[i]), x[2i+1] = k (a[i] - d[i])
    void (*haarInverse)(const double* approx, const double* detail, double* x, std::size_t pairs,
                        double scale);
    /// In-place adaptive-moment update of params with moments m, v.
    void (*adamUpdate)(double* params, double* m, double* v, const double* grad, std::size_t n,
                       const AdamStep& step);
};

const KernelTable& scalarKernels();

/// Null when the AVX2 variant is not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2Kernels();

/// Kernels used by the library; the best supported backend unless overridden.
const KernelTable& active();

/// Forces a backend (tests and benchmarks). Returns false if unavailable.
bool selectBackend(Backend backend);

/// Re-enables automatic selection.
void resetBackend();

}  // namespace scopekit::kernels
