#include <cmath>

#include "scopekit/kernels/kernels.hpp"

namespace scopekit::kernels {
namespace {

double dotScalar(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void axpyScalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemvScalar(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
                std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double acc = dotScalar(w + r * cols, x, cols);
        y[r] = bias ? acc + bias[r] : acc;
    }
}

void gemvTransposeAccScalar(const double* w, const double* g, double* gx, std::size_t rows,
                            std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] != 0.0) axpyScalar(g[r], w + r * cols, gx, cols);
    }
}

void outerAccScalar(const double* g, const double* x, double* gw, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] != 0.0) axpyScalar(g[r], x, gw + r * cols, cols);
    }
}

void haarForwardScalar(const double* x, double* approx, double* detail, std::size_t pairs,
                       double scale) {
    for (std::size_t i = 0; i < pairs; ++i) {
        approx[i] = scale * (x[2 * i] + x[2 * i + 1]);
        detail[i] = scale * (x[2 * i] - x[2 * i + 1]);
    }
}

void haarInverseScalar(const double* approx, const double* detail, double* x, std::size_t pairs,
                       double scale) {
    for (std::size_t i = 0; i < pairs; ++i) {
        x[2 * i] = scale * (approx[i] + detail[i]);
        x[2 * i + 1] = scale * (approx[i] - detail[i]);
    }
}

void adamUpdateScalar(double* params, double* m, double* v, const double* grad, std::size_t n,
                      const AdamStep& s) {
    const double c1 = 1.0 - s.beta1;
    const double c2 = 1.0 - s.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        m[i] = s.beta1 * m[i] + c1 * g;
        v[i] = s.beta2 * v[i] + c2 * (g * g);
        const double denom = std::sqrt(v[i]) / s.bias2_sqrt + s.epsilon;
        params[i] -= s.lr * (m[i] / denom);
    }
}

}  // namespace

const KernelTable& scalarKernels() {
    static const KernelTable table{Backend::Scalar,        "scalar",           &dotScalar,
                                   &axpyScalar,            &gemvScalar,        &gemvTransposeAccScalar,
                                   &outerAccScalar,        &haarForwardScalar, &haarInverseScalar,
                                   &adamUpdateScalar};
    return table;
}

}  // namespace scopekit::kernels
