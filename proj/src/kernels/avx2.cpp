// AVX2/FMA variants. Compiled with -mavx2 -mfma; only reached through the
// dispatch table after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "scopekit/kernels/kernels.hpp"

namespace scopekit::kernels {
namespace {

inline double horizontalSum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d pair = _mm_add_pd(lo, hi);
    const __m128d swapped = _mm_unpackhi_pd(pair, pair);
    return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

double dotAvx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double sum = horizontalSum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void axpyAvx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        // mul then add (no FMA) so the result matches the scalar kernel bit for bit
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemvAvx2(const double* w, const double* x, const double* bias, double* y, std::size_t rows,
              std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double acc = dotAvx2(w + r * cols, x, cols);
        y[r] = bias ? acc + bias[r] : acc;
    }
}

void gemvTransposeAccAvx2(const double* w, const double* g, double* gx, std::size_t rows,
                          std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] != 0.0) axpyAvx2(g[r], w + r * cols, gx, cols);
    }
}

void outerAccAvx2(const double* g, const double* x, double* gw, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (g[r] != 0.0) axpyAvx2(g[r], x, gw + r * cols, cols);
    }
}

void haarForwardAvx2(const double* x, double* approx, double* detail, std::size_t pairs,
                     double scale) {
    const __m256d vs = _mm256_set1_pd(scale);
    std::size_t i = 0;
    for (; i + 4 <= pairs; i += 4) {
        const __m256d lo = _mm256_loadu_pd(x + 2 * i);      // x0 x1 x2 x3
        const __m256d hi = _mm256_loadu_pd(x + 2 * i + 4);  // x4 x5 x6 x7
        // hadd -> [x0+x1, x4+x5, x2+x3, x6+x7]; permute restores pair order
        const __m256d sum = _mm256_permute4x64_pd(_mm256_hadd_pd(lo, hi), 0xD8);
        const __m256d diff = _mm256_permute4x64_pd(_mm256_hsub_pd(lo, hi), 0xD8);
        _mm256_storeu_pd(approx + i, _mm256_mul_pd(vs, sum));
        _mm256_storeu_pd(detail + i, _mm256_mul_pd(vs, diff));
    }
    for (; i < pairs; ++i) {
        approx[i] = scale * (x[2 * i] + x[2 * i + 1]);
        detail[i] = scale * (x[2 * i] - x[2 * i + 1]);
    }
}

void haarInverseAvx2(const double* approx, const double* detail, double* x, std::size_t pairs,
                     double scale) {
    const __m256d vs = _mm256_set1_pd(scale);
    std::size_t i = 0;
    for (; i + 4 <= pairs; i += 4) {
        const __m256d a = _mm256_loadu_pd(approx + i);
        const __m256d d = _mm256_loadu_pd(detail + i);
        const __m256d even = _mm256_mul_pd(vs, _mm256_add_pd(a, d));  // e0 e1 e2 e3
        const __m256d odd = _mm256_mul_pd(vs, _mm256_sub_pd(a, d));   // o0 o1 o2 o3
        const __m256d lo = _mm256_unpacklo_pd(even, odd);             // e0 o0 e2 o2
        const __m256d hi = _mm256_unpackhi_pd(even, odd);             // e1 o1 e3 o3
        _mm256_storeu_pd(x + 2 * i, _mm256_permute2f128_pd(lo, hi, 0x20));
        _mm256_storeu_pd(x + 2 * i + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
    }
    for (; i < pairs; ++i) {
        x[2 * i] = scale * (approx[i] + detail[i]);
        x[2 * i + 1] = scale * (approx[i] - detail[i]);
    }
}

void adamUpdateAvx2(double* params, double* m, double* v, const double* grad, std::size_t n,
                    const AdamStep& s) {
    const double c1 = 1.0 - s.beta1;
    const double c2 = 1.0 - s.beta2;
    const __m256d vb1 = _mm256_set1_pd(s.beta1);
    const __m256d vb2 = _mm256_set1_pd(s.beta2);
    const __m256d vc1 = _mm256_set1_pd(c1);
    const __m256d vc2 = _mm256_set1_pd(c2);
    const __m256d vbias = _mm256_set1_pd(s.bias2_sqrt);
    const __m256d veps = _mm256_set1_pd(s.epsilon);
    const __m256d vlr = _mm256_set1_pd(s.lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vc1, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(vc2, _mm256_mul_pd(g, g)));
        const __m256d denom = _mm256_add_pd(_mm256_div_pd(_mm256_sqrt_pd(vi), vbias), veps);
        const __m256d p = _mm256_sub_pd(_mm256_loadu_pd(params + i), _mm256_mul_pd(vlr, _mm256_div_pd(mi, denom)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        _mm256_storeu_pd(params + i, p);
    }
    for (; i < n; ++i) {
        const double g = grad[i];
        m[i] = s.beta1 * m[i] + c1 * g;
        v[i] = s.beta2 * v[i] + c2 * (g * g);
        const double denom = std::sqrt(v[i]) / s.bias2_sqrt + s.epsilon;
        params[i] -= s.lr * (m[i] / denom);
    }
}

}  // namespace

const KernelTable& avx2KernelTable() {
    static const KernelTable table{Backend::Avx2,   "avx2",           &dotAvx2,         &axpyAvx2,
                                   &gemvAvx2,       &gemvTransposeAccAvx2, &outerAccAvx2,
                                   &haarForwardAvx2, &haarInverseAvx2, &adamUpdateAvx2};
    return table;
}

}  // namespace scopekit::kernels
