#include "scopekit/wavelet.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "scopekit/errors.hpp"
#include "scopekit/kernels/kernels.hpp"

namespace scopekit::wavelet {

namespace {

constexpr double kInverseScale = 1.0 / (2.0 * kForwardScale);

std::size_t pow2(std::size_t n) { return std::size_t{1} << n; }

}  // namespace

HaarPair haarForward(std::span<const double> signal) {
    if (signal.empty() || signal.size() % 2 != 0) {
        throw LengthError("haar forward needs an even, non-zero length; got " +
                          std::to_string(signal.size()));
    }
    const std::size_t half = signal.size() / 2;
    HaarPair out{std::vector<double>(half), std::vector<double>(half)};
    kernels::active().haarForward(signal.data(), out.approx.data(), out.detail.data(), half,
                                  kForwardScale);
    return out;
}

std::vector<double> haarInverse(std::span<const double> approx, std::span<const double> detail) {
    if (approx.size() != detail.size()) {
        throw ShapeError("haar inverse needs equal lengths; got " + std::to_string(approx.size()) +
                         " and " + std::to_string(detail.size()));
    }
    std::vector<double> out(approx.size() * 2);
    kernels::active().haarInverse(approx.data(), detail.data(), out.data(), approx.size(),
                                  kInverseScale);
    return out;
}

std::string WaveletPyramid::shapeIssue() const {
    std::ostringstream err;
    if (levels == 0) err << "pyramid has zero levels; ";
    if (details.size() != levels) err << "expected " << levels << " detail levels, got " << details.size() << "; ";
    if (levels > 0 && levels < 64 && source_length % pow2(levels) != 0) {
        err << "source length " << source_length << " not divisible by " << pow2(levels) << "; ";
    }
    const std::size_t k = approximation.cols();
    for (std::size_t l = 1; l <= details.size(); ++l) {
        const std::size_t want = source_length >> l;
        if (details[l - 1].rows() != want || details[l - 1].cols() != k) {
            err << "detail level " << l << " has " << details[l - 1].rows() << "x" << details[l - 1].cols()
                << ", expected " << want << "x" << k << "; ";
        }
    }
    if (levels < 64 && approximation.rows() != (source_length >> levels)) {
        err << "approximation has " << approximation.rows() << " rows, expected "
            << (source_length >> levels) << "; ";
    }
    return err.str();
}

WaveletPyramid decompose(const Matrix& channels, std::size_t levels) {
    if (levels == 0) throw ParameterError("decompose needs at least one level");
    const std::size_t length = channels.rows();
    if (levels >= 32 || length == 0 || length % pow2(levels) != 0) {
        throw LengthError("signal length " + std::to_string(length) + " must be divisible by 2^" +
                          std::to_string(levels) + " = " +
                          std::to_string(levels < 32 ? pow2(levels) : 0));
    }
    const std::size_t k = channels.cols();
    WaveletPyramid pyr;
    pyr.levels = levels;
    pyr.source_length = length;
    for (std::size_t l = 1; l <= levels; ++l) pyr.details.emplace_back(length >> l, k);
    pyr.approximation = Matrix(length >> levels, k);

    const auto& kern = kernels::active();
    std::vector<double> current;
    std::vector<double> approx;
    std::vector<double> detail;
    for (std::size_t c = 0; c < k; ++c) {
        current = channels.column(c);
        for (std::size_t l = 1; l <= levels; ++l) {
            const std::size_t half = current.size() / 2;
            approx.resize(half);
            detail.resize(half);
            kern.haarForward(current.data(), approx.data(), detail.data(), half, kForwardScale);
            pyr.details[l - 1].setColumn(c, detail);
            current.swap(approx);
        }
        pyr.approximation.setColumn(c, current);
    }
    return pyr;
}

Matrix reconstruct(const WaveletPyramid& pyramid) {
    if (const auto issue = pyramid.shapeIssue(); !issue.empty()) {
        throw ShapeError("malformed pyramid: " + issue);
    }
    const std::size_t k = pyramid.approximation.cols();
    Matrix out(pyramid.source_length, k);
    const auto& kern = kernels::active();
    std::vector<double> current;
    std::vector<double> next;
    for (std::size_t c = 0; c < k; ++c) {
        current = pyramid.approximation.column(c);
        for (std::size_t l = pyramid.levels; l >= 1; --l) {
            const auto detail = pyramid.details[l - 1].column(c);
            next.resize(current.size() * 2);
            kern.haarInverse(current.data(), detail.data(), next.data(), current.size(), kInverseScale);
            current.swap(next);
        }
        out.setColumn(c, current);
    }
    return out;
}

Matrix downsample(const Matrix& m, std::size_t stride, std::size_t limit) {
    if (stride == 0) throw ParameterError("downsample stride must be positive");
    const std::size_t available = (m.rows() + stride - 1) / stride;
    const std::size_t n = std::min(available, limit);
    Matrix out(n, m.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = m.row(i * stride);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

ScopedStack dwhDecompose(const Matrix& channels, std::size_t levels, std::size_t horizon) {
    if (levels == 0) throw ParameterError("dwh needs at least one level");
    if (horizon == 0) throw ParameterError("dwh horizon must be at least one sample");
    if (levels >= 32) throw ParameterError("dwh level count too large");
    ScopedStack stack;
    stack.horizon = horizon;
    for (std::size_t l = 1; l <= levels; ++l) {
        const std::size_t stride = pow2(l - 1);
        // floor(T / 2^(l-1)) samples exist at this stride
        const std::size_t available = channels.rows() / stride;
        stack.levels.push_back(downsample(channels, stride, std::min(horizon, available)));
    }
    return stack;
}

}  // namespace scopekit::wavelet
