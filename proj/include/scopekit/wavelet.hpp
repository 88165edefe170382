#pragma once

// Haar discrete wavelet transform and the two multi-scope decompositions of a
// trajectory profile: the recursive DWT pyramid and downsampling-within-horizon
// (DWH) stacks.

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "scopekit/matrix.hpp"

namespace scopekit::wavelet {

/// Forward coefficient scale. 1.0 gives the sum/difference convention
/// (approx = x0 + x1, detail = x0 - x1); 1/sqrt(2) would give the orthonormal
/// transform. The inverse and the energy identity follow from this constant.
inline constexpr double kForwardScale = 1.0;
inline constexpr std::string_view kConvention = "haar-sumdiff";

/// Energy gain of one forward step: sum(a^2) + sum(d^2) = gain * sum(x^2).
inline constexpr double kEnergyGain = 2.0 * kForwardScale * kForwardScale;

struct HaarPair {
    std::vector<double> approx;
    std::vector<double> detail;
};

HaarPair haarForward(std::span<const double> signal);
std::vector<double> haarInverse(std::span<const double> approx, std::span<const double> detail);

struct WaveletPyramid {
    std::size_t levels = 0;
    std::size_t source_length = 0;
    Matrix approximation;         // (T / 2^N) x K
    std::vector<Matrix> details;  // details[l-1] is (T / 2^l) x K

    /// Empty when every level has its expected shape, otherwise a description.
    std::string shapeIssue() const;
};

/// Multi-level decomposition of each column of a T x K matrix.
WaveletPyramid decompose(const Matrix& channels, std::size_t levels);

Matrix reconstruct(const WaveletPyramid& pyramid);

struct ScopedStack {
    std::size_t horizon = 0;    // H, samples kept per level
    std::vector<Matrix> levels; // levels[l-1]: source strided by 2^(l-1), first H rows
};

ScopedStack dwhDecompose(const Matrix& channels, std::size_t levels, std::size_t horizon);

/// Rows 0, stride, 2*stride, ... of a matrix, at most `limit` of them.
Matrix downsample(const Matrix& m, std::size_t stride, std::size_t limit = static_cast<std::size_t>(-1));

}  // namespace scopekit::wavelet
