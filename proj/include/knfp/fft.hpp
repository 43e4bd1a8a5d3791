#pragma once

#include <complex>
#include <vector>

namespace knfp::fft {

// In-place unnormalized c2c DFT over a subset of axes of a row-major array.
// sign = -1 forward, +1 backward. Remaining axes are batched. Plans are
// cached per (shape, axes, sign); safe to call from one thread at a time.
void transform(std::complex<double>* data, const std::vector<int>& shape,
               const std::vector<int>& axes, int sign);

}  // namespace knfp::fft
