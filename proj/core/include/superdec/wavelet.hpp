#pragma once

#include <array>

#include "superdec/tensor.hpp"

namespace superdec {

// Single-level orthonormal 2-D Haar analysis/synthesis. Normalization is 1/2
// per level so the transform matrix is literally orthonormal (energy
// preserving, synthesis = exact inverse of analysis).
//
// Band order is fixed globally: [LL, LH, HL, HH]. LH is the horizontal
// high-pass within a row (column difference), HL the vertical one.

template <typename T>
struct WaveletBands {
    Tensor<T> ll, lh, hl, hh;  // each [B,C,H/2,W/2]
    Shape4 source_shape;       // [B,C,H,W]

    std::array<const Tensor<T>*, 4> all() const { return {&ll, &lh, &hl, &hh}; }
};

// For each non-overlapping 2x2 block [[a,b],[c,d]]:
//   LL=(a+b+c+d)/2  LH=(a-b+c-d)/2  HL=(a+b-c-d)/2  HH=(a-b-c+d)/2
// Odd spatial extents are a hard error (no padding).
template <typename T>
WaveletBands<T> dwt_haar(const Tensor<T>& x);

// Exact inverse:
//   a=(LL+LH+HL+HH)/2  b=(LL-LH+HL-HH)/2  c=(LL+LH-HL-HH)/2  d=(LL-LH-HL+HH)/2
template <typename T>
Tensor<T> idwt_haar(const WaveletBands<T>& bands);

// [B,C,H/2,W/2] x4 <-> [B,4C,H/2,W/2] stacked band-major: all LL channels,
// then all LH, HL, HH.
template <typename T>
Tensor<T> stack_bands(const WaveletBands<T>& bands);

template <typename T>
WaveletBands<T> unstack_bands(const Tensor<T>& stacked);

// Fraction of squared l2 energy per band, in band order; sums to 1.
// All-zero input is an error.
template <typename T>
std::array<double, 4> subband_energy(const WaveletBands<T>& bands);

} // namespace superdec
