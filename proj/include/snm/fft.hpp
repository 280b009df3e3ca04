// Centered unitary 2D DFT used by every k-space operation.
//
// F = fftshift o DFT/sqrt(HW) o ifftshift, so the image-center pixel is the
// spatial origin and DC lands in the center of the k-space array. F is
// unitary by construction: adjoint == inverse, no rescaling anywhere.
#pragma once

#include <complex>
#include <cstdint>

namespace snm {

// out may alias in. Throws dimension_error for non-positive sizes.
void fft2_centered(const std::complex<double>* in, std::complex<double>* out, std::int64_t h,
                   std::int64_t w, bool inverse);

// Single-precision entry point. Math runs in double internally (the image
// ships only the double-precision FFTW library); results are rounded once.
void fft2_centered(const std::complex<float>* in, std::complex<float>* out, std::int64_t h,
                   std::int64_t w, bool inverse);

}  // namespace snm
