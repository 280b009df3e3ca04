// Measurement physics: complex images, Cartesian undersampling masks,
// the undersampled Fourier operator and its adjoint, and the data-fidelity
// correction. All operations are pure; double precision throughout.
#pragma once

#include <complex>
#include <limits>

#include "snm/tensor.hpp"

namespace snm {

enum class Domain { image, kspace };

struct ComplexImage {
  Tensor<std::complex<double>> data;  // (H, W)
  Domain domain = Domain::image;

  std::int64_t h() const { return data.dim(0); }
  std::int64_t w() const { return data.dim(1); }
};

struct SamplingMask {
  Tensor<std::uint8_t> mask;  // (H, W), entries in {0,1}, constant along rows
  double sampling_rate = 0.0;
  double center_fraction = 0.0;
  std::uint64_t seed = 0;

  std::int64_t h() const { return mask.dim(0); }
  std::int64_t w() const { return mask.dim(1); }
  std::int64_t ones() const;
};

struct KSpaceMeasurement {
  Tensor<std::complex<double>> values;  // (H, W), zero at unsampled positions
  SamplingMask mask;
};

inline constexpr double kHardReplacement = std::numeric_limits<double>::infinity();

// Row-wise Cartesian mask: round(center_fraction*h) contiguous central rows
// always sampled, remaining rows drawn uniformly without replacement until
// round(sampling_rate*h) rows total. Deterministic in (h,w,rate,center,seed).
SamplingMask make_cartesian_mask(std::int64_t h, std::int64_t w, double sampling_rate,
                                 double center_fraction, std::uint64_t seed);

// mask .* F(x) for the centered unitary F.
KSpaceMeasurement forward_undersample(const ComplexImage& x, const SamplingMask& mask);

// F^H of the zero-padded measurement; the adjoint of forward_undersample.
ComplexImage zero_filled(const KSpaceMeasurement& y);

// Re-imposes measured coefficients on F(x_rec) at sampled positions:
// (k + noise_weight*y)/(1 + noise_weight), with noise_weight = inf meaning
// hard replacement by y. Returns F^H of the corrected k-space.
ComplexImage data_fidelity(const ComplexImage& x_rec, const KSpaceMeasurement& y,
                           double noise_weight = kHardReplacement);

// The per-coefficient correction shared with the network DF unit.
// weight < 0 is rejected; weight == inf is hard replacement.
template <typename T>
inline void correct_kspace(std::complex<T>* k, const std::complex<T>* y, const std::uint8_t* mask,
                           std::int64_t n, double weight) {
  if (weight == std::numeric_limits<double>::infinity()) {
    for (std::int64_t i = 0; i < n; ++i)
      if (mask[i]) k[i] = y[i];
  } else {
    const T a = static_cast<T>(1.0 / (1.0 + weight));
    const T b = static_cast<T>(weight / (1.0 + weight));
    for (std::int64_t i = 0; i < n; ++i)
      if (mask[i]) k[i] = a * k[i] + b * y[i];
  }
}

}  // namespace snm
