#include "snm/kspace.hpp"

#include <cmath>
#include <numeric>

#include "snm/fft.hpp"
#include "snm/rng.hpp"

namespace snm {

std::int64_t SamplingMask::ones() const {
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < mask.numel(); ++i) n += mask[i];
  return n;
}

SamplingMask make_cartesian_mask(std::int64_t h, std::int64_t w, double sampling_rate,
                                 double center_fraction, std::uint64_t seed) {
  if (h < 1 || w < 1) throw parameter_error("mask dimensions must be positive");
  if (!(sampling_rate > 0.0) || sampling_rate > 1.0)
    throw parameter_error("sampling_rate must be in (0, 1]");
  if (center_fraction < 0.0 || center_fraction > sampling_rate)
    throw parameter_error("center_fraction must be in [0, sampling_rate]");
  const std::int64_t total_rows = std::llround(sampling_rate * static_cast<double>(h));
  if (total_rows < 1) throw parameter_error("infeasible mask: h*sampling_rate < 1");
  const std::int64_t center_rows = std::llround(center_fraction * static_cast<double>(h));

  std::vector<std::uint8_t> row_sampled(static_cast<std::size_t>(h), 0);
  const std::int64_t center_start = (h - center_rows) / 2;
  for (std::int64_t r = center_start; r < center_start + center_rows; ++r)
    row_sampled[static_cast<std::size_t>(r)] = 1;

  std::vector<std::int64_t> rest;
  rest.reserve(static_cast<std::size_t>(h - center_rows));
  for (std::int64_t r = 0; r < h; ++r)
    if (!row_sampled[static_cast<std::size_t>(r)]) rest.push_back(r);

  Rng rng(seed);
  rng.shuffle(rest);
  for (std::int64_t i = 0; i < total_rows - center_rows; ++i)
    row_sampled[static_cast<std::size_t>(rest[static_cast<std::size_t>(i)])] = 1;

  SamplingMask m;
  m.mask = Tensor<std::uint8_t>({h, w});
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) m.mask(r, c) = row_sampled[static_cast<std::size_t>(r)];
  m.sampling_rate = sampling_rate;
  m.center_fraction = center_fraction;
  m.seed = seed;
  return m;
}

KSpaceMeasurement forward_undersample(const ComplexImage& x, const SamplingMask& mask) {
  if (x.domain != Domain::image) throw parameter_error("forward_undersample expects an image-domain input");
  if (x.h() != mask.h() || x.w() != mask.w())
    throw dimension_error("image/mask shape mismatch: " + shape_str(x.data.dims()) + " vs " +
                          shape_str(mask.mask.dims()));
  KSpaceMeasurement y;
  y.values = Tensor<std::complex<double>>(x.data.dims());
  fft2_centered(x.data.data(), y.values.data(), x.h(), x.w(), false);
  for (std::int64_t i = 0; i < y.values.numel(); ++i)
    if (!mask.mask[i]) y.values[i] = 0.0;
  y.mask = mask;
  return y;
}

ComplexImage zero_filled(const KSpaceMeasurement& y) {
  ComplexImage x;
  x.data = Tensor<std::complex<double>>(y.values.dims());
  fft2_centered(y.values.data(), x.data.data(), y.values.dim(0), y.values.dim(1), true);
  x.domain = Domain::image;
  return x;
}

ComplexImage data_fidelity(const ComplexImage& x_rec, const KSpaceMeasurement& y,
                           double noise_weight) {
  if (noise_weight < 0.0) throw parameter_error("noise_weight must be nonnegative");
  if (!x_rec.data.same_shape(y.values)) throw dimension_error("data_fidelity shape mismatch");
  const std::int64_t h = x_rec.h(), w = x_rec.w();
  Tensor<std::complex<double>> k(x_rec.data.dims());
  fft2_centered(x_rec.data.data(), k.data(), h, w, false);
  correct_kspace(k.data(), y.values.data(), y.mask.mask.data(), k.numel(), noise_weight);
  ComplexImage out;
  out.data = Tensor<std::complex<double>>(x_rec.data.dims());
  fft2_centered(k.data(), out.data.data(), h, w, true);
  out.domain = Domain::image;
  return out;
}

}  // namespace snm
