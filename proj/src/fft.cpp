#include "snm/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <vector>

#include "snm/common.hpp"

namespace snm {

namespace {

// Plan cache. FFTW plan creation is not thread-safe; execution via
// fftw_execute_dft on distinct arrays is. Plans are created with
// FFTW_UNALIGNED so they accept any caller buffer.
class PlanCache {
 public:
  fftw_plan get(std::int64_t h, std::int64_t w, int sign) {
    std::lock_guard<std::mutex> lock(mu_);
    const Key key{h, w, sign};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<fftw_complex> scratch(static_cast<std::size_t>(h * w));
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), scratch.data(),
                                   scratch.data(), sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw error("fftw plan creation failed");
    plans_.emplace(key, p);
    return p;
  }

 private:
  using Key = std::tuple<std::int64_t, std::int64_t, int>;
  std::mutex mu_;
  std::map<Key, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

// roll rows by sh (dst[(i+sh) % h] = src[i]), columns by sw.
void roll2(const std::complex<double>* in, std::complex<double>* out, std::int64_t h,
           std::int64_t w, std::int64_t sh, std::int64_t sw) {
  for (std::int64_t i = 0; i < h; ++i) {
    const std::int64_t di = (i + sh) % h;
    for (std::int64_t j = 0; j < w; ++j) {
      out[di * w + ((j + sw) % w)] = in[i * w + j];
    }
  }
}

}  // namespace

void fft2_centered(const std::complex<double>* in, std::complex<double>* out, std::int64_t h,
                   std::int64_t w, bool inverse) {
  if (h < 1 || w < 1) throw dimension_error("fft2_centered: non-positive size");
  const std::size_t n = static_cast<std::size_t>(h * w);
  std::vector<std::complex<double>> a(n), b(n);
  // ifftshift: roll by ceil(n/2) == n - n/2
  roll2(in, a.data(), h, w, h - h / 2, w - w / 2);
  fftw_plan p = plan_cache().get(h, w, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(a.data()),
                   reinterpret_cast<fftw_complex*>(b.data()));
  roll2(b.data(), out, h, w, h / 2, w / 2);  // fftshift
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * static_cast<double>(w));
  for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
}

void fft2_centered(const std::complex<float>* in, std::complex<float>* out, std::int64_t h,
                   std::int64_t w, bool inverse) {
  const std::size_t n = static_cast<std::size_t>(h * w);
  std::vector<std::complex<double>> tmp(n);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = std::complex<double>(in[i].real(), in[i].imag());
  fft2_centered(tmp.data(), tmp.data(), h, w, inverse);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::complex<float>(static_cast<float>(tmp[i].real()), static_cast<float>(tmp[i].imag()));
}

}  // namespace snm
