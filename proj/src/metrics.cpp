#include "snm/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace snm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b)
    throw dimension_error(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                          shape_str(b));
}

void check_class(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) throw label_error("invalid class id");
}

// Boundary pixels of one class: 4-adjacent to a non-class pixel or on the
// image border.
std::vector<std::pair<std::int64_t, std::int64_t>> class_boundary(const LabelMap& m,
                                                                  int class_id) {
  const std::int64_t h = m.h(), w = m.w();
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      if (m.labels(r, c) != class_id) continue;
      const bool border = r == 0 || r == h - 1 || c == 0 || c == w - 1;
      if (border || m.labels(r - 1, c) != class_id || m.labels(r + 1, c) != class_id ||
          m.labels(r, c - 1) != class_id || m.labels(r, c + 1) != class_id)
        out.emplace_back(r, c);
    }
  return out;
}

// 1D squared Euclidean distance transform (lower envelope of parabolas).
void edt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
           std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k]) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const int p = v[k];
    d[q] = (q - p) * static_cast<double>(q - p) + f[p];
  }
}

// Exact squared EDT of a site set over an (h, w) grid. Non-site cells start
// at a finite sentinel above any realizable squared distance, which keeps the
// parabola intersections well-defined; with a nonempty site set the sentinel
// can never win, so results stay exact.
std::vector<double> edt2d(const std::vector<std::pair<std::int64_t, std::int64_t>>& sites,
                          std::int64_t h, std::int64_t w) {
  const double big = static_cast<double>(h * h + w * w + 2);
  std::vector<double> grid(static_cast<std::size_t>(h * w), big);
  for (const auto& [r, c] : sites) grid[static_cast<std::size_t>(r * w + c)] = 0.0;

  const int mx = static_cast<int>(std::max(h, w));
  std::vector<double> f(static_cast<std::size_t>(mx)), d(static_cast<std::size_t>(mx));
  std::vector<int> v(static_cast<std::size_t>(mx));
  std::vector<double> z(static_cast<std::size_t>(mx + 1));

  for (std::int64_t c = 0; c < w; ++c) {  // columns first
    for (std::int64_t r = 0; r < h; ++r) f[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r * w + c)];
    f.resize(static_cast<std::size_t>(h));
    d.resize(static_cast<std::size_t>(h));
    edt1d(f, d, v, z);
    for (std::int64_t r = 0; r < h; ++r) grid[static_cast<std::size_t>(r * w + c)] = d[static_cast<std::size_t>(r)];
    f.resize(static_cast<std::size_t>(mx));
    d.resize(static_cast<std::size_t>(mx));
  }
  for (std::int64_t r = 0; r < h; ++r) {  // then rows
    for (std::int64_t c = 0; c < w; ++c) f[static_cast<std::size_t>(c)] = grid[static_cast<std::size_t>(r * w + c)];
    f.resize(static_cast<std::size_t>(w));
    d.resize(static_cast<std::size_t>(w));
    edt1d(f, d, v, z);
    for (std::int64_t c = 0; c < w; ++c) grid[static_cast<std::size_t>(r * w + c)] = d[static_cast<std::size_t>(c)];
    f.resize(static_cast<std::size_t>(mx));
    d.resize(static_cast<std::size_t>(mx));
  }
  return grid;
}

// Linear-interpolation percentile over an unsorted sample.
double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 1) return values[0];
  const double rank = (p / 100.0) * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::int64_t count_class(const LabelMap& m, int class_id) {
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < m.labels.numel(); ++i)
    if (m.labels[i] == class_id) ++n;
  return n;
}

template <typename T>
double psnr_impl(const Tensor<T>& x, const Tensor<T>& ref) {
  check_same_shape(x.dims(), ref.dims(), "psnr");
  if (x.numel() == 0) throw parameter_error("psnr on empty image");
  double mse = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(ref[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  if (mse == 0.0) return kInf;
  return 10.0 * std::log10(1.0 / mse);  // MAX = 1 on [0,1]-scaled images
}

template <typename T>
double nmse_impl(const Tensor<T>& x, const Tensor<T>& ref) {
  check_same_shape(x.dims(), ref.dims(), "nmse");
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(ref[i]);
    num += d * d;
    den += static_cast<double>(ref[i]) * static_cast<double>(ref[i]);
  }
  if (den == 0.0) throw undefined_metric_error("nmse undefined for a zero reference");
  return num / den;
}

}  // namespace

double psnr(const Tensor<double>& x, const Tensor<double>& ref) { return psnr_impl(x, ref); }
double psnr(const Tensor<float>& x, const Tensor<float>& ref) { return psnr_impl(x, ref); }
double nmse(const Tensor<double>& x, const Tensor<double>& ref) { return nmse_impl(x, ref); }
double nmse(const Tensor<float>& x, const Tensor<float>& ref) { return nmse_impl(x, ref); }

double dice(const LabelMap& seg, const LabelMap& ref, int class_id) {
  check_class(class_id);
  check_same_shape(seg.labels.dims(), ref.labels.dims(), "dice");
  std::int64_t a = 0, b = 0, inter = 0;
  for (std::int64_t i = 0; i < seg.labels.numel(); ++i) {
    const bool in_a = seg.labels[i] == class_id;
    const bool in_b = ref.labels[i] == class_id;
    a += in_a;
    b += in_b;
    inter += in_a && in_b;
  }
  if (a + b == 0) return 100.0;
  return 200.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double hd95(const LabelMap& seg, const LabelMap& ref, int class_id, double spacing) {
  check_class(class_id);
  check_same_shape(seg.labels.dims(), ref.labels.dims(), "hd95");
  const auto bs = class_boundary(seg, class_id);
  const auto br = class_boundary(ref, class_id);
  if (bs.empty() || br.empty())
    throw undefined_metric_error("hd95 undefined for an empty class mask (class " +
                                 std::to_string(class_id) + ")");
  const std::int64_t h = seg.h(), w = seg.w();
  const auto dt_ref = edt2d(br, h, w);
  const auto dt_seg = edt2d(bs, h, w);

  std::vector<double> d_seg_to_ref, d_ref_to_seg;
  d_seg_to_ref.reserve(bs.size());
  d_ref_to_seg.reserve(br.size());
  for (const auto& [r, c] : bs)
    d_seg_to_ref.push_back(std::sqrt(dt_ref[static_cast<std::size_t>(r * w + c)]));
  for (const auto& [r, c] : br)
    d_ref_to_seg.push_back(std::sqrt(dt_seg[static_cast<std::size_t>(r * w + c)]));

  const double p1 = percentile(std::move(d_seg_to_ref), 95.0);
  const double p2 = percentile(std::move(d_ref_to_seg), 95.0);
  return spacing * std::max(p1, p2);
}

double avd(const LabelMap& seg, const LabelMap& ref, int class_id) {
  check_class(class_id);
  check_same_shape(seg.labels.dims(), ref.labels.dims(), "avd");
  const std::int64_t a = count_class(seg, class_id);
  const std::int64_t b = count_class(ref, class_id);
  if (b == 0) throw undefined_metric_error("avd undefined for an empty reference mask");
  return 100.0 * static_cast<double>(std::llabs(a - b)) / static_cast<double>(b);
}

MetricsReport evaluate_dataset(const std::vector<EvalOutput>& model_outputs,
                               const std::vector<LabeledSample>& references, double spacing) {
  if (model_outputs.empty()) throw parameter_error("evaluate_dataset on an empty dataset");
  if (model_outputs.size() != references.size())
    throw dimension_error("evaluate_dataset: output/reference counts differ");

  MetricsReport rep;
  rep.n_samples = static_cast<int>(model_outputs.size());
  double psnr_sum = 0.0, nmse_sum = 0.0;
  int psnr_n = 0;
  std::map<int, std::array<double, 3>> sums;   // dc, hd, avd
  std::map<int, std::array<int, 3>> counts;

  for (std::size_t i = 0; i < model_outputs.size(); ++i) {
    const auto& out = model_outputs[i];
    const auto& ref = references[i];
    if (out.image) {
      psnr_sum += psnr(*out.image, ref.image);
      nmse_sum += nmse(*out.image, ref.image);
      ++psnr_n;
    }
    if (out.seg) {
      for (int c = 1; c < kNumClasses; ++c) {
        auto& s = sums[c];
        auto& n = counts[c];
        s[0] += dice(*out.seg, ref.labels, c);
        ++n[0];
        try {
          s[1] += hd95(*out.seg, ref.labels, c, spacing);
          ++n[1];
        } catch (const undefined_metric_error&) {
          ++rep.excluded["hd95.c" + std::to_string(c)];
        }
        try {
          s[2] += avd(*out.seg, ref.labels, c);
          ++n[2];
        } catch (const undefined_metric_error&) {
          ++rep.excluded["avd.c" + std::to_string(c)];
        }
      }
    }
  }

  if (psnr_n > 0) {
    rep.psnr = psnr_sum / psnr_n;
    rep.nmse = nmse_sum / psnr_n;
  }
  for (const auto& [c, s] : sums) {
    ClassMetrics m;
    const auto& n = counts[c];
    m.dc = n[0] ? s[0] / n[0] : 0.0;
    m.hd95 = n[1] ? s[1] / n[1] : 0.0;
    m.avd = n[2] ? s[2] / n[2] : 0.0;
    rep.per_class[c] = m;
  }
  return rep;
}

double mean_dice(const MetricsReport& r) {
  if (r.per_class.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [c, m] : r.per_class) acc += m.dc;
  return acc / static_cast<double>(r.per_class.size());
}

namespace {

double mean_hd(const MetricsReport& r) {
  if (r.per_class.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [c, m] : r.per_class) acc += m.hd95;
  return acc / static_cast<double>(r.per_class.size());
}

double mean_avd(const MetricsReport& r) {
  if (r.per_class.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& [c, m] : r.per_class) acc += m.avd;
  return acc / static_cast<double>(r.per_class.size());
}

}  // namespace

bool better_segmentation(const MetricsReport& a, const MetricsReport& b) {
  if (mean_dice(a) != mean_dice(b)) return mean_dice(a) > mean_dice(b);
  if (mean_hd(a) != mean_hd(b)) return mean_hd(a) < mean_hd(b);
  return mean_avd(a) < mean_avd(b);
}

bool better_reconstruction(const MetricsReport& a, const MetricsReport& b) {
  if (a.psnr != b.psnr) return a.psnr > b.psnr;
  return a.nmse < b.nmse;
}

namespace {

const char* class_name(int c) {
  switch (c) {
    case 1:
      return "GM";
    case 2:
      return "WM";
    case 3:
      return "CSF";
    default:
      return "BG";
  }
}

std::string fmt2(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt4(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "method,psnr,nmse,n_samples";
  for (int c = 1; c < kNumClasses; ++c)
    os << "," << class_name(c) << "_dc," << class_name(c) << "_hd," << class_name(c) << "_avd";
  os << "\n";
  for (const auto& [name, r] : rows) {
    os << name << "," << fmt4(r.psnr) << "," << fmt4(r.nmse) << "," << r.n_samples;
    for (int c = 1; c < kNumClasses; ++c) {
      const auto it = r.per_class.find(c);
      if (it == r.per_class.end()) {
        os << ",,,";
      } else {
        os << "," << fmt2(it->second.dc) << "," << fmt2(it->second.hd95) << ","
           << fmt2(it->second.avd);
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "Method              ";
  for (int c = 1; c < kNumClasses; ++c)
    os << "|   " << class_name(c) << " DC    HD   AVD ";
  os << "| PSNR   NMSE\n";
  for (const auto& [name, r] : rows) {
    char namebuf[32];
    std::snprintf(namebuf, sizeof(namebuf), "%-20s", name.c_str());
    os << namebuf;
    for (int c = 1; c < kNumClasses; ++c) {
      const auto it = r.per_class.find(c);
      if (it == r.per_class.end()) {
        os << "|     -     -     - ";
      } else {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "| %6.2f %5.2f %5.2f ", it->second.dc, it->second.hd95,
                      it->second.avd);
        os << buf;
      }
    }
    os << "| " << fmt2(r.psnr) << "  " << fmt4(r.nmse) << "\n";
  }
  return os.str();
}

}  // namespace snm
