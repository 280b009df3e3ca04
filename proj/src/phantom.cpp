#include "snm/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "snm/container.hpp"
#include "snm/rng.hpp"

namespace snm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Ellipse {
  double cy, cx;    // center, normalized [-0.5, 0.5] coordinates
  double ay, ax;    // semi-axes
  double theta;     // rotation, radians
  double scale = 1.0;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double u = std::cos(theta) * dx + std::sin(theta) * dy;
    const double v = -std::sin(theta) * dx + std::cos(theta) * dy;
    const double a = ax * scale, b = ay * scale;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

}  // namespace

LabeledSample generate_phantom(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  if (h < 32 || w < 32) throw parameter_error("phantom dimensions must be at least 32x32");
  Rng rng(seed);

  Ellipse head;
  head.cy = rng.uniform(-0.02, 0.02);
  head.cx = rng.uniform(-0.02, 0.02);
  head.ay = 0.40 * rng.uniform(0.95, 1.05);
  head.ax = 0.33 * rng.uniform(0.95, 1.05);
  head.theta = rng.uniform(-0.26, 0.26);

  Ellipse inner = head;  // WM boundary; the band between head and inner is GM
  inner.scale = rng.uniform(0.78, 0.84);

  const int n_vent = static_cast<int>(rng.below(3)) + 1;  // 1..3 CSF ventricles
  std::vector<Ellipse> vents;
  for (int v = 0; v < n_vent; ++v) {
    Ellipse e;
    const double side = (v == 0) ? -1.0 : (v == 1 ? 1.0 : 0.0);
    e.cx = head.cx + side * rng.uniform(0.08, 0.12);
    e.cy = head.cy + rng.uniform(-0.04, 0.06) + (side == 0.0 ? -0.10 : 0.0);
    e.ay = rng.uniform(0.10, 0.15);
    e.ax = rng.uniform(0.05, 0.08);
    e.theta = rng.uniform(-0.35, 0.35);
    vents.push_back(e);
  }

  // Per-tissue mean intensities; the draw ranges keep WM > GM > CSF > bg.
  const double mean_bg = 0.03 + rng.uniform(0.0, 0.02);
  const double mean_csf = 0.26 + rng.uniform(0.0, 0.04);
  const double mean_gm = 0.52 + rng.uniform(0.0, 0.06);
  const double mean_wm = 0.80 + rng.uniform(0.0, 0.06);
  const double means[4] = {mean_bg, mean_gm, mean_wm, mean_csf};

  const double amp = rng.uniform(0.04, 0.08);
  const double fx = rng.uniform(0.6, 1.4), fy = rng.uniform(0.6, 1.4);
  const double px = rng.uniform(0.0, 1.0), py = rng.uniform(0.0, 1.0);
  const double sigma = rng.uniform(0.005, 0.015);

  LabeledSample s;
  s.image = Tensor<float>({h, w});
  s.labels.labels = Tensor<std::uint8_t>({h, w});

  std::vector<double> img(static_cast<std::size_t>(h * w));
  for (std::int64_t r = 0; r < h; ++r) {
    const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(h) - 0.5;
    for (std::int64_t c = 0; c < w; ++c) {
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(w) - 0.5;
      std::uint8_t label = 0;
      if (head.contains(y, x)) {
        label = 1;  // GM ring
        if (inner.contains(y, x)) {
          label = 2;  // WM interior
          for (const auto& e : vents)
            if (e.contains(y, x)) label = 3;  // CSF, only carved out of WM
        }
      }
      s.labels.labels(r, c) = label;
      const double field = 1.0 + amp * std::sin(kTwoPi * (fx * x + px)) * std::cos(kTwoPi * (fy * y + py));
      const double value = means[label] * field + sigma * rng.normal();
      img[static_cast<std::size_t>(r * w + c)] = std::clamp(value, 0.0, 1.0);
    }
  }

  const double mx = *std::max_element(img.begin(), img.end());
  for (std::int64_t i = 0; i < h * w; ++i)
    s.image[i] = static_cast<float>(img[static_cast<std::size_t>(i)] / mx);
  return s;
}

namespace {

LabeledSample hflip(const LabeledSample& s) {
  const std::int64_t h = s.h(), w = s.w();
  LabeledSample out;
  out.image = Tensor<float>({h, w});
  out.labels.labels = Tensor<std::uint8_t>({h, w});
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      out.image(r, c) = s.image(r, w - 1 - c);
      out.labels.labels(r, c) = s.labels.labels(r, w - 1 - c);
    }
  return out;
}

LabeledSample rot90ccw(const LabeledSample& s) {
  const std::int64_t h = s.h(), w = s.w();  // output is (w, h)
  LabeledSample out;
  out.image = Tensor<float>({w, h});
  out.labels.labels = Tensor<std::uint8_t>({w, h});
  for (std::int64_t r = 0; r < w; ++r)
    for (std::int64_t c = 0; c < h; ++c) {
      out.image(r, c) = s.image(c, w - 1 - r);
      out.labels.labels(r, c) = s.labels.labels(c, w - 1 - r);
    }
  return out;
}

LabeledSample translate(const LabeledSample& s, int dy, int dx) {
  const std::int64_t h = s.h(), w = s.w();
  LabeledSample out;
  out.image = Tensor<float>({h, w}, 0.0f);
  out.labels.labels = Tensor<std::uint8_t>({h, w}, 0);
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      const std::int64_t sr = r - dy, sc = c - dx;
      if (sr >= 0 && sr < h && sc >= 0 && sc < w) {
        out.image(r, c) = s.image(sr, sc);
        out.labels.labels(r, c) = s.labels.labels(sr, sc);
      }
    }
  return out;
}

}  // namespace

LabeledSample apply_augmentation(const LabeledSample& s, const AugmentSpec& spec) {
  if (s.image.dims() != s.labels.labels.dims())
    throw dimension_error("sample image/label shape mismatch");
  const int q = ((spec.rotation_quarters % 4) + 4) % 4;
  if ((q % 2) != 0 && s.h() != s.w())
    throw parameter_error("90-degree rotation requires a square sample");
  LabeledSample out = s;
  if (spec.hflip) out = hflip(out);
  for (int i = 0; i < q; ++i) out = rot90ccw(out);
  if (spec.dy != 0 || spec.dx != 0) out = translate(out, spec.dy, spec.dx);
  return out;
}

LabeledSample augment(const LabeledSample& s, std::uint64_t seed) {
  Rng rng(seed);
  AugmentSpec spec;
  spec.hflip = rng.coin();
  spec.rotation_quarters =
      (s.h() == s.w()) ? static_cast<int>(rng.below(4)) : 2 * static_cast<int>(rng.below(2));
  spec.dx = static_cast<int>(rng.range(-5, 5));
  spec.dy = static_cast<int>(rng.range(-5, 5));
  return apply_augmentation(s, spec);
}

std::vector<LabeledSample> crop_patches(const LabeledSample& s, std::int64_t size,
                                        std::int64_t count, std::uint64_t seed) {
  if (size < 1) throw parameter_error("patch size must be positive");
  if (size > s.h() || size > s.w())
    throw parameter_error("patch size exceeds sample dimensions");
  if (count < 0) throw parameter_error("patch count must be nonnegative");
  Rng rng(seed);
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    const std::int64_t r0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(s.h() - size + 1)));
    const std::int64_t c0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(s.w() - size + 1)));
    LabeledSample p;
    p.image = Tensor<float>({size, size});
    p.labels.labels = Tensor<std::uint8_t>({size, size});
    for (std::int64_t r = 0; r < size; ++r)
      for (std::int64_t c = 0; c < size; ++c) {
        p.image(r, c) = s.image(r0 + r, c0 + c);
        p.labels.labels(r, c) = s.labels.labels(r0 + r, c0 + c);
      }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<LabeledSample> load_volume(const std::string& path) {
  const TensorContainer c = TensorContainer::load(path);
  if (!c.has("image") || !c.has("labels"))
    throw format_error("volume file missing 'image' or 'labels' entry");

  const auto& img_entry = c.entry("image");
  Tensor<float> image;
  if (img_entry.dtype == Dtype::f32)
    image = c.get<float>("image");
  else if (img_entry.dtype == Dtype::f64)
    image = c.get<double>("image").cast<float>();
  else
    throw format_error("volume 'image' must be f32 or f64");

  const auto& lab_entry = c.entry("labels");
  Tensor<std::uint8_t> labels;
  if (lab_entry.dtype == Dtype::u8)
    labels = c.get<std::uint8_t>("labels");
  else if (lab_entry.dtype == Dtype::i32) {
    const auto raw = c.get<std::int32_t>("labels");
    labels = Tensor<std::uint8_t>(raw.dims());
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
      if (raw[i] < 0 || raw[i] >= kNumClasses) throw label_error("volume label out of range");
      labels[i] = static_cast<std::uint8_t>(raw[i]);
    }
  } else
    throw format_error("volume 'labels' must be u8 or i32");

  if (image.ndim() != 3 || labels.ndim() != 3) throw format_error("volume entries must be rank 3");
  if (image.dims() != labels.dims())
    throw dimension_error("volume image/label shape mismatch: " + shape_str(image.dims()) +
                          " vs " + shape_str(labels.dims()));
  for (std::int64_t i = 0; i < labels.numel(); ++i)
    if (labels[i] >= kNumClasses) throw label_error("volume label out of range");

  const std::int64_t h = image.dim(0), w = image.dim(1), k = image.dim(2);
  float mx = 0.0f;
  for (std::int64_t i = 0; i < image.numel(); ++i) mx = std::max(mx, image[i]);
  const float scale = mx > 0.0f ? mx : 1.0f;

  std::vector<LabeledSample> out(static_cast<std::size_t>(k));
  for (std::int64_t sl = 0; sl < k; ++sl) {
    auto& s = out[static_cast<std::size_t>(sl)];
    s.image = Tensor<float>({h, w});
    s.labels.labels = Tensor<std::uint8_t>({h, w});
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t cc = 0; cc < w; ++cc) {
        s.image(r, cc) = image(r, cc, sl) / scale;
        s.labels.labels(r, cc) = labels(r, cc, sl);
      }
  }
  return out;
}

void save_volume(const std::string& path, const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw parameter_error("cannot save an empty volume");
  const std::int64_t h = samples[0].h(), w = samples[0].w();
  for (const auto& s : samples)
    if (s.h() != h || s.w() != w || s.image.dims() != s.labels.labels.dims())
      throw dimension_error("volume slices must share one shape");
  const std::int64_t k = static_cast<std::int64_t>(samples.size());
  Tensor<float> image({h, w, k});
  Tensor<std::uint8_t> labels({h, w, k});
  for (std::int64_t sl = 0; sl < k; ++sl)
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t c = 0; c < w; ++c) {
        image(r, c, sl) = samples[static_cast<std::size_t>(sl)].image(r, c);
        labels(r, c, sl) = samples[static_cast<std::size_t>(sl)].labels.labels(r, c);
      }
  TensorContainer c;
  c.add("image", image);
  c.add("labels", labels);
  c.save(path);
}

DatasetSplit make_split(std::vector<LabeledSample> samples, std::int64_t test_count,
                        std::uint64_t seed) {
  if (test_count < 0 || test_count > static_cast<std::int64_t>(samples.size()))
    throw parameter_error("test_count out of range");
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto& dst = (static_cast<std::int64_t>(i) < test_count) ? split.test : split.train;
    dst.push_back(std::move(samples[idx[i]]));
  }
  return split;
}

}  // namespace snm
