// Frozen-parameter inference: reconstruction, segmentation, and the
// measurement plumbing shared by evaluation paths. All forward passes run in
// inference mode (stored BN statistics), so results are deterministic.
#pragma once

#include <vector>

#include "snm/metrics.hpp"
#include "snm/networks.hpp"
#include "snm/training.hpp"

namespace snm {

inline LabelMap argmax_labels(const std::vector<float>& probs, std::int64_t classes,
                              std::int64_t h, std::int64_t w, std::int64_t offset) {
  LabelMap m;
  m.labels = Tensor<std::uint8_t>({h, w});
  const std::int64_t hw = h * w;
  for (std::int64_t j = 0; j < hw; ++j) {
    int best = 0;
    float best_v = probs[static_cast<std::size_t>(offset + j)];
    for (std::int64_t c = 1; c < classes; ++c) {
      const float v = probs[static_cast<std::size_t>(offset + c * hw + j)];
      if (v > best_v) {
        best_v = v;
        best = static_cast<int>(c);
      }
    }
    m.labels[j] = static_cast<std::uint8_t>(best);
  }
  return m;
}

template <typename T>
std::vector<KSpaceMeasurement> simulate_measurements(const std::vector<LabeledSample>& samples,
                                                     const SamplingMask& mask) {
  std::vector<KSpaceMeasurement> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    ComplexImage x;
    x.data = Tensor<std::complex<double>>({s.h(), s.w()});
    for (std::int64_t j = 0; j < s.image.numel(); ++j)
      x.data[j] = {static_cast<double>(s.image[j]), 0.0};
    out.push_back(forward_undersample(x, mask));
  }
  return out;
}

inline std::vector<Tensor<float>> zero_filled_magnitudes(const std::vector<LabeledSample>& samples,
                                                         const SamplingMask& mask) {
  std::vector<Tensor<float>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    ComplexImage x;
    x.data = Tensor<std::complex<double>>({s.h(), s.w()});
    for (std::int64_t j = 0; j < s.image.numel(); ++j)
      x.data[j] = {static_cast<double>(s.image[j]), 0.0};
    const auto zf = zero_filled(forward_undersample(x, mask));
    Tensor<float> mag({s.h(), s.w()});
    for (std::int64_t j = 0; j < mag.numel(); ++j)
      mag[j] = static_cast<float>(std::abs(zf.data[j]));
    out.push_back(std::move(mag));
  }
  return out;
}

struct ReconOutputs {
  std::vector<Tensor<float>> magnitude;  // (H,W) per sample
  std::vector<Tensor<float>> channels;   // (2,H,W) per sample
};

struct SegOutputs {
  std::vector<LabelMap> labels;
  std::vector<Tensor<float>> probs;  // (C,H,W) per sample
};

struct SegNetMriOutputsEval {
  ReconOutputs recon;
  SegOutputs merged;
  std::vector<std::vector<LabelMap>> per_block;  // [sample][block]
};

namespace detail {

template <typename T>
std::vector<std::size_t> batch_starts(std::size_t n, std::size_t batch) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < n; i += batch) starts.push_back(i);
  return starts;
}

template <typename T>
void split_recon(const Graph<T>& g, typename Graph<T>::Id id, std::size_t count,
                 std::int64_t h, std::int64_t w, ReconOutputs* out) {
  const auto& v = g.val(id);
  const std::int64_t hw = h * w;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor<float> mag({h, w});
    Tensor<float> ch({2, h, w});
    for (std::int64_t j = 0; j < hw; ++j) {
      const float re = static_cast<float>(v[(i * 2) * hw + j]);
      const float im = static_cast<float>(v[(i * 2 + 1) * hw + j]);
      ch[j] = re;
      ch[hw + j] = im;
      mag[j] = std::sqrt(re * re + im * im);
    }
    out->magnitude.push_back(std::move(mag));
    out->channels.push_back(std::move(ch));
  }
}

}  // namespace detail

template <typename T>
ReconOutputs mrn_reconstruct(const Checkpoint<T>& ck, const std::vector<LabeledSample>& samples,
                             const SamplingMask& mask, std::size_t batch = 4) {
  if (ck.kind != ModelKind::mrn && ck.kind != ModelKind::mrn_msn)
    throw config_error("checkpoint does not contain a reconstruction network");
  ReconOutputs out;
  auto params = ck.params;  // running stats are read-only in inference mode
  const std::int64_t h = samples.at(0).h(), w = samples.at(0).w();
  for (std::size_t start : detail::batch_starts<T>(samples.size(), batch)) {
    const std::size_t count = std::min(batch, samples.size() - start);
    const std::vector<LabeledSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                           samples.begin() + static_cast<std::ptrdiff_t>(start + count));
    const auto yd = simulate_measurements<T>(chunk, mask);
    const auto ys = measurement_values<T>(yd);
    const auto zf = zero_filled_two_channel<T>(yd);
    Graph<T> g;
    NetContext<T> ctx{g, params, /*training=*/false, /*trainable=*/false};
    const auto r = mrn_forward(ctx, ck.codec, ck.blocks, g.leaf(zf, false), ys, mask.mask);
    detail::split_recon(g, r.output, count, h, w, &out);
  }
  return out;
}

template <typename T>
SegOutputs msn_segment(const Checkpoint<T>& ck, const std::vector<Tensor<float>>& images,
                       std::size_t batch = 4) {
  SegOutputs out;
  auto params = ck.params;
  const std::int64_t h = images.at(0).dim(0), w = images.at(0).dim(1);
  const std::int64_t classes = ck.codec.out_channels;
  for (std::size_t start : detail::batch_starts<T>(images.size(), batch)) {
    const std::size_t count = std::min(batch, images.size() - start);
    Tensor<T> x({static_cast<std::int64_t>(count), 1, h, w});
    for (std::size_t i = 0; i < count; ++i)
      for (std::int64_t j = 0; j < h * w; ++j)
        x[static_cast<std::int64_t>(i) * h * w + j] =
            static_cast<T>(images[start + i][j]);
    Graph<T> g;
    NetContext<T> ctx{g, params, false, false};
    const auto probs = msn_forward(ctx, ck.codec, g.leaf(x, false));
    const auto& v = g.val(probs);
    const std::int64_t chw = classes * h * w;
    for (std::size_t i = 0; i < count; ++i) {
      Tensor<float> p({classes, h, w});
      for (std::int64_t j = 0; j < chw; ++j)
        p[j] = static_cast<float>(v[static_cast<std::int64_t>(i) * chw + j]);
      std::vector<float> pv(p.vec());
      out.labels.push_back(argmax_labels(pv, classes, h, w, 0));
      out.probs.push_back(std::move(p));
    }
  }
  return out;
}

template <typename T>
SegNetMriOutputsEval segnetmri_infer(const Checkpoint<T>& ck,
                                     const std::vector<LabeledSample>& samples,
                                     const SamplingMask& mask, std::size_t batch = 4) {
  if (ck.kind != ModelKind::segnetmri)
    throw config_error("checkpoint does not contain a SegNetMRI model");
  SegNetMriOutputsEval out;
  auto params = ck.params;
  const std::int64_t h = samples.at(0).h(), w = samples.at(0).w();
  const std::int64_t classes = ck.classes;
  for (std::size_t start : detail::batch_starts<T>(samples.size(), batch)) {
    const std::size_t count = std::min(batch, samples.size() - start);
    const std::vector<LabeledSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                           samples.begin() + static_cast<std::ptrdiff_t>(start + count));
    const auto yd = simulate_measurements<T>(chunk, mask);
    const auto ys = measurement_values<T>(yd);
    const auto zf = zero_filled_two_channel<T>(yd);
    Graph<T> g;
    NetContext<T> ctx{g, params, false, false};
    const auto r =
        segnetmri_forward(ctx, ck.codec, ck.blocks, static_cast<int>(classes), g.leaf(zf, false), ys, mask.mask);
    detail::split_recon(g, r.reconstruction, count, h, w, &out.recon);

    const auto& mv = g.val(r.merged_segmentation);
    const std::int64_t chw = classes * h * w;
    for (std::size_t i = 0; i < count; ++i) {
      Tensor<float> p({classes, h, w});
      for (std::int64_t j = 0; j < chw; ++j)
        p[j] = static_cast<float>(mv[static_cast<std::int64_t>(i) * chw + j]);
      std::vector<float> pv(p.vec());
      out.merged.labels.push_back(argmax_labels(pv, classes, h, w, 0));
      out.merged.probs.push_back(std::move(p));
      std::vector<LabelMap> blocks_for_sample;
      for (int n = 0; n < ck.blocks; ++n) {
        const auto& bv = g.val(r.per_block_segmentations[static_cast<std::size_t>(n)]);
        std::vector<float> bf(bv.size());
        for (std::size_t k = 0; k < bv.size(); ++k) bf[k] = static_cast<float>(bv[k]);
        blocks_for_sample.push_back(
            argmax_labels(bf, classes, h, w, static_cast<std::int64_t>(i) * chw));
      }
      out.per_block.push_back(std::move(blocks_for_sample));
    }
  }
  return out;
}

}  // namespace snm
