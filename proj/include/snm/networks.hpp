// Encoder-decoder units, the cascaded reconstruction network MRN_N, the
// segmentation network MSN, and the fused SegNetMRI with shared encoders.
//
// Parameters live in a flat named map (ModelParams); forward builders pull
// them into a Graph through a NetContext that caches one leaf per name, so
// a parameter used N times (the duplicated segmentation decoder) is a single
// node whose gradient accumulates across uses.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "snm/autodiff.hpp"
#include "snm/kspace.hpp"
#include "snm/rng.hpp"
#include "snm/tensor.hpp"

namespace snm {

struct EncoderDecoderConfig {
  int depth = 3;           // pooling levels; pyramid has depth+1 scales
  int base_channels = 32;  // channels at full resolution
  int channel_growth = 2;  // multiplier per level
  int in_channels = 2;
  int out_channels = 2;
  int convs_per_level = 2;

  std::int64_t channels_at(int level) const {
    std::int64_t c = base_channels;
    for (int i = 0; i < level; ++i) c *= channel_growth;
    return c;
  }
};

inline void validate_codec(const EncoderDecoderConfig& c) {
  if (c.depth < 1 || c.base_channels < 1 || c.channel_growth < 1 || c.in_channels < 1 ||
      c.out_channels < 1 || c.convs_per_level < 1)
    throw parameter_error("invalid encoder-decoder configuration");
}

// Batch-normalization constants (running averages in inference mode).
inline constexpr double kBnMomentum = 0.99;
inline constexpr double kBnEps = 1e-5;

template <typename T>
struct ModelParams {
  std::map<std::string, Tensor<T>> tensors;

  Tensor<T>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw config_error("missing model parameter '" + name + "'");
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw config_error("missing model parameter '" + name + "'");
    return it->second;
  }

  // Running statistics ride along in the map but never receive gradients.
  static bool is_running_stat(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
      const std::size_t ls = std::string(suffix).size();
      return name.size() >= ls && name.compare(name.size() - ls, ls, suffix) == 0;
    };
    return ends_with(".rmean") || ends_with(".rvar");
  }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> xavier_uniform(const Shape& dims, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t(dims);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

template <typename T>
void add_conv(ModelParams<T>& p, const std::string& name, std::int64_t oc, std::int64_t ic,
              std::int64_t k, Rng& rng) {
  p.tensors[name + ".w"] = xavier_uniform<T>({oc, ic, k, k}, ic * k * k, oc * k * k, rng);
  p.tensors[name + ".b"] = Tensor<T>({oc}, T(0));
}

template <typename T>
void add_upconv(ModelParams<T>& p, const std::string& name, std::int64_t ic, std::int64_t oc,
                Rng& rng) {
  p.tensors[name + ".w"] = xavier_uniform<T>({ic, oc, 2, 2}, ic * 4, oc * 4, rng);
  p.tensors[name + ".b"] = Tensor<T>({oc}, T(0));
}

template <typename T>
void add_bn(ModelParams<T>& p, const std::string& name, std::int64_t c) {
  p.tensors[name + ".gamma"] = Tensor<T>({c}, T(1));
  p.tensors[name + ".beta"] = Tensor<T>({c}, T(0));
  p.tensors[name + ".rmean"] = Tensor<T>({c}, T(0));
  p.tensors[name + ".rvar"] = Tensor<T>({c}, T(1));
}

template <typename T>
void init_encoder_decoder(ModelParams<T>& p, const std::string& prefix,
                          const EncoderDecoderConfig& cfg, Rng& rng) {
  validate_codec(cfg);
  for (int l = 0; l <= cfg.depth; ++l) {
    const std::int64_t out_c = cfg.channels_at(l);
    for (int k = 0; k < cfg.convs_per_level; ++k) {
      const std::int64_t in_c =
          (k > 0) ? out_c : (l == 0 ? cfg.in_channels : cfg.channels_at(l - 1));
      const std::string base = prefix + "enc.l" + std::to_string(l);
      add_conv(p, base + ".conv" + std::to_string(k), out_c, in_c, 3, rng);
      add_bn(p, base + ".bn" + std::to_string(k), out_c);
    }
  }
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::int64_t c = cfg.channels_at(l);
    const std::string base = prefix + "dec.l" + std::to_string(l);
    add_upconv(p, prefix + "dec.up" + std::to_string(l), cfg.channels_at(l + 1), c, rng);
    add_bn(p, prefix + "dec.up" + std::to_string(l) + ".bn", c);
    for (int k = 0; k < cfg.convs_per_level; ++k) {
      const std::int64_t in_c = (k == 0) ? 2 * c : c;
      add_conv(p, base + ".conv" + std::to_string(k), c, in_c, 3, rng);
      add_bn(p, base + ".bn" + std::to_string(k), c);
    }
  }
  add_conv(p, prefix + "dec.out", cfg.out_channels, cfg.base_channels, 3, rng);
}

template <typename T>
ModelParams<T> init_mrn(const EncoderDecoderConfig& codec, int blocks, Rng& rng) {
  if (blocks < 1) throw parameter_error("MRN requires at least one block");
  ModelParams<T> p;
  for (int n = 0; n < blocks; ++n)
    init_encoder_decoder(p, "b" + std::to_string(n) + ".", codec, rng);
  return p;
}

template <typename T>
ModelParams<T> init_msn(const EncoderDecoderConfig& codec, Rng& rng) {
  ModelParams<T> p;
  init_encoder_decoder(p, "msn.", codec, rng);
  return p;
}

// ---------------------------------------------------------------------------
// Forward builders
// ---------------------------------------------------------------------------

template <typename T>
struct NetContext {
  Graph<T>& g;
  ModelParams<T>& params;
  bool training = false;
  bool trainable = true;
  std::vector<std::string> frozen_prefixes;
  std::map<std::string, typename Graph<T>::Id> leaves;

  bool is_trainable(const std::string& name) const {
    if (!trainable || ModelParams<T>::is_running_stat(name)) return false;
    for (const auto& pre : frozen_prefixes)
      if (name.rfind(pre, 0) == 0) return false;
    return true;
  }

  typename Graph<T>::Id param(const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    const typename Graph<T>::Id id = g.leaf(params.at(name), is_trainable(name));
    leaves.emplace(name, id);
    return id;
  }
};

template <typename T>
typename Graph<T>::Id conv_bn_relu(NetContext<T>& ctx, const std::string& conv_name,
                                   const std::string& bn_name, typename Graph<T>::Id x) {
  auto y = ctx.g.conv2d(x, ctx.param(conv_name + ".w"), ctx.param(conv_name + ".b"));
  y = ctx.g.batchnorm(y, ctx.param(bn_name + ".gamma"), ctx.param(bn_name + ".beta"),
                      ctx.params.at(bn_name + ".rmean").data(),
                      ctx.params.at(bn_name + ".rvar").data(), ctx.training,
                      static_cast<T>(kBnMomentum), static_cast<T>(kBnEps));
  return ctx.g.relu(y);
}

// Feature pyramid: pyramid[l] has spatial size (H/2^l, W/2^l), depth+1 levels.
template <typename T>
std::vector<typename Graph<T>::Id> encoder_forward(NetContext<T>& ctx, const std::string& prefix,
                                                   const EncoderDecoderConfig& cfg,
                                                   typename Graph<T>::Id x) {
  validate_codec(cfg);
  const Shape& s = ctx.g.shape(x);
  if (s.size() != 4) throw dimension_error("encoder input must be (N,C,H,W)");
  const std::int64_t div = std::int64_t(1) << cfg.depth;
  if (s[2] % div != 0 || s[3] % div != 0)
    throw dimension_error("encoder input dims must be divisible by 2^depth");
  std::vector<typename Graph<T>::Id> pyramid;
  auto cur = x;
  for (int l = 0; l <= cfg.depth; ++l) {
    if (l > 0) cur = ctx.g.maxpool2x2(cur);
    const std::string base = prefix + "enc.l" + std::to_string(l);
    for (int k = 0; k < cfg.convs_per_level; ++k)
      cur = conv_bn_relu(ctx, base + ".conv" + std::to_string(k), base + ".bn" + std::to_string(k),
                         cur);
    pyramid.push_back(cur);
  }
  return pyramid;
}

// Decodes a pyramid back to full resolution. The final convolution carries no
// normalization and no activation; callers apply softmax / identity as the
// task requires.
template <typename T>
typename Graph<T>::Id decoder_forward(NetContext<T>& ctx, const std::string& prefix,
                                      const EncoderDecoderConfig& cfg,
                                      const std::vector<typename Graph<T>::Id>& pyramid) {
  if (static_cast<int>(pyramid.size()) != cfg.depth + 1)
    throw dimension_error("decoder: pyramid level count does not match config depth");
  auto cur = pyramid.back();
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string up = prefix + "dec.up" + std::to_string(l);
    cur = ctx.g.conv_transpose2d(cur, ctx.param(up + ".w"), ctx.param(up + ".b"));
    cur = ctx.g.batchnorm(cur, ctx.param(up + ".bn.gamma"), ctx.param(up + ".bn.beta"),
                          ctx.params.at(up + ".bn.rmean").data(),
                          ctx.params.at(up + ".bn.rvar").data(), ctx.training,
                          static_cast<T>(kBnMomentum), static_cast<T>(kBnEps));
    cur = ctx.g.relu(cur);
    cur = ctx.g.concat_channels({pyramid[static_cast<std::size_t>(l)], cur});
    const std::string base = prefix + "dec.l" + std::to_string(l);
    for (int k = 0; k < cfg.convs_per_level; ++k)
      cur = conv_bn_relu(ctx, base + ".conv" + std::to_string(k), base + ".bn" + std::to_string(k),
                         cur);
  }
  return ctx.g.conv2d(cur, ctx.param(prefix + "dec.out.w"), ctx.param(prefix + "dec.out.b"));
}

// One reconstruction block: residual encoder-decoder followed by the hard
// data-fidelity unit. Returns the corrected image and the encoder pyramid
// (the features the segmentation branch shares).
template <typename T>
struct BlockResult {
  typename Graph<T>::Id output;
  std::vector<typename Graph<T>::Id> pyramid;
};

template <typename T>
BlockResult<T> mrn_block_forward(NetContext<T>& ctx, const std::string& prefix,
                                 const EncoderDecoderConfig& cfg, typename Graph<T>::Id x_in,
                                 const std::vector<Tensor<std::complex<T>>>& ys,
                                 const Tensor<std::uint8_t>& mask) {
  auto pyramid = encoder_forward(ctx, prefix, cfg, x_in);
  auto residual = decoder_forward(ctx, prefix, cfg, pyramid);
  auto sum = ctx.g.add(x_in, residual);
  auto out = ctx.g.data_fidelity(sum, ys, mask, kHardReplacement);
  return {out, std::move(pyramid)};
}

template <typename T>
struct MrnResult {
  typename Graph<T>::Id output;
  std::vector<typename Graph<T>::Id> per_block;
  std::vector<std::vector<typename Graph<T>::Id>> pyramids;
};

// Cascade of N blocks; block 1 consumes the zero-filled reconstruction.
template <typename T>
MrnResult<T> mrn_forward(NetContext<T>& ctx, const EncoderDecoderConfig& cfg, int blocks,
                         typename Graph<T>::Id zero_filled_input,
                         const std::vector<Tensor<std::complex<T>>>& ys,
                         const Tensor<std::uint8_t>& mask) {
  if (blocks < 1) throw parameter_error("MRN requires at least one block");
  MrnResult<T> r;
  auto cur = zero_filled_input;
  for (int n = 0; n < blocks; ++n) {
    auto block = mrn_block_forward(ctx, "b" + std::to_string(n) + ".", cfg, cur, ys, mask);
    cur = block.output;
    r.per_block.push_back(block.output);
    r.pyramids.push_back(std::move(block.pyramid));
  }
  r.output = cur;
  return r;
}

// Standalone segmentation network on magnitude images: per-pixel class
// probabilities via softmax.
template <typename T>
typename Graph<T>::Id msn_forward(NetContext<T>& ctx, const EncoderDecoderConfig& cfg,
                                  typename Graph<T>::Id x) {
  auto pyramid = encoder_forward(ctx, "msn.", cfg, x);
  auto logits = decoder_forward(ctx, "msn.", cfg, pyramid);
  return ctx.g.softmax_channels(logits);
}

template <typename T>
struct SegNetMriResult {
  typename Graph<T>::Id reconstruction;
  std::vector<typename Graph<T>::Id> per_block_reconstructions;
  std::vector<typename Graph<T>::Id> per_block_segmentations;  // probability maps
  typename Graph<T>::Id merged_segmentation;
};

// Shared-encoder fusion: the single segmentation decoder (one parameter set)
// runs on every block's pyramid; the N probability maps are concatenated and
// merged by a 1x1 convolution, then renormalized.
template <typename T>
SegNetMriResult<T> segnetmri_forward(NetContext<T>& ctx, const EncoderDecoderConfig& cfg,
                                     int blocks, int classes,
                                     typename Graph<T>::Id zero_filled_input,
                                     const std::vector<Tensor<std::complex<T>>>& ys,
                                     const Tensor<std::uint8_t>& mask) {
  auto mrn = mrn_forward(ctx, cfg, blocks, zero_filled_input, ys, mask);
  EncoderDecoderConfig seg_cfg = cfg;
  seg_cfg.in_channels = cfg.in_channels;  // decoder never sees the input layer
  seg_cfg.out_channels = classes;
  SegNetMriResult<T> r;
  r.reconstruction = mrn.output;
  r.per_block_reconstructions = mrn.per_block;
  for (int n = 0; n < blocks; ++n) {
    auto logits = decoder_forward(ctx, "segdec.", seg_cfg, mrn.pyramids[static_cast<std::size_t>(n)]);
    r.per_block_segmentations.push_back(ctx.g.softmax_channels(logits));
  }
  auto cat = ctx.g.concat_channels(r.per_block_segmentations);
  auto merged = ctx.g.conv2d(cat, ctx.param("merge.w"), ctx.param("merge.b"));
  r.merged_segmentation = ctx.g.softmax_channels(merged);
  return r;
}

// Builds SegNetMRI parameters from the two pre-trained checkpoints: block
// encoders/decoders from the MRN, the segmentation decoder from the MSN
// (its encoder is left out), and a merge layer initialized to averaging.
template <typename T>
ModelParams<T> assemble_segnetmri(const ModelParams<T>& mrn, const ModelParams<T>& msn,
                                  int blocks, int classes) {
  ModelParams<T> p;
  for (const auto& [name, tensor] : mrn.tensors) p.tensors[name] = tensor;
  bool found_decoder = false;
  for (const auto& [name, tensor] : msn.tensors) {
    if (name.rfind("msn.dec.", 0) == 0) {
      p.tensors["segdec.dec." + name.substr(8)] = tensor;
      found_decoder = true;
    }
  }
  if (!found_decoder) throw config_error("MSN checkpoint carries no decoder parameters");
  Tensor<T> merge_w({classes, static_cast<std::int64_t>(blocks) * classes, 1, 1}, T(0));
  for (int c = 0; c < classes; ++c)
    for (int n = 0; n < blocks; ++n)
      merge_w(c, n * classes + c, 0, 0) = static_cast<T>(1.0 / blocks);
  p.tensors["merge.w"] = merge_w;
  p.tensors["merge.b"] = Tensor<T>({classes}, T(0));
  return p;
}

// ---------------------------------------------------------------------------
// Measurement plumbing shared by training and inference
// ---------------------------------------------------------------------------

template <typename T>
std::vector<Tensor<std::complex<T>>> measurement_values(
    const std::vector<KSpaceMeasurement>& ys) {
  std::vector<Tensor<std::complex<T>>> out;
  out.reserve(ys.size());
  for (const auto& y : ys) {
    Tensor<std::complex<T>> v(y.values.dims());
    for (std::int64_t i = 0; i < v.numel(); ++i)
      v[i] = std::complex<T>(static_cast<T>(y.values[i].real()),
                             static_cast<T>(y.values[i].imag()));
    out.push_back(std::move(v));
  }
  return out;
}

// (N,2,H,W) two-channel tensor of the zero-filled reconstructions.
template <typename T>
Tensor<T> zero_filled_two_channel(const std::vector<KSpaceMeasurement>& ys) {
  if (ys.empty()) throw parameter_error("empty measurement batch");
  const std::int64_t n = static_cast<std::int64_t>(ys.size());
  const std::int64_t h = ys[0].values.dim(0), w = ys[0].values.dim(1);
  Tensor<T> out({n, 2, h, w});
  for (std::int64_t i = 0; i < n; ++i) {
    const ComplexImage zf = zero_filled(ys[static_cast<std::size_t>(i)]);
    for (std::int64_t j = 0; j < h * w; ++j) {
      out[(i * 2 + 0) * h * w + j] = static_cast<T>(zf.data[j].real());
      out[(i * 2 + 1) * h * w + j] = static_cast<T>(zf.data[j].imag());
    }
  }
  return out;
}

}  // namespace snm
