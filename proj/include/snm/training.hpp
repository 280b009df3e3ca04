// The three-phase training protocol (pretrain MRN, pretrain MSN, fine-tune
// the fused SegNetMRI), the reconstruction-only ablation, the Adam optimizer,
// and checkpoint persistence.
#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "snm/container.hpp"
#include "snm/losses.hpp"
#include "snm/networks.hpp"
#include "snm/phantom.hpp"

namespace snm {

enum class Phase { pretrain_mrn, pretrain_msn, finetune_joint, finetune_recon_only };

enum class ModelKind : std::int32_t { mrn = 1, msn = 2, segnetmri = 3, mrn_msn = 4 };

struct TrainConfig {
  Phase phase = Phase::pretrain_mrn;
  int iterations = 0;
  int batch_size = 0;
  int patch_size = 64;  // segmentation pretraining only
  int blocks = 5;
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double lambda = kDefaultLambda;
  std::uint64_t seed = 0;
  // measurement model
  double mask_rate = 0.2;
  double mask_center = 0.08;
  std::uint64_t mask_seed = 0;
  bool mask_resample = false;  // fixed mask by default, matching the paper
  bool augment = true;
  // bookkeeping
  int log_every = 10;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  bool monotone_guard = false;
  double guard_tol = 0.25;
  // architecture
  int depth = 3;
  int base_channels = 32;
  int channel_growth = 2;
  int convs_per_level = 2;
  int classes = kNumClasses;
};

// Per-phase defaults: MRN 30,000 iterations of whole images in batches of 4;
// MSN 60,000 iterations of 64x64 patches in batches of 16; fine-tuning 8,000
// iterations of whole images in batches of 4. lr 0.0005, momenta (0.9, 0.999),
// lambda 0.01.
inline TrainConfig default_train_config(Phase phase) {
  TrainConfig c;
  c.phase = phase;
  switch (phase) {
    case Phase::pretrain_mrn:
      c.iterations = 30000;
      c.batch_size = 4;
      break;
    case Phase::pretrain_msn:
      c.iterations = 60000;
      c.batch_size = 16;
      c.patch_size = 64;
      break;
    case Phase::finetune_joint:
    case Phase::finetune_recon_only:
      c.iterations = 8000;
      c.batch_size = 4;
      break;
  }
  return c;
}

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  ModelKind kind = ModelKind::mrn;
  EncoderDecoderConfig codec;
  int blocks = 0;  // 0 for a plain MSN
  int classes = kNumClasses;
  std::int64_t iteration = 0;
  double final_loss = 0.0;
};

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
  TensorContainer c;
  for (const auto& [name, tensor] : ck.params.tensors) c.add(name, tensor);
  Tensor<std::int32_t> meta({9});
  meta[0] = static_cast<std::int32_t>(ck.kind);
  meta[1] = ck.codec.depth;
  meta[2] = ck.codec.base_channels;
  meta[3] = ck.codec.channel_growth;
  meta[4] = ck.codec.convs_per_level;
  meta[5] = ck.codec.in_channels;
  meta[6] = ck.codec.out_channels;
  meta[7] = ck.blocks;
  meta[8] = ck.classes;
  c.add("__meta__", meta);
  Tensor<std::int32_t> iter({1});
  iter[0] = static_cast<std::int32_t>(ck.iteration);
  c.add("__iteration__", iter);
  Tensor<double> loss({1});
  loss[0] = ck.final_loss;
  c.add("__loss__", loss);
  c.save(path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  const auto c = TensorContainer::load(path);
  if (!c.has("__meta__")) throw format_error("not a checkpoint: missing __meta__");
  const auto meta = c.get<std::int32_t>("__meta__");
  if (meta.numel() != 9) throw format_error("checkpoint __meta__ has unexpected size");
  Checkpoint<T> ck;
  ck.kind = static_cast<ModelKind>(meta[0]);
  ck.codec.depth = meta[1];
  ck.codec.base_channels = meta[2];
  ck.codec.channel_growth = meta[3];
  ck.codec.convs_per_level = meta[4];
  ck.codec.in_channels = meta[5];
  ck.codec.out_channels = meta[6];
  ck.blocks = meta[7];
  ck.classes = meta[8];
  ck.iteration = c.get<std::int32_t>("__iteration__")[0];
  ck.final_loss = c.get<double>("__loss__")[0];
  for (const auto& e : c.entries()) {
    if (e.name.rfind("__", 0) == 0) continue;
    ck.params.tensors[e.name] = c.get<T>(e.name);
  }
  return ck;
}

struct TrainLogEntry {
  int iteration = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> components;
};

inline void write_loss_csv(const std::string& path, const std::vector<TrainLogEntry>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << "iteration,loss";
  if (!log.empty())
    for (const auto& [name, v] : log.front().components) f << "," << name;
  f << "\n";
  for (const auto& e : log) {
    f << e.iteration << "," << e.loss;
    for (const auto& [name, v] : e.components) f << "," << v;
    f << "\n";
  }
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  // One update over every trainable leaf the context materialized. Leaves
  // iterate in name order, so updates are deterministic.
  void step(Graph<T>& g, NetContext<T>& ctx) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const auto& [name, id] : ctx.leaves) {
      if (!ctx.is_trainable(name)) continue;
      const auto& grad = g.grad(id);
      auto& tensor = ctx.params.at(name);
      auto& [m, v] = state_[name];
      if (m.empty()) {
        m.assign(grad.size(), T(0));
        v.assign(grad.size(), T(0));
      }
      const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_);
      const T alpha = static_cast<T>(lr_ / bc1);
      const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
      const T eps = static_cast<T>(eps_);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
        v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
        tensor[static_cast<std::int64_t>(i)] -=
            alpha * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<T>, std::vector<T>>> state_;
};

// ---------------------------------------------------------------------------
// Shared loop plumbing
// ---------------------------------------------------------------------------

template <typename T>
using CheckpointSink = std::function<void(const Checkpoint<T>&, int)>;

namespace detail {

inline void validate_dataset(const std::vector<LabeledSample>& data) {
  if (data.empty()) throw parameter_error("training dataset is empty");
  for (const auto& s : data)
    if (s.h() != data[0].h() || s.w() != data[0].w())
      throw dimension_error("training samples must share one shape");
}

inline void validate_config(const TrainConfig& cfg, Phase expected) {
  if (cfg.phase != expected) throw parameter_error("config phase does not match this operation");
  if (cfg.iterations < 1 || cfg.batch_size < 1) throw parameter_error("iterations and batch_size must be positive");
  if (cfg.blocks < 1) throw parameter_error("N_blocks must be at least 1");
}

// Abort when the 100-iteration smoothed loss rises guard_tol above its best.
class MonotoneGuard {
 public:
  MonotoneGuard(bool enabled, double tol) : enabled_(enabled), tol_(tol) {}
  void push(double loss, int iteration) {
    if (!enabled_) return;
    window_.push_back(loss);
    if (window_.size() < 100) return;
    double mean = 0.0;
    for (double v : window_) mean += v;
    mean /= 100.0;
    window_.clear();
    if (best_ >= 0.0 && mean > best_ * (1.0 + tol_))
      throw divergence_error("smoothed training loss rose from " + std::to_string(best_) +
                             " to " + std::to_string(mean) + " at iteration " +
                             std::to_string(iteration));
    if (best_ < 0.0 || mean < best_) best_ = mean;
  }

 private:
  bool enabled_;
  double tol_;
  double best_ = -1.0;
  std::vector<double> window_;
};

template <typename T>
struct ReconBatch {
  Tensor<T> target;  // (B,2,H,W): image and zero imaginary channel
  std::vector<Tensor<std::complex<T>>> ys;
  Tensor<T> zf;
  Tensor<std::uint8_t> labels;  // (B,H,W)
};

template <typename T>
ReconBatch<T> make_recon_batch(const std::vector<LabeledSample>& data, const TrainConfig& cfg,
                               const SamplingMask& mask, Rng& rng) {
  const std::int64_t b = cfg.batch_size;
  const std::int64_t h = data[0].h(), w = data[0].w();
  ReconBatch<T> out;
  out.target = Tensor<T>({b, 2, h, w}, T(0));
  out.labels = Tensor<std::uint8_t>({b, h, w});
  std::vector<KSpaceMeasurement> yd;
  yd.reserve(static_cast<std::size_t>(b));
  for (std::int64_t i = 0; i < b; ++i) {
    LabeledSample s = data[rng.below(data.size())];
    if (cfg.augment) s = augment(s, rng.next_u64());
    ComplexImage xc;
    xc.data = Tensor<std::complex<double>>({h, w});
    for (std::int64_t j = 0; j < h * w; ++j) {
      xc.data[j] = {static_cast<double>(s.image[j]), 0.0};
      out.target[(i * 2) * h * w + j] = static_cast<T>(s.image[j]);
      out.labels[i * h * w + j] = s.labels.labels[j];
    }
    yd.push_back(forward_undersample(xc, mask));
  }
  out.ys = measurement_values<T>(yd);
  out.zf = zero_filled_two_channel<T>(yd);
  return out;
}

inline SamplingMask mask_for_iteration(const TrainConfig& cfg, std::int64_t h, std::int64_t w,
                                       int iteration, const SamplingMask& fixed) {
  if (!cfg.mask_resample) return fixed;
  return make_cartesian_mask(h, w, cfg.mask_rate, cfg.mask_center,
                             derive_seed(cfg.mask_seed, static_cast<std::uint64_t>(iteration) + 1));
}

inline void record(std::vector<TrainLogEntry>* log, const TrainConfig& cfg, int iteration,
                   double loss, std::vector<std::pair<std::string, double>> components = {}) {
  if (!log) return;
  if (iteration % std::max(1, cfg.log_every) != 0 && iteration != cfg.iterations - 1) return;
  log->push_back({iteration, loss, std::move(components)});
}

inline void check_finite(double loss, int iteration) {
  if (!std::isfinite(loss))
    throw divergence_error("non-finite training loss at iteration " + std::to_string(iteration));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

template <typename T>
Checkpoint<T> pretrain_mrn(const std::vector<LabeledSample>& train, const TrainConfig& cfg,
                           std::vector<TrainLogEntry>* log = nullptr,
                           const CheckpointSink<T>& sink = {}) {
  detail::validate_config(cfg, Phase::pretrain_mrn);
  detail::validate_dataset(train);
  const std::int64_t h = train[0].h(), w = train[0].w();

  EncoderDecoderConfig codec;
  codec.depth = cfg.depth;
  codec.base_channels = cfg.base_channels;
  codec.channel_growth = cfg.channel_growth;
  codec.convs_per_level = cfg.convs_per_level;
  codec.in_channels = 2;
  codec.out_channels = 2;

  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng data_rng(derive_seed(cfg.seed, 1));
  auto params = init_mrn<T>(codec, cfg.blocks, init_rng);
  const auto fixed_mask = make_cartesian_mask(h, w, cfg.mask_rate, cfg.mask_center, cfg.mask_seed);

  Adam<T> adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  detail::MonotoneGuard guard(cfg.monotone_guard, cfg.guard_tol);
  double last_loss = 0.0;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto mask = detail::mask_for_iteration(cfg, h, w, iter, fixed_mask);
    const auto batch = detail::make_recon_batch<T>(train, cfg, mask, data_rng);

    Graph<T> g;
    NetContext<T> ctx{g, params, /*training=*/true, /*trainable=*/true};
    const auto zf = g.leaf(batch.zf, false);
    const auto target = g.leaf(batch.target, false);
    const auto out = mrn_forward(ctx, codec, cfg.blocks, zf, batch.ys, mask.mask);
    const auto loss_id = mrn_loss_op(g, out.output, target);

    last_loss = static_cast<double>(g.scalar(loss_id));
    detail::check_finite(last_loss, iter);
    guard.push(last_loss, iter);
    detail::record(log, cfg, iter, last_loss);

    g.backward(loss_id);
    adam.step(g, ctx);

    if (sink && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      sink(Checkpoint<T>{params, ModelKind::mrn, codec, cfg.blocks, cfg.classes, iter + 1,
                         last_loss},
           iter + 1);
  }
  return {std::move(params), ModelKind::mrn, codec, cfg.blocks, cfg.classes, cfg.iterations,
          last_loss};
}

template <typename T>
Checkpoint<T> pretrain_msn(const std::vector<LabeledSample>& train, const TrainConfig& cfg,
                           std::vector<TrainLogEntry>* log = nullptr,
                           const CheckpointSink<T>& sink = {}) {
  detail::validate_config(cfg, Phase::pretrain_msn);
  detail::validate_dataset(train);
  const std::int64_t h = train[0].h(), w = train[0].w();
  const std::int64_t patch = (cfg.patch_size > 0 && cfg.patch_size < std::min(h, w))
                                 ? cfg.patch_size
                                 : std::min(h, w);

  EncoderDecoderConfig codec;
  codec.depth = cfg.depth;
  codec.base_channels = cfg.base_channels;
  codec.channel_growth = cfg.channel_growth;
  codec.convs_per_level = cfg.convs_per_level;
  codec.in_channels = 1;
  codec.out_channels = cfg.classes;

  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng data_rng(derive_seed(cfg.seed, 1));
  auto params = init_msn<T>(codec, init_rng);

  Adam<T> adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  detail::MonotoneGuard guard(cfg.monotone_guard, cfg.guard_tol);
  double last_loss = 0.0;

  const std::int64_t b = cfg.batch_size;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Tensor<T> x({b, 1, patch, patch});
    Tensor<std::uint8_t> labels({b, patch, patch});
    for (std::int64_t i = 0; i < b; ++i) {
      LabeledSample s = train[data_rng.below(train.size())];
      if (cfg.augment) s = augment(s, data_rng.next_u64());
      const auto p = crop_patches(s, patch, 1, data_rng.next_u64())[0];
      for (std::int64_t j = 0; j < patch * patch; ++j) {
        x[i * patch * patch + j] = static_cast<T>(p.image[j]);
        labels[i * patch * patch + j] = p.labels.labels[j];
      }
    }

    Graph<T> g;
    NetContext<T> ctx{g, params, true, true};
    const auto probs = msn_forward(ctx, codec, g.leaf(x, false));
    const auto loss_id = msn_loss_op(g, probs, labels);

    last_loss = static_cast<double>(g.scalar(loss_id));
    detail::check_finite(last_loss, iter);
    guard.push(last_loss, iter);
    detail::record(log, cfg, iter, last_loss);

    g.backward(loss_id);
    adam.step(g, ctx);

    if (sink && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      sink(Checkpoint<T>{params, ModelKind::msn, codec, 0, cfg.classes, iter + 1, last_loss},
           iter + 1);
  }
  return {std::move(params), ModelKind::msn, codec, 0, cfg.classes, cfg.iterations, last_loss};
}

namespace detail {

inline void check_finetune_inputs(const EncoderDecoderConfig& mrn_codec, ModelKind mrn_kind,
                                  const EncoderDecoderConfig& msn_codec, ModelKind msn_kind) {
  if (mrn_kind != ModelKind::mrn) throw config_error("first checkpoint must be a pre-trained MRN");
  if (msn_kind != ModelKind::msn) throw config_error("second checkpoint must be a pre-trained MSN");
  if (mrn_codec.depth != msn_codec.depth || mrn_codec.base_channels != msn_codec.base_channels ||
      mrn_codec.channel_growth != msn_codec.channel_growth ||
      mrn_codec.convs_per_level != msn_codec.convs_per_level)
    throw config_error("MRN/MSN checkpoint architectures do not match");
}

}  // namespace detail

template <typename T>
Checkpoint<T> finetune_segnetmri(const std::vector<LabeledSample>& train,
                                 const Checkpoint<T>& mrn_ck, const Checkpoint<T>& msn_ck,
                                 const TrainConfig& cfg, std::vector<TrainLogEntry>* log = nullptr,
                                 const CheckpointSink<T>& sink = {}) {
  detail::validate_config(cfg, Phase::finetune_joint);
  detail::validate_dataset(train);
  detail::check_finetune_inputs(mrn_ck.codec, mrn_ck.kind, msn_ck.codec, msn_ck.kind);
  const std::int64_t h = train[0].h(), w = train[0].w();
  const int blocks = mrn_ck.blocks;
  const int classes = msn_ck.codec.out_channels;
  const EncoderDecoderConfig codec = mrn_ck.codec;

  auto params = assemble_segnetmri(mrn_ck.params, msn_ck.params, blocks, classes);
  Rng data_rng(derive_seed(cfg.seed, 1));
  const auto fixed_mask = make_cartesian_mask(h, w, cfg.mask_rate, cfg.mask_center, cfg.mask_seed);

  Adam<T> adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  detail::MonotoneGuard guard(cfg.monotone_guard, cfg.guard_tol);
  double last_loss = 0.0;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto mask = detail::mask_for_iteration(cfg, h, w, iter, fixed_mask);
    const auto batch = detail::make_recon_batch<T>(train, cfg, mask, data_rng);

    Graph<T> g;
    NetContext<T> ctx{g, params, true, true};
    const auto zf = g.leaf(batch.zf, false);
    const auto target = g.leaf(batch.target, false);
    const auto out = segnetmri_forward(ctx, codec, blocks, classes, zf, batch.ys, mask.mask);
    const auto loss = segnetmri_loss_op(g, out.reconstruction, target, out.merged_segmentation,
                                        out.per_block_segmentations, batch.labels, cfg.lambda);

    last_loss = static_cast<double>(g.scalar(loss.total));
    detail::check_finite(last_loss, iter);
    guard.push(last_loss, iter);
    detail::record(log, cfg, iter, last_loss, [&] {
      std::vector<std::pair<std::string, double>> comps;
      for (const auto& [name, id] : loss.components)
        comps.emplace_back(name, static_cast<double>(g.scalar(id)));
      return comps;
    }());

    g.backward(loss.total);
    adam.step(g, ctx);

    if (sink && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      sink(Checkpoint<T>{params, ModelKind::segnetmri, codec, blocks, classes, iter + 1, last_loss},
           iter + 1);
  }
  return {std::move(params), ModelKind::segnetmri, codec, blocks, classes, cfg.iterations,
          last_loss};
}

// The reconstruction-only ablation: the MSN stays frozen (inference mode, no
// gradient, bit-identical parameters) while the reconstruction blocks train
// under L_MRN + lambda * L_MSN(MSN(|final reconstruction|), labels).
template <typename T>
Checkpoint<T> finetune_recon_only(const std::vector<LabeledSample>& train,
                                  const Checkpoint<T>& mrn_ck, const Checkpoint<T>& msn_ck,
                                  const TrainConfig& cfg,
                                  std::vector<TrainLogEntry>* log = nullptr,
                                  const CheckpointSink<T>& sink = {}) {
  detail::validate_config(cfg, Phase::finetune_recon_only);
  detail::validate_dataset(train);
  detail::check_finetune_inputs(mrn_ck.codec, mrn_ck.kind, msn_ck.codec, msn_ck.kind);
  const std::int64_t h = train[0].h(), w = train[0].w();
  const int blocks = mrn_ck.blocks;
  const int classes = msn_ck.codec.out_channels;
  const EncoderDecoderConfig recon_codec = mrn_ck.codec;
  const EncoderDecoderConfig msn_codec = msn_ck.codec;

  ModelParams<T> params;
  for (const auto& [name, tensor] : mrn_ck.params.tensors) params.tensors[name] = tensor;
  for (const auto& [name, tensor] : msn_ck.params.tensors) params.tensors[name] = tensor;

  Rng data_rng(derive_seed(cfg.seed, 1));
  const auto fixed_mask = make_cartesian_mask(h, w, cfg.mask_rate, cfg.mask_center, cfg.mask_seed);

  Adam<T> adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  detail::MonotoneGuard guard(cfg.monotone_guard, cfg.guard_tol);
  double last_loss = 0.0;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto mask = detail::mask_for_iteration(cfg, h, w, iter, fixed_mask);
    const auto batch = detail::make_recon_batch<T>(train, cfg, mask, data_rng);

    Graph<T> g;
    NetContext<T> ctx{g, params, /*training=*/true, /*trainable=*/true};
    ctx.frozen_prefixes = {"msn."};
    const auto zf = g.leaf(batch.zf, false);
    const auto target = g.leaf(batch.target, false);
    const auto mrn_out = mrn_forward(ctx, recon_codec, blocks, zf, batch.ys, mask.mask);
    const auto recon_loss = mrn_loss_op(g, mrn_out.output, target);

    // frozen MSN consumes the magnitude of the final reconstruction
    NetContext<T> msn_ctx{g, params, /*training=*/false, /*trainable=*/true};
    msn_ctx.frozen_prefixes = {"msn."};
    const auto mag = g.magnitude(mrn_out.output);
    const auto probs = msn_forward(msn_ctx, msn_codec, mag);
    const auto seg_loss = msn_loss_op(g, probs, batch.labels);

    const auto total = g.lincomb({recon_loss, seg_loss}, {T(1), static_cast<T>(cfg.lambda)});

    last_loss = static_cast<double>(g.scalar(total));
    detail::check_finite(last_loss, iter);
    guard.push(last_loss, iter);
    detail::record(log, cfg, iter, last_loss,
                   {{"mrn", static_cast<double>(g.scalar(recon_loss))},
                    {"msn", static_cast<double>(g.scalar(seg_loss))}});

    g.backward(total);
    adam.step(g, ctx);  // msn_ctx leaves are frozen; nothing to update there

    if (sink && cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      sink(Checkpoint<T>{params, ModelKind::mrn_msn, recon_codec, blocks, classes, iter + 1,
                         last_loss},
           iter + 1);
  }
  return {std::move(params), ModelKind::mrn_msn, recon_codec, blocks, classes, cfg.iterations,
          last_loss};
}

}  // namespace snm
