#include "snm/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "snm/inference.hpp"
#include "snm/plot.hpp"

namespace snm {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw io_error("write failed for '" + path + "'");
}

SamplingMask mask_from_config(const ExperimentConfig& cfg, std::int64_t h, std::int64_t w) {
  return make_cartesian_mask(h, w, cfg.get_double("mask.rate"),
                             cfg.get_double("mask.center_fraction"), cfg.get_seed("mask.seed"));
}

void write_loss_curve(const std::string& path, const std::vector<TrainLogEntry>& log) {
  PlotSeries s;
  s.name = "loss";
  for (const auto& e : log) s.points.emplace_back(static_cast<double>(e.iteration), e.loss);
  write_svg_plot(path, "training loss", "iteration", "loss", {s});
}

struct RunArtifacts {
  std::string checkpoint;
  std::string loss_csv;
  std::string loss_svg;
  std::string config_echo;
};

RunArtifacts run_paths(const std::string& out_dir) {
  return {out_dir + "/checkpoint.snmt", out_dir + "/loss.csv", out_dir + "/loss_curve.svg",
          out_dir + "/config.cfg"};
}

template <typename TrainFn>
void run_training_command(const ExperimentConfig& cfg, const std::string& out_dir,
                          const TrainFn& train) {
  ensure_dir(out_dir);
  const auto paths = run_paths(out_dir);
  std::vector<TrainLogEntry> log;
  CheckpointSink<float> sink = [&](const Checkpoint<float>& ck, int iteration) {
    save_checkpoint(out_dir + "/checkpoint_" + std::to_string(iteration) + ".snmt", ck);
  };
  const auto ck = train(&log, sink);
  save_checkpoint(paths.checkpoint, ck);
  write_loss_csv(paths.loss_csv, log);
  if (!log.empty()) write_loss_curve(paths.loss_svg, log);
  write_text(paths.config_echo, cfg.render());
  std::printf("final loss %.6g after %lld iterations -> %s\n", ck.final_loss,
              static_cast<long long>(ck.iteration), paths.checkpoint.c_str());
}

// Sub-checkpoint view of the frozen MSN inside a [33]-style mrn_msn model.
Checkpoint<float> msn_part(const Checkpoint<float>& ck) {
  Checkpoint<float> msn;
  msn.kind = ModelKind::msn;
  msn.codec = ck.codec;
  msn.codec.in_channels = 1;
  msn.codec.out_channels = ck.classes;
  msn.blocks = 0;
  msn.classes = ck.classes;
  for (const auto& [name, tensor] : ck.params.tensors)
    if (name.rfind("msn.", 0) == 0) msn.params.tensors[name] = tensor;
  if (msn.params.tensors.empty())
    throw config_error("checkpoint carries no MSN parameters");
  return msn;
}

}  // namespace

std::vector<LabeledSample> dataset_from_config(const ExperimentConfig& cfg) {
  const auto volume = cfg.get_str("data.volume");
  if (!volume.empty()) return load_volume(volume);
  const std::int64_t h = cfg.get_int("data.height"), w = cfg.get_int("data.width");
  const std::int64_t count = cfg.get_int("data.count");
  if (count < 1) throw parameter_error("data.count must be positive");
  const std::uint64_t seed = cfg.get_seed("data.seed");
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i)
    out.push_back(generate_phantom(h, w, derive_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

DatasetSplit split_from_config(const ExperimentConfig& cfg, std::vector<LabeledSample> samples) {
  return make_split(std::move(samples), cfg.get_int("data.test_count"), cfg.get_seed("data.seed"));
}

double cmd_make_mask(const MakeMaskArgs& args) {
  if (args.out.empty()) throw parameter_error("make-mask requires an output path");
  const auto mask = make_cartesian_mask(args.h, args.w, args.rate, args.center, args.seed);
  TensorContainer c;
  c.add("mask", mask.mask);
  Tensor<double> meta({3});
  meta[0] = mask.sampling_rate;
  meta[1] = mask.center_fraction;
  meta[2] = static_cast<double>(mask.seed);
  c.add("mask_params", meta);
  c.save(args.out);
  const double achieved =
      static_cast<double>(mask.ones()) / static_cast<double>(mask.mask.numel());
  std::printf("achieved sampling rate %.4f (%lld of %lld rows)\n", achieved,
              static_cast<long long>(mask.ones() / args.w), static_cast<long long>(args.h));
  return achieved;
}

void cmd_gen_phantoms(const ExperimentConfig& cfg, const std::string& out_path) {
  const auto samples = dataset_from_config(cfg);
  save_volume(out_path, samples);
  std::printf("wrote %zu slices of %lldx%lld to %s\n", samples.size(),
              static_cast<long long>(samples[0].h()), static_cast<long long>(samples[0].w()),
              out_path.c_str());
}

void cmd_pretrain_mrn(const ExperimentConfig& cfg, const std::string& data_path,
                      const std::string& out_dir) {
  auto split = make_split(load_volume(data_path), cfg.get_int("data.test_count"),
                          cfg.get_seed("data.seed"));
  const auto tc = make_train_config(cfg, Phase::pretrain_mrn);
  run_training_command(cfg, out_dir, [&](std::vector<TrainLogEntry>* log,
                                         const CheckpointSink<float>& sink) {
    return pretrain_mrn<float>(split.train, tc, log, sink);
  });
}

void cmd_pretrain_msn(const ExperimentConfig& cfg, const std::string& data_path,
                      const std::string& out_dir) {
  auto split = make_split(load_volume(data_path), cfg.get_int("data.test_count"),
                          cfg.get_seed("data.seed"));
  const auto tc = make_train_config(cfg, Phase::pretrain_msn);
  run_training_command(cfg, out_dir, [&](std::vector<TrainLogEntry>* log,
                                         const CheckpointSink<float>& sink) {
    return pretrain_msn<float>(split.train, tc, log, sink);
  });
}

void cmd_finetune(const ExperimentConfig& cfg, const std::string& data_path,
                  const std::string& mrn_ckpt, const std::string& msn_ckpt,
                  const std::string& out_dir, bool recon_only) {
  auto split = make_split(load_volume(data_path), cfg.get_int("data.test_count"),
                          cfg.get_seed("data.seed"));
  const auto mrn = load_checkpoint<float>(mrn_ckpt);
  const auto msn = load_checkpoint<float>(msn_ckpt);
  const auto phase = recon_only ? Phase::finetune_recon_only : Phase::finetune_joint;
  const auto tc = make_train_config(cfg, phase);
  run_training_command(cfg, out_dir, [&](std::vector<TrainLogEntry>* log,
                                         const CheckpointSink<float>& sink) {
    return recon_only ? finetune_recon_only<float>(split.train, mrn, msn, tc, log, sink)
                      : finetune_segnetmri<float>(split.train, mrn, msn, tc, log, sink);
  });
}

void cmd_reconstruct(const ExperimentConfig& cfg, const std::string& ckpt_path,
                     const std::string& data_path, const std::string& out_path) {
  const auto samples = load_volume(data_path);
  const auto ck = load_checkpoint<float>(ckpt_path);
  const auto mask = mask_from_config(cfg, samples.at(0).h(), samples.at(0).w());

  ReconOutputs rec;
  if (ck.kind == ModelKind::segnetmri)
    rec = segnetmri_infer(ck, samples, mask).recon;
  else
    rec = mrn_reconstruct(ck, samples, mask);

  const std::int64_t h = samples[0].h(), w = samples[0].w();
  const std::int64_t k = static_cast<std::int64_t>(samples.size());
  Tensor<float> mag({h, w, k}), re({h, w, k}), im({h, w, k});
  double mean_psnr = 0.0;
  for (std::int64_t s = 0; s < k; ++s) {
    const auto& m = rec.magnitude[static_cast<std::size_t>(s)];
    const auto& ch = rec.channels[static_cast<std::size_t>(s)];
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t c = 0; c < w; ++c) {
        mag(r, c, s) = m(r, c);
        re(r, c, s) = ch[r * w + c];
        im(r, c, s) = ch[h * w + r * w + c];
      }
    mean_psnr += psnr(m, samples[static_cast<std::size_t>(s)].image);
  }
  TensorContainer out;
  out.add("image", mag);
  out.add("real", re);
  out.add("imag", im);
  out.save(out_path);
  std::printf("reconstructed %lld slices, mean PSNR %.2f dB -> %s\n", static_cast<long long>(k),
              mean_psnr / static_cast<double>(k), out_path.c_str());
}

void cmd_segment(const ExperimentConfig& cfg, const std::string& ckpt_path,
                 const std::string& data_path, const std::string& out_path) {
  const auto samples = load_volume(data_path);
  const auto ck = load_checkpoint<float>(ckpt_path);
  const std::int64_t h = samples.at(0).h(), w = samples.at(0).w();

  SegOutputs seg;
  if (ck.kind == ModelKind::msn) {
    std::vector<Tensor<float>> images;
    for (const auto& s : samples) images.push_back(s.image);
    seg = msn_segment(ck, images);
  } else if (ck.kind == ModelKind::segnetmri) {
    const auto mask = mask_from_config(cfg, h, w);
    seg = segnetmri_infer(ck, samples, mask).merged;
  } else if (ck.kind == ModelKind::mrn_msn) {
    const auto mask = mask_from_config(cfg, h, w);
    const auto rec = mrn_reconstruct(ck, samples, mask);
    seg = msn_segment(msn_part(ck), rec.magnitude);
  } else {
    throw config_error("checkpoint has no segmentation head; use a msn/segnetmri checkpoint");
  }

  const std::int64_t k = static_cast<std::int64_t>(samples.size());
  const std::int64_t classes = seg.probs.at(0).dim(0);
  Tensor<std::uint8_t> labels({h, w, k});
  Tensor<float> probs({h, w, classes, k});
  for (std::int64_t s = 0; s < k; ++s)
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t c = 0; c < w; ++c) {
        labels(r, c, s) = seg.labels[static_cast<std::size_t>(s)].labels(r, c);
        for (std::int64_t cl = 0; cl < classes; ++cl)
          probs[((r * w + c) * classes + cl) * k + s] =
              seg.probs[static_cast<std::size_t>(s)][cl * h * w + r * w + c];
      }
  TensorContainer out;
  out.add("labels", labels);
  out.add("probs", probs);
  out.save(out_path);
  std::printf("segmented %lld slices -> %s\n", static_cast<long long>(k), out_path.c_str());
}

std::string cmd_evaluate(const ExperimentConfig& cfg, const std::string& data_path,
                         const std::vector<std::string>& checkpoint_paths,
                         const std::optional<std::string>& pred_path,
                         const std::optional<std::string>& msn_companion,
                         const std::string& out_dir) {
  ensure_dir(out_dir);
  auto all = load_volume(data_path);
  const std::int64_t test_count = cfg.get_int("data.test_count");
  std::vector<LabeledSample> refs;
  if (test_count > 0) {
    auto split = make_split(std::move(all), test_count, cfg.get_seed("data.seed"));
    refs = std::move(split.test);
  } else {
    refs = std::move(all);
  }
  if (refs.empty()) throw parameter_error("no evaluation samples");
  const auto mask = mask_from_config(cfg, refs[0].h(), refs[0].w());
  const double spacing = cfg.get_double("eval.spacing");

  std::vector<std::pair<std::string, MetricsReport>> rows;
  std::vector<std::pair<int, MetricsReport>> by_blocks;

  {  // zero-filled baseline
    const auto zf = zero_filled_magnitudes(refs, mask);
    std::vector<EvalOutput> outs;
    for (const auto& m : zf) outs.push_back(EvalOutput{m, std::nullopt});
    rows.emplace_back("zero_filled", evaluate_dataset(outs, refs, spacing));
  }

  std::optional<Checkpoint<float>> companion;
  if (msn_companion) {
    companion = load_checkpoint<float>(*msn_companion);
    if (companion->kind != ModelKind::msn)
      throw config_error("--msn companion must be a plain MSN checkpoint");
  }

  for (const auto& path : checkpoint_paths) {
    const auto ck = load_checkpoint<float>(path);
    const std::string stem = fs::path(path).stem().string();
    std::vector<EvalOutput> outs;
    if (ck.kind == ModelKind::mrn) {
      const auto rec = mrn_reconstruct(ck, refs, mask);
      for (std::size_t i = 0; i < refs.size(); ++i) {
        EvalOutput o;
        o.image = rec.magnitude[i];
        if (companion) o.seg = msn_segment(*companion, {rec.magnitude[i]}).labels[0];
        outs.push_back(std::move(o));
      }
    } else if (ck.kind == ModelKind::segnetmri) {
      const auto inf = segnetmri_infer(ck, refs, mask);
      for (std::size_t i = 0; i < refs.size(); ++i)
        outs.push_back(EvalOutput{inf.recon.magnitude[i], inf.merged.labels[i]});
    } else if (ck.kind == ModelKind::mrn_msn) {
      const auto rec = mrn_reconstruct(ck, refs, mask);
      const auto seg = msn_segment(msn_part(ck), rec.magnitude);
      for (std::size_t i = 0; i < refs.size(); ++i)
        outs.push_back(EvalOutput{rec.magnitude[i], seg.labels[i]});
    } else {  // plain MSN: segmentation of the fully-sampled images
      std::vector<Tensor<float>> images;
      for (const auto& s : refs) images.push_back(s.image);
      const auto seg = msn_segment(ck, images);
      for (std::size_t i = 0; i < refs.size(); ++i)
        outs.push_back(EvalOutput{std::nullopt, seg.labels[i]});
    }
    auto report = evaluate_dataset(outs, refs, spacing);
    if (ck.blocks > 0) by_blocks.emplace_back(ck.blocks, report);
    rows.emplace_back(stem, std::move(report));
  }

  if (pred_path) {
    const auto pred = load_volume(*pred_path);
    if (pred.size() != refs.size())
      throw dimension_error("prediction volume size does not match the evaluation split");
    std::vector<EvalOutput> outs;
    for (const auto& p : pred) outs.push_back(EvalOutput{p.image, p.labels});
    rows.emplace_back("prediction", evaluate_dataset(outs, refs, spacing));
  }

  const auto csv = metrics_csv(rows);
  const auto table = metrics_table(rows);
  write_text(out_dir + "/metrics.csv", csv);
  write_text(out_dir + "/table.txt", table);
  write_text(out_dir + "/config.cfg", cfg.render());

  if (by_blocks.size() >= 1) {
    std::sort(by_blocks.begin(), by_blocks.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    PlotSeries psnr_series{"PSNR", {}}, dice_series{"mean Dice", {}};
    for (const auto& [n, rep] : by_blocks) {
      psnr_series.points.emplace_back(n, rep.psnr);
      if (!rep.per_class.empty()) dice_series.points.emplace_back(n, mean_dice(rep));
    }
    write_svg_plot(out_dir + "/psnr_vs_blocks.svg", "reconstruction quality vs block count",
                   "blocks N", "PSNR (dB)", {psnr_series});
    if (!dice_series.points.empty())
      write_svg_plot(out_dir + "/dice_vs_blocks.svg", "segmentation quality vs block count",
                     "blocks N", "Dice (%)", {dice_series});
  }
  std::fputs(table.c_str(), stdout);
  return table;
}

}  // namespace snm
