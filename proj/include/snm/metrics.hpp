// Evaluation metrics: PSNR/NMSE for reconstruction, per-class DC/HD95/AVD
// for segmentation, and dataset-level aggregation.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snm/phantom.hpp"
#include "snm/tensor.hpp"

namespace snm {

// 10*log10(1/MSE) on [0,1] images; +inf for identical inputs.
double psnr(const Tensor<double>& x, const Tensor<double>& ref);
double psnr(const Tensor<float>& x, const Tensor<float>& ref);

// ||x - ref||^2 / ||ref||^2. Zero reference -> undefined_metric_error.
double nmse(const Tensor<double>& x, const Tensor<double>& ref);
double nmse(const Tensor<float>& x, const Tensor<float>& ref);

// 200*|A n B| / (|A| + |B|) as a percentage; 100 when both masks are empty.
double dice(const LabelMap& seg, const LabelMap& ref, int class_id);

// Max of the two directed 95th-percentile boundary distances (4-adjacency
// boundaries, linear-interpolation percentile, exact Euclidean distances via
// a two-pass distance transform). `spacing` scales pixel units.
double hd95(const LabelMap& seg, const LabelMap& ref, int class_id, double spacing = 1.0);

// 100*||A| - |B|| / |B| with B the reference mask.
double avd(const LabelMap& seg, const LabelMap& ref, int class_id);

struct ClassMetrics {
  double dc = 0.0;
  double hd95 = 0.0;
  double avd = 0.0;
};

struct MetricsReport {
  std::map<int, ClassMetrics> per_class;  // means over samples where defined
  double psnr = 0.0;
  double nmse = 0.0;
  int n_samples = 0;
  // undefined per-class entries excluded from the means, keyed e.g. "hd95.c3"
  std::map<std::string, int> excluded;
};

// One model's output for one reference sample; either part may be absent.
struct EvalOutput {
  std::optional<Tensor<float>> image;  // magnitude reconstruction in [0,1]
  std::optional<LabelMap> seg;
};

// Arithmetic per-sample means; undefined per-class entries are excluded with
// a count. Foreground classes only (1..3): background is not reported.
MetricsReport evaluate_dataset(const std::vector<EvalOutput>& model_outputs,
                               const std::vector<LabeledSample>& references,
                               double spacing = 1.0);

// Larger DC, then smaller HD and AVD (mean over reported classes).
bool better_segmentation(const MetricsReport& a, const MetricsReport& b);
// Larger PSNR, then smaller NMSE.
bool better_reconstruction(const MetricsReport& a, const MetricsReport& b);

double mean_dice(const MetricsReport& r);

// CSV with one row per named report; paper-style text table.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace snm
