// Seeded synthetic brain phantoms with ground-truth tissue labels, volume
// file I/O, and the augmentation / patch-extraction pipeline.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snm/tensor.hpp"

namespace snm {

struct LabelMap {
  Tensor<std::uint8_t> labels;  // (H, W), values in {0..3} = {bg, GM, WM, CSF}

  std::int64_t h() const { return labels.dim(0); }
  std::int64_t w() const { return labels.dim(1); }
};

struct LabeledSample {
  Tensor<float> image;  // (H, W), magnitude in [0,1], zero phase
  LabelMap labels;

  std::int64_t h() const { return image.dim(0); }
  std::int64_t w() const { return image.dim(1); }
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  std::uint64_t seed = 0;
};

// Deterministic phantom from randomized nested ellipses: GM ring, WM
// interior, 1-3 CSF ventricles, background outside. Intensities carry a
// smooth intra-tissue field plus additive noise, clipped to [0,1] and
// normalized so the volume max is exactly 1.
LabeledSample generate_phantom(std::int64_t h, std::int64_t w, std::uint64_t seed);

// The geometric transform augment() draws. Exposed so tests can apply
// specific transforms directly.
struct AugmentSpec {
  bool hflip = false;
  int rotation_quarters = 0;  // multiples of 90 degrees, in {0,1,2,3}
  int dx = 0;                 // column shift, background fill
  int dy = 0;                 // row shift
};

LabeledSample apply_augmentation(const LabeledSample& s, const AugmentSpec& spec);

// Random flip + rotation (square images only; {0,180} otherwise) +
// translation up to +-5 px, applied jointly to image and labels.
LabeledSample augment(const LabeledSample& s, std::uint64_t seed);

// count aligned image/label patches at uniform random valid offsets.
std::vector<LabeledSample> crop_patches(const LabeledSample& s, std::int64_t size,
                                        std::int64_t count, std::uint64_t seed);

// Volume container: entries "image" (H x W x K, f32) and "labels"
// (H x W x K, u8 or i32). Intensities are normalized per volume by max.
std::vector<LabeledSample> load_volume(const std::string& path);
void save_volume(const std::string& path, const std::vector<LabeledSample>& samples);

// Deterministic shuffle, then the first test_count samples form the test set.
DatasetSplit make_split(std::vector<LabeledSample> samples, std::int64_t test_count,
                        std::uint64_t seed);

}  // namespace snm
