#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omni/inr.hpp"
#include "omni/loss.hpp"
#include "omni/rng.hpp"

namespace omni {

// Labeled point cloud with the mode centers it was drawn from. Columns of
// `samples` are data points; center index c * modes_per_class + k is mode k
// of class c.
struct ToyDataset {
  Mat samples;
  std::vector<int> labels;
  Mat mode_centers;
  std::vector<int> center_class;
  int num_classes = 0;
  int modes_per_class = 0;
  double sigma = 0.0;

  int dim() const { return static_cast<int>(samples.rows()); }
  int count() const { return static_cast<int>(samples.cols()); }
  int mode_count() const { return static_cast<int>(mode_centers.cols()); }
};

// 2-D Gaussian mixture with modes on concentric rings: class c sits on the
// ring of radius 1 + c, its modes equally spaced with a per-class angular
// offset of 2*pi*c / (num_classes * modes_per_class) so classes interleave.
// Classes are assigned round-robin, the mode within a class uniformly.
ToyDataset make_gaussian_ring(int num_classes, int modes_per_class, double sigma,
                              int count, std::uint64_t seed);

// Procedural class-keyed RGB grating at cell-center coordinates; values lie
// well inside [-1, 1]. Used as the mode center of the image toy task.
FeatureGrid pattern_image(int class_index, int num_classes, int h, int w);

// Image analogue of the ring dataset: one mode per class, centered on
// pattern_image(c) flattened to a 3*h*w vector, with i.i.d. Gaussian noise.
ToyDataset make_pattern_dataset(int num_classes, int h, int w, double sigma,
                                int count, std::uint64_t seed);

struct EvalMetrics {
  double mode_coverage = 0.0;
  double class_fidelity = 0.0;
  double high_quality_fraction = 0.0;
};

// Nearest-mode evaluation of generated samples against a dataset's centers.
// A sample is high quality when its distance to the nearest center is at
// most radius_mult * sigma. Over high-quality samples, class_fidelity is the
// fraction whose nearest center belongs to the intended class; mode_coverage
// is the fraction of centers claimed by at least one high-quality sample of
// the right class. With no high-quality samples both are 0.
EvalMetrics evaluate_modes(const Mat& generated, const std::vector<int>& intended,
                           const ToyDataset& data, double radius_mult = 3.0);

// Plain-text round trip for inspection: header x0,...,x{d-1},label then one
// row per sample.
void write_dataset_csv(const std::string& path, const ToyDataset& data);
// Reads samples and labels back; mode metadata is not part of the format.
ToyDataset read_dataset_csv(const std::string& path);

}  // namespace omni
