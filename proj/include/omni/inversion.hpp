#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omni/inr.hpp"
#include "omni/trainer.hpp"

namespace omni {

// Known forward corruption applied to an image before it is observed.
struct Degradation {
  enum class Kind { identity, downsample, grayscale };
  Kind kind = Kind::identity;
  int factor = 1;  // downsample block size
};

// Accepts "identity", "grayscale", "downsample:K".
Degradation parse_degradation(const std::string& text);
std::string degradation_name(const Degradation& deg);

// Applies the degradation: non-overlapping factor x factor mean pooling per
// channel, or the channel mean (one output channel), or a copy.
FeatureGrid degrade(const FeatureGrid& image, const Degradation& deg);

// Lifts a degraded observation back into the native-resolution 3-channel
// domain the discriminator was trained on: nearest-neighbor block upsampling
// for downsampled inputs, channel replication for grayscale. The lift is
// injective, so matching lifted observations is equivalent to matching the
// degraded ones.
FeatureGrid lift_to_native(const FeatureGrid& observed, const Degradation& deg,
                           int native_h, int native_w);

// Sum over the tapped trunk layers of the mean absolute difference between
// the discriminator's activations on x1 and x2. Layers index the trunk; an
// empty list means every trunk layer.
double feature_distance(Discriminator& d, const Mat& x1, const Mat& x2,
                        const std::vector<int>& layers);

struct FeatureDistanceGrad {
  double value = 0.0;
  Mat x1_grad;
};
// Same distance plus its gradient with respect to x1.
FeatureDistanceGrad feature_distance_grad(Discriminator& d, const Mat& x1,
                                          const Mat& x2, const std::vector<int>& layers);

struct InversionConfig {
  int steps = 400;
  double lr_z = 0.05;     // plain gradient descent on the latent
  int init_candidates = 16;  // latents screened before descent starts
  std::vector<int> feature_layers;  // empty -> all trunk layers
  std::uint64_t seed = 7;
};

struct InversionResult {
  Vec z_init;
  Vec z;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  std::vector<double> trace;  // objective after each step
  FeatureGrid restored;       // native-resolution synthesis at the final z
};

// Recovers a latent whose degraded synthesis matches the observation, by
// descending the discriminator feature distance between the two (both lifted
// to the native domain). The conditioning class is fixed. Requires a
// feature-grid (INR) generator.
InversionResult invert(GanModel& model, const FeatureGrid& observed,
                       const Degradation& deg, int class_index,
                       const InversionConfig& cfg);

// Peak signal-to-noise ratio over all channels with the given peak-to-peak
// signal range (2 for images in [-1, 1]). Infinite for identical inputs.
double psnr(const FeatureGrid& a, const FeatureGrid& b, double peak = 2.0);

// Bilinear resize to an arbitrary resolution; used as the reference
// restoration baseline for downsampled observations.
FeatureGrid bilinear_resize(const FeatureGrid& in, int out_h, int out_w);

}  // namespace omni
