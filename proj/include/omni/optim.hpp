#pragma once

#include <functional>
#include <string>
#include <vector>

#include "omni/net.hpp"
#include "omni/rng.hpp"

namespace omni {

// How weight decay interacts with the adaptive step:
//   decoupled: p -= lr * adam(g);  p -= lr * wd * p   (shrinkage independent
//              of the gradient statistics; with zero gradients the parameter
//              decays exactly geometrically)
//   coupled:   g += wd * p before the moment updates (classic L2-in-the-
//              gradient behaviour, where the decay term is rescaled by the
//              second-moment normalizer)
enum class DecayMode { decoupled, coupled };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  DecayMode decay_mode = DecayMode::decoupled;
  // When false, parameters whose name marks them as biases or embedding
  // tables are exempt from decay; by default everything decays uniformly.
  bool decay_biases_and_embeddings = true;
};

// Reference learning rates from the large-scale image setting these
// hyperparameters were tuned for. The toy trainer picks its own defaults.
inline constexpr double kReferenceLrG = 1e-4;
inline constexpr double kReferenceLrD = 4e-4;

// Discriminator/generator decay strengths bundled by the data regime they
// suit: the less data per class, the stronger the discriminator decay.
struct DecayPreset {
  double lambda_d = 0.0;
  double lambda_g = 0.0;
};
// Accepts "no-decay", "small-decay", "medium-decay", "large-decay".
DecayPreset decay_preset(const std::string& name);

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update to every referenced parameter using the accumulated
  // gradients. Throws (naming the parameter) if any gradient is non-finite.
  void step(const std::vector<ParamRef>& params);

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Vec> m_, v_;
};

// Scalar function with an optional analytic-gradient output. When grad_out
// is non-null it must be resized and filled by the callee.
using ScalarFn = std::function<double(const Vec&, Vec* grad_out)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of the analytic gradient at `point`. The error at
// coordinate i is |analytic - numeric| / max(|analytic|, |numeric|, 1e-2);
// the floor keeps finite-difference roundoff on near-zero coordinates from
// reading as spurious relative error.
GradCheckResult grad_check(const ScalarFn& f, const Vec& point, double step);

// Standard normal vector with each component redrawn until it lands within
// [-sigma, sigma]. Lower sigma trades sample diversity for typicality.
Vec truncated_sample(Rng& rng, int dim, double sigma);

}  // namespace omni
