#pragma once

#include <Eigen/Dense>

namespace omni {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;
using IMat = Eigen::MatrixXi;

// Multi-label target vector. Entry semantics: +1 positive (score pushed up),
// -1 negative (score pushed down), 0 ignored (no loss, no gradient).
struct OmniTarget {
  IVec labels;

  OmniTarget() = default;
  explicit OmniTarget(IVec l);

  Eigen::Index size() const { return labels.size(); }
  int operator[](Eigen::Index i) const { return labels[i]; }
};

struct LossResult {
  double value = 0.0;
  Vec grad;
};

// Result of the two-set unified loss; gradients are reported per input set.
struct UnifiedResult {
  double value = 0.0;
  Vec pos_grad;
  Vec neg_grad;
};

// Multi-label softplus loss over a score vector:
//   log(1 + sum_{i: y_i = -1} e^{s_i}) + log(1 + sum_{j: y_j = +1} e^{-s_j})
// Overflow-safe for scores of any magnitude. Zero-labeled positions receive
// bitwise-zero gradients and do not affect the value at all.
LossResult omni_loss(const Vec& scores, const OmniTarget& target);

// Pairwise ranking form:
//   log(1 + sum_n sum_p e^{gamma * (s_neg[n] - s_pos[p] + margin)}),  gamma > 0
// Either set may be empty, in which case its pairs contribute nothing.
UnifiedResult unified_loss(const Vec& s_pos, const Vec& s_neg, double gamma,
                           double margin);

// Evaluates the same scores/target through both code paths:
//   first  = unified_loss({0}, negatives, 1, 0).value
//          + unified_loss(positives, {0}, 1, 0).value
//   second = omni_loss(scores, target).value
// The two should agree to machine precision; exposed so callers and tests can
// exercise the reduction directly.
std::pair<double, double> omni_unified_pair(const Vec& scores,
                                            const OmniTarget& target);

// Sum of per-class hinges against the target logit:
//   sum_{k != t} max(0, 1 + logits[k] - logits[t])
// Subgradient 0 is used exactly at the kink.
LossResult multi_hinge_loss(const Vec& logits, int target_class);

// Standard softmax cross-entropy, stable under large logits.
LossResult softmax_ce_loss(const Vec& logits, int target_class);

// Scalar hinge adversarial loss. grad has size 1 (d value / d score).
enum class GanRole { d_real, d_fake, g };
LossResult hinge_gan_loss(double score, GanRole role);

// Dense per-location score map: one column per grid cell in row-major order
// (cell (i, j) lives in column i * width + j), one row per score channel.
struct ScoreMap {
  Mat values;
  int height = 0;
  int width = 0;
};

// Per-location targets with the same layout; rows are label channels.
struct TargetMap {
  IMat labels;
  int height = 0;
  int width = 0;
};

struct MapLossResult {
  double value = 0.0;
  Mat grad;  // same shape as ScoreMap::values
};

// Mean over all H*W locations of omni_loss applied to each column.
MapLossResult perpixel_omni_loss(const ScoreMap& scores, const TargetMap& targets);

}  // namespace omni
