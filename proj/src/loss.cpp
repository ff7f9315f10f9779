#include "omni/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace omni {

namespace {

// log(1 + sum_i e^{x_i}) with the usual shift-by-max trick, treating the
// leading 1 as e^0 so the shift also covers the empty-sum case. weights[i]
// holds e^{x_i} / (1 + sum_k e^{x_k}), which is exactly d value / d x_i.
struct SoftplusSum {
  double value = 0.0;
  std::vector<double> weights;
};

SoftplusSum softplus_sum(const std::vector<double>& exponents) {
  double shift = 0.0;
  for (double x : exponents) shift = std::max(shift, x);
  double denom = std::exp(-shift);
  SoftplusSum out;
  out.weights.resize(exponents.size());
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    out.weights[i] = std::exp(exponents[i] - shift);
    denom += out.weights[i];
  }
  for (double& w : out.weights) w /= denom;
  out.value = shift + std::log(denom);
  return out;
}

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": input contains NaN or Inf");
  }
}

}  // namespace

OmniTarget::OmniTarget(IVec l) : labels(std::move(l)) {
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < -1 || labels[i] > 1) {
      throw std::invalid_argument("OmniTarget: entries must be -1, 0, or +1");
    }
  }
}

LossResult omni_loss(const Vec& scores, const OmniTarget& target) {
  if (scores.size() != target.size()) {
    throw std::invalid_argument("omni_loss: scores and target sizes differ");
  }
  require_finite(scores, "omni_loss");

  std::vector<double> neg_exp, pos_exp;
  std::vector<Eigen::Index> neg_idx, pos_idx;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (target[i] == -1) {
      neg_exp.push_back(scores[i]);
      neg_idx.push_back(i);
    } else if (target[i] == 1) {
      pos_exp.push_back(-scores[i]);
      pos_idx.push_back(i);
    }
  }

  const SoftplusSum neg = softplus_sum(neg_exp);
  const SoftplusSum pos = softplus_sum(pos_exp);

  LossResult out;
  out.value = neg.value + pos.value;
  out.grad = Vec::Zero(scores.size());
  for (std::size_t k = 0; k < neg_idx.size(); ++k) out.grad[neg_idx[k]] = neg.weights[k];
  for (std::size_t k = 0; k < pos_idx.size(); ++k) out.grad[pos_idx[k]] = -pos.weights[k];
  return out;
}

UnifiedResult unified_loss(const Vec& s_pos, const Vec& s_neg, double gamma,
                           double margin) {
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("unified_loss: gamma must be positive");
  }
  require_finite(s_pos, "unified_loss");
  require_finite(s_neg, "unified_loss");

  // Pair exponents in (neg outer, pos inner) order; gradient weights map back
  // to the pair (n, p) at index n * P + p.
  const Eigen::Index N = s_neg.size();
  const Eigen::Index P = s_pos.size();
  std::vector<double> exps;
  exps.reserve(static_cast<std::size_t>(N * P));
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index p = 0; p < P; ++p) {
      exps.push_back(gamma * (s_neg[n] - s_pos[p] + margin));
    }
  }

  const SoftplusSum sum = softplus_sum(exps);

  UnifiedResult out;
  out.value = sum.value;
  out.pos_grad = Vec::Zero(P);
  out.neg_grad = Vec::Zero(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index p = 0; p < P; ++p) {
      const double w = sum.weights[static_cast<std::size_t>(n * P + p)];
      out.neg_grad[n] += gamma * w;
      out.pos_grad[p] -= gamma * w;
    }
  }
  return out;
}

std::pair<double, double> omni_unified_pair(const Vec& scores,
                                            const OmniTarget& target) {
  if (scores.size() != target.size()) {
    throw std::invalid_argument("omni_unified_pair: scores and target sizes differ");
  }
  std::vector<double> neg, pos;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (target[i] == -1) neg.push_back(scores[i]);
    if (target[i] == 1) pos.push_back(scores[i]);
  }
  const Vec negatives = Eigen::Map<const Vec>(neg.data(), static_cast<Eigen::Index>(neg.size()));
  const Vec positives = Eigen::Map<const Vec>(pos.data(), static_cast<Eigen::Index>(pos.size()));
  Vec anchor(1);
  anchor[0] = 0.0;

  const double via_unified = unified_loss(anchor, negatives, 1.0, 0.0).value +
                             unified_loss(positives, anchor, 1.0, 0.0).value;
  const double via_omni = omni_loss(scores, target).value;
  return {via_unified, via_omni};
}

LossResult multi_hinge_loss(const Vec& logits, int target_class) {
  if (target_class < 0 || target_class >= logits.size()) {
    throw std::invalid_argument("multi_hinge_loss: target class out of range");
  }
  require_finite(logits, "multi_hinge_loss");

  LossResult out;
  out.grad = Vec::Zero(logits.size());
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (k == target_class) continue;
    const double margin = 1.0 + logits[k] - logits[target_class];
    if (margin > 0.0) {
      out.value += margin;
      out.grad[k] += 1.0;
      out.grad[target_class] -= 1.0;
    }
  }
  return out;
}

LossResult softmax_ce_loss(const Vec& logits, int target_class) {
  if (target_class < 0 || target_class >= logits.size()) {
    throw std::invalid_argument("softmax_ce_loss: target class out of range");
  }
  require_finite(logits, "softmax_ce_loss");

  const double shift = logits.maxCoeff();
  const Vec e = (logits.array() - shift).exp();
  const double z = e.sum();

  LossResult out;
  out.value = std::log(z) - (logits[target_class] - shift);
  out.grad = e / z;
  out.grad[target_class] -= 1.0;
  return out;
}

LossResult hinge_gan_loss(double score, GanRole role) {
  if (!std::isfinite(score)) {
    throw std::invalid_argument("hinge_gan_loss: input contains NaN or Inf");
  }
  LossResult out;
  out.grad = Vec::Zero(1);
  switch (role) {
    case GanRole::d_real:
      if (1.0 - score > 0.0) {
        out.value = 1.0 - score;
        out.grad[0] = -1.0;
      }
      break;
    case GanRole::d_fake:
      if (1.0 + score > 0.0) {
        out.value = 1.0 + score;
        out.grad[0] = 1.0;
      }
      break;
    case GanRole::g:
      out.value = -score;
      out.grad[0] = -1.0;
      break;
  }
  return out;
}

MapLossResult perpixel_omni_loss(const ScoreMap& scores, const TargetMap& targets) {
  if (scores.height != targets.height || scores.width != targets.width) {
    throw std::invalid_argument("perpixel_omni_loss: map sizes differ");
  }
  if (scores.values.rows() != targets.labels.rows() ||
      scores.values.cols() != targets.labels.cols()) {
    throw std::invalid_argument("perpixel_omni_loss: channel/cell counts differ");
  }
  const Eigen::Index cells = static_cast<Eigen::Index>(scores.height) * scores.width;
  if (scores.values.cols() != cells) {
    throw std::invalid_argument("perpixel_omni_loss: column count does not match height*width");
  }
  if (cells == 0) {
    throw std::invalid_argument("perpixel_omni_loss: empty map");
  }

  MapLossResult out;
  out.grad = Mat::Zero(scores.values.rows(), scores.values.cols());
  for (Eigen::Index c = 0; c < cells; ++c) {
    const LossResult cell = omni_loss(scores.values.col(c), OmniTarget(targets.labels.col(c)));
    out.value += cell.value;
    out.grad.col(c) = cell.grad;
  }
  const double inv = 1.0 / static_cast<double>(cells);
  out.value *= inv;
  out.grad *= inv;
  return out;
}

}  // namespace omni
