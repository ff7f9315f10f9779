#include "omni/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace omni {

namespace {

bool decays(const AdamConfig& cfg, const std::string& name) {
  if (cfg.weight_decay == 0.0) return false;
  if (cfg.decay_biases_and_embeddings) return true;
  if (name.find("bias") != std::string::npos) return false;
  if (name.find("embed") != std::string::npos) return false;
  return true;
}

}  // namespace

DecayPreset decay_preset(const std::string& name) {
  if (name == "no-decay") return {0.0, 0.0};
  if (name == "small-decay") return {5e-4, 1e-3};
  if (name == "medium-decay") return {1e-4, 1e-3};
  if (name == "large-decay") return {1e-5, 1e-3};
  throw std::invalid_argument("decay_preset: unknown preset '" + name + "'");
}

void Adam::step(const std::vector<ParamRef>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Vec::Zero(p.size));
      v_.push_back(Vec::Zero(p.size));
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("Adam::step: parameter list changed size");
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    Eigen::Map<Vec> value(p.value, p.size);
    Eigen::Map<const Vec> grad(p.grad, p.size);
    if (!grad.allFinite()) {
      throw std::runtime_error("Adam::step: non-finite gradient in parameter '" +
                               p.name + "'");
    }
    if (m_[k].size() != p.size) {
      throw std::invalid_argument("Adam::step: parameter '" + p.name + "' changed size");
    }

    const bool decay_here = decays(cfg_, p.name);
    Vec g = grad;
    if (decay_here && cfg_.decay_mode == DecayMode::coupled) {
      g += cfg_.weight_decay * value;
    }

    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
    v_[k] = cfg_.beta2 * v_[k].array().matrix() + (1.0 - cfg_.beta2) * g.cwiseProduct(g);

    const Vec m_hat = m_[k] / bc1;
    const Vec v_hat = v_[k] / bc2;
    value.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);

    if (decay_here && cfg_.decay_mode == DecayMode::decoupled) {
      value *= 1.0 - cfg_.lr * cfg_.weight_decay;
    }
  }
}

GradCheckResult grad_check(const ScalarFn& f, const Vec& point, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("grad_check: step must be positive");
  }
  Vec analytic;
  f(point, &analytic);
  if (analytic.size() != point.size()) {
    throw std::invalid_argument("grad_check: analytic gradient has wrong size");
  }

  GradCheckResult out;
  Vec x = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = f(x, nullptr);
    x[i] = saved - step;
    const double fm = f(x, nullptr);
    x[i] = saved;

    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-2});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > out.max_rel_err) {
      out.max_rel_err = rel;
      out.worst_index = i;
      out.analytic = analytic[i];
      out.numeric = numeric;
    }
  }
  return out;
}

Vec truncated_sample(Rng& rng, int dim, double sigma) {
  if (dim <= 0) {
    throw std::invalid_argument("truncated_sample: dim must be positive");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("truncated_sample: sigma must be positive");
  }
  Vec z(dim);
  for (int i = 0; i < dim; ++i) {
    double v = rng.normal();
    while (std::abs(v) > sigma) v = rng.normal();
    z[i] = v;
  }
  return z;
}

}  // namespace omni
