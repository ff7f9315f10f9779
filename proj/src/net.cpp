#include "omni/net.hpp"

#include <cassert>
#include <stdexcept>

namespace omni {

namespace {

constexpr double kLeakySlope = 0.2;

void debug_check_finite(const Mat& m, const char* what) {
#ifndef NDEBUG
  if (!m.allFinite()) {
    throw std::runtime_error(std::string(what) + ": non-finite activation");
  }
#else
  (void)m;
  (void)what;
#endif
}

}  // namespace

Tensor Tensor::from_matrix(const Mat& m) {
  Tensor t;
  t.shape = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return t;
}

Tensor Tensor::from_vector(const Vec& v) {
  Tensor t;
  t.shape = {static_cast<int>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

Mat Tensor::to_matrix() const {
  if (shape.size() != 2) throw std::invalid_argument("Tensor::to_matrix: rank != 2");
  Mat m(shape[0], shape[1]);
  for (int r = 0; r < shape[0]; ++r) {
    for (int c = 0; c < shape[1]; ++c) {
      m(r, c) = data[static_cast<std::size_t>(r) * shape[1] + c];
    }
  }
  return m;
}

Vec Tensor::to_vector() const {
  if (shape.size() != 1) throw std::invalid_argument("Tensor::to_vector: rank != 1");
  return Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Mat apply_activation(Activation act, const Mat& z) {
  switch (act) {
    case Activation::none:
      return z;
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::leaky_relu:
      return z.cwiseMax(kLeakySlope * z);
    case Activation::tanh:
      return z.array().tanh().matrix();
  }
  throw std::logic_error("apply_activation: unknown activation");
}

Mat activation_grad(Activation act, const Mat& z, const Mat& a) {
  switch (act) {
    case Activation::none:
      return Mat::Ones(z.rows(), z.cols());
    case Activation::relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::leaky_relu:
      return (z.array() > 0.0).select(Mat::Ones(z.rows(), z.cols()),
                                      Mat::Constant(z.rows(), z.cols(), kLeakySlope));
    case Activation::tanh:
      return (1.0 - a.array().square()).matrix();
  }
  throw std::logic_error("activation_grad: unknown activation");
}

DenseLayer::DenseLayer(int in_dim, int out_dim, Rng& rng, double weight_std) {
  if (in_dim <= 0 || out_dim <= 0) {
    throw std::invalid_argument("DenseLayer: dimensions must be positive");
  }
  weight.resize(out_dim, in_dim);
  for (Eigen::Index r = 0; r < weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < weight.cols(); ++c) {
      weight(r, c) = weight_std * rng.normal();
    }
  }
  bias = Vec::Zero(out_dim);
  weight_grad = Mat::Zero(out_dim, in_dim);
  bias_grad = Vec::Zero(out_dim);
}

Mat DenseLayer::forward(const Mat& x) {
  if (x.rows() != weight.cols()) {
    throw std::invalid_argument("DenseLayer::forward: input dimension mismatch");
  }
  input_ = x;
  has_input_ = true;
  Mat y(weight.rows(), x.cols());
  if (per_column_forward_) {
    Vec acc(weight.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      acc = bias;
      for (Eigen::Index k = 0; k < weight.cols(); ++k) {
        acc += weight.col(k) * x(k, c);
      }
      y.col(c) = acc;
    }
  } else {
    y.noalias() = weight * x;
    y.colwise() += bias;
  }
  debug_check_finite(y, "DenseLayer::forward");
  return y;
}

Mat DenseLayer::backward(const Mat& upstream) {
  if (!has_input_) {
    throw std::logic_error("DenseLayer::backward called before forward");
  }
  if (upstream.rows() != weight.rows() || upstream.cols() != input_.cols()) {
    throw std::invalid_argument("DenseLayer::backward: upstream shape mismatch");
  }
  weight_grad.noalias() += upstream * input_.transpose();
  bias_grad.noalias() += upstream.rowwise().sum();
  return weight.transpose() * upstream;
}

void DenseLayer::zero_grad() {
  weight_grad.setZero();
  bias_grad.setZero();
}

void DenseLayer::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight.data(), weight_grad.data(), weight.size(),
                 weight.rows(), weight.cols()});
  out.push_back({prefix + ".bias", bias.data(), bias_grad.data(), bias.size(),
                 bias.size(), 1});
}

Mlp::Mlp(const std::vector<int>& dims, Activation hidden_act, Activation output_act,
         Rng& rng)
    : hidden_act_(hidden_act), output_act_(output_act) {
  if (dims.size() < 2) {
    throw std::invalid_argument("Mlp: need at least input and output dims");
  }
  layers_.reserve(dims.size() - 1);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const Activation act = (i + 2 == dims.size()) ? output_act : hidden_act;
    // He-style scaling for rectifiers, Xavier-style for linear/tanh outputs.
    const double gain = (act == Activation::relu || act == Activation::leaky_relu) ? 2.0 : 1.0;
    const double std = std::sqrt(gain / dims[i]);
    layers_.emplace_back(dims[i], dims[i + 1], rng, std);
  }
  pre_.resize(layers_.size());
  post_.resize(layers_.size());
}

Mat Mlp::forward(const Mat& x) {
  Mat a = x;
  for (int i = 0; i < layer_count(); ++i) {
    pre_[i] = layers_[i].forward(a);
    post_[i] = apply_activation(act_at(i), pre_[i]);
    a = post_[i];
  }
  has_cache_ = true;
  return a;
}

Mat Mlp::backward(const Mat& upstream) {
  return backward_from_taps({{layer_count() - 1, upstream}});
}

Mat Mlp::backward_from_taps(const std::vector<std::pair<int, Mat>>& taps) {
  if (!has_cache_) {
    throw std::logic_error("Mlp::backward called before forward");
  }
  const Eigen::Index batch = post_.back().cols();
  Mat u = Mat::Zero(out_dim(), batch);
  for (const auto& [layer, grad] : taps) {
    if (layer < 0 || layer >= layer_count()) {
      throw std::invalid_argument("Mlp::backward_from_taps: tap layer out of range");
    }
    if (layer == layer_count() - 1) u += grad;
  }
  for (int i = layer_count() - 1; i >= 0; --i) {
    if (i != layer_count() - 1) {
      for (const auto& [layer, grad] : taps) {
        if (layer == i) u += grad;
      }
    }
    u = u.cwiseProduct(activation_grad(act_at(i), pre_[i], post_[i]));
    u = layers_[i].backward(u);
  }
  return u;
}

const Mat& Mlp::activation(int layer) const {
  if (!has_cache_) {
    throw std::logic_error("Mlp::activation queried before forward");
  }
  if (layer < 0 || layer >= layer_count()) {
    throw std::invalid_argument("Mlp::activation: layer out of range");
  }
  return post_[static_cast<std::size_t>(layer)];
}

void Mlp::zero_grad() {
  for (auto& l : layers_) l.zero_grad();
}

void Mlp::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  for (int i = 0; i < layer_count(); ++i) {
    layers_[i].collect_params(prefix + ".fc" + std::to_string(i), out);
  }
}

void Mlp::set_per_column_forward(bool on) {
  for (auto& l : layers_) l.set_per_column_forward(on);
}

ClassEmbedding::ClassEmbedding(int num_classes, int dim, Rng& rng, double std) {
  if (num_classes <= 0 || dim <= 0) {
    throw std::invalid_argument("ClassEmbedding: dimensions must be positive");
  }
  table.resize(num_classes, dim);
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      table(r, c) = std * rng.normal();
    }
  }
  table_grad = Mat::Zero(num_classes, dim);
}

Mat ClassEmbedding::forward(const std::vector<int>& classes) const {
  Mat out(dim(), static_cast<Eigen::Index>(classes.size()));
  for (std::size_t b = 0; b < classes.size(); ++b) {
    if (classes[b] < 0 || classes[b] >= num_classes()) {
      throw std::invalid_argument("ClassEmbedding::forward: class index out of range");
    }
    out.col(static_cast<Eigen::Index>(b)) = table.row(classes[b]).transpose();
  }
  return out;
}

void ClassEmbedding::backward(const std::vector<int>& classes, const Mat& upstream) {
  if (upstream.cols() != static_cast<Eigen::Index>(classes.size()) ||
      upstream.rows() != dim()) {
    throw std::invalid_argument("ClassEmbedding::backward: upstream shape mismatch");
  }
  for (std::size_t b = 0; b < classes.size(); ++b) {
    table_grad.row(classes[b]) += upstream.col(static_cast<Eigen::Index>(b)).transpose();
  }
}

void ClassEmbedding::zero_grad() { table_grad.setZero(); }

void ClassEmbedding::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix, table.data(), table_grad.data(), table.size(), table.rows(),
                 table.cols()});
}

Generator::Generator(int d_z, int num_classes, int embed_dim,
                     const std::vector<int>& hidden, int out_dim,
                     Activation output_act, Rng& rng)
    : d_z_(d_z) {
  embed = ClassEmbedding(num_classes, embed_dim, rng, 1.0 / std::sqrt(embed_dim));
  std::vector<int> dims;
  dims.push_back(d_z + embed_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  backbone = Mlp(dims, Activation::leaky_relu, output_act, rng);
}

Mat Generator::forward(const Mat& z, const std::vector<int>& classes) {
  if (z.rows() != d_z_) {
    throw std::invalid_argument("Generator::forward: z dimension mismatch");
  }
  if (z.cols() != static_cast<Eigen::Index>(classes.size())) {
    throw std::invalid_argument("Generator::forward: batch size mismatch");
  }
  last_classes_ = classes;
  Mat input(z.rows() + embed.dim(), z.cols());
  input.topRows(z.rows()) = z;
  input.bottomRows(embed.dim()) = embed.forward(classes);
  return backbone.forward(input);
}

Mat Generator::backward(const Mat& upstream) {
  const Mat input_grad = backbone.backward(upstream);
  embed.backward(last_classes_, input_grad.bottomRows(embed.dim()));
  return input_grad.topRows(d_z_);
}

void Generator::zero_grad() {
  embed.zero_grad();
  backbone.zero_grad();
}

std::vector<ParamRef> Generator::params() {
  std::vector<ParamRef> out;
  embed.collect_params("g.embed", out);
  backbone.collect_params("g", out);
  return out;
}

Discriminator::Discriminator(int in_dim, const std::vector<int>& hidden,
                             HeadKind kind, int head_dim_or_classes, Rng& rng)
    : kind_(kind) {
  if (hidden.empty()) {
    throw std::invalid_argument("Discriminator: need at least one trunk layer");
  }
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  trunk = Mlp(dims, Activation::leaky_relu, Activation::leaky_relu, rng);
  const int feat = hidden.back();
  if (kind == HeadKind::omni) {
    head = DenseLayer(feat, head_dim_or_classes, rng, std::sqrt(1.0 / feat));
  } else {
    proj_embed = ClassEmbedding(head_dim_or_classes, feat, rng, 1.0 / std::sqrt(feat));
    proj_f2 = DenseLayer(feat, 1, rng, std::sqrt(1.0 / feat));
  }
}

Mat Discriminator::forward(const Mat& x) {
  if (kind_ != HeadKind::omni) {
    throw std::logic_error("Discriminator::forward: not an omni-head model");
  }
  return head.forward(trunk.forward(x));
}

Mat Discriminator::backward(const Mat& upstream) {
  if (kind_ != HeadKind::omni) {
    throw std::logic_error("Discriminator::backward: not an omni-head model");
  }
  return trunk.backward(head.backward(upstream));
}

Vec Discriminator::forward_projection(const Mat& x, const std::vector<int>& classes) {
  if (kind_ != HeadKind::projection) {
    throw std::logic_error("Discriminator::forward_projection: not a projection-head model");
  }
  if (x.cols() != static_cast<Eigen::Index>(classes.size())) {
    throw std::invalid_argument("Discriminator::forward_projection: batch size mismatch");
  }
  last_classes_ = classes;
  const Mat feats = trunk.forward(x);
  const Mat embeds = proj_embed.forward(classes);  // feat x batch
  const Mat uncond = proj_f2.forward(feats);       // 1 x batch
  Vec scores(x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    scores[b] = embeds.col(b).dot(feats.col(b)) + uncond(0, b);
  }
  return scores;
}

Mat Discriminator::backward_projection(const Vec& upstream) {
  if (kind_ != HeadKind::projection) {
    throw std::logic_error("Discriminator::backward_projection: not a projection-head model");
  }
  const Mat& feats = trunk.activation(trunk.layer_count() - 1);
  if (upstream.size() != feats.cols()) {
    throw std::invalid_argument("Discriminator::backward_projection: upstream size mismatch");
  }
  const Mat embeds = proj_embed.forward(last_classes_);
  // d score_b / d feats_b = embed_b + f2.weight^T; d / d embed_b = feats_b.
  Mat feat_grad = proj_f2.backward(upstream.transpose());  // handles f2 params
  feat_grad += embeds * upstream.asDiagonal();
  proj_embed.backward(last_classes_, feats * upstream.asDiagonal());
  return trunk.backward(feat_grad);
}

Mat Discriminator::backward_from_trunk_taps(const std::vector<std::pair<int, Mat>>& taps) {
  return trunk.backward_from_taps(taps);
}

void Discriminator::zero_grad() {
  trunk.zero_grad();
  if (kind_ == HeadKind::omni) {
    head.zero_grad();
  } else {
    proj_embed.zero_grad();
    proj_f2.zero_grad();
  }
}

std::vector<ParamRef> Discriminator::params() {
  std::vector<ParamRef> out;
  trunk.collect_params("d.trunk", out);
  if (kind_ == HeadKind::omni) {
    head.collect_params("d.head", out);
  } else {
    proj_embed.collect_params("d.proj.embed", out);
    proj_f2.collect_params("d.proj.f2", out);
  }
  return out;
}

}  // namespace omni
