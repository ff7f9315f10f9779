#pragma once

#include <string>
#include <vector>

#include "omni/loss.hpp"
#include "omni/rng.hpp"

namespace omni {

// Dense row-major array with shape metadata. Used as the carrier for
// checkpoints and other cross-module handoffs; the math itself stays in
// Eigen types.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  long long element_count() const {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  static Tensor from_matrix(const Mat& m);
  static Tensor from_vector(const Vec& v);
  Mat to_matrix() const;  // requires rank 2
  Vec to_vector() const;  // requires rank 1
};

// View into one named parameter block and its gradient accumulator. The
// pointers alias storage owned by the layers (Eigen column-major); rows/cols
// record the logical shape (vectors have cols == 1).
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  Eigen::Index size = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

enum class Activation { none, relu, leaky_relu, tanh };

Mat apply_activation(Activation act, const Mat& z);
// Elementwise derivative given the cached pre-activation z and output a.
Mat activation_grad(Activation act, const Mat& z, const Mat& a);

// Fully-connected layer over batches stored column-wise: y = W x + b 1^T.
// Gradients accumulate across backward calls until zero_grad().
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(int in_dim, int out_dim, Rng& rng, double weight_std);

  Mat forward(const Mat& x);
  // upstream is d loss / d output (out_dim x batch); returns d loss / d input.
  Mat backward(const Mat& upstream);
  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);

  // When set, forward evaluates one column at a time with a fixed
  // accumulation order, so each output column is a function of its own input
  // column alone. Eigen otherwise switches product kernels with the batch
  // width, which breaks bitwise reproducibility of a sample across batch
  // compositions.
  void set_per_column_forward(bool on) { per_column_forward_ = on; }

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  Mat weight;
  Vec bias;
  Mat weight_grad;
  Vec bias_grad;

 private:
  Mat input_;  // cached activation from the last forward
  bool has_input_ = false;
  bool per_column_forward_ = false;
};

// Stack of dense layers with an elementwise activation between them and an
// optional activation on the output. Post-activation outputs of every layer
// are cached so callers can tap intermediate features (and push gradients
// back in at those taps).
class Mlp {
 public:
  Mlp() = default;
  // dims = {in, hidden..., out}; one layer per adjacent pair.
  Mlp(const std::vector<int>& dims, Activation hidden_act, Activation output_act,
      Rng& rng);

  Mat forward(const Mat& x);
  Mat backward(const Mat& upstream);

  // Backpropagates gradients injected at the post-activation outputs of the
  // listed layers (index into layers()). Entries may repeat; they accumulate.
  Mat backward_from_taps(const std::vector<std::pair<int, Mat>>& taps);

  // Post-activation output of layer i from the last forward pass.
  const Mat& activation(int layer) const;

  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void set_per_column_forward(bool on);

  int layer_count() const { return static_cast<int>(layers_.size()); }
  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }
  DenseLayer& layer(int i) { return layers_[static_cast<std::size_t>(i)]; }

 private:
  Activation act_at(int layer) const {
    return layer + 1 == layer_count() ? output_act_ : hidden_act_;
  }

  std::vector<DenseLayer> layers_;
  Activation hidden_act_ = Activation::leaky_relu;
  Activation output_act_ = Activation::none;
  std::vector<Mat> pre_;   // per-layer pre-activation
  std::vector<Mat> post_;  // per-layer post-activation
  bool has_cache_ = false;
};

// Lookup table of per-class vectors, one row per class.
class ClassEmbedding {
 public:
  ClassEmbedding() = default;
  ClassEmbedding(int num_classes, int dim, Rng& rng, double std);

  // Returns dim x batch, one column per requested class.
  Mat forward(const std::vector<int>& classes) const;
  void backward(const std::vector<int>& classes, const Mat& upstream);
  void zero_grad();
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);

  int num_classes() const { return static_cast<int>(table.rows()); }
  int dim() const { return static_cast<int>(table.cols()); }

  Mat table;
  Mat table_grad;
};

// Class-conditional generator: concat(z, class embedding) through an MLP.
// The output head is chosen by the caller via output_act/out_dim; a raw
// (linear) output doubles as an INR feature grid, a tanh output as a
// fixed-resolution sample.
class Generator {
 public:
  Generator() = default;
  Generator(int d_z, int num_classes, int embed_dim, const std::vector<int>& hidden,
            int out_dim, Activation output_act, Rng& rng);

  Mat forward(const Mat& z, const std::vector<int>& classes);
  // Returns d loss / d z; accumulates parameter gradients including the
  // class embedding rows used in the last forward.
  Mat backward(const Mat& upstream);

  void zero_grad();
  std::vector<ParamRef> params();

  int d_z() const { return d_z_; }
  int out_dim() const { return backbone.out_dim(); }

  ClassEmbedding embed;
  Mlp backbone;

 private:
  int d_z_ = 0;
  std::vector<int> last_classes_;
};

// Discriminator: shared MLP trunk plus one of two heads. The omni head is a
// plain linear map to per-slot scores; the projection head scores a
// (sample, class) pair as dot(class embedding, features) + linear(features).
class Discriminator {
 public:
  enum class HeadKind { omni, projection };

  Discriminator() = default;
  Discriminator(int in_dim, const std::vector<int>& hidden, HeadKind kind,
                int head_dim_or_classes, Rng& rng);

  // Omni head: returns head scores (head_dim x batch).
  Mat forward(const Mat& x);
  Mat backward(const Mat& upstream);

  // Projection head: per-sample scalar scores for the paired classes.
  Vec forward_projection(const Mat& x, const std::vector<int>& classes);
  Mat backward_projection(const Vec& upstream);

  // Trunk features for perceptual distances; valid after any forward.
  const Mat& trunk_activation(int layer) const { return trunk.activation(layer); }
  // Backward through the trunk only, from gradients injected at trunk taps.
  Mat backward_from_trunk_taps(const std::vector<std::pair<int, Mat>>& taps);

  void zero_grad();
  std::vector<ParamRef> params();

  int in_dim() const { return trunk.in_dim(); }
  int feature_dim() const { return trunk.out_dim(); }
  HeadKind head_kind() const { return kind_; }

  Mlp trunk;
  DenseLayer head;           // omni head
  ClassEmbedding proj_embed; // projection head class embeddings
  DenseLayer proj_f2;        // projection head unconditional term

 private:
  HeadKind kind_ = HeadKind::omni;
  std::vector<int> last_classes_;
};

}  // namespace omni
