#pragma once

#include <vector>

#include "omni/net.hpp"

namespace omni {

// Channels-first planar grid. Column q holds the channel values of cell
// (i, j) with q = i * width + j (row-major cells). Images are FeatureGrids
// with 3 channels and values in [-1, 1].
struct FeatureGrid {
  Mat features;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(features.rows()); }
  Eigen::Index cells() const { return static_cast<Eigen::Index>(height) * width; }

  static FeatureGrid zeros(int channels, int h, int w) {
    FeatureGrid g;
    g.features = Mat::Zero(channels, static_cast<Eigen::Index>(h) * w);
    g.height = h;
    g.width = w;
    return g;
  }

  double at(int c, int i, int j) const {
    return features(c, static_cast<Eigen::Index>(i) * width + j);
  }
  double& at(int c, int i, int j) {
    return features(c, static_cast<Eigen::Index>(i) * width + j);
  }
};

// Query coordinates in [-1, 1]^2; row 0 is x (width axis), row 1 is y
// (height axis). One column per query.
struct CoordGrid {
  Mat coords;
  Eigen::Index count() const { return coords.cols(); }
};

// Cell-center coordinates of an h x w grid in row-major order:
//   x_j = -1 + (2j + 1) / w,  y_i = -1 + (2i + 1) / h
// so query i * w + j targets the center of cell (i, j).
CoordGrid make_coord_grid(int h, int w);

// 3x3 neighborhood expansion with zero padding. Output channel c * 9 + k
// holds input channel c shifted by offset k, where k = (di + 1) * 3 +
// (dj + 1) for di, dj in {-1, 0, 1}.
FeatureGrid unfold3x3(const FeatureGrid& in);

// Bilinear interpolation of grid values at the query coordinates, border
// cells clamped (edge padding). Coordinates map to continuous cell space via
// u = (x + 1) * width / 2 - 0.5, so grid centers sample exactly one cell.
Mat bilinear_sample(const FeatureGrid& grid, const CoordGrid& coords);

// Adjoint of bilinear_sample with respect to the grid values: scatters
// upstream (channels x queries) back onto the cells each query touched.
Mat bilinear_sample_adjoint(const Mat& upstream, int height, int width,
                            const CoordGrid& coords);

// Adjoint of unfold3x3: folds a (9 * channels) x cells gradient back onto the
// original channels x cells layout.
Mat unfold3x3_adjoint(const Mat& upstream, int channels, int height, int width);

// Implicit per-point decoder: for each query, the 3x3-unfolded feature grid
// is bilinearly sampled at the query point, the (x, y) coordinates are
// appended, and a small rectifier MLP with a tanh output maps the result to
// an RGB value. Resolution is chosen per call through the coordinate set.
class INRHead {
 public:
  INRHead() = default;
  INRHead(int grid_channels, int hidden, Rng& rng);

  // grids: one feature grid per batch sample (equal shapes). Returns RGB
  // values, 3 x (batch * queries), sample-major column blocks.
  Mat forward(const std::vector<FeatureGrid>& grids, const CoordGrid& coords);

  // Backpropagates through the MLP, the bilinear sampling, and the unfold;
  // returns d loss / d grid-features per sample. Parameter gradients
  // accumulate in the MLP layers.
  std::vector<Mat> backward(const Mat& upstream);

  void zero_grad() { mlp.zero_grad(); }
  std::vector<ParamRef> params();

  int grid_channels() const { return grid_channels_; }

  Mlp mlp;

 private:
  int grid_channels_ = 0;
  // Cached state from the last forward pass.
  CoordGrid coords_;
  int grid_h_ = 0, grid_w_ = 0;
  Eigen::Index batch_ = 0;
};

// Decodes one latent/class pair to an out_h x out_w RGB image through the
// generator backbone (feature grid head) and the INR decoder.
FeatureGrid synthesize(Generator& g, INRHead& head, const Vec& z, int class_index,
                       int grid_h, int grid_w, int out_h, int out_w);

// Reshapes one backbone output column (channel-major planes, row-major
// cells) into a feature grid.
FeatureGrid column_to_grid(const Vec& column, int channels, int h, int w);
Vec grid_to_column(const FeatureGrid& grid);

}  // namespace omni
