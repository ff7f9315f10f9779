#include "omni/inr.hpp"

#include <cmath>
#include <stdexcept>

namespace omni {

namespace {

struct BilinearTap {
  Eigen::Index cell00, cell01, cell10, cell11;
  double w00, w01, w10, w11;
};

// Resolves one coordinate pair to the four clamped corner cells and weights.
BilinearTap make_tap(double x, double y, int height, int width) {
  const double u = (x + 1.0) * width / 2.0 - 0.5;
  const double v = (y + 1.0) * height / 2.0 - 0.5;
  const double fj = std::floor(u);
  const double fi = std::floor(v);
  const double du = u - fj;
  const double dv = v - fi;
  auto clampi = [](long long k, int n) {
    if (k < 0) return 0;
    if (k >= n) return n - 1;
    return static_cast<int>(k);
  };
  const int j0 = clampi(static_cast<long long>(fj), width);
  const int j1 = clampi(static_cast<long long>(fj) + 1, width);
  const int i0 = clampi(static_cast<long long>(fi), height);
  const int i1 = clampi(static_cast<long long>(fi) + 1, height);
  BilinearTap t;
  t.cell00 = static_cast<Eigen::Index>(i0) * width + j0;
  t.cell01 = static_cast<Eigen::Index>(i0) * width + j1;
  t.cell10 = static_cast<Eigen::Index>(i1) * width + j0;
  t.cell11 = static_cast<Eigen::Index>(i1) * width + j1;
  t.w00 = (1.0 - dv) * (1.0 - du);
  t.w01 = (1.0 - dv) * du;
  t.w10 = dv * (1.0 - du);
  t.w11 = dv * du;
  return t;
}

void check_coords(const CoordGrid& coords) {
  if (coords.coords.rows() != 2) {
    throw std::invalid_argument("CoordGrid: expected 2 rows (x, y)");
  }
  if (!coords.coords.allFinite()) {
    throw std::invalid_argument("CoordGrid: non-finite coordinates");
  }
}

}  // namespace

CoordGrid make_coord_grid(int h, int w) {
  if (h <= 0 || w <= 0) {
    throw std::invalid_argument("make_coord_grid: size must be positive");
  }
  CoordGrid g;
  g.coords.resize(2, static_cast<Eigen::Index>(h) * w);
  for (int i = 0; i < h; ++i) {
    const double y = -1.0 + (2.0 * i + 1.0) / h;
    for (int j = 0; j < w; ++j) {
      const double x = -1.0 + (2.0 * j + 1.0) / w;
      const Eigen::Index q = static_cast<Eigen::Index>(i) * w + j;
      g.coords(0, q) = x;
      g.coords(1, q) = y;
    }
  }
  return g;
}

FeatureGrid unfold3x3(const FeatureGrid& in) {
  const int C = in.channels();
  const int H = in.height;
  const int W = in.width;
  if (C <= 0 || H <= 0 || W <= 0) {
    throw std::invalid_argument("unfold3x3: empty grid");
  }
  FeatureGrid out = FeatureGrid::zeros(9 * C, H, W);
  for (int c = 0; c < C; ++c) {
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const int k = (di + 1) * 3 + (dj + 1);
        const int oc = c * 9 + k;
        for (int i = 0; i < H; ++i) {
          const int si = i + di;
          if (si < 0 || si >= H) continue;
          for (int j = 0; j < W; ++j) {
            const int sj = j + dj;
            if (sj < 0 || sj >= W) continue;
            out.at(oc, i, j) = in.at(c, si, sj);
          }
        }
      }
    }
  }
  return out;
}

Mat unfold3x3_adjoint(const Mat& upstream, int channels, int height, int width) {
  if (upstream.rows() != 9 * channels ||
      upstream.cols() != static_cast<Eigen::Index>(height) * width) {
    throw std::invalid_argument("unfold3x3_adjoint: shape mismatch");
  }
  Mat grad = Mat::Zero(channels, static_cast<Eigen::Index>(height) * width);
  for (int c = 0; c < channels; ++c) {
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const int k = (di + 1) * 3 + (dj + 1);
        const int oc = c * 9 + k;
        for (int i = 0; i < height; ++i) {
          const int si = i + di;
          if (si < 0 || si >= height) continue;
          for (int j = 0; j < width; ++j) {
            const int sj = j + dj;
            if (sj < 0 || sj >= width) continue;
            grad(c, static_cast<Eigen::Index>(si) * width + sj) +=
                upstream(oc, static_cast<Eigen::Index>(i) * width + j);
          }
        }
      }
    }
  }
  return grad;
}

Mat bilinear_sample(const FeatureGrid& grid, const CoordGrid& coords) {
  check_coords(coords);
  const Eigen::Index Q = coords.count();
  Mat out(grid.channels(), Q);
  for (Eigen::Index q = 0; q < Q; ++q) {
    const BilinearTap t =
        make_tap(coords.coords(0, q), coords.coords(1, q), grid.height, grid.width);
    out.col(q) = t.w00 * grid.features.col(t.cell00) + t.w01 * grid.features.col(t.cell01) +
                 t.w10 * grid.features.col(t.cell10) + t.w11 * grid.features.col(t.cell11);
  }
  return out;
}

Mat bilinear_sample_adjoint(const Mat& upstream, int height, int width,
                            const CoordGrid& coords) {
  check_coords(coords);
  if (upstream.cols() != coords.count()) {
    throw std::invalid_argument("bilinear_sample_adjoint: query count mismatch");
  }
  Mat grad = Mat::Zero(upstream.rows(), static_cast<Eigen::Index>(height) * width);
  for (Eigen::Index q = 0; q < coords.count(); ++q) {
    const BilinearTap t = make_tap(coords.coords(0, q), coords.coords(1, q), height, width);
    grad.col(t.cell00) += t.w00 * upstream.col(q);
    grad.col(t.cell01) += t.w01 * upstream.col(q);
    grad.col(t.cell10) += t.w10 * upstream.col(q);
    grad.col(t.cell11) += t.w11 * upstream.col(q);
  }
  return grad;
}

INRHead::INRHead(int grid_channels, int hidden, Rng& rng) : grid_channels_(grid_channels) {
  if (grid_channels <= 0 || hidden <= 0) {
    throw std::invalid_argument("INRHead: dimensions must be positive");
  }
  mlp = Mlp({9 * grid_channels + 2, hidden, hidden, 3}, Activation::relu,
            Activation::tanh, rng);
  // The decoder is a pointwise function of the query coordinate; keep it that
  // way bitwise no matter how queries are batched.
  mlp.set_per_column_forward(true);
}

Mat INRHead::forward(const std::vector<FeatureGrid>& grids, const CoordGrid& coords) {
  check_coords(coords);
  if (grids.empty()) {
    throw std::invalid_argument("INRHead::forward: empty batch");
  }
  const Eigen::Index Q = coords.count();
  const Eigen::Index B = static_cast<Eigen::Index>(grids.size());
  const int in_rows = 9 * grid_channels_ + 2;

  Mat input(in_rows, B * Q);
  for (Eigen::Index b = 0; b < B; ++b) {
    const FeatureGrid& g = grids[static_cast<std::size_t>(b)];
    if (g.channels() != grid_channels_) {
      throw std::invalid_argument("INRHead::forward: grid channel mismatch");
    }
    if (b > 0 && (g.height != grids[0].height || g.width != grids[0].width)) {
      throw std::invalid_argument("INRHead::forward: grids must share a shape");
    }
    const FeatureGrid unfolded = unfold3x3(g);
    input.block(0, b * Q, 9 * grid_channels_, Q) = bilinear_sample(unfolded, coords);
    input.block(9 * grid_channels_, b * Q, 2, Q) = coords.coords;
  }

  coords_ = coords;
  grid_h_ = grids[0].height;
  grid_w_ = grids[0].width;
  batch_ = B;
  return mlp.forward(input);
}

std::vector<Mat> INRHead::backward(const Mat& upstream) {
  if (batch_ == 0) {
    throw std::logic_error("INRHead::backward called before forward");
  }
  const Eigen::Index Q = coords_.count();
  if (upstream.rows() != 3 || upstream.cols() != batch_ * Q) {
    throw std::invalid_argument("INRHead::backward: upstream shape mismatch");
  }
  const Mat input_grad = mlp.backward(upstream);
  std::vector<Mat> grid_grads;
  grid_grads.reserve(static_cast<std::size_t>(batch_));
  for (Eigen::Index b = 0; b < batch_; ++b) {
    const Mat sampled_grad = input_grad.block(0, b * Q, 9 * grid_channels_, Q);
    const Mat unfolded_grad = bilinear_sample_adjoint(sampled_grad, grid_h_, grid_w_, coords_);
    grid_grads.push_back(unfold3x3_adjoint(unfolded_grad, grid_channels_, grid_h_, grid_w_));
  }
  return grid_grads;
}

std::vector<ParamRef> INRHead::params() {
  std::vector<ParamRef> out;
  mlp.collect_params("inr", out);
  return out;
}

FeatureGrid column_to_grid(const Vec& column, int channels, int h, int w) {
  const Eigen::Index cells = static_cast<Eigen::Index>(h) * w;
  if (column.size() != channels * cells) {
    throw std::invalid_argument("column_to_grid: size mismatch");
  }
  FeatureGrid g = FeatureGrid::zeros(channels, h, w);
  for (int c = 0; c < channels; ++c) {
    g.features.row(c) = column.segment(c * cells, cells).transpose();
  }
  return g;
}

Vec grid_to_column(const FeatureGrid& grid) {
  const Eigen::Index cells = grid.cells();
  Vec out(grid.channels() * cells);
  for (int c = 0; c < grid.channels(); ++c) {
    out.segment(c * cells, cells) = grid.features.row(c).transpose();
  }
  return out;
}

FeatureGrid synthesize(Generator& g, INRHead& head, const Vec& z, int class_index,
                       int grid_h, int grid_w, int out_h, int out_w) {
  const Mat backbone_out = g.forward(z, {class_index});
  const FeatureGrid grid =
      column_to_grid(backbone_out.col(0), head.grid_channels(), grid_h, grid_w);
  const CoordGrid coords = make_coord_grid(out_h, out_w);
  const Mat rgb = head.forward({grid}, coords);
  FeatureGrid image;
  image.features = rgb;
  image.height = out_h;
  image.width = out_w;
  return image;
}

}  // namespace omni
