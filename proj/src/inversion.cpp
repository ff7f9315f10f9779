#include "omni/inversion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace omni {

namespace {

std::vector<int> resolve_layers(const Discriminator& d, const std::vector<int>& layers) {
  const int n = const_cast<Discriminator&>(d).trunk.layer_count();
  if (layers.empty()) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  for (int l : layers) {
    if (l < 0 || l >= n) {
      throw std::invalid_argument("feature_distance: trunk layer index out of range");
    }
  }
  return layers;
}

// Gradient of lift_to_native(degrade(x)) with respect to x, given the
// gradient at the lifted output. Both maps are linear, so this is a single
// adjoint application.
Mat degrade_lift_adjoint(const Mat& upstream, const Degradation& deg, int h, int w) {
  switch (deg.kind) {
    case Degradation::Kind::identity:
      return upstream;
    case Degradation::Kind::grayscale: {
      // Every output channel saw the channel mean of x.
      Mat grad(upstream.rows(), upstream.cols());
      const Vec col_sums = upstream.colwise().sum().transpose() / 3.0;
      for (Eigen::Index r = 0; r < grad.rows(); ++r) grad.row(r) = col_sums.transpose();
      return grad;
    }
    case Degradation::Kind::downsample: {
      const int f = deg.factor;
      Mat grad = Mat::Zero(upstream.rows(), upstream.cols());
      // upstream columns are native cells; the block mean spreads each
      // block's upstream sum uniformly over its f*f source cells.
      for (int bi = 0; bi < h / f; ++bi) {
        for (int bj = 0; bj < w / f; ++bj) {
          Vec block_sum = Vec::Zero(upstream.rows());
          for (int di = 0; di < f; ++di) {
            for (int dj = 0; dj < f; ++dj) {
              const Eigen::Index cell =
                  static_cast<Eigen::Index>(bi * f + di) * w + (bj * f + dj);
              block_sum += upstream.col(cell);
            }
          }
          block_sum /= static_cast<double>(f) * f;
          for (int di = 0; di < f; ++di) {
            for (int dj = 0; dj < f; ++dj) {
              const Eigen::Index cell =
                  static_cast<Eigen::Index>(bi * f + di) * w + (bj * f + dj);
              grad.col(cell) = block_sum;
            }
          }
        }
      }
      return grad;
    }
  }
  throw std::logic_error("degrade_lift_adjoint: unknown degradation");
}

}  // namespace

Degradation parse_degradation(const std::string& text) {
  Degradation deg;
  if (text == "identity") {
    deg.kind = Degradation::Kind::identity;
    return deg;
  }
  if (text == "grayscale") {
    deg.kind = Degradation::Kind::grayscale;
    return deg;
  }
  const std::string prefix = "downsample:";
  if (text.rfind(prefix, 0) == 0) {
    deg.kind = Degradation::Kind::downsample;
    deg.factor = std::stoi(text.substr(prefix.size()));
    if (deg.factor <= 0) {
      throw std::invalid_argument("parse_degradation: factor must be positive");
    }
    return deg;
  }
  throw std::invalid_argument("parse_degradation: unknown degradation '" + text + "'");
}

std::string degradation_name(const Degradation& deg) {
  switch (deg.kind) {
    case Degradation::Kind::identity: return "identity";
    case Degradation::Kind::grayscale: return "grayscale";
    case Degradation::Kind::downsample:
      return "downsample:" + std::to_string(deg.factor);
  }
  throw std::logic_error("degradation_name: unknown degradation");
}

FeatureGrid degrade(const FeatureGrid& image, const Degradation& deg) {
  switch (deg.kind) {
    case Degradation::Kind::identity:
      return image;
    case Degradation::Kind::grayscale: {
      FeatureGrid out = FeatureGrid::zeros(1, image.height, image.width);
      out.features.row(0) = image.features.colwise().mean();
      return out;
    }
    case Degradation::Kind::downsample: {
      const int f = deg.factor;
      if (f <= 0 || image.height % f != 0 || image.width % f != 0) {
        throw std::invalid_argument("degrade: factor must divide both image dimensions");
      }
      FeatureGrid out = FeatureGrid::zeros(image.channels(), image.height / f, image.width / f);
      for (int bi = 0; bi < out.height; ++bi) {
        for (int bj = 0; bj < out.width; ++bj) {
          Vec acc = Vec::Zero(image.channels());
          for (int di = 0; di < f; ++di) {
            for (int dj = 0; dj < f; ++dj) {
              acc += image.features.col(
                  static_cast<Eigen::Index>(bi * f + di) * image.width + (bj * f + dj));
            }
          }
          out.features.col(static_cast<Eigen::Index>(bi) * out.width + bj) =
              acc / (static_cast<double>(f) * f);
        }
      }
      return out;
    }
  }
  throw std::logic_error("degrade: unknown degradation");
}

FeatureGrid lift_to_native(const FeatureGrid& observed, const Degradation& deg,
                           int native_h, int native_w) {
  switch (deg.kind) {
    case Degradation::Kind::identity:
      if (observed.height != native_h || observed.width != native_w ||
          observed.channels() != 3) {
        throw std::invalid_argument("lift_to_native: identity observation has wrong shape");
      }
      return observed;
    case Degradation::Kind::grayscale: {
      if (observed.height != native_h || observed.width != native_w ||
          observed.channels() != 1) {
        throw std::invalid_argument("lift_to_native: grayscale observation has wrong shape");
      }
      FeatureGrid out = FeatureGrid::zeros(3, native_h, native_w);
      for (int c = 0; c < 3; ++c) out.features.row(c) = observed.features.row(0);
      return out;
    }
    case Degradation::Kind::downsample: {
      const int f = deg.factor;
      if (f <= 0 || native_h % f != 0 || native_w % f != 0 ||
          observed.height != native_h / f || observed.width != native_w / f ||
          observed.channels() != 3) {
        throw std::invalid_argument("lift_to_native: downsampled observation has wrong shape");
      }
      FeatureGrid out = FeatureGrid::zeros(3, native_h, native_w);
      for (int i = 0; i < native_h; ++i) {
        for (int j = 0; j < native_w; ++j) {
          out.features.col(static_cast<Eigen::Index>(i) * native_w + j) =
              observed.features.col(static_cast<Eigen::Index>(i / f) * observed.width + j / f);
        }
      }
      return out;
    }
  }
  throw std::logic_error("lift_to_native: unknown degradation");
}

double feature_distance(Discriminator& d, const Mat& x1, const Mat& x2,
                        const std::vector<int>& layers) {
  const std::vector<int> taps = resolve_layers(d, layers);
  d.trunk.forward(x1);
  std::vector<Mat> a1;
  a1.reserve(taps.size());
  for (int l : taps) a1.push_back(d.trunk.activation(l));
  d.trunk.forward(x2);
  double value = 0.0;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    value += (a1[k] - d.trunk.activation(taps[k])).cwiseAbs().mean();
  }
  return value;
}

FeatureDistanceGrad feature_distance_grad(Discriminator& d, const Mat& x1,
                                          const Mat& x2, const std::vector<int>& layers) {
  const std::vector<int> taps = resolve_layers(d, layers);
  d.trunk.forward(x2);
  std::vector<Mat> a2;
  a2.reserve(taps.size());
  for (int l : taps) a2.push_back(d.trunk.activation(l));

  d.trunk.forward(x1);
  FeatureDistanceGrad out;
  std::vector<std::pair<int, Mat>> tap_grads;
  tap_grads.reserve(taps.size());
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const Mat diff = d.trunk.activation(taps[k]) - a2[k];
    out.value += diff.cwiseAbs().mean();
    // Subgradient of mean |.|; exactly zero where the activations agree.
    tap_grads.emplace_back(taps[k],
                           (diff.array().sign() / static_cast<double>(diff.size())).matrix());
  }
  out.x1_grad = d.backward_from_trunk_taps(tap_grads);
  return out;
}

FeatureGrid bilinear_resize(const FeatureGrid& in, int out_h, int out_w) {
  FeatureGrid out;
  out.features = bilinear_sample(in, make_coord_grid(out_h, out_w));
  out.height = out_h;
  out.width = out_w;
  return out;
}

double psnr(const FeatureGrid& a, const FeatureGrid& b, double peak) {
  if (a.height != b.height || a.width != b.width || a.channels() != b.channels()) {
    throw std::invalid_argument("psnr: shape mismatch");
  }
  const double mse = (a.features - b.features).squaredNorm() /
                     static_cast<double>(a.features.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

InversionResult invert(GanModel& model, const FeatureGrid& observed,
                       const Degradation& deg, int class_index,
                       const InversionConfig& cfg) {
  if (!model.has_inr) {
    throw std::invalid_argument("invert: model has no feature-grid generator head");
  }
  if (cfg.steps < 0 || cfg.init_candidates <= 0 || !(cfg.lr_z > 0.0)) {
    throw std::invalid_argument("invert: bad optimization settings");
  }
  if (class_index < 0 || class_index >= model.cfg.num_classes) {
    throw std::invalid_argument("invert: class index out of range");
  }
  const int H = model.cfg.image_h;
  const int W = model.cfg.image_w;
  const std::vector<int> layers = resolve_layers(model.d, cfg.feature_layers);

  const FeatureGrid target_native = lift_to_native(observed, deg, H, W);
  const Mat x_target = grid_to_column(target_native);

  // Synthesis, degradation, lift, and the feature objective for one latent.
  // Gradients flow back through the whole chain when z_grad is requested.
  auto objective = [&](const Vec& z, Vec* z_grad) -> double {
    const Mat backbone_out = model.g.forward(z, {class_index});
    const FeatureGrid grid = column_to_grid(backbone_out.col(0), model.cfg.grid_channels,
                                            model.cfg.grid_h, model.cfg.grid_w);
    const CoordGrid coords = make_coord_grid(H, W);
    const Mat rgb = model.inr.forward({grid}, coords);
    FeatureGrid image;
    image.features = rgb;
    image.height = H;
    image.width = W;

    const FeatureGrid lifted = lift_to_native(degrade(image, deg), deg, H, W);
    const Mat x = grid_to_column(lifted);

    if (!z_grad) {
      return feature_distance(model.d, x, x_target, layers);
    }

    model.d.zero_grad();
    const FeatureDistanceGrad fd = feature_distance_grad(model.d, x, x_target, layers);

    // x1_grad is one flattened column; restore the planar layout, push it
    // through the degrade/lift adjoint, then through the INR and generator.
    const FeatureGrid x_grad_grid = column_to_grid(fd.x1_grad.col(0), 3, H, W);
    const Mat image_grad = degrade_lift_adjoint(x_grad_grid.features, deg, H, W);

    const std::vector<Mat> grid_grads = model.inr.backward(image_grad);
    const Eigen::Index cells = static_cast<Eigen::Index>(model.cfg.grid_h) * model.cfg.grid_w;
    Mat backbone_grad(model.cfg.grid_channels * cells, 1);
    for (int c = 0; c < model.cfg.grid_channels; ++c) {
      backbone_grad.block(static_cast<Eigen::Index>(c) * cells, 0, cells, 1) =
          grid_grads[0].row(c).transpose();
    }
    model.g.zero_grad();
    model.inr.zero_grad();
    const Mat zg = model.g.backward(backbone_grad);
    *z_grad = zg.col(0);
    return fd.value;
  };

  // Screen a handful of random latents and descend from the best one.
  Rng rng(cfg.seed);
  Vec best_z;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.init_candidates; ++k) {
    Vec z(model.cfg.d_z);
    for (int r = 0; r < model.cfg.d_z; ++r) z[r] = rng.normal();
    const double v = objective(z, nullptr);
    if (v < best_val) {
      best_val = v;
      best_z = z;
    }
  }

  InversionResult result;
  result.z_init = best_z;
  result.initial_objective = best_val;
  result.trace.push_back(best_val);

  Vec z = best_z;
  for (int step = 0; step < cfg.steps; ++step) {
    Vec z_grad;
    objective(z, &z_grad);
    z -= cfg.lr_z * z_grad;
    result.trace.push_back(objective(z, nullptr));
  }

  result.z = z;
  result.final_objective = result.trace.back();
  result.restored = synthesize(model.g, model.inr, z, class_index, model.cfg.grid_h,
                               model.cfg.grid_w, H, W);
  return result;
}

}  // namespace omni
