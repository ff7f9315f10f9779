#include "omni/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include "omni/labels.hpp"

namespace omni {

namespace {

// Offset applied to the user seed for the model/training stream so it stays
// decoupled from the dataset stream (which consumes Rng(seed) directly).
constexpr std::uint64_t kTrainStreamSalt = 0xD1B54A32D192ED03ULL;

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "omni") return Variant::omni;
  if (name == "one-sided") return Variant::one_sided;
  if (name == "imacgan") return Variant::imacgan;
  if (name == "acgan") return Variant::acgan;
  if (name == "multi-hinge") return Variant::multi_hinge;
  if (name == "projection") return Variant::projection;
  throw std::invalid_argument("parse_variant: unknown variant '" + name + "'");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::omni: return "omni";
    case Variant::one_sided: return "one-sided";
    case Variant::imacgan: return "imacgan";
    case Variant::acgan: return "acgan";
    case Variant::multi_hinge: return "multi-hinge";
    case Variant::projection: return "projection";
  }
  throw std::logic_error("variant_name: unknown variant");
}

Task parse_task(const std::string& name) {
  if (name == "ring") return Task::ring;
  if (name == "patterns") return Task::patterns;
  throw std::invalid_argument("parse_task: unknown task '" + name + "'");
}

std::string task_name(Task t) {
  return t == Task::ring ? "ring" : "patterns";
}

GenHeadKind parse_gen_head(const std::string& name) {
  if (name == "direct") return GenHeadKind::direct;
  if (name == "feature-grid") return GenHeadKind::feature_grid;
  throw std::invalid_argument("parse_gen_head: unknown head '" + name + "'");
}

std::string gen_head_name(GenHeadKind k) {
  return k == GenHeadKind::direct ? "direct" : "feature-grid";
}

void TrainConfig::validate() const {
  if (num_classes <= 0) throw std::invalid_argument("TrainConfig: num_classes must be positive");
  if (modes_per_class <= 0) throw std::invalid_argument("TrainConfig: modes_per_class must be positive");
  if (!(data_sigma > 0.0)) throw std::invalid_argument("TrainConfig: data_sigma must be positive");
  if (dataset_size <= 0) throw std::invalid_argument("TrainConfig: dataset_size must be positive");
  if (d_z <= 0 || embed_dim <= 0) throw std::invalid_argument("TrainConfig: latent dims must be positive");
  if (g_hidden.empty() || d_hidden.empty()) throw std::invalid_argument("TrainConfig: hidden layer lists must be non-empty");
  if (batch <= 0) throw std::invalid_argument("TrainConfig: batch must be positive");
  if (d_steps_per_g <= 0) throw std::invalid_argument("TrainConfig: d_steps_per_g must be positive");
  if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be non-negative");
  if (eval_interval <= 0) throw std::invalid_argument("TrainConfig: eval_interval must be positive");
  if (eval_samples <= 0) throw std::invalid_argument("TrainConfig: eval_samples must be positive");
  if (!(radius_mult > 0.0)) throw std::invalid_argument("TrainConfig: radius_mult must be positive");
  if (!(collapse_drop_fraction > 0.0 && collapse_drop_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: collapse_drop_fraction must lie in (0, 1)");
  }
  if (collapse_window <= 0) throw std::invalid_argument("TrainConfig: collapse_window must be positive");
  if (task == Task::patterns) {
    if (image_h <= 0 || image_w <= 0) throw std::invalid_argument("TrainConfig: image size must be positive");
    if (gen_head == GenHeadKind::feature_grid &&
        (grid_channels <= 0 || grid_h <= 0 || grid_w <= 0 || inr_hidden <= 0)) {
      throw std::invalid_argument("TrainConfig: feature grid dims must be positive");
    }
  }
}

CollapseReport detect_collapse(const std::vector<MetricsRow>& rows,
                               double drop_fraction, int window) {
  if (!(drop_fraction > 0.0 && drop_fraction < 1.0)) {
    throw std::invalid_argument("detect_collapse: drop_fraction must lie in (0, 1)");
  }
  if (window <= 0) {
    throw std::invalid_argument("detect_collapse: window must be positive");
  }

  CollapseReport report;
  if (rows.empty()) return report;

  const int n = static_cast<int>(rows.size());
  std::vector<double> ma(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const int lo = std::max(0, t - window + 1);
    double sum = 0.0;
    for (int k = lo; k <= t; ++k) {
      sum += rows[static_cast<std::size_t>(k)].high_quality_fraction;
    }
    ma[static_cast<std::size_t>(t)] = sum / (t - lo + 1);
  }

  double peak = ma[0];
  int peak_at = 0;
  for (int t = 0; t < n; ++t) {
    if (!report.collapsed && ma[static_cast<std::size_t>(t)] < (1.0 - drop_fraction) * peak) {
      report.collapsed = true;
      report.step = rows[static_cast<std::size_t>(t)].step;
      report.peak = peak;
    }
    if (ma[static_cast<std::size_t>(t)] > peak) {
      peak = ma[static_cast<std::size_t>(t)];
      peak_at = t;
    }
  }
  if (report.collapsed) {
    // Trough: worst smoothed quality from the detection point onward.
    double trough = 1.0;
    bool past = false;
    for (int t = 0; t < n; ++t) {
      if (rows[static_cast<std::size_t>(t)].step == report.step) past = true;
      if (past) trough = std::min(trough, ma[static_cast<std::size_t>(t)]);
    }
    report.trough = trough;
  } else {
    report.peak = peak;
    double trough = ma[static_cast<std::size_t>(peak_at)];
    for (int t = peak_at; t < n; ++t) {
      trough = std::min(trough, ma[static_cast<std::size_t>(t)]);
    }
    report.trough = trough;
  }
  return report;
}

namespace {

int d_head_dim(const TrainConfig& cfg) {
  switch (cfg.variant) {
    case Variant::omni:
    case Variant::one_sided:
      return omni_target_length(cfg.num_classes);
    case Variant::imacgan:
    case Variant::acgan:
      // num_classes + 1 classifier logits followed by one adversarial score.
      return cfg.num_classes + 2;
    case Variant::multi_hinge:
      return cfg.num_classes + 1;
    case Variant::projection:
      return 0;  // projection head sized by class count instead
  }
  throw std::logic_error("d_head_dim: unknown variant");
}

}  // namespace

GanModel build_model(const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  GanModel model;
  model.cfg = cfg;

  int g_out = 0;
  Activation g_act = Activation::none;
  if (cfg.task == Task::ring) {
    g_out = 2;
    g_act = Activation::none;
  } else if (cfg.gen_head == GenHeadKind::direct) {
    g_out = 3 * cfg.image_h * cfg.image_w;
    g_act = Activation::tanh;
  } else {
    g_out = cfg.grid_channels * cfg.grid_h * cfg.grid_w;
    g_act = Activation::none;
  }
  model.g = Generator(cfg.d_z, cfg.num_classes, cfg.embed_dim, cfg.g_hidden, g_out,
                      g_act, rng);

  if (cfg.task == Task::patterns && cfg.gen_head == GenHeadKind::feature_grid) {
    model.inr = INRHead(cfg.grid_channels, cfg.inr_hidden, rng);
    model.has_inr = true;
  }

  const auto head_kind = cfg.variant == Variant::projection
                             ? Discriminator::HeadKind::projection
                             : Discriminator::HeadKind::omni;
  const int head_arg = cfg.variant == Variant::projection ? cfg.num_classes
                                                          : d_head_dim(cfg);
  model.d = Discriminator(cfg.sample_dim(), cfg.d_hidden, head_kind, head_arg, rng);
  return model;
}

Mat generate_samples(GanModel& model, const Mat& z, const std::vector<int>& classes) {
  const Mat backbone_out = model.g.forward(z, classes);
  const TrainConfig& cfg = model.cfg;
  if (cfg.task == Task::ring || cfg.gen_head == GenHeadKind::direct) {
    return backbone_out;
  }

  const Eigen::Index B = backbone_out.cols();
  std::vector<FeatureGrid> grids;
  grids.reserve(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    grids.push_back(column_to_grid(backbone_out.col(b), cfg.grid_channels, cfg.grid_h,
                                   cfg.grid_w));
  }
  const CoordGrid coords = make_coord_grid(cfg.image_h, cfg.image_w);
  const Mat rgb = model.inr.forward(grids, coords);

  const Eigen::Index Q = coords.count();
  Mat samples(3 * Q, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int c = 0; c < 3; ++c) {
      samples.block(static_cast<Eigen::Index>(c) * Q, b, Q, 1) =
          rgb.block(c, b * Q, 1, Q).transpose();
    }
  }
  return samples;
}

TrainSession::TrainSession(const TrainConfig& cfg)
    : cfg_(cfg), rng_(cfg.seed ^ kTrainStreamSalt) {
  cfg_.validate();
  data_ = cfg_.task == Task::ring
              ? make_gaussian_ring(cfg_.num_classes, cfg_.modes_per_class,
                                   cfg_.data_sigma, cfg_.dataset_size, cfg_.seed)
              : make_pattern_dataset(cfg_.num_classes, cfg_.image_h, cfg_.image_w,
                                     cfg_.data_sigma, cfg_.dataset_size, cfg_.seed);
  model_ = build_model(cfg_, rng_);

  AdamConfig dcfg;
  dcfg.lr = cfg_.lr_d;
  dcfg.beta1 = cfg_.beta1;
  dcfg.beta2 = cfg_.beta2;
  dcfg.weight_decay = cfg_.lambda_d;
  dcfg.decay_mode = cfg_.decay_mode;
  dcfg.decay_biases_and_embeddings = cfg_.decay_biases_and_embeddings;
  opt_d_ = Adam(dcfg);

  AdamConfig gcfg = dcfg;
  gcfg.lr = cfg_.lr_g;
  gcfg.weight_decay = cfg_.lambda_g;
  opt_g_ = Adam(gcfg);

  // Fixed evaluation set: a frozen latent batch with round-robin classes.
  eval_z_.resize(cfg_.d_z, cfg_.eval_samples);
  for (Eigen::Index c = 0; c < eval_z_.cols(); ++c) {
    for (Eigen::Index r = 0; r < eval_z_.rows(); ++r) {
      eval_z_(r, c) = rng_.normal();
    }
  }
  eval_classes_.resize(static_cast<std::size_t>(cfg_.eval_samples));
  for (int n = 0; n < cfg_.eval_samples; ++n) {
    eval_classes_[static_cast<std::size_t>(n)] = n % cfg_.num_classes;
  }
}

void TrainSession::draw_batch(Mat& real_x, std::vector<int>& real_classes) {
  real_x.resize(data_.dim(), cfg_.batch);
  real_classes.resize(static_cast<std::size_t>(cfg_.batch));
  for (int b = 0; b < cfg_.batch; ++b) {
    const int idx = rng_.uniform_int(data_.count());
    real_x.col(b) = data_.samples.col(idx);
    real_classes[static_cast<std::size_t>(b)] = data_.labels[static_cast<std::size_t>(idx)];
  }
}

void TrainSession::draw_latents(int count, Mat& z, std::vector<int>& classes) {
  z.resize(cfg_.d_z, count);
  classes.resize(static_cast<std::size_t>(count));
  for (int b = 0; b < count; ++b) {
    for (int r = 0; r < cfg_.d_z; ++r) z(r, b) = rng_.normal();
    classes[static_cast<std::size_t>(b)] = rng_.uniform_int(cfg_.num_classes);
  }
}

Mat TrainSession::forward_fakes(const Mat& z, const std::vector<int>& classes) {
  return generate_samples(model_, z, classes);
}

void TrainSession::backward_fakes(const Mat& sample_grad) {
  if (cfg_.task == Task::ring || cfg_.gen_head == GenHeadKind::direct) {
    model_.g.backward(sample_grad);
    return;
  }
  const Eigen::Index Q = static_cast<Eigen::Index>(cfg_.image_h) * cfg_.image_w;
  const Eigen::Index B = sample_grad.cols();
  Mat rgb_grad(3, B * Q);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int c = 0; c < 3; ++c) {
      rgb_grad.block(c, b * Q, 1, Q) =
          sample_grad.block(static_cast<Eigen::Index>(c) * Q, b, Q, 1).transpose();
    }
  }
  const std::vector<Mat> grid_grads = model_.inr.backward(rgb_grad);
  const Eigen::Index cells = static_cast<Eigen::Index>(cfg_.grid_h) * cfg_.grid_w;
  Mat backbone_grad(cfg_.grid_channels * cells, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Mat& gg = grid_grads[static_cast<std::size_t>(b)];
    for (int c = 0; c < cfg_.grid_channels; ++c) {
      backbone_grad.block(static_cast<Eigen::Index>(c) * cells, b, cells, 1) =
          gg.row(c).transpose();
    }
  }
  model_.g.backward(backbone_grad);
}

double TrainSession::d_loss_on(const Mat& real_x, const std::vector<int>& real_classes,
                               const Mat& fake_x, const std::vector<int>& fake_classes) {
  const int C = cfg_.num_classes;
  const double inv_b = 1.0 / static_cast<double>(real_x.cols());
  const double inv_bf = 1.0 / static_cast<double>(fake_x.cols());
  double total = 0.0;

  if (cfg_.variant == Variant::projection) {
    const Vec s_real = model_.d.forward_projection(real_x, real_classes);
    Vec up(s_real.size());
    for (Eigen::Index b = 0; b < s_real.size(); ++b) {
      const LossResult r = hinge_gan_loss(s_real[b], GanRole::d_real);
      total += inv_b * r.value;
      up[b] = inv_b * r.grad[0];
    }
    model_.d.backward_projection(up);

    const Vec s_fake = model_.d.forward_projection(fake_x, fake_classes);
    Vec upf(s_fake.size());
    for (Eigen::Index b = 0; b < s_fake.size(); ++b) {
      const LossResult r = hinge_gan_loss(s_fake[b], GanRole::d_fake);
      total += inv_bf * r.value;
      upf[b] = inv_bf * r.grad[0];
    }
    model_.d.backward_projection(upf);
    return total;
  }

  // Omni-head variants share the forward/backward plumbing and differ in the
  // per-column loss.
  auto run_side = [&](const Mat& x, const std::vector<int>& classes, bool is_real,
                      double inv) {
    const Mat logits = model_.d.forward(x);
    Mat upstream = Mat::Zero(logits.rows(), logits.cols());
    double side = 0.0;
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
      const int cls = classes[static_cast<std::size_t>(b)];
      switch (cfg_.variant) {
        case Variant::omni: {
          const Role role = is_real ? real_role(cls) : fake_role();
          const LossResult r = omni_loss(logits.col(b), build_omni_target(C, role));
          side += r.value;
          upstream.col(b) = r.grad;
          break;
        }
        case Variant::one_sided: {
          const Role role = is_real ? real_role(cls) : fake_role(cls);
          const LossResult r = omni_loss(logits.col(b), build_one_sided_target(C, role));
          side += r.value;
          upstream.col(b) = r.grad;
          break;
        }
        case Variant::imacgan:
        case Variant::acgan: {
          const bool extra = cfg_.variant == Variant::imacgan;
          const Role role = is_real ? real_role(cls) : fake_role(cls);
          const int target = classifier_target(C, role, extra);
          const LossResult ce = softmax_ce_loss(logits.col(b).head(C + 1), target);
          const LossResult hg = hinge_gan_loss(
              logits(C + 1, b), is_real ? GanRole::d_real : GanRole::d_fake);
          side += ce.value + hg.value;
          upstream.col(b).head(C + 1) = ce.grad;
          upstream(C + 1, b) = hg.grad[0];
          break;
        }
        case Variant::multi_hinge: {
          const int target = is_real ? cls : C;
          const LossResult r = multi_hinge_loss(logits.col(b), target);
          side += r.value;
          upstream.col(b) = r.grad;
          break;
        }
        case Variant::projection:
          throw std::logic_error("d_loss_on: unreachable");
      }
    }
    model_.d.backward(upstream * inv);
    return side * inv;
  };

  total += run_side(real_x, real_classes, true, inv_b);
  total += run_side(fake_x, fake_classes, false, inv_bf);
  return total;
}

double TrainSession::g_loss_on(const Mat& fake_x, const std::vector<int>& fake_classes,
                               Mat* input_grad) {
  const int C = cfg_.num_classes;
  const double inv_b = 1.0 / static_cast<double>(fake_x.cols());
  double total = 0.0;

  if (cfg_.variant == Variant::projection) {
    const Vec s_fake = model_.d.forward_projection(fake_x, fake_classes);
    Vec up(s_fake.size());
    for (Eigen::Index b = 0; b < s_fake.size(); ++b) {
      const LossResult r = hinge_gan_loss(s_fake[b], GanRole::g);
      total += inv_b * r.value;
      up[b] = inv_b * r.grad[0];
    }
    const Mat ig = model_.d.backward_projection(up);
    if (input_grad) *input_grad = ig;
    return total;
  }

  const Mat logits = model_.d.forward(fake_x);
  Mat upstream = Mat::Zero(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const int cls = fake_classes[static_cast<std::size_t>(b)];
    switch (cfg_.variant) {
      case Variant::omni: {
        const LossResult r = omni_loss(logits.col(b), build_omni_target(C, gen_role(cls)));
        total += r.value;
        upstream.col(b) = r.grad;
        break;
      }
      case Variant::one_sided: {
        const LossResult r =
            omni_loss(logits.col(b), build_one_sided_target(C, gen_role(cls)));
        total += r.value;
        upstream.col(b) = r.grad;
        break;
      }
      case Variant::imacgan:
      case Variant::acgan: {
        const LossResult ce = softmax_ce_loss(logits.col(b).head(C + 1), cls);
        const LossResult hg = hinge_gan_loss(logits(C + 1, b), GanRole::g);
        total += ce.value + hg.value;
        upstream.col(b).head(C + 1) = ce.grad;
        upstream(C + 1, b) = hg.grad[0];
        break;
      }
      case Variant::multi_hinge: {
        const LossResult r = multi_hinge_loss(logits.col(b), cls);
        total += r.value;
        upstream.col(b) = r.grad;
        break;
      }
      case Variant::projection:
        throw std::logic_error("g_loss_on: unreachable");
    }
  }
  const Mat ig = model_.d.backward(upstream * inv_b);
  if (input_grad) *input_grad = ig;
  return total * inv_b;
}

double TrainSession::d_step_on(const Mat& real_x, const std::vector<int>& real_classes,
                               const Mat& z, const std::vector<int>& fake_classes) {
  model_.d.zero_grad();
  const Mat fake_x = forward_fakes(z, fake_classes);
  const double loss = d_loss_on(real_x, real_classes, fake_x, fake_classes);
  auto params = model_.d.params();
  opt_d_.step(params);
  return loss;
}

double TrainSession::g_step_on(const Mat& z, const std::vector<int>& fake_classes) {
  model_.g.zero_grad();
  if (model_.has_inr) model_.inr.zero_grad();
  const Mat fake_x = forward_fakes(z, fake_classes);
  Mat input_grad;
  const double loss = g_loss_on(fake_x, fake_classes, &input_grad);
  backward_fakes(input_grad);
  auto params = model_.g.params();
  if (model_.has_inr) {
    auto inr_params = model_.inr.params();
    params.insert(params.end(), inr_params.begin(), inr_params.end());
  }
  opt_g_.step(params);
  return loss;
}

double TrainSession::d_step() {
  Mat real_x;
  std::vector<int> real_classes;
  draw_batch(real_x, real_classes);
  Mat z;
  std::vector<int> fake_classes;
  draw_latents(cfg_.batch, z, fake_classes);
  const double loss = d_step_on(real_x, real_classes, z, fake_classes);
  d_loss_accum_ += loss;
  ++d_steps_since_eval_;
  return loss;
}

double TrainSession::g_step() {
  Mat z;
  std::vector<int> fake_classes;
  draw_latents(cfg_.batch, z, fake_classes);
  const double loss = g_step_on(z, fake_classes);
  g_loss_accum_ += loss;
  ++g_steps_since_eval_;
  return loss;
}

MetricsRow TrainSession::evaluate(long step) {
  const Mat generated = generate_samples(model_, eval_z_, eval_classes_);
  // In pixel space the noise ball has radius ~ sigma * sqrt(dim), so the
  // high-quality threshold scales with sqrt(dim) to stay comparable to the
  // 2-D setting.
  const double mult = cfg_.task == Task::patterns
                          ? cfg_.radius_mult * std::sqrt(static_cast<double>(cfg_.sample_dim()))
                          : cfg_.radius_mult;
  const EvalMetrics m = evaluate_modes(generated, eval_classes_, data_, mult);

  MetricsRow row;
  row.step = step;
  row.d_loss = d_steps_since_eval_ > 0 ? d_loss_accum_ / d_steps_since_eval_ : 0.0;
  row.g_loss = g_steps_since_eval_ > 0 ? g_loss_accum_ / g_steps_since_eval_ : 0.0;
  row.mode_coverage = m.mode_coverage;
  row.class_fidelity = m.class_fidelity;
  row.high_quality_fraction = m.high_quality_fraction;
  d_loss_accum_ = g_loss_accum_ = 0.0;
  d_steps_since_eval_ = g_steps_since_eval_ = 0;
  return row;
}

TrainResult TrainSession::run() {
  TrainResult result;
  for (long step = 1; step <= cfg_.steps; ++step) {
    for (int k = 0; k < cfg_.d_steps_per_g; ++k) d_step();
    g_step();
    if (step % cfg_.eval_interval == 0) {
      result.metrics.push_back(evaluate(step));
    }
  }
  result.collapse = detect_collapse(result.metrics, cfg_.collapse_drop_fraction,
                                    cfg_.collapse_window);
  return result;
}

}  // namespace omni
