// omni: command-line front end for the library. Subcommands:
//   grad-check   finite-difference audit of every loss op and the G->D stack
//   paper-table  gradient magnitudes at the reference probe points
//   train        one full training run; writes metrics.csv etc.
//   sample       decode one latent from a checkpoint into a PPM image
//   invert       recover a latent whose degraded synthesis matches a target
//
// Exit codes: 0 success, 1 assertion/tolerance failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "omni/inr.hpp"
#include "omni/inversion.hpp"
#include "omni/io.hpp"
#include "omni/labels.hpp"
#include "omni/loss.hpp"
#include "omni/net.hpp"
#include "omni/optim.hpp"
#include "omni/rng.hpp"
#include "omni/toydata.hpp"
#include "omni/trainer.hpp"
#include "omni/version.hpp"

namespace fs = std::filesystem;
using namespace omni;

namespace {

int usage_error(const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  return 2;
}

std::string quote_arg(const std::string& a) {
  if (a.find_first_of(" \t\"'") == std::string::npos) return a;
  std::string out = "\"";
  for (char c : a) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string join_command(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += quote_arg(argv[i]);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(long v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string item = text.substr(pos, comma - pos);
    if (item.empty()) throw std::invalid_argument("empty entry in integer list '" + text + "'");
    out.push_back(std::stoi(item));
    pos = comma + 1;
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

// Full resolved configuration, in a form read_config_file can load back.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
  return {
      {"task", task_name(c.task)},
      {"variant", variant_name(c.variant)},
      {"num_classes", fmt(c.num_classes)},
      {"modes_per_class", fmt(c.modes_per_class)},
      {"data_sigma", fmt(c.data_sigma)},
      {"dataset_size", fmt(c.dataset_size)},
      {"d_z", fmt(c.d_z)},
      {"embed_dim", fmt(c.embed_dim)},
      {"g_hidden", join_ints(c.g_hidden)},
      {"d_hidden", join_ints(c.d_hidden)},
      {"batch", fmt(c.batch)},
      {"d_steps_per_g", fmt(c.d_steps_per_g)},
      {"steps", fmt(c.steps)},
      {"lr_g", fmt(c.lr_g)},
      {"lr_d", fmt(c.lr_d)},
      {"beta1", fmt(c.beta1)},
      {"beta2", fmt(c.beta2)},
      {"lambda_g", fmt(c.lambda_g)},
      {"lambda_d", fmt(c.lambda_d)},
      {"decay_mode", c.decay_mode == DecayMode::coupled ? "coupled" : "decoupled"},
      {"decay_biases_and_embeddings", fmt(c.decay_biases_and_embeddings)},
      {"eval_interval", fmt(c.eval_interval)},
      {"eval_samples", fmt(c.eval_samples)},
      {"radius_mult", fmt(c.radius_mult)},
      {"collapse_drop_fraction", fmt(c.collapse_drop_fraction)},
      {"collapse_window", fmt(c.collapse_window)},
      {"seed", fmt(c.seed)},
      {"gen_head", gen_head_name(c.gen_head)},
      {"image_h", fmt(c.image_h)},
      {"image_w", fmt(c.image_w)},
      {"grid_channels", fmt(c.grid_channels)},
      {"grid_h", fmt(c.grid_h)},
      {"grid_w", fmt(c.grid_w)},
      {"inr_hidden", fmt(c.inr_hidden)},
  };
}

void apply_config_kv(TrainConfig& c, std::string key, const std::string& v) {
  // A run manifest doubles as a config file: strip the prefix it uses and
  // skip its bookkeeping keys.
  if (key.rfind("config.", 0) == 0) key = key.substr(7);
  static const char* skipped[] = {"command", "prng", "version", "duration_seconds",
                                  "preset", "checkpoint", "out"};
  for (const char* s : skipped)
    if (key == s) return;

  if (key == "task") c.task = parse_task(v);
  else if (key == "variant") c.variant = parse_variant(v);
  else if (key == "num_classes") c.num_classes = std::stoi(v);
  else if (key == "modes_per_class") c.modes_per_class = std::stoi(v);
  else if (key == "data_sigma") c.data_sigma = std::stod(v);
  else if (key == "dataset_size") c.dataset_size = std::stoi(v);
  else if (key == "d_z") c.d_z = std::stoi(v);
  else if (key == "embed_dim") c.embed_dim = std::stoi(v);
  else if (key == "g_hidden") c.g_hidden = parse_int_list(v);
  else if (key == "d_hidden") c.d_hidden = parse_int_list(v);
  else if (key == "batch") c.batch = std::stoi(v);
  else if (key == "d_steps_per_g") c.d_steps_per_g = std::stoi(v);
  else if (key == "steps") c.steps = std::stol(v);
  else if (key == "lr_g") c.lr_g = std::stod(v);
  else if (key == "lr_d") c.lr_d = std::stod(v);
  else if (key == "beta1") c.beta1 = std::stod(v);
  else if (key == "beta2") c.beta2 = std::stod(v);
  else if (key == "lambda_g") c.lambda_g = std::stod(v);
  else if (key == "lambda_d") c.lambda_d = std::stod(v);
  else if (key == "decay_mode") {
    if (v == "coupled") c.decay_mode = DecayMode::coupled;
    else if (v == "decoupled") c.decay_mode = DecayMode::decoupled;
    else throw std::invalid_argument("decay_mode must be coupled or decoupled, got '" + v + "'");
  } else if (key == "decay_biases_and_embeddings") c.decay_biases_and_embeddings = parse_bool(v);
  else if (key == "eval_interval") c.eval_interval = std::stol(v);
  else if (key == "eval_samples") c.eval_samples = std::stoi(v);
  else if (key == "radius_mult") c.radius_mult = std::stod(v);
  else if (key == "collapse_drop_fraction") c.collapse_drop_fraction = std::stod(v);
  else if (key == "collapse_window") c.collapse_window = std::stoi(v);
  else if (key == "seed") c.seed = std::stoull(v);
  else if (key == "gen_head") c.gen_head = parse_gen_head(v);
  else if (key == "image_h") c.image_h = std::stoi(v);
  else if (key == "image_w") c.image_w = std::stoi(v);
  else if (key == "grid_channels") c.grid_channels = std::stoi(v);
  else if (key == "grid_h") c.grid_h = std::stoi(v);
  else if (key == "grid_w") c.grid_w = std::stoi(v);
  else if (key == "inr_hidden") c.inr_hidden = std::stoi(v);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

using Entries = std::vector<std::pair<std::string, std::string>>;

Entries manifest_head(const std::string& command, std::uint64_t seed) {
  return {{"command", command},
          {"version", kVersion},
          {"prng", Rng::name()},
          {"seed", fmt(seed)}};
}

// ---------------------------------------------------------------------------
// grad-check

Eigen::Index params_size(const std::vector<ParamRef>& ps) {
  Eigen::Index n = 0;
  for (const auto& p : ps) n += p.size;
  return n;
}

void set_params(const std::vector<ParamRef>& ps, const Vec& point, Eigen::Index& off) {
  for (const auto& p : ps) {
    std::copy(point.data() + off, point.data() + off + p.size, p.value);
    off += p.size;
  }
}

void grab_grads(const std::vector<ParamRef>& ps, Vec& grad, Eigen::Index& off) {
  for (const auto& p : ps) {
    std::copy(p.grad, p.grad + p.size, grad.data() + off);
    off += p.size;
  }
}

void snapshot_params(const std::vector<ParamRef>& ps, Vec& point, Eigen::Index& off) {
  for (const auto& p : ps) {
    std::copy(p.value, p.value + p.size, point.data() + off);
    off += p.size;
  }
}

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// A central difference is only valid when no rectifier flips between the two
// probe points. Instances whose kinked preactivations come this close to
// zero are resampled; the finite-difference step (1e-6) moves preactivations
// by far less than this through these small nets. Freshly built layers have
// all-zero biases, so a fully zeroed activation column parks the next
// layer's preactivations exactly on the kink; that case in particular must
// be screened out.
constexpr double kKinkMargin = 1e-3;

double rectifier_margin(Mlp& net, const Mat& x, Activation hidden, Activation output) {
  double margin = std::numeric_limits<double>::infinity();
  Mat a = x;
  for (int i = 0; i < net.layer_count(); ++i) {
    Mat z = net.layer(i).weight * a;
    z.colwise() += net.layer(i).bias;
    const Activation act = (i + 1 == net.layer_count()) ? output : hidden;
    if (act == Activation::relu || act == Activation::leaky_relu)
      margin = std::min(margin, z.cwiseAbs().minCoeff());
    a = apply_activation(act, z);
  }
  return margin;
}

Mat generator_backbone_input(Generator& g, const Mat& z, const std::vector<int>& classes) {
  Mat input(z.rows() + g.embed.dim(), z.cols());
  input.topRows(z.rows()) = z;
  input.bottomRows(g.embed.dim()) = g.embed.forward(classes);
  return input;
}

// Decoder input exactly as INRHead assembles it: bilinearly sampled
// 3x3-unfolded grids with the query coordinates appended.
Mat inr_decoder_input(const std::vector<FeatureGrid>& grids, const CoordGrid& coords) {
  const Eigen::Index q = coords.count();
  const int rows = 9 * grids.front().channels() + 2;
  Mat in(rows, static_cast<Eigen::Index>(grids.size()) * q);
  for (std::size_t b = 0; b < grids.size(); ++b) {
    const FeatureGrid unfolded = unfold3x3(grids[b]);
    in.block(0, static_cast<Eigen::Index>(b) * q, rows - 2, q) =
        bilinear_sample(unfolded, coords);
    in.block(rows - 2, static_cast<Eigen::Index>(b) * q, 2, q) = coords.coords;
  }
  return in;
}

IVec random_labels(Rng& rng, Eigen::Index n) {
  IVec l(n);
  for (Eigen::Index i = 0; i < n; ++i) l[i] = rng.uniform_int(3) - 1;
  return l;
}

GradCheckResult check_omni(Rng& rng, double step) {
  const int d = 3 + rng.uniform_int(7);
  const OmniTarget target(random_labels(rng, d));
  const Vec s = random_mat(rng, d, 1, 2.0);
  ScalarFn f = [&](const Vec& p, Vec* g) {
    auto r = omni_loss(p, target);
    if (g) *g = r.grad;
    return r.value;
  };
  return grad_check(f, s, step);
}

GradCheckResult check_unified(Rng& rng, double step) {
  const int np = 1 + rng.uniform_int(4);
  const int nn = 1 + rng.uniform_int(4);
  const double gamma = 0.5 + 2.5 * rng.uniform();
  const double margin = rng.uniform();
  const Vec point = random_mat(rng, np + nn, 1, 2.0);
  ScalarFn f = [&](const Vec& p, Vec* g) {
    auto r = unified_loss(p.head(np), p.tail(nn), gamma, margin);
    if (g) {
      g->resize(np + nn);
      g->head(np) = r.pos_grad;
      g->tail(nn) = r.neg_grad;
    }
    return r.value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_multi_hinge(Rng& rng, double step) {
  const int d = 3 + rng.uniform_int(6);
  const int target = rng.uniform_int(d);
  Vec l;
  // Resample while any hinge sits close enough to its kink for the central
  // difference to straddle it.
  for (;;) {
    l = random_mat(rng, d, 1, 2.0);
    bool clear = true;
    for (int k = 0; k < d; ++k)
      if (k != target && std::abs(1.0 + l[k] - l[target]) < 1e-3) clear = false;
    if (clear) break;
  }
  ScalarFn f = [&](const Vec& p, Vec* g) {
    auto r = multi_hinge_loss(p, target);
    if (g) *g = r.grad;
    return r.value;
  };
  return grad_check(f, l, step);
}

GradCheckResult check_softmax_ce(Rng& rng, double step) {
  const int d = 3 + rng.uniform_int(6);
  const int target = rng.uniform_int(d);
  const Vec l = random_mat(rng, d, 1, 2.0);
  ScalarFn f = [&](const Vec& p, Vec* g) {
    auto r = softmax_ce_loss(p, target);
    if (g) *g = r.grad;
    return r.value;
  };
  return grad_check(f, l, step);
}

GradCheckResult check_hinge_gan(Rng& rng, double step) {
  const GanRole role = static_cast<GanRole>(rng.uniform_int(3));
  double s;
  for (;;) {
    s = 2.0 * rng.normal();
    if (role == GanRole::d_real && std::abs(1.0 - s) < 1e-3) continue;
    if (role == GanRole::d_fake && std::abs(1.0 + s) < 1e-3) continue;
    break;
  }
  Vec point(1);
  point[0] = s;
  ScalarFn f = [&](const Vec& p, Vec* g) {
    auto r = hinge_gan_loss(p[0], role);
    if (g) *g = r.grad;
    return r.value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_perpixel(Rng& rng, double step) {
  const int h = 1 + rng.uniform_int(3);
  const int w = 1 + rng.uniform_int(3);
  const int ch = 3 + rng.uniform_int(4);
  TargetMap tm;
  tm.height = h;
  tm.width = w;
  tm.labels.resize(ch, h * w);
  for (Eigen::Index q = 0; q < tm.labels.cols(); ++q)
    tm.labels.col(q) = random_labels(rng, ch);
  const Mat s0 = random_mat(rng, ch, h * w, 2.0);
  const Vec point = Eigen::Map<const Vec>(s0.data(), s0.size());
  ScalarFn f = [&](const Vec& p, Vec* g) {
    ScoreMap sm;
    sm.height = h;
    sm.width = w;
    sm.values = Eigen::Map<const Mat>(p.data(), ch, h * w);
    auto r = perpixel_omni_loss(sm, tm);
    if (g) *g = Eigen::Map<const Vec>(r.grad.data(), r.grad.size());
    return r.value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_mlp(Rng& rng, double step) {
  const int batch = 2;
  Mlp net;
  Mat x0;
  for (;;) {
    net = Mlp({4, 6, 5, 3}, Activation::relu, Activation::tanh, rng);
    x0 = random_mat(rng, 4, batch);
    if (rectifier_margin(net, x0, Activation::relu, Activation::tanh) > kKinkMargin) break;
  }
  auto ps = [&] {
    std::vector<ParamRef> out;
    net.collect_params("net", out);
    return out;
  }();
  const Eigen::Index np = params_size(ps);
  const Mat u = random_mat(rng, 3, batch);
  Vec point(np + x0.size());
  {
    Eigen::Index off = 0;
    snapshot_params(ps, point, off);
    point.tail(x0.size()) = Eigen::Map<const Vec>(x0.data(), x0.size());
  }
  ScalarFn f = [&](const Vec& p, Vec* g) {
    Eigen::Index off = 0;
    set_params(ps, p, off);
    const Mat x = Eigen::Map<const Mat>(p.data() + off, 4, batch);
    const Mat y = net.forward(x);
    const double value = (y.array() * u.array()).sum();
    if (g) {
      net.zero_grad();
      const Mat xg = net.backward(u);
      g->resize(p.size());
      Eigen::Index goff = 0;
      grab_grads(ps, *g, goff);
      g->tail(xg.size()) = Eigen::Map<const Vec>(xg.data(), xg.size());
    }
    return value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_generator(Rng& rng, double step) {
  const int batch = 2;
  Generator g;
  std::vector<int> classes;
  Mat z0;
  for (;;) {
    g = Generator(3, 3, 4, {6, 5}, 2, Activation::none, rng);
    classes = {rng.uniform_int(3), rng.uniform_int(3)};
    z0 = random_mat(rng, 3, batch);
    if (rectifier_margin(g.backbone, generator_backbone_input(g, z0, classes),
                         Activation::leaky_relu, Activation::none) > kKinkMargin)
      break;
  }
  auto ps = g.params();
  const Eigen::Index np = params_size(ps);
  const Mat u = random_mat(rng, 2, batch);
  Vec point(np + z0.size());
  {
    Eigen::Index off = 0;
    snapshot_params(ps, point, off);
    point.tail(z0.size()) = Eigen::Map<const Vec>(z0.data(), z0.size());
  }
  ScalarFn f = [&](const Vec& p, Vec* grad) {
    Eigen::Index off = 0;
    set_params(ps, p, off);
    const Mat z = Eigen::Map<const Mat>(p.data() + off, 3, batch);
    const Mat y = g.forward(z, classes);
    const double value = (y.array() * u.array()).sum();
    if (grad) {
      g.zero_grad();
      const Mat zg = g.backward(u);
      grad->resize(p.size());
      Eigen::Index goff = 0;
      grab_grads(ps, *grad, goff);
      grad->tail(zg.size()) = Eigen::Map<const Vec>(zg.data(), zg.size());
    }
    return value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_discriminator(Rng& rng, double step) {
  const int num_classes = 3;
  const int batch = 2;
  Discriminator d;
  Mat x0;
  for (;;) {
    d = Discriminator(2, {6, 5}, Discriminator::HeadKind::omni,
                      omni_target_length(num_classes), rng);
    x0 = random_mat(rng, 2, batch);
    if (rectifier_margin(d.trunk, x0, Activation::leaky_relu, Activation::leaky_relu) >
        kKinkMargin)
      break;
  }
  std::vector<OmniTarget> targets;
  for (int b = 0; b < batch; ++b) {
    const Role role = rng.uniform_int(2) ? real_role(rng.uniform_int(num_classes))
                                         : fake_role();
    targets.push_back(build_omni_target(num_classes, role));
  }
  auto ps = d.params();
  const Eigen::Index np = params_size(ps);
  Vec point(np + x0.size());
  {
    Eigen::Index off = 0;
    snapshot_params(ps, point, off);
    point.tail(x0.size()) = Eigen::Map<const Vec>(x0.data(), x0.size());
  }
  ScalarFn f = [&](const Vec& p, Vec* g) {
    Eigen::Index off = 0;
    set_params(ps, p, off);
    const Mat x = Eigen::Map<const Mat>(p.data() + off, 2, batch);
    const Mat scores = d.forward(x);
    double value = 0.0;
    Mat upstream(scores.rows(), scores.cols());
    for (int b = 0; b < batch; ++b) {
      auto r = omni_loss(scores.col(b), targets[static_cast<std::size_t>(b)]);
      value += r.value;
      upstream.col(b) = r.grad;
    }
    if (g) {
      d.zero_grad();
      const Mat xg = d.backward(upstream);
      g->resize(p.size());
      Eigen::Index goff = 0;
      grab_grads(ps, *g, goff);
      g->tail(xg.size()) = Eigen::Map<const Vec>(xg.data(), xg.size());
    }
    return value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_projection(Rng& rng, double step) {
  const int num_classes = 3;
  const int batch = 2;
  Discriminator d;
  Mat x0;
  for (;;) {
    d = Discriminator(2, {6, 5}, Discriminator::HeadKind::projection, num_classes, rng);
    x0 = random_mat(rng, 2, batch);
    if (rectifier_margin(d.trunk, x0, Activation::leaky_relu, Activation::leaky_relu) >
        kKinkMargin)
      break;
  }
  std::vector<int> classes = {rng.uniform_int(num_classes), rng.uniform_int(num_classes)};
  auto ps = d.params();
  const Eigen::Index np = params_size(ps);
  const Vec u = random_mat(rng, batch, 1);
  Vec point(np + x0.size());
  {
    Eigen::Index off = 0;
    snapshot_params(ps, point, off);
    point.tail(x0.size()) = Eigen::Map<const Vec>(x0.data(), x0.size());
  }
  ScalarFn f = [&](const Vec& p, Vec* g) {
    Eigen::Index off = 0;
    set_params(ps, p, off);
    const Mat x = Eigen::Map<const Mat>(p.data() + off, 2, batch);
    const Vec scores = d.forward_projection(x, classes);
    const double value = scores.dot(u);
    if (g) {
      d.zero_grad();
      const Mat xg = d.backward_projection(u);
      g->resize(p.size());
      Eigen::Index goff = 0;
      grab_grads(ps, *g, goff);
      g->tail(xg.size()) = Eigen::Map<const Vec>(xg.data(), xg.size());
    }
    return value;
  };
  return grad_check(f, point, step);
}

GradCheckResult check_inr(Rng& rng, double step) {
  const int gc = 3, gh = 2, gw = 3, batch = 2, queries = 4;
  INRHead head;
  CoordGrid coords;
  std::vector<FeatureGrid> grids0;
  for (;;) {
    head = INRHead(gc, 6, rng);
    coords.coords = random_mat(rng, 2, queries, 0.4);
    grids0.clear();
    for (int b = 0; b < batch; ++b) {
      FeatureGrid fg = FeatureGrid::zeros(gc, gh, gw);
      fg.features = random_mat(rng, gc, gh * gw);
      grids0.push_back(std::move(fg));
    }
    if (rectifier_margin(head.mlp, inr_decoder_input(grids0, coords), Activation::relu,
                         Activation::tanh) > kKinkMargin)
      break;
  }
  auto ps = head.params();
  const Eigen::Index np = params_size(ps);
  const Eigen::Index grid_size = static_cast<Eigen::Index>(gc) * gh * gw;
  const Mat u = random_mat(rng, 3, batch * queries);
  Vec point(np + batch * grid_size);
  {
    Eigen::Index off = 0;
    snapshot_params(ps, point, off);
    for (int b = 0; b < batch; ++b)
      Eigen::Map<Mat>(point.data() + off + b * grid_size, gc, gh * gw) =
          grids0[static_cast<std::size_t>(b)].features;
  }
  ScalarFn f = [&](const Vec& p, Vec* g) {
    Eigen::Index off = 0;
    set_params(ps, p, off);
    std::vector<FeatureGrid> grids;
    for (int b = 0; b < batch; ++b) {
      FeatureGrid fg = FeatureGrid::zeros(gc, gh, gw);
      fg.features = Eigen::Map<const Mat>(p.data() + off + b * grid_size, gc, gh * gw);
      grids.push_back(std::move(fg));
    }
    const Mat y = head.forward(grids, coords);
    const double value = (y.array() * u.array()).sum();
    if (g) {
      head.zero_grad();
      const std::vector<Mat> gg = head.backward(u);
      g->resize(p.size());
      Eigen::Index goff = 0;
      grab_grads(ps, *g, goff);
      for (int b = 0; b < batch; ++b)
        g->segment(goff + b * grid_size, grid_size) =
            Eigen::Map<const Vec>(gg[static_cast<std::size_t>(b)].data(), grid_size);
    }
    return value;
  };
  return grad_check(f, point, step);
}

// End-to-end: two-layer generator into a two-layer discriminator into the
// multi-label loss, differentiated back to the latents and both parameter sets.
GradCheckResult check_composition(Rng& rng, double step) {
  const int num_classes = 3, batch = 2;
  Generator g;
  Discriminator d;
  std::vector<int> classes;
  Mat z0;
  for (;;) {
    g = Generator(3, num_classes, 4, {6}, 2, Activation::none, rng);
    d = Discriminator(2, {6}, Discriminator::HeadKind::omni,
                      omni_target_length(num_classes), rng);
    classes = {rng.uniform_int(num_classes), rng.uniform_int(num_classes)};
    z0 = random_mat(rng, 3, batch);
    const Mat x = g.forward(z0, classes);
    if (rectifier_margin(g.backbone, generator_backbone_input(g, z0, classes),
                         Activation::leaky_relu, Activation::none) > kKinkMargin &&
        rectifier_margin(d.trunk, x, Activation::leaky_relu, Activation::leaky_relu) >
            kKinkMargin)
      break;
  }
  std::vector<OmniTarget> targets;
  for (int c : classes) targets.push_back(build_omni_target(num_classes, gen_role(c)));
  auto gp = g.params();
  auto dp = d.params();
  const Eigen::Index ng = params_size(gp);
  const Eigen::Index nd = params_size(dp);
  Vec point(z0.size() + ng + nd);
  {
    point.head(z0.size()) = Eigen::Map<const Vec>(z0.data(), z0.size());
    Eigen::Index off = z0.size();
    snapshot_params(gp, point, off);
    snapshot_params(dp, point, off);
  }
  ScalarFn f = [&](const Vec& p, Vec* grad) {
    const Mat z = Eigen::Map<const Mat>(p.data(), 3, batch);
    Eigen::Index off = z.size();
    set_params(gp, p, off);
    set_params(dp, p, off);
    const Mat x = g.forward(z, classes);
    const Mat scores = d.forward(x);
    double value = 0.0;
    Mat upstream(scores.rows(), scores.cols());
    for (int b = 0; b < batch; ++b) {
      auto r = omni_loss(scores.col(b), targets[static_cast<std::size_t>(b)]);
      value += r.value;
      upstream.col(b) = r.grad;
    }
    if (grad) {
      g.zero_grad();
      d.zero_grad();
      const Mat xg = d.backward(upstream);
      const Mat zg = g.backward(xg);
      grad->resize(p.size());
      grad->head(zg.size()) = Eigen::Map<const Vec>(zg.data(), zg.size());
      Eigen::Index goff = zg.size();
      grab_grads(gp, *grad, goff);
      grab_grads(dp, *grad, goff);
    }
    return value;
  };
  return grad_check(f, point, step);
}

int run_grad_check(int trials, double tol, std::uint64_t seed) {
  const double step = 1e-6;
  struct Op {
    const char* name;
    GradCheckResult (*trial)(Rng&, double);
  };
  const Op ops[] = {
      {"omni-loss", check_omni},
      {"unified ranking loss", check_unified},
      {"multi-hinge loss", check_multi_hinge},
      {"softmax cross-entropy", check_softmax_ce},
      {"scalar hinge adversarial loss", check_hinge_gan},
      {"per-pixel omni-loss map", check_perpixel},
      {"mlp (parameters and input)", check_mlp},
      {"generator (parameters and latents)", check_generator},
      {"discriminator + omni-loss", check_discriminator},
      {"projection discriminator", check_projection},
      {"inr decoder (parameters and grid)", check_inr},
      {"generator -> discriminator -> omni-loss", check_composition},
  };
  std::printf("central differences, step %.0e, tolerance %g, %d trials per op\n\n",
              step, tol, trials);
  std::printf("  %-42s %13s %13s %13s   %s\n", "op", "worst rel err", "analytic",
              "numeric", "status");
  int failures = 0;
  std::uint64_t op_index = 0;
  for (const Op& op : ops) {
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * ++op_index);
    GradCheckResult worst;
    for (int t = 0; t < trials; ++t) {
      const GradCheckResult r = op.trial(rng, step);
      if (r.max_rel_err >= worst.max_rel_err) worst = r;
    }
    const bool ok = worst.max_rel_err <= tol;
    if (!ok) ++failures;
    std::printf("  %-42s %13.3e %13.6g %13.6g   %s\n", op.name, worst.max_rel_err,
                worst.analytic, worst.numeric, ok ? "ok" : "FAIL");
  }
  std::printf("\n");
  if (failures) {
    std::printf("%d op(s) exceeded the tolerance\n", failures);
    return 1;
  }
  std::printf("all gradient checks passed\n");
  return 0;
}

// ---------------------------------------------------------------------------
// paper-table

int run_paper_table() {
  const auto grads = [](double s0, double s1, int y0, int y1) {
    Vec s(2);
    s << s0, s1;
    IVec y(2);
    y << y0, y1;
    return omni_loss(s, OmniTarget(y)).grad;
  };
  std::printf("multi-label softplus loss: gradient magnitudes at the probe points\n\n");
  std::printf("panel (a): s = [s_neg, s_pos], y = [-1, +1]\n");
  std::printf("  %-6s %6s %6s %12s %12s\n", "point", "s_neg", "s_pos", "|dL/ds_neg|",
              "|dL/ds_pos|");
  const double neg_scores[] = {4.0, 0.0, -4.0};
  const char* names[] = {"A", "B", "C"};
  for (int i = 0; i < 3; ++i) {
    const Vec g = grads(neg_scores[i], 0.0, -1, +1);
    std::printf("  %-6s %6.0f %6.0f %12.2f %12.2f\n", names[i], neg_scores[i], 0.0,
                std::abs(g[0]), std::abs(g[1]));
  }
  std::printf("\npanel (b): s = [s_0, s_1], y = [+1, +1]\n");
  std::printf("  %-6s %6s %6s %12s %12s\n", "point", "s_0", "s_1", "|dL/ds_0|",
              "|dL/ds_1|");
  const double pos_scores[][2] = {{-2.0, 0.0}, {0.0, 0.0}, {0.0, -2.0}};
  for (int i = 0; i < 3; ++i) {
    const Vec g = grads(pos_scores[i][0], pos_scores[i][1], +1, +1);
    std::printf("  %-6s %6.0f %6.0f %12.2f %12.2f\n", names[i], pos_scores[i][0],
                pos_scores[i][1], std::abs(g[0]), std::abs(g[1]));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

int run_train(const TrainConfig& cfg, const std::string& out_dir,
              const std::string& command) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  TrainSession session(cfg);
  TrainResult result = session.run();

  write_metrics_csv(out_dir + "/metrics.csv", result.metrics);
  write_collapse_report(out_dir + "/collapse.txt", result.collapse);
  save_checkpoint(out_dir + "/checkpoint.bin", model_to_checkpoint(session.model()));

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Entries entries = manifest_head(command, cfg.seed);
  for (auto& [k, v] : config_entries(cfg)) entries.emplace_back("config." + k, v);
  entries.emplace_back("duration_seconds", fmt(secs));
  write_manifest(out_dir + "/manifest.txt", entries);

  if (!result.metrics.empty()) {
    const MetricsRow& last = result.metrics.back();
    std::printf("final step %ld: d_loss %.4f g_loss %.4f coverage %.3f fidelity %.3f "
                "high-quality %.3f\n",
                last.step, last.d_loss, last.g_loss, last.mode_coverage,
                last.class_fidelity, last.high_quality_fraction);
  }
  if (result.collapse.collapsed)
    std::printf("collapsed at step %ld (peak %.4f, trough %.4f)\n", result.collapse.step,
                result.collapse.peak, result.collapse.trough);
  else
    std::printf("no collapse detected (peak %.4f, trough %.4f)\n", result.collapse.peak,
                result.collapse.trough);
  std::printf("wrote %s/{metrics.csv, collapse.txt, checkpoint.bin, manifest.txt}\n",
              out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// sample

int run_sample(const std::string& ckpt_path, int class_index, int height, int width,
               double sigma, std::uint64_t seed, const std::string& out_dir,
               const std::string& command) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(ckpt_path)) return usage_error("checkpoint not found: " + ckpt_path);

  GanModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  if (model.cfg.task != Task::patterns)
    return usage_error("checkpoint is not an image model; nothing to rasterize");
  if (class_index < 0 || class_index >= model.cfg.num_classes)
    return usage_error("class " + std::to_string(class_index) + " out of range [0, " +
                       std::to_string(model.cfg.num_classes) + ")");

  Rng rng(seed);
  const Vec z = truncated_sample(rng, model.cfg.d_z, sigma);

  FeatureGrid image;
  if (model.has_inr) {
    image = synthesize(model.g, model.inr, z, class_index, model.cfg.grid_h,
                       model.cfg.grid_w, height, width);
  } else {
    if (height != model.cfg.image_h || width != model.cfg.image_w)
      return usage_error("direct-head checkpoint renders only its native " +
                         std::to_string(model.cfg.image_h) + "x" +
                         std::to_string(model.cfg.image_w) + " resolution");
    Mat zm(z.size(), 1);
    zm.col(0) = z;
    const Mat x = generate_samples(model, zm, {class_index});
    image = column_to_grid(x.col(0), 3, height, width);
  }

  fs::create_directories(out_dir);
  write_ppm(out_dir + "/sample.ppm", image);

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Entries entries = manifest_head(command, seed);
  entries.emplace_back("checkpoint", ckpt_path);
  entries.emplace_back("class_index", fmt(class_index));
  entries.emplace_back("height", fmt(height));
  entries.emplace_back("width", fmt(width));
  entries.emplace_back("sigma", fmt(sigma));
  entries.emplace_back("duration_seconds", fmt(secs));
  write_manifest(out_dir + "/manifest.txt", entries);

  std::printf("wrote %s/sample.ppm (%dx%d, class %d, sigma %g)\n", out_dir.c_str(), height,
              width, class_index, sigma);
  return 0;
}

// ---------------------------------------------------------------------------
// invert

int run_invert(const std::string& ckpt_path, const std::string& target_path,
               const std::string& degrade_kind, int class_index,
               const InversionConfig& inv_cfg, const std::string& out_dir,
               const std::string& command) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!fs::exists(ckpt_path)) return usage_error("checkpoint not found: " + ckpt_path);
  if (!fs::exists(target_path)) return usage_error("target not found: " + target_path);

  const Degradation deg = parse_degradation(degrade_kind);
  GanModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  if (!model.has_inr)
    return usage_error("inversion needs a feature-grid (arbitrary-resolution) checkpoint");

  FeatureGrid target = read_ppm(target_path);
  // PPM files always carry three channels; a grayscale observation arrives as
  // such a file and is collapsed here.
  FeatureGrid observed =
      deg.kind == Degradation::Kind::grayscale ? degrade(target, deg) : target;

  const int nh = model.cfg.image_h, nw = model.cfg.image_w;
  if (deg.kind == Degradation::Kind::downsample) {
    if (observed.height * deg.factor != nh || observed.width * deg.factor != nw)
      return usage_error("downsample:" + std::to_string(deg.factor) + " target must be " +
                         std::to_string(nh / deg.factor) + "x" +
                         std::to_string(nw / deg.factor) + " for this checkpoint");
  } else if (observed.height != nh || observed.width != nw) {
    return usage_error("target must match the native " + std::to_string(nh) + "x" +
                       std::to_string(nw) + " resolution");
  }

  InversionResult res = invert(model, observed, deg, class_index, inv_cfg);

  fs::create_directories(out_dir);
  write_ppm(out_dir + "/restored.ppm", res.restored);
  {
    std::FILE* f = std::fopen((out_dir + "/trace.csv").c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + out_dir + "/trace.csv");
    std::fprintf(f, "step,objective\n");
    for (std::size_t i = 0; i < res.trace.size(); ++i)
      std::fprintf(f, "%zu,%.17g\n", i, res.trace[i]);
    std::fclose(f);
  }

  const bool full_res_target =
      target.height == nh && target.width == nw && target.channels() == 3;
  double psnr_db = 0.0;
  if (full_res_target) psnr_db = psnr(res.restored, target);

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Entries entries = manifest_head(command, inv_cfg.seed);
  entries.emplace_back("checkpoint", ckpt_path);
  entries.emplace_back("target", target_path);
  entries.emplace_back("degrade", degradation_name(deg));
  entries.emplace_back("class_index", fmt(class_index));
  entries.emplace_back("steps", fmt(inv_cfg.steps));
  entries.emplace_back("lr_z", fmt(inv_cfg.lr_z));
  entries.emplace_back("init_candidates", fmt(inv_cfg.init_candidates));
  entries.emplace_back("feature_layers", inv_cfg.feature_layers.empty()
                                             ? "all"
                                             : join_ints(inv_cfg.feature_layers));
  entries.emplace_back("initial_objective", fmt(res.initial_objective));
  entries.emplace_back("final_objective", fmt(res.final_objective));
  if (full_res_target) entries.emplace_back("psnr_db", fmt(psnr_db));
  entries.emplace_back("duration_seconds", fmt(secs));
  write_manifest(out_dir + "/manifest.txt", entries);

  std::printf("objective %.6f -> %.6f over %d steps\n", res.initial_objective,
              res.final_objective, inv_cfg.steps);
  if (full_res_target) std::printf("psnr vs target: %.2f dB\n", psnr_db);
  std::printf("wrote %s/{restored.ppm, trace.csv, manifest.txt}\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional-GAN loss laboratory"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // grad-check
  auto* gc = app.add_subcommand("grad-check",
                                "finite-difference audit of every loss op and the "
                                "generator/discriminator composition");
  int gc_trials = 120;
  double gc_tol = 1e-5;
  std::uint64_t gc_seed = 1234;
  gc->add_option("--trials", gc_trials, "random instances per op")->check(CLI::PositiveNumber);
  gc->add_option("--tol", gc_tol, "worst-case relative error allowed");
  gc->add_option("--seed", gc_seed, "instance stream seed");

  // paper-table
  app.add_subcommand("paper-table",
                     "gradient magnitudes of the multi-label loss at the reference "
                     "probe points");

  // train
  auto* tr = app.add_subcommand("train", "run one training configuration");
  std::string tr_variant, tr_preset, tr_task, tr_gen_head, tr_decay_mode, tr_config;
  std::string tr_out = "train-out";
  std::uint64_t tr_seed = 1;
  TrainConfig flag;  // flag values land here, then overlay the resolved config
  auto* o_variant = tr->add_option("--variant", tr_variant,
                                   "omni | one-sided | imacgan | acgan | multi-hinge | "
                                   "projection");
  auto* o_preset = tr->add_option("--preset", tr_preset,
                                  "no-decay | small-decay | medium-decay | large-decay");
  auto* o_seed = tr->add_option("--seed", tr_seed, "run seed");
  tr->add_option("--out", tr_out, "output directory");
  auto* o_task = tr->add_option("--task", tr_task, "ring | patterns");
  auto* o_config = tr->add_option("--config", tr_config,
                                  "key = value file applied before flags");
  auto* o_steps = tr->add_option("--steps", flag.steps);
  auto* o_batch = tr->add_option("--batch", flag.batch);
  auto* o_classes = tr->add_option("--num-classes", flag.num_classes);
  auto* o_modes = tr->add_option("--modes-per-class", flag.modes_per_class);
  auto* o_sigma = tr->add_option("--data-sigma", flag.data_sigma);
  auto* o_dsize = tr->add_option("--dataset-size", flag.dataset_size);
  auto* o_dz = tr->add_option("--d-z", flag.d_z);
  auto* o_embed = tr->add_option("--embed-dim", flag.embed_dim);
  std::string tr_g_hidden, tr_d_hidden;
  auto* o_gh = tr->add_option("--g-hidden", tr_g_hidden, "comma-separated layer widths");
  auto* o_dh = tr->add_option("--d-hidden", tr_d_hidden, "comma-separated layer widths");
  auto* o_dsg = tr->add_option("--d-steps-per-g", flag.d_steps_per_g);
  auto* o_lrg = tr->add_option("--lr-g", flag.lr_g);
  auto* o_lrd = tr->add_option("--lr-d", flag.lr_d);
  auto* o_b1 = tr->add_option("--beta1", flag.beta1);
  auto* o_b2 = tr->add_option("--beta2", flag.beta2);
  auto* o_lg = tr->add_option("--lambda-g", flag.lambda_g, "generator weight decay");
  auto* o_ld = tr->add_option("--lambda-d", flag.lambda_d, "discriminator weight decay");
  auto* o_dm = tr->add_option("--decay-mode", tr_decay_mode, "coupled | decoupled");
  auto* o_ei = tr->add_option("--eval-interval", flag.eval_interval);
  auto* o_es = tr->add_option("--eval-samples", flag.eval_samples);
  auto* o_rm = tr->add_option("--radius-mult", flag.radius_mult);
  auto* o_cdf = tr->add_option("--collapse-drop-fraction", flag.collapse_drop_fraction);
  auto* o_cw = tr->add_option("--collapse-window", flag.collapse_window);
  auto* o_genhead = tr->add_option("--gen-head", tr_gen_head, "direct | feature-grid");
  auto* o_ih = tr->add_option("--image-h", flag.image_h);
  auto* o_iw = tr->add_option("--image-w", flag.image_w);
  auto* o_gc2 = tr->add_option("--grid-channels", flag.grid_channels);
  auto* o_grh = tr->add_option("--grid-h", flag.grid_h);
  auto* o_grw = tr->add_option("--grid-w", flag.grid_w);
  auto* o_inrh = tr->add_option("--inr-hidden", flag.inr_hidden);

  // sample
  auto* sm = app.add_subcommand("sample", "decode one latent from a checkpoint to a PPM");
  std::string sm_ckpt, sm_out = "sample-out";
  int sm_class = 0, sm_h = 12, sm_w = 12;
  double sm_sigma = 1.0;
  std::uint64_t sm_seed = 1;
  sm->add_option("--checkpoint", sm_ckpt, "trained model file")->required();
  sm->add_option("--class", sm_class, "conditioning class index");
  sm->add_option("--height", sm_h, "output rows");
  sm->add_option("--width", sm_w, "output columns");
  sm->add_option("--sigma", sm_sigma, "latent truncation threshold");
  sm->add_option("--seed", sm_seed, "latent seed");
  sm->add_option("--out", sm_out, "output directory");

  // invert
  auto* iv = app.add_subcommand("invert", "latent recovery against a degraded target");
  std::string iv_ckpt, iv_target, iv_degrade = "identity", iv_out = "invert-out";
  std::string iv_layers;
  int iv_class = 0;
  InversionConfig inv_cfg;
  iv->add_option("--checkpoint", iv_ckpt, "trained model file")->required();
  iv->add_option("--target", iv_target, "observed PPM image")->required();
  iv->add_option("--degrade", iv_degrade, "identity | grayscale | downsample:K");
  iv->add_option("--class", iv_class, "conditioning class index");
  iv->add_option("--steps", inv_cfg.steps, "descent steps");
  iv->add_option("--lr-z", inv_cfg.lr_z, "latent step size");
  iv->add_option("--candidates", inv_cfg.init_candidates, "latents screened at init");
  iv->add_option("--layers", iv_layers, "comma-separated trunk taps (default: all)");
  iv->add_option("--seed", inv_cfg.seed, "candidate stream seed");
  iv->add_option("--out", iv_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = join_command(argc, argv);
  try {
    if (gc->parsed()) return run_grad_check(gc_trials, gc_tol, gc_seed);
    if (app.get_subcommand("paper-table")->parsed()) return run_paper_table();

    if (tr->parsed()) {
      TrainConfig cfg;
      if (o_config->count()) {
        if (!fs::exists(tr_config)) return usage_error("config not found: " + tr_config);
        for (const auto& [k, v] : read_config_file(tr_config)) apply_config_kv(cfg, k, v);
      }
      if (o_preset->count()) {
        const DecayPreset p = decay_preset(tr_preset);
        cfg.lambda_d = p.lambda_d;
        cfg.lambda_g = p.lambda_g;
      }
      if (o_variant->count()) cfg.variant = parse_variant(tr_variant);
      if (o_task->count()) cfg.task = parse_task(tr_task);
      if (o_seed->count()) cfg.seed = tr_seed;
      if (o_steps->count()) cfg.steps = flag.steps;
      if (o_batch->count()) cfg.batch = flag.batch;
      if (o_classes->count()) cfg.num_classes = flag.num_classes;
      if (o_modes->count()) cfg.modes_per_class = flag.modes_per_class;
      if (o_sigma->count()) cfg.data_sigma = flag.data_sigma;
      if (o_dsize->count()) cfg.dataset_size = flag.dataset_size;
      if (o_dz->count()) cfg.d_z = flag.d_z;
      if (o_embed->count()) cfg.embed_dim = flag.embed_dim;
      if (o_gh->count()) cfg.g_hidden = parse_int_list(tr_g_hidden);
      if (o_dh->count()) cfg.d_hidden = parse_int_list(tr_d_hidden);
      if (o_dsg->count()) cfg.d_steps_per_g = flag.d_steps_per_g;
      if (o_lrg->count()) cfg.lr_g = flag.lr_g;
      if (o_lrd->count()) cfg.lr_d = flag.lr_d;
      if (o_b1->count()) cfg.beta1 = flag.beta1;
      if (o_b2->count()) cfg.beta2 = flag.beta2;
      if (o_lg->count()) cfg.lambda_g = flag.lambda_g;
      if (o_ld->count()) cfg.lambda_d = flag.lambda_d;
      if (o_dm->count()) apply_config_kv(cfg, "decay_mode", tr_decay_mode);
      if (o_ei->count()) cfg.eval_interval = flag.eval_interval;
      if (o_es->count()) cfg.eval_samples = flag.eval_samples;
      if (o_rm->count()) cfg.radius_mult = flag.radius_mult;
      if (o_cdf->count()) cfg.collapse_drop_fraction = flag.collapse_drop_fraction;
      if (o_cw->count()) cfg.collapse_window = flag.collapse_window;
      if (o_genhead->count()) cfg.gen_head = parse_gen_head(tr_gen_head);
      if (o_ih->count()) cfg.image_h = flag.image_h;
      if (o_iw->count()) cfg.image_w = flag.image_w;
      if (o_gc2->count()) cfg.grid_channels = flag.grid_channels;
      if (o_grh->count()) cfg.grid_h = flag.grid_h;
      if (o_grw->count()) cfg.grid_w = flag.grid_w;
      if (o_inrh->count()) cfg.inr_hidden = flag.inr_hidden;
      cfg.validate();
      return run_train(cfg, tr_out, command);
    }

    if (sm->parsed())
      return run_sample(sm_ckpt, sm_class, sm_h, sm_w, sm_sigma, sm_seed, sm_out, command);

    if (iv->parsed()) {
      if (!iv_layers.empty()) inv_cfg.feature_layers = parse_int_list(iv_layers);
      return run_invert(iv_ckpt, iv_target, iv_degrade, iv_class, inv_cfg, iv_out, command);
    }
  } catch (const std::invalid_argument& e) {
    return usage_error(e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
