#include <doctest.h>

#include <cmath>

#include "omni/inversion.hpp"

using namespace omni;

namespace {

TrainConfig inv_config() {
  TrainConfig cfg;
  cfg.task = Task::patterns;
  cfg.variant = Variant::omni;
  cfg.num_classes = 2;
  cfg.dataset_size = 8;
  cfg.d_z = 4;
  cfg.embed_dim = 4;
  cfg.g_hidden = {16};
  cfg.d_hidden = {16, 16};
  cfg.image_h = 6;
  cfg.image_w = 6;
  cfg.grid_channels = 4;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.inr_hidden = 8;
  return cfg;
}

FeatureGrid random_image(Rng& rng, int c, int h, int w) {
  FeatureGrid g = FeatureGrid::zeros(c, h, w);
  for (Eigen::Index i = 0; i < g.features.size(); ++i) {
    g.features.data()[i] = 2.0 * rng.uniform() - 1.0;
  }
  return g;
}

}  // namespace

TEST_SUITE("inversion") {

TEST_CASE("degradation parsing round trips") {
  CHECK(parse_degradation("identity").kind == Degradation::Kind::identity);
  CHECK(parse_degradation("grayscale").kind == Degradation::Kind::grayscale);
  const Degradation down = parse_degradation("downsample:4");
  CHECK(down.kind == Degradation::Kind::downsample);
  CHECK(down.factor == 4);
  CHECK(degradation_name(down) == "downsample:4");
  CHECK(degradation_name(parse_degradation("identity")) == "identity");
  CHECK_THROWS_AS(parse_degradation("downsample:0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_degradation("blur"), std::invalid_argument);
}

TEST_CASE("degradations compute the documented reductions") {
  Rng rng(51);
  const FeatureGrid img = random_image(rng, 3, 4, 4);

  const FeatureGrid same = degrade(img, parse_degradation("identity"));
  CHECK((same.features - img.features).cwiseAbs().maxCoeff() == 0.0);

  const FeatureGrid gray = degrade(img, parse_degradation("grayscale"));
  REQUIRE(gray.channels() == 1);
  for (Eigen::Index q = 0; q < img.features.cols(); ++q) {
    CHECK(gray.features(0, q) ==
          doctest::Approx(img.features.col(q).mean()).epsilon(1e-15));
  }

  const FeatureGrid half = degrade(img, parse_degradation("downsample:2"));
  REQUIRE(half.height == 2);
  REQUIRE(half.width == 2);
  for (int c = 0; c < 3; ++c) {
    const double expect =
        (img.at(c, 0, 0) + img.at(c, 0, 1) + img.at(c, 1, 0) + img.at(c, 1, 1)) / 4.0;
    CHECK(half.at(c, 0, 0) == doctest::Approx(expect).epsilon(1e-15));
  }

  CHECK_THROWS_AS(degrade(random_image(rng, 3, 5, 4), parse_degradation("downsample:2")),
                  std::invalid_argument);
}

TEST_CASE("lifting returns observations to the native domain") {
  Rng rng(52);
  const FeatureGrid img = random_image(rng, 3, 4, 4);

  const Degradation ident = parse_degradation("identity");
  const FeatureGrid li = lift_to_native(img, ident, 4, 4);
  CHECK((li.features - img.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(lift_to_native(img, ident, 6, 6), std::invalid_argument);

  const Degradation gray = parse_degradation("grayscale");
  const FeatureGrid g = degrade(img, gray);
  const FeatureGrid lg = lift_to_native(g, gray, 4, 4);
  REQUIRE(lg.channels() == 3);
  for (int c = 0; c < 3; ++c) {
    CHECK((lg.features.row(c) - g.features.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }

  const Degradation down = parse_degradation("downsample:2");
  const FeatureGrid d = degrade(img, down);
  const FeatureGrid ld = lift_to_native(d, down, 4, 4);
  REQUIRE(ld.height == 4);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(ld.at(c, i, j) == d.at(c, i / 2, j / 2));
      }
    }
  }
  // Degrading the lifted image recovers the observation (block means of a
  // blockwise-constant image).
  const FeatureGrid rt = degrade(ld, down);
  CHECK((rt.features - d.features).cwiseAbs().maxCoeff() <= 1e-15);

  CHECK_THROWS_AS(lift_to_native(img, down, 4, 4), std::invalid_argument);
}

TEST_CASE("feature distance is a premetric on trunk activations") {
  Rng rng(53);
  Discriminator d(5, {8, 8}, Discriminator::HeadKind::omni, 4, rng);
  Mat x1(5, 1), x2(5, 1);
  x1.setRandom();
  x2.setRandom();

  CHECK(feature_distance(d, x1, x1, {}) == 0.0);
  CHECK(feature_distance(d, x1, x2, {}) > 0.0);
  CHECK(feature_distance(d, x1, x2, {}) == feature_distance(d, x2, x1, {}));

  // Manual transcription over chosen taps.
  const Mat f1 = d.trunk.forward(x1);
  const Mat a1_0 = d.trunk.activation(0);
  const Mat a1_1 = d.trunk.activation(1);
  d.trunk.forward(x2);
  const double expect0 = (a1_0 - d.trunk.activation(0)).cwiseAbs().mean();
  const double expect01 =
      expect0 + (a1_1 - d.trunk.activation(1)).cwiseAbs().mean();
  CHECK(feature_distance(d, x1, x2, {0}) == doctest::Approx(expect0).epsilon(1e-15));
  CHECK(feature_distance(d, x1, x2, {}) == doctest::Approx(expect01).epsilon(1e-15));
  CHECK(feature_distance(d, x1, x2, {0, 1}) ==
        doctest::Approx(expect01).epsilon(1e-15));

  CHECK_THROWS_AS(feature_distance(d, x1, x2, {2}), std::invalid_argument);
}

TEST_CASE("feature distance gradient matches finite differences") {
  Rng rng(54);
  Discriminator d(5, {8, 8}, Discriminator::HeadKind::omni, 4, rng);
  Mat x1(5, 1), x2(5, 1);
  x1.setRandom();
  x2.setRandom();

  auto f = [&](const Vec& v, Vec* grad) {
    Mat xx = v;
    if (grad) {
      d.zero_grad();
      const FeatureDistanceGrad fd = feature_distance_grad(d, xx, x2, {});
      *grad = fd.x1_grad.col(0);
      return fd.value;
    }
    return feature_distance(d, xx, x2, {});
  };
  const Vec point = x1.col(0);
  CHECK(grad_check(f, point, 1e-6).max_rel_err <= 1e-6);

  // Value agrees between the plain and gradient-carrying entry points.
  d.zero_grad();
  CHECK(feature_distance_grad(d, x1, x2, {1}).value ==
        doctest::Approx(feature_distance(d, x1, x2, {1})).epsilon(1e-15));
}

TEST_CASE("psnr on known mean-square errors") {
  FeatureGrid a = FeatureGrid::zeros(3, 2, 2);
  FeatureGrid b = FeatureGrid::zeros(3, 2, 2);
  CHECK(std::isinf(psnr(a, b)));

  b.features.setConstant(0.5);  // mse = 0.25 against zeros
  CHECK(psnr(a, b, 2.0) == doctest::Approx(10.0 * std::log10(16.0)).epsilon(1e-12));
  CHECK(psnr(a, b, 1.0) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));

  FeatureGrid c = FeatureGrid::zeros(3, 2, 3);
  CHECK_THROWS_AS(psnr(a, c), std::invalid_argument);
}

TEST_CASE("bilinear resize keeps native grids fixed and constants constant") {
  Rng rng(55);
  const FeatureGrid img = random_image(rng, 3, 4, 5);
  const FeatureGrid same = bilinear_resize(img, 4, 5);
  CHECK((same.features - img.features).cwiseAbs().maxCoeff() <= 1e-12);

  FeatureGrid flat = FeatureGrid::zeros(3, 2, 2);
  flat.features.setConstant(0.3);
  const FeatureGrid up = bilinear_resize(flat, 7, 9);
  CHECK(up.height == 7);
  CHECK(up.width == 9);
  CHECK((up.features.array() - 0.3).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("inversion screens candidates and honors step zero") {
  Rng rng(56);
  TrainConfig cfg = inv_config();
  GanModel model = build_model(cfg, rng);

  Vec z0 = Vec::Zero(cfg.d_z);
  z0 << 0.3, -0.5, 0.8, 0.1;
  const FeatureGrid target = synthesize(model.g, model.inr, z0, 1, cfg.grid_h,
                                        cfg.grid_w, cfg.image_h, cfg.image_w);

  InversionConfig icfg;
  icfg.steps = 0;
  icfg.init_candidates = 6;
  icfg.seed = 77;
  const Degradation ident = parse_degradation("identity");
  InversionResult res = invert(model, target, ident, 1, icfg);

  CHECK(res.trace.size() == 1);
  CHECK(res.final_objective == res.initial_objective);
  CHECK((res.z - res.z_init).cwiseAbs().maxCoeff() == 0.0);

  // Replicate the candidate screen with public pieces: same latent stream,
  // same objective.
  const Mat x_target = grid_to_column(target);
  Rng screen(icfg.seed);
  double best = std::numeric_limits<double>::infinity();
  Vec best_z;
  for (int k = 0; k < icfg.init_candidates; ++k) {
    Vec z(cfg.d_z);
    for (int r = 0; r < cfg.d_z; ++r) z[r] = screen.normal();
    const FeatureGrid img = synthesize(model.g, model.inr, z, 1, cfg.grid_h,
                                       cfg.grid_w, cfg.image_h, cfg.image_w);
    const double v = feature_distance(model.d, grid_to_column(img), x_target, {});
    if (v < best) {
      best = v;
      best_z = z;
    }
  }
  CHECK(res.initial_objective == best);
  CHECK((res.z_init - best_z).cwiseAbs().maxCoeff() == 0.0);

  // Restored output is the synthesis at the final latent.
  const FeatureGrid expect = synthesize(model.g, model.inr, res.z, 1, cfg.grid_h,
                                        cfg.grid_w, cfg.image_h, cfg.image_w);
  CHECK((res.restored.features - expect.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("first descent step follows the numerical gradient") {
  for (const char* deg_text : {"identity", "downsample:2", "grayscale"}) {
    Rng rng(57);
    TrainConfig cfg = inv_config();
    GanModel model = build_model(cfg, rng);
    const Degradation deg = parse_degradation(deg_text);

    Vec z0(cfg.d_z);
    z0 << -0.2, 0.6, 0.4, -0.9;
    const FeatureGrid clean = synthesize(model.g, model.inr, z0, 0, cfg.grid_h,
                                         cfg.grid_w, cfg.image_h, cfg.image_w);
    const FeatureGrid observed = degrade(clean, deg);

    InversionConfig icfg;
    icfg.steps = 1;
    icfg.lr_z = 0.05;
    icfg.init_candidates = 3;
    icfg.seed = 21;
    const InversionResult res = invert(model, observed, deg, 0, icfg);
    const Vec analytic = (res.z_init - res.z) / icfg.lr_z;

    const FeatureGrid native = lift_to_native(observed, deg, cfg.image_h, cfg.image_w);
    const Mat x_target = grid_to_column(native);
    auto obj = [&](const Vec& z) {
      const FeatureGrid img = synthesize(model.g, model.inr, z, 0, cfg.grid_h,
                                         cfg.grid_w, cfg.image_h, cfg.image_w);
      const FeatureGrid lifted = lift_to_native(degrade(img, deg), deg, cfg.image_h,
                                                cfg.image_w);
      return feature_distance(model.d, grid_to_column(lifted), x_target, {});
    };
    const double h = 1e-5;
    for (int i = 0; i < cfg.d_z; ++i) {
      Vec zp = res.z_init, zm = res.z_init;
      zp[i] += h;
      zm[i] -= h;
      const double numeric = (obj(zp) - obj(zm)) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
      CHECK(std::abs(analytic[i] - numeric) / denom <= 1e-4);
    }
  }
}

TEST_CASE("inversion traces every step and validates its inputs") {
  Rng rng(58);
  TrainConfig cfg = inv_config();
  GanModel model = build_model(cfg, rng);
  Vec z0 = Vec::Ones(cfg.d_z) * 0.2;
  const FeatureGrid target = synthesize(model.g, model.inr, z0, 0, cfg.grid_h,
                                        cfg.grid_w, cfg.image_h, cfg.image_w);

  InversionConfig icfg;
  icfg.steps = 5;
  icfg.init_candidates = 4;
  const InversionResult res =
      invert(model, target, parse_degradation("identity"), 0, icfg);
  CHECK(res.trace.size() == 6);
  CHECK(res.trace.front() == res.initial_objective);
  CHECK(res.trace.back() == res.final_objective);
  for (double v : res.trace) CHECK(std::isfinite(v));
  CHECK(res.restored.height == cfg.image_h);
  CHECK(res.restored.width == cfg.image_w);

  CHECK_THROWS_AS(invert(model, target, parse_degradation("identity"), 5, icfg),
                  std::invalid_argument);
  InversionConfig bad = icfg;
  bad.lr_z = 0.0;
  CHECK_THROWS_AS(invert(model, target, parse_degradation("identity"), 0, bad),
                  std::invalid_argument);

  TrainConfig direct_cfg = cfg;
  direct_cfg.gen_head = GenHeadKind::direct;
  GanModel direct_model = build_model(direct_cfg, rng);
  CHECK_THROWS_AS(invert(direct_model, target, parse_degradation("identity"), 0, icfg),
                  std::invalid_argument);
}

}  // TEST_SUITE
