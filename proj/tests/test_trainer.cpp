#include <doctest.h>

#include <cmath>

#include "omni/trainer.hpp"
#include "oracles.hpp"

using namespace omni;

namespace {

TrainConfig small_ring_config() {
  TrainConfig cfg;
  cfg.task = Task::ring;
  cfg.num_classes = 3;
  cfg.modes_per_class = 1;
  cfg.data_sigma = 0.08;
  cfg.dataset_size = 64;
  cfg.d_z = 4;
  cfg.embed_dim = 4;
  cfg.g_hidden = {16};
  cfg.d_hidden = {16};
  cfg.batch = 8;
  cfg.steps = 4;
  cfg.eval_interval = 2;
  cfg.eval_samples = 24;
  cfg.seed = 3;
  return cfg;
}

TrainConfig small_patterns_config() {
  TrainConfig cfg = small_ring_config();
  cfg.task = Task::patterns;
  cfg.num_classes = 2;
  cfg.dataset_size = 16;
  cfg.image_h = 6;
  cfg.image_w = 6;
  cfg.grid_channels = 4;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.inr_hidden = 8;
  cfg.batch = 4;
  cfg.eval_samples = 8;
  return cfg;
}

std::vector<MetricsRow> rows_from(const std::vector<double>& hq) {
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < hq.size(); ++i) {
    MetricsRow r;
    r.step = static_cast<long>(100 * (i + 1));
    r.high_quality_fraction = hq[i];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("name parsing round trips") {
  for (const Variant v : {Variant::omni, Variant::one_sided, Variant::imacgan,
                          Variant::acgan, Variant::multi_hinge, Variant::projection}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  for (const Task t : {Task::ring, Task::patterns}) {
    CHECK(parse_task(task_name(t)) == t);
  }
  for (const GenHeadKind k : {GenHeadKind::direct, GenHeadKind::feature_grid}) {
    CHECK(parse_gen_head(gen_head_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_variant("omnii"), std::invalid_argument);
  CHECK_THROWS_AS(parse_task("spiral"), std::invalid_argument);
  CHECK_THROWS_AS(parse_gen_head("grid"), std::invalid_argument);
}

TEST_CASE("config validation") {
  TrainConfig cfg = small_ring_config();
  cfg.validate();
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_ring_config();
  cfg.collapse_drop_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_patterns_config();
  cfg.grid_channels = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("collapse detection on hand-built series") {
  // Healthy run: quality rises and stays up.
  const CollapseReport healthy =
      detect_collapse(rows_from({0.1, 0.5, 0.9, 0.9, 0.85, 0.9}), 0.5, 4);
  CHECK_FALSE(healthy.collapsed);
  CHECK(healthy.peak == doctest::Approx(0.8875));
  CHECK(healthy.trough == doctest::Approx(0.8875));

  // Sharp collapse: threshold is half of the running peak.
  const CollapseReport crash =
      detect_collapse(rows_from({0.8, 0.85, 0.9, 0.2, 0.1, 0.05}), 0.5, 1);
  CHECK(crash.collapsed);
  CHECK(crash.step == 400);
  CHECK(crash.peak == doctest::Approx(0.9));
  CHECK(crash.trough == doctest::Approx(0.05));

  // A one-row dip survives the window-4 smoothing but not window 1.
  const std::vector<double> dip = {0.8, 0.8, 0.8, 0.1, 0.8, 0.8};
  CHECK_FALSE(detect_collapse(rows_from(dip), 0.5, 4).collapsed);
  CHECK(detect_collapse(rows_from(dip), 0.5, 1).collapsed);

  CHECK_FALSE(detect_collapse({}, 0.5, 4).collapsed);
  CHECK_THROWS_AS(detect_collapse(rows_from(dip), 0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(detect_collapse(rows_from(dip), 0.5, 0), std::invalid_argument);
}

TEST_CASE("model shapes follow the variant and task") {
  Rng rng(7);
  TrainConfig cfg = small_ring_config();

  cfg.variant = Variant::omni;
  GanModel m = build_model(cfg, rng);
  CHECK(m.g.out_dim() == 2);
  CHECK(m.d.in_dim() == 2);
  CHECK(m.d.head.out_dim() == cfg.num_classes + 2);
  CHECK_FALSE(m.has_inr);

  cfg.variant = Variant::multi_hinge;
  m = build_model(cfg, rng);
  CHECK(m.d.head.out_dim() == cfg.num_classes + 1);

  cfg.variant = Variant::acgan;
  m = build_model(cfg, rng);
  CHECK(m.d.head.out_dim() == cfg.num_classes + 2);

  cfg.variant = Variant::projection;
  m = build_model(cfg, rng);
  CHECK(m.d.head_kind() == Discriminator::HeadKind::projection);
  CHECK(m.d.proj_embed.num_classes() == cfg.num_classes);

  TrainConfig pat = small_patterns_config();
  pat.gen_head = GenHeadKind::direct;
  m = build_model(pat, rng);
  CHECK(m.g.out_dim() == 3 * pat.image_h * pat.image_w);
  CHECK(m.d.in_dim() == 3 * pat.image_h * pat.image_w);
  CHECK_FALSE(m.has_inr);

  pat.gen_head = GenHeadKind::feature_grid;
  m = build_model(pat, rng);
  CHECK(m.g.out_dim() == pat.grid_channels * pat.grid_h * pat.grid_w);
  CHECK(m.has_inr);
  CHECK(m.inr.grid_channels() == pat.grid_channels);
}

TEST_CASE("batched sample generation agrees with one-at-a-time synthesis") {
  Rng rng(9);
  TrainConfig cfg = small_patterns_config();
  GanModel model = build_model(cfg, rng);

  Mat z(cfg.d_z, 3);
  z.setRandom();
  const std::vector<int> classes = {1, 0, 1};
  const Mat batch = generate_samples(model, z, classes);
  REQUIRE(batch.rows() == cfg.sample_dim());
  REQUIRE(batch.cols() == 3);

  for (int b = 0; b < 3; ++b) {
    const FeatureGrid img =
        synthesize(model.g, model.inr, z.col(b), classes[static_cast<std::size_t>(b)],
                   cfg.grid_h, cfg.grid_w, cfg.image_h, cfg.image_w);
    const Vec expect = grid_to_column(img);
    CHECK((batch.col(b) - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }

  // A single-sample batch follows the exact same code path as synthesis.
  const Mat single = generate_samples(model, z.col(1), {0});
  const FeatureGrid img =
      synthesize(model.g, model.inr, z.col(1), 0, cfg.grid_h, cfg.grid_w, cfg.image_h,
                 cfg.image_w);
  CHECK((single.col(0) - grid_to_column(img)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discriminator steps move only discriminator parameters") {
  for (const Variant v : {Variant::omni, Variant::one_sided, Variant::imacgan,
                          Variant::acgan, Variant::multi_hinge, Variant::projection}) {
    TrainConfig cfg = small_ring_config();
    cfg.variant = v;
    TrainSession session(cfg);

    auto g_refs = session.model().g.params();
    auto d_refs = session.model().d.params();
    const Vec g_before = oracles::pack_values(g_refs);
    const Vec d_before = oracles::pack_values(d_refs);

    const double loss = session.d_step();
    CHECK(std::isfinite(loss));
    CHECK((oracles::pack_values(g_refs) - g_before).cwiseAbs().maxCoeff() == 0.0);
    CHECK((oracles::pack_values(d_refs) - d_before).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("generator steps move only generator parameters") {
  for (const Variant v : {Variant::omni, Variant::projection}) {
    TrainConfig cfg = small_ring_config();
    cfg.variant = v;
    TrainSession session(cfg);

    auto g_refs = session.model().g.params();
    auto d_refs = session.model().d.params();
    const Vec g_before = oracles::pack_values(g_refs);
    const Vec d_before = oracles::pack_values(d_refs);

    const double loss = session.g_step();
    CHECK(std::isfinite(loss));
    CHECK((oracles::pack_values(g_refs) - g_before).cwiseAbs().maxCoeff() > 0.0);
    CHECK((oracles::pack_values(d_refs) - d_before).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("generator steps reach the decoder parameters on the grid head") {
  TrainConfig cfg = small_patterns_config();
  TrainSession session(cfg);
  auto inr_refs = session.model().inr.params();
  const Vec before = oracles::pack_values(inr_refs);
  session.d_step();
  CHECK((oracles::pack_values(inr_refs) - before).cwiseAbs().maxCoeff() == 0.0);
  session.g_step();
  CHECK((oracles::pack_values(inr_refs) - before).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("every variant trains a few steps with finite losses") {
  for (const Variant v : {Variant::omni, Variant::one_sided, Variant::imacgan,
                          Variant::acgan, Variant::multi_hinge, Variant::projection}) {
    TrainConfig cfg = small_ring_config();
    cfg.variant = v;
    TrainSession session(cfg);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::isfinite(session.d_step()));
      CHECK(std::isfinite(session.g_step()));
    }
    const MetricsRow row = session.evaluate(3);
    CHECK(row.step == 3);
    CHECK(std::isfinite(row.d_loss));
    CHECK(std::isfinite(row.g_loss));
    CHECK(row.high_quality_fraction >= 0.0);
    CHECK(row.high_quality_fraction <= 1.0);
  }
}

TEST_CASE("sessions are deterministic given the config") {
  TrainConfig cfg = small_ring_config();
  cfg.steps = 6;
  TrainSession a(cfg);
  TrainSession b(cfg);
  const TrainResult ra = a.run();
  const TrainResult rb = b.run();
  REQUIRE(ra.metrics.size() == rb.metrics.size());
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    CHECK(ra.metrics[i].step == rb.metrics[i].step);
    CHECK(ra.metrics[i].d_loss == rb.metrics[i].d_loss);
    CHECK(ra.metrics[i].g_loss == rb.metrics[i].g_loss);
    CHECK(ra.metrics[i].high_quality_fraction == rb.metrics[i].high_quality_fraction);
  }

  TrainConfig other = cfg;
  other.seed = 99;
  TrainSession c(other);
  const TrainResult rc = c.run();
  bool any_diff = false;
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    if (ra.metrics[i].d_loss != rc.metrics[i].d_loss) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("run schedules evaluations at the configured interval") {
  TrainConfig cfg = small_ring_config();
  cfg.steps = 5;
  cfg.eval_interval = 2;
  TrainSession session(cfg);
  const TrainResult result = session.run();
  REQUIRE(result.metrics.size() == 2);
  CHECK(result.metrics[0].step == 2);
  CHECK(result.metrics[1].step == 4);
}

TEST_CASE("evaluation is repeatable between training steps") {
  TrainConfig cfg = small_ring_config();
  TrainSession session(cfg);
  session.d_step();
  session.g_step();
  const MetricsRow a = session.evaluate(1);
  const MetricsRow b = session.evaluate(1);
  CHECK(a.high_quality_fraction == b.high_quality_fraction);
  CHECK(a.mode_coverage == b.mode_coverage);
  CHECK(a.class_fidelity == b.class_fidelity);
  // Loss averages reset after each evaluation.
  CHECK(b.d_loss == 0.0);
  CHECK(b.g_loss == 0.0);
}

TEST_CASE("patterns sessions run end to end on both generator heads") {
  for (const GenHeadKind head : {GenHeadKind::direct, GenHeadKind::feature_grid}) {
    TrainConfig cfg = small_patterns_config();
    cfg.gen_head = head;
    cfg.steps = 2;
    cfg.eval_interval = 1;
    TrainSession session(cfg);
    const TrainResult result = session.run();
    REQUIRE(result.metrics.size() == 2);
    for (const auto& row : result.metrics) {
      CHECK(std::isfinite(row.d_loss));
      CHECK(std::isfinite(row.g_loss));
    }
  }
}

}  // TEST_SUITE
