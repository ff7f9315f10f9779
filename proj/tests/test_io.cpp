#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "omni/io.hpp"
#include "oracles.hpp"

using namespace omni;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("ppm round trip is exact up to quantization") {
  Rng rng(61);
  FeatureGrid img = FeatureGrid::zeros(3, 3, 4);
  for (Eigen::Index i = 0; i < img.features.size(); ++i) {
    img.features.data()[i] = 2.0 * rng.uniform() - 1.0;
  }
  img.at(0, 0, 0) = -1.0;
  img.at(1, 0, 0) = 1.0;

  TempFile tmp("io_test.ppm");
  write_ppm(tmp.path, img);

  const std::string raw = slurp(tmp.path);
  CHECK(raw.rfind("P6\n4 3\n255\n", 0) == 0);
  CHECK(raw.size() == 11 + 3u * 12);

  const FeatureGrid back = read_ppm(tmp.path);
  REQUIRE(back.height == 3);
  REQUIRE(back.width == 4);
  CHECK((back.features - img.features).cwiseAbs().maxCoeff() <= 1.0 / 255.0 + 1e-12);
  // Exactly representable endpoints survive unchanged.
  CHECK(back.at(0, 0, 0) == -1.0);
  CHECK(back.at(1, 0, 0) == 1.0);

  FeatureGrid gray = FeatureGrid::zeros(1, 2, 2);
  CHECK_THROWS_AS(write_ppm("nope.ppm", gray), std::invalid_argument);
}

TEST_CASE("ppm reader rejects malformed files") {
  TempFile bogus("io_bogus.ppm");
  {
    std::ofstream f(bogus.path, std::ios::binary);
    f << "P5\n2 2\n255\n";
  }
  CHECK_THROWS_AS(read_ppm(bogus.path), std::runtime_error);
  {
    std::ofstream f(bogus.path, std::ios::binary);
    f << "P6\n2 2\n255\n";
    f << "abc";  // 3 of 12 payload bytes
  }
  CHECK_THROWS_AS(read_ppm(bogus.path), std::runtime_error);
  CHECK_THROWS_AS(read_ppm("missing_file.ppm"), std::runtime_error);
}

TEST_CASE("metrics csv round trips doubles exactly") {
  std::vector<MetricsRow> rows(3);
  rows[0] = {250, 1.2345678901234567, -0.5, 0.25, 1.0 / 3.0, 0.875};
  rows[1] = {500, 1e-17, 2e300, 0.0, 1.0, 0.1 + 0.2};
  rows[2] = {750, -0.0, 3.14159, 0.5, 0.5, 0.5};

  TempFile tmp("io_metrics.csv");
  write_metrics_csv(tmp.path, rows);
  const std::vector<MetricsRow> back = read_metrics_csv(tmp.path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].step == rows[i].step);
    CHECK(back[i].d_loss == rows[i].d_loss);
    CHECK(back[i].g_loss == rows[i].g_loss);
    CHECK(back[i].mode_coverage == rows[i].mode_coverage);
    CHECK(back[i].class_fidelity == rows[i].class_fidelity);
    CHECK(back[i].high_quality_fraction == rows[i].high_quality_fraction);
  }

  const std::string raw = slurp(tmp.path);
  CHECK(raw.rfind("step,d_loss,g_loss,mode_coverage,class_fidelity,high_quality_fraction\n",
                  0) == 0);

  {
    std::ofstream f(tmp.path);
    f << "step,d_loss\n1,2\n";
  }
  CHECK_THROWS_AS(read_metrics_csv(tmp.path), std::runtime_error);
}

TEST_CASE("collapse report layout") {
  CollapseReport report;
  report.collapsed = true;
  report.step = 4250;
  report.peak = 0.9375;
  report.trough = 0.125;
  TempFile tmp("io_collapse.txt");
  write_collapse_report(tmp.path, report);
  CHECK(slurp(tmp.path) == "collapsed: yes\nstep: 4250\npeak/trough: 0.9375/0.125\n");

  report.collapsed = false;
  report.step = -1;
  write_collapse_report(tmp.path, report);
  CHECK(slurp(tmp.path) == "collapsed: no\nstep: -1\npeak/trough: 0.9375/0.125\n");
}

TEST_CASE("checkpoint container round trips tensors and metadata") {
  Checkpoint ckpt;
  ckpt.meta["note"] = "a value with spaces";
  ckpt.meta["seed"] = "42";
  Tensor t1;
  t1.shape = {2, 3};
  t1.data = {1.0, -2.5, 3.25, 1e-300, -0.0, 7.0};
  Tensor t2;
  t2.shape = {4};
  t2.data = {0.1, 0.2, 0.3, 0.4};
  ckpt.tensors["a.weight"] = t1;
  ckpt.tensors["a.bias"] = t2;

  TempFile tmp("io_ckpt.bin");
  save_checkpoint(tmp.path, ckpt);
  const Checkpoint back = load_checkpoint(tmp.path);
  CHECK(back.meta == ckpt.meta);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors.at("a.weight").shape == t1.shape);
  CHECK(back.tensors.at("a.weight").data == t1.data);
  CHECK(back.tensors.at("a.bias").shape == t2.shape);
  CHECK(back.tensors.at("a.bias").data == t2.data);

  {
    std::ofstream f(tmp.path, std::ios::binary);
    f << "other-format 9\n";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path), std::runtime_error);

  // Truncate the payload: manifest promises more doubles than present.
  save_checkpoint(tmp.path, ckpt);
  const std::string whole = slurp(tmp.path);
  {
    std::ofstream f(tmp.path, std::ios::binary);
    f.write(whole.data(), static_cast<std::streamsize>(whole.size() - 9));
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path), std::runtime_error);
}

TEST_CASE("model checkpoints rebuild a functionally identical model") {
  Rng rng(62);
  TrainConfig cfg;
  cfg.task = Task::patterns;
  cfg.variant = Variant::omni;
  cfg.num_classes = 3;
  cfg.d_z = 4;
  cfg.embed_dim = 4;
  cfg.g_hidden = {12};
  cfg.d_hidden = {10, 10};
  cfg.image_h = 6;
  cfg.image_w = 6;
  cfg.grid_channels = 4;
  cfg.grid_h = 3;
  cfg.grid_w = 3;
  cfg.inr_hidden = 8;
  cfg.seed = 123;
  GanModel model = build_model(cfg, rng);

  Checkpoint ckpt = model_to_checkpoint(model);
  CHECK(ckpt.meta.at("prng") == Rng::name());
  CHECK(ckpt.meta.at("task") == "patterns");
  CHECK(ckpt.meta.at("seed") == "123");

  TempFile tmp("io_model.bin");
  save_checkpoint(tmp.path, ckpt);
  GanModel restored = model_from_checkpoint(load_checkpoint(tmp.path));

  auto orig_refs = model.g.params();
  auto back_refs = restored.g.params();
  CHECK((oracles::pack_values(orig_refs) - oracles::pack_values(back_refs))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Mat z(cfg.d_z, 2);
  z.setRandom();
  const Mat a = generate_samples(model, z, {0, 2});
  const Mat b = generate_samples(restored, z, {0, 2});
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // A missing parameter tensor is a hard error.
  Checkpoint broken = model_to_checkpoint(model);
  broken.tensors.erase("d.head.weight");
  CHECK_THROWS_AS(model_from_checkpoint(broken), std::runtime_error);
}

TEST_CASE("projection models survive the checkpoint round trip") {
  Rng rng(63);
  TrainConfig cfg;
  cfg.task = Task::ring;
  cfg.variant = Variant::projection;
  cfg.num_classes = 4;
  cfg.d_z = 4;
  cfg.embed_dim = 4;
  cfg.g_hidden = {8};
  cfg.d_hidden = {8};
  GanModel model = build_model(cfg, rng);

  TempFile tmp("io_proj.bin");
  save_checkpoint(tmp.path, model_to_checkpoint(model));
  GanModel restored = model_from_checkpoint(load_checkpoint(tmp.path));
  CHECK(restored.d.head_kind() == Discriminator::HeadKind::projection);

  Mat x(2, 3);
  x.setRandom();
  const Vec sa = model.d.forward_projection(x, {0, 3, 1});
  const Vec sb = restored.d.forward_projection(x, {0, 3, 1});
  CHECK((sa - sb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("manifest and config file formats") {
  TempFile tmp("io_manifest.txt");
  write_manifest(tmp.path, {{"command", "train --variant omni"}, {"seed", "7"}});
  CHECK(slurp(tmp.path) == "command = train --variant omni\nseed = 7\n");

  TempFile cfg("io_config.txt");
  {
    std::ofstream f(cfg.path);
    f << "# a comment line\n";
    f << "\n";
    f << "steps = 500   # trailing comment\n";
    f << "  lr_g=0.002\n";
    f << "variant = omni\n";
  }
  const auto kv = read_config_file(cfg.path);
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("steps") == "500");
  CHECK(kv.at("lr_g") == "0.002");
  CHECK(kv.at("variant") == "omni");

  {
    std::ofstream f(cfg.path);
    f << "just a line without equals\n";
  }
  CHECK_THROWS_AS(read_config_file(cfg.path), std::runtime_error);
  CHECK_THROWS_AS(read_config_file("missing_config.txt"), std::runtime_error);
}

}  // TEST_SUITE
