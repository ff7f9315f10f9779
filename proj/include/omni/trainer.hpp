#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omni/inr.hpp"
#include "omni/net.hpp"
#include "omni/optim.hpp"
#include "omni/toydata.hpp"

namespace omni {

// Objective family driving both players. All variants share the trunk and
// backbone shapes; they differ only in head width, target construction, and
// loss composition.
enum class Variant { omni, one_sided, imacgan, acgan, multi_hinge, projection };

enum class Task { ring, patterns };

// Generator output head for the patterns task: a fixed-resolution tanh image
// or a linear feature grid decoded by the INR head at any resolution.
enum class GenHeadKind { direct, feature_grid };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
Task parse_task(const std::string& name);
std::string task_name(Task t);
GenHeadKind parse_gen_head(const std::string& name);
std::string gen_head_name(GenHeadKind k);

struct TrainConfig {
  Task task = Task::ring;
  Variant variant = Variant::omni;

  // Data.
  int num_classes = 8;
  int modes_per_class = 1;
  double data_sigma = 0.08;
  int dataset_size = 512;

  // Networks.
  int d_z = 16;
  int embed_dim = 16;
  std::vector<int> g_hidden = {64, 64};
  std::vector<int> d_hidden = {64, 64};

  // Optimization.
  int batch = 64;
  int d_steps_per_g = 1;
  long steps = 20000;
  double lr_g = 1e-3;
  double lr_d = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double lambda_g = 0.0;
  double lambda_d = 0.0;
  DecayMode decay_mode = DecayMode::coupled;
  bool decay_biases_and_embeddings = true;

  // Evaluation and collapse detection.
  long eval_interval = 250;
  int eval_samples = 512;
  double radius_mult = 3.0;
  double collapse_drop_fraction = 0.5;
  int collapse_window = 4;

  std::uint64_t seed = 1;

  // Patterns task only.
  GenHeadKind gen_head = GenHeadKind::feature_grid;
  int image_h = 12;
  int image_w = 12;
  int grid_channels = 8;
  int grid_h = 4;
  int grid_w = 4;
  int inr_hidden = 32;

  // Dimension of one sample as the discriminator sees it.
  int sample_dim() const {
    return task == Task::ring ? 2 : 3 * image_h * image_w;
  }
  void validate() const;
};

struct MetricsRow {
  long step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double mode_coverage = 0.0;
  double class_fidelity = 0.0;
  double high_quality_fraction = 0.0;
};

struct CollapseReport {
  bool collapsed = false;
  long step = -1;       // first eval step past the detection threshold
  double peak = 0.0;    // running peak of the smoothed quality series
  double trough = 0.0;  // minimum of the smoothed series after the peak
};

// Scans the high_quality_fraction column: each row's trailing moving average
// (window capped by the rows available) is compared against the running peak
// so far; the run is collapsed once an average falls below
// (1 - drop_fraction) * peak.
CollapseReport detect_collapse(const std::vector<MetricsRow>& rows,
                               double drop_fraction = 0.5, int window = 4);

// Generator/discriminator pair plus the pieces needed to run them: the INR
// decoder when the generator emits feature grids, and the config that shaped
// everything.
struct GanModel {
  TrainConfig cfg;
  Generator g;
  Discriminator d;
  INRHead inr;
  bool has_inr = false;
};

GanModel build_model(const TrainConfig& cfg, Rng& rng);

// Decodes latents/classes to sample space (columns): ring points, or
// flattened native-resolution images for the patterns task.
Mat generate_samples(GanModel& model, const Mat& z, const std::vector<int>& classes);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  CollapseReport collapse;
};

// One training run: alternating discriminator/generator steps over a frozen
// dataset, periodic evaluation, collapse detection at the end. Deterministic
// given the config (including its seed).
class TrainSession {
 public:
  explicit TrainSession(const TrainConfig& cfg);

  // Draw a real batch and latents from the session stream, then update.
  double d_step();
  double g_step();

  // Deterministic cores used by the scheduled steps, exposed so tests can
  // drive them with hand-picked batches.
  double d_step_on(const Mat& real_x, const std::vector<int>& real_classes,
                   const Mat& z, const std::vector<int>& fake_classes);
  double g_step_on(const Mat& z, const std::vector<int>& fake_classes);

  MetricsRow evaluate(long step);
  TrainResult run();

  GanModel& model() { return model_; }
  const ToyDataset& dataset() const { return data_; }

 private:
  void draw_batch(Mat& real_x, std::vector<int>& real_classes);
  void draw_latents(int count, Mat& z, std::vector<int>& classes);
  // Forward fakes into sample space, keeping caches for backward.
  Mat forward_fakes(const Mat& z, const std::vector<int>& classes);
  // Push d loss / d samples back through the generator stack.
  void backward_fakes(const Mat& sample_grad);

  // Per-variant batch losses; fill the gradient of the loss w.r.t. the
  // discriminator input when input_grad is non-null (generator step).
  double d_loss_on(const Mat& real_x, const std::vector<int>& real_classes,
                   const Mat& fake_x, const std::vector<int>& fake_classes);
  double g_loss_on(const Mat& fake_x, const std::vector<int>& fake_classes,
                   Mat* input_grad);

  TrainConfig cfg_;
  Rng rng_;
  ToyDataset data_;
  GanModel model_;
  Adam opt_g_;
  Adam opt_d_;
  Mat eval_z_;
  std::vector<int> eval_classes_;
  double d_loss_accum_ = 0.0;
  double g_loss_accum_ = 0.0;
  long d_steps_since_eval_ = 0;
  long g_steps_since_eval_ = 0;
};

}  // namespace omni
