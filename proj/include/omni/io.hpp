#pragma once

#include <map>
#include <string>
#include <vector>

#include "omni/inr.hpp"
#include "omni/trainer.hpp"

namespace omni {

// Binary P6 image. Values map [-1, 1] -> [0, 255] via round((v + 1) * 127.5)
// with clamping; reading inverts with byte / 127.5 - 1 (quantized, so a round
// trip is exact only to 1/255).
void write_ppm(const std::string& path, const FeatureGrid& image);
FeatureGrid read_ppm(const std::string& path);

// metrics.csv with the fixed header
// step,d_loss,g_loss,mode_coverage,class_fidelity,high_quality_fraction
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Three-line plain-text verdict: collapsed, step, peak/trough.
void write_collapse_report(const std::string& path, const CollapseReport& report);

// Checkpoint: named row-major tensors plus string metadata, stored as a
// structured text manifest followed by raw little-endian 64-bit floats in
// manifest order.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Model round trip: every parameter tensor plus enough metadata to rebuild
// the architecture without the original config.
Checkpoint model_to_checkpoint(GanModel& model);
GanModel model_from_checkpoint(const Checkpoint& ckpt);

// key = value lines describing a finished run; written next to artifacts.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);

// Minimal key = value config reader ('#' comments, blank lines ignored).
std::map<std::string, std::string> read_config_file(const std::string& path);

}  // namespace omni
