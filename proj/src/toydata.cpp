#include "omni/toydata.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace omni {

ToyDataset make_gaussian_ring(int num_classes, int modes_per_class, double sigma,
                              int count, std::uint64_t seed) {
  if (num_classes <= 0 || modes_per_class <= 0 || count <= 0) {
    throw std::invalid_argument("make_gaussian_ring: counts must be positive");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("make_gaussian_ring: sigma must be positive");
  }

  ToyDataset data;
  data.num_classes = num_classes;
  data.modes_per_class = modes_per_class;
  data.sigma = sigma;

  const int modes = num_classes * modes_per_class;
  data.mode_centers.resize(2, modes);
  data.center_class.resize(static_cast<std::size_t>(modes));
  for (int c = 0; c < num_classes; ++c) {
    const double radius = 1.0 + c;
    for (int k = 0; k < modes_per_class; ++k) {
      const double angle =
          2.0 * M_PI * (static_cast<double>(k) + static_cast<double>(c) / num_classes) /
          modes_per_class;
      const int idx = c * modes_per_class + k;
      data.mode_centers(0, idx) = radius * std::cos(angle);
      data.mode_centers(1, idx) = radius * std::sin(angle);
      data.center_class[static_cast<std::size_t>(idx)] = c;
    }
  }

  Rng rng(seed);
  data.samples.resize(2, count);
  data.labels.resize(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const int c = n % num_classes;
    const int k = rng.uniform_int(modes_per_class);
    const int idx = c * modes_per_class + k;
    data.samples(0, n) = data.mode_centers(0, idx) + sigma * rng.normal();
    data.samples(1, n) = data.mode_centers(1, idx) + sigma * rng.normal();
    data.labels[static_cast<std::size_t>(n)] = c;
  }
  return data;
}

FeatureGrid pattern_image(int class_index, int num_classes, int h, int w) {
  if (class_index < 0 || class_index >= num_classes) {
    throw std::invalid_argument("pattern_image: class index out of range");
  }
  if (h <= 0 || w <= 0) {
    throw std::invalid_argument("pattern_image: size must be positive");
  }
  // A per-class oriented grating: classes differ in orientation and spatial
  // frequency, channels in phase, so centers are far apart in pixel space.
  const double theta = M_PI * class_index / num_classes;
  const double freq = 1.0 + class_index % 3;
  FeatureGrid img = FeatureGrid::zeros(3, h, w);
  for (int i = 0; i < h; ++i) {
    const double y = -1.0 + (2.0 * i + 1.0) / h;
    for (int j = 0; j < w; ++j) {
      const double x = -1.0 + (2.0 * j + 1.0) / w;
      const double t = x * std::cos(theta) + y * std::sin(theta);
      for (int ch = 0; ch < 3; ++ch) {
        img.at(ch, i, j) =
            0.7 * std::sin(2.0 * M_PI * freq * t + 2.0 * M_PI * ch / 3.0 + class_index);
      }
    }
  }
  return img;
}

ToyDataset make_pattern_dataset(int num_classes, int h, int w, double sigma,
                                int count, std::uint64_t seed) {
  if (num_classes <= 0 || count <= 0) {
    throw std::invalid_argument("make_pattern_dataset: counts must be positive");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("make_pattern_dataset: sigma must be positive");
  }

  ToyDataset data;
  data.num_classes = num_classes;
  data.modes_per_class = 1;
  data.sigma = sigma;

  const Eigen::Index dim = static_cast<Eigen::Index>(3) * h * w;
  data.mode_centers.resize(dim, num_classes);
  data.center_class.resize(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    data.mode_centers.col(c) = grid_to_column(pattern_image(c, num_classes, h, w));
    data.center_class[static_cast<std::size_t>(c)] = c;
  }

  Rng rng(seed);
  data.samples.resize(dim, count);
  data.labels.resize(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const int c = n % num_classes;
    for (Eigen::Index r = 0; r < dim; ++r) {
      data.samples(r, n) = data.mode_centers(r, c) + sigma * rng.normal();
    }
    data.labels[static_cast<std::size_t>(n)] = c;
  }
  return data;
}

EvalMetrics evaluate_modes(const Mat& generated, const std::vector<int>& intended,
                           const ToyDataset& data, double radius_mult) {
  if (generated.cols() != static_cast<Eigen::Index>(intended.size())) {
    throw std::invalid_argument("evaluate_modes: sample/label count mismatch");
  }
  if (generated.rows() != data.mode_centers.rows()) {
    throw std::invalid_argument("evaluate_modes: dimension mismatch with centers");
  }
  if (generated.cols() == 0) {
    throw std::invalid_argument("evaluate_modes: no samples");
  }

  const double threshold = radius_mult * data.sigma;
  const int modes = data.mode_count();
  std::vector<char> claimed(static_cast<std::size_t>(modes), 0);
  long hq = 0;
  long faithful = 0;
  for (Eigen::Index n = 0; n < generated.cols(); ++n) {
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int m = 0; m < modes; ++m) {
      const double d = (generated.col(n) - data.mode_centers.col(m)).norm();
      if (d < best) {
        best = d;
        nearest = m;
      }
    }
    if (best <= threshold) {
      ++hq;
      const int cls = data.center_class[static_cast<std::size_t>(nearest)];
      if (cls == intended[static_cast<std::size_t>(n)]) {
        ++faithful;
        claimed[static_cast<std::size_t>(nearest)] = 1;
      }
    }
  }

  EvalMetrics out;
  out.high_quality_fraction = static_cast<double>(hq) / static_cast<double>(generated.cols());
  out.class_fidelity = hq > 0 ? static_cast<double>(faithful) / static_cast<double>(hq) : 0.0;
  long covered = 0;
  for (char c : claimed) covered += c;
  out.mode_coverage = static_cast<double>(covered) / static_cast<double>(modes);
  return out;
}

void write_dataset_csv(const std::string& path, const ToyDataset& data) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  for (int r = 0; r < data.dim(); ++r) f << "x" << r << ",";
  f << "label\n";
  f.precision(17);
  for (int n = 0; n < data.count(); ++n) {
    for (int r = 0; r < data.dim(); ++r) f << data.samples(r, n) << ",";
    f << data.labels[static_cast<std::size_t>(n)] << "\n";
  }
  if (!f) throw std::runtime_error("write_dataset_csv: write failed for " + path);
}

ToyDataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) {
    throw std::runtime_error("read_dataset_csv: empty file " + path);
  }
  long long dim = std::count(line.begin(), line.end(), ',');
  if (dim <= 0) throw std::runtime_error("read_dataset_csv: bad header in " + path);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  int max_label = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> vals;
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<long long>(vals.size()) != dim + 1) {
      throw std::runtime_error("read_dataset_csv: ragged row in " + path);
    }
    labels.push_back(static_cast<int>(vals.back()));
    max_label = std::max(max_label, labels.back());
    vals.pop_back();
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error("read_dataset_csv: no samples in " + path);

  ToyDataset data;
  data.num_classes = max_label + 1;
  data.modes_per_class = 0;
  data.sigma = 0.0;
  data.samples.resize(dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (long long r = 0; r < dim; ++r) {
      data.samples(r, static_cast<Eigen::Index>(n)) = rows[n][static_cast<std::size_t>(r)];
    }
  }
  data.labels = std::move(labels);
  return data;
}

}  // namespace omni
