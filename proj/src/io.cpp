#include "omni/io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace omni {

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string fmt_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
  return out;
}

const std::string& meta_at(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) {
    throw std::runtime_error("checkpoint: missing metadata key '" + key + "'");
  }
  return it->second;
}

}  // namespace

void write_ppm(const std::string& path, const FeatureGrid& image) {
  if (image.channels() != 3 || image.height <= 0 || image.width <= 0) {
    throw std::invalid_argument("write_ppm: need a non-empty 3-channel image");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.cells()) * 3);
  std::size_t k = 0;
  for (Eigen::Index cell = 0; cell < image.cells(); ++cell) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::round((image.features(c, cell) + 1.0) * 127.5);
      bytes[k++] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
    }
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

FeatureGrid read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("read_ppm: unsupported header in " + path);
  }
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("read_ppm: truncated pixel data in " + path);

  FeatureGrid image = FeatureGrid::zeros(3, h, w);
  std::size_t k = 0;
  for (Eigen::Index cell = 0; cell < image.cells(); ++cell) {
    for (int c = 0; c < 3; ++c) {
      image.features(c, cell) = bytes[k++] / 127.5 - 1.0;
    }
  }
  return image;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  f << "step,d_loss,g_loss,mode_coverage,class_fidelity,high_quality_fraction\n";
  for (const MetricsRow& r : rows) {
    f << r.step << "," << fmt(r.d_loss) << "," << fmt(r.g_loss) << ","
      << fmt(r.mode_coverage) << "," << fmt(r.class_fidelity) << ","
      << fmt(r.high_quality_fraction) << "\n";
  }
  if (!f) throw std::runtime_error("write_metrics_csv: write failed for " + path);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) ||
      line != "step,d_loss,g_loss,mode_coverage,class_fidelity,high_quality_fraction") {
    throw std::runtime_error("read_metrics_csv: bad header in " + path);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw std::runtime_error("read_metrics_csv: ragged row in " + path);
    MetricsRow r;
    r.step = std::stol(cells[0]);
    r.d_loss = std::stod(cells[1]);
    r.g_loss = std::stod(cells[2]);
    r.mode_coverage = std::stod(cells[3]);
    r.class_fidelity = std::stod(cells[4]);
    r.high_quality_fraction = std::stod(cells[5]);
    rows.push_back(r);
  }
  return rows;
}

void write_collapse_report(const std::string& path, const CollapseReport& report) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_collapse_report: cannot open " + path);
  f << "collapsed: " << (report.collapsed ? "yes" : "no") << "\n";
  f << "step: " << report.step << "\n";
  f << "peak/trough: " << fmt(report.peak) << "/" << fmt(report.trough) << "\n";
  if (!f) throw std::runtime_error("write_collapse_report: write failed for " + path);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << "omni-checkpoint 1\n";
  for (const auto& [key, value] : ckpt.meta) {
    f << "meta " << key << " " << value << "\n";
  }
  for (const auto& [name, tensor] : ckpt.tensors) {
    f << "tensor " << name << " " << tensor.shape.size();
    for (int d : tensor.shape) f << " " << d;
    f << "\n";
  }
  f << "data\n";
  for (const auto& [name, tensor] : ckpt.tensors) {
    // Raw IEEE-754 doubles, native (little-endian) byte order.
    f.write(reinterpret_cast<const char*>(tensor.data.data()),
            static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "omni-checkpoint 1") {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  Checkpoint ckpt;
  std::vector<std::string> order;
  while (std::getline(f, line)) {
    if (line == "data") break;
    std::stringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "meta") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      ss >> name >> rank;
      Tensor t;
      t.shape.resize(rank);
      for (std::size_t i = 0; i < rank; ++i) ss >> t.shape[i];
      if (!ss) throw std::runtime_error("load_checkpoint: bad tensor line in " + path);
      ckpt.tensors[name] = std::move(t);
      order.push_back(name);
    } else {
      throw std::runtime_error("load_checkpoint: unexpected line '" + line + "'");
    }
  }
  if (line != "data") {
    throw std::runtime_error("load_checkpoint: missing data section in " + path);
  }
  for (const std::string& name : order) {
    Tensor& t = ckpt.tensors[name];
    t.data.resize(static_cast<std::size_t>(t.element_count()));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated tensor data in " + path);
  }
  return ckpt;
}

Checkpoint model_to_checkpoint(GanModel& model) {
  Checkpoint ckpt;
  const TrainConfig& c = model.cfg;
  ckpt.meta["format"] = "1";
  ckpt.meta["prng"] = Rng::name();
  ckpt.meta["task"] = task_name(c.task);
  ckpt.meta["variant"] = variant_name(c.variant);
  ckpt.meta["num_classes"] = std::to_string(c.num_classes);
  ckpt.meta["modes_per_class"] = std::to_string(c.modes_per_class);
  ckpt.meta["data_sigma"] = fmt(c.data_sigma);
  ckpt.meta["dataset_size"] = std::to_string(c.dataset_size);
  ckpt.meta["d_z"] = std::to_string(c.d_z);
  ckpt.meta["embed_dim"] = std::to_string(c.embed_dim);
  ckpt.meta["g_hidden"] = fmt_ints(c.g_hidden);
  ckpt.meta["d_hidden"] = fmt_ints(c.d_hidden);
  ckpt.meta["gen_head"] = gen_head_name(c.gen_head);
  ckpt.meta["image_h"] = std::to_string(c.image_h);
  ckpt.meta["image_w"] = std::to_string(c.image_w);
  ckpt.meta["grid_channels"] = std::to_string(c.grid_channels);
  ckpt.meta["grid_h"] = std::to_string(c.grid_h);
  ckpt.meta["grid_w"] = std::to_string(c.grid_w);
  ckpt.meta["inr_hidden"] = std::to_string(c.inr_hidden);
  ckpt.meta["seed"] = std::to_string(c.seed);

  auto add_params = [&ckpt](std::vector<ParamRef> refs) {
    for (const ParamRef& p : refs) {
      Tensor t;
      if (p.cols == 1) {
        t.shape = {static_cast<int>(p.rows)};
      } else {
        t.shape = {static_cast<int>(p.rows), static_cast<int>(p.cols)};
      }
      t.data.resize(static_cast<std::size_t>(p.size));
      Eigen::Map<const Mat> value(p.value, p.rows, p.cols);
      for (Eigen::Index r = 0; r < p.rows; ++r) {
        for (Eigen::Index col = 0; col < p.cols; ++col) {
          t.data[static_cast<std::size_t>(r * p.cols + col)] = value(r, col);
        }
      }
      ckpt.tensors[p.name] = std::move(t);
    }
  };
  add_params(model.g.params());
  add_params(model.d.params());
  if (model.has_inr) add_params(model.inr.params());
  return ckpt;
}

GanModel model_from_checkpoint(const Checkpoint& ckpt) {
  TrainConfig cfg;
  cfg.task = parse_task(meta_at(ckpt, "task"));
  cfg.variant = parse_variant(meta_at(ckpt, "variant"));
  cfg.num_classes = std::stoi(meta_at(ckpt, "num_classes"));
  cfg.modes_per_class = std::stoi(meta_at(ckpt, "modes_per_class"));
  cfg.data_sigma = std::stod(meta_at(ckpt, "data_sigma"));
  cfg.dataset_size = std::stoi(meta_at(ckpt, "dataset_size"));
  cfg.d_z = std::stoi(meta_at(ckpt, "d_z"));
  cfg.embed_dim = std::stoi(meta_at(ckpt, "embed_dim"));
  cfg.g_hidden = parse_ints(meta_at(ckpt, "g_hidden"));
  cfg.d_hidden = parse_ints(meta_at(ckpt, "d_hidden"));
  cfg.gen_head = parse_gen_head(meta_at(ckpt, "gen_head"));
  cfg.image_h = std::stoi(meta_at(ckpt, "image_h"));
  cfg.image_w = std::stoi(meta_at(ckpt, "image_w"));
  cfg.grid_channels = std::stoi(meta_at(ckpt, "grid_channels"));
  cfg.grid_h = std::stoi(meta_at(ckpt, "grid_h"));
  cfg.grid_w = std::stoi(meta_at(ckpt, "grid_w"));
  cfg.inr_hidden = std::stoi(meta_at(ckpt, "inr_hidden"));
  cfg.seed = std::stoull(meta_at(ckpt, "seed"));

  Rng rng(0);  // placeholder init; every parameter is overwritten below
  GanModel model = build_model(cfg, rng);

  auto load_params = [&ckpt](std::vector<ParamRef> refs) {
    for (const ParamRef& p : refs) {
      const auto it = ckpt.tensors.find(p.name);
      if (it == ckpt.tensors.end()) {
        throw std::runtime_error("checkpoint: missing tensor '" + p.name + "'");
      }
      const Tensor& t = it->second;
      if (t.element_count() != p.size) {
        throw std::runtime_error("checkpoint: size mismatch for tensor '" + p.name + "'");
      }
      Eigen::Map<Mat> value(p.value, p.rows, p.cols);
      for (Eigen::Index r = 0; r < p.rows; ++r) {
        for (Eigen::Index col = 0; col < p.cols; ++col) {
          value(r, col) = t.data[static_cast<std::size_t>(r * p.cols + col)];
        }
      }
    }
  };
  load_params(model.g.params());
  load_params(model.d.params());
  if (model.has_inr) load_params(model.inr.params());
  return model;
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& [key, value] : entries) {
    f << key << " = " << value << "\n";
  }
  if (!f) throw std::runtime_error("write_manifest: write failed for " + path);
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_config_file: cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("read_config_file: expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("read_config_file: empty key in '" + line + "'");
    }
    out[key] = value;
  }
  return out;
}

}  // namespace omni
