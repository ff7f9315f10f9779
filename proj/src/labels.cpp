#include "omni/labels.hpp"

#include <stdexcept>

namespace omni {

namespace {

void check_class(int num_classes, int c, const char* what) {
  if (c < 0 || c >= num_classes) {
    throw std::invalid_argument(std::string(what) + ": class index out of range");
  }
}

}  // namespace

OmniTarget build_omni_target(int num_classes, const Role& role) {
  if (num_classes <= 0) {
    throw std::invalid_argument("build_omni_target: num_classes must be positive");
  }
  const int len = omni_target_length(num_classes);
  IVec labels = IVec::Constant(len, -1);
  switch (role.kind) {
    case Role::Kind::real:
    case Role::Kind::gen:
      check_class(num_classes, role.class_index, "build_omni_target");
      labels[role.class_index] = 1;
      labels[num_classes] = 1;  // real slot
      break;
    case Role::Kind::fake:
      labels[num_classes + 1] = 1;  // fake slot
      break;
  }
  return OmniTarget(std::move(labels));
}

OmniTarget build_one_sided_target(int num_classes, const Role& role) {
  if (num_classes <= 0) {
    throw std::invalid_argument("build_one_sided_target: num_classes must be positive");
  }
  check_class(num_classes, role.class_index, "build_one_sided_target");
  const int len = omni_target_length(num_classes);
  IVec labels = IVec::Zero(len);
  const int sign = (role.kind == Role::Kind::fake) ? -1 : 1;
  labels[role.class_index] = sign;
  labels[num_classes] = sign;  // real slot
  return OmniTarget(std::move(labels));
}

int classifier_target(int num_classes, const Role& role, bool fake_as_extra_class) {
  if (num_classes <= 0) {
    throw std::invalid_argument("classifier_target: num_classes must be positive");
  }
  if (role.kind == Role::Kind::fake && fake_as_extra_class) {
    return num_classes;
  }
  check_class(num_classes, role.class_index, "classifier_target");
  return role.class_index;
}

OmniTarget build_multidomain_target(int num_classes, int num_domains, const Role& role) {
  if (num_classes <= 0 || num_domains <= 0) {
    throw std::invalid_argument("build_multidomain_target: counts must be positive");
  }
  const int len = multidomain_target_length(num_classes, num_domains);
  IVec labels = IVec::Constant(len, -1);
  switch (role.kind) {
    case Role::Kind::real:
    case Role::Kind::gen:
      check_class(num_classes, role.class_index, "build_multidomain_target");
      if (role.domain < 0 || role.domain >= num_domains) {
        throw std::invalid_argument("build_multidomain_target: domain index out of range");
      }
      labels[role.class_index] = 1;
      labels[num_classes + role.domain] = 1;
      labels[num_classes + num_domains] = 1;  // real slot
      break;
    case Role::Kind::fake:
      labels[num_classes + num_domains + 1] = 1;  // fake slot
      break;
  }
  return OmniTarget(std::move(labels));
}

IMat nn_downsample_labels(const IMat& labels, int out_h, int out_w) {
  const int in_h = static_cast<int>(labels.rows());
  const int in_w = static_cast<int>(labels.cols());
  if (in_h <= 0 || in_w <= 0) {
    throw std::invalid_argument("nn_downsample_labels: empty input map");
  }
  if (out_h <= 0 || out_w <= 0) {
    throw std::invalid_argument("nn_downsample_labels: output size must be positive");
  }
  IMat out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    const int si = static_cast<int>((static_cast<long long>(i) * in_h) / out_h);
    for (int j = 0; j < out_w; ++j) {
      const int sj = static_cast<int>((static_cast<long long>(j) * in_w) / out_w);
      out(i, j) = labels(si, sj);
    }
  }
  return out;
}

TargetMap build_perpixel_targets(const IMat& class_map, int num_classes, const Role& role) {
  const int h = static_cast<int>(class_map.rows());
  const int w = static_cast<int>(class_map.cols());
  if (h <= 0 || w <= 0) {
    throw std::invalid_argument("build_perpixel_targets: empty class map");
  }
  TargetMap out;
  out.height = h;
  out.width = w;
  out.labels.resize(omni_target_length(num_classes), static_cast<Eigen::Index>(h) * w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      Role cell = role;
      if (role.kind != Role::Kind::fake) {
        cell.class_index = class_map(i, j);
      }
      out.labels.col(static_cast<Eigen::Index>(i) * w + j) =
          build_omni_target(num_classes, cell).labels;
    }
  }
  return out;
}

}  // namespace omni
