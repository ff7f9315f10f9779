#pragma once

#include "omni/loss.hpp"

namespace omni {

// Who a target vector is built for. class_index is the ground-truth class for
// real samples, and the generator's conditioning class for fake/gen roles.
// domain is only consulted by the multi-domain scheme.
struct Role {
  enum class Kind { real, fake, gen };
  Kind kind = Kind::real;
  int class_index = -1;
  int domain = -1;
};

inline Role real_role(int class_index, int domain = -1) {
  return Role{Role::Kind::real, class_index, domain};
}
inline Role fake_role(int class_index = -1, int domain = -1) {
  return Role{Role::Kind::fake, class_index, domain};
}
inline Role gen_role(int class_index, int domain = -1) {
  return Role{Role::Kind::gen, class_index, domain};
}

// Length of the per-sample target/score vector for the two-sided and
// one-sided schemes: one slot per class plus a real slot (index C) and a
// fake slot (index C+1).
inline int omni_target_length(int num_classes) { return num_classes + 2; }

// Fully-supervised scheme. Every slot carries a label:
//   real(c): +1 at c and at the real slot, -1 everywhere else
//   fake:    +1 at the fake slot, -1 everywhere else
//   gen(c):  identical to real(c) (the generator wants fakes scored as real)
OmniTarget build_omni_target(int num_classes, const Role& role);

// Sparse scheme that only mentions the conditioning class. Unmentioned slots
// are 0 and must receive exactly zero gradient downstream:
//   real(c):  +1 at c, +1 at the real slot, 0 elsewhere
//   fake(c):  -1 at c, -1 at the real slot, 0 elsewhere (fake slot unused)
//   gen(c):   +1 at c, +1 at the real slot, 0 elsewhere
OmniTarget build_one_sided_target(int num_classes, const Role& role);

// Class index fed to softmax cross-entropy for the classifier-head variants
// over num_classes + 1 logits. With fake_as_extra_class the discriminator is
// taught to put fakes into the extra class (index C); without it, fakes are
// classified as their conditioning class, which is the classic auxiliary
// classifier mistake this library exists to compare against. The generator
// role always targets its conditioning class.
int classifier_target(int num_classes, const Role& role, bool fake_as_extra_class);

// Target length for the multi-domain scheme: class block, domain block, and
// the real/fake pair.
inline int multidomain_target_length(int num_classes, int num_domains) {
  return num_classes + num_domains + 2;
}

// Two-sided scheme extended with a one-hot (+1/-1) domain block:
//   real(c,d): +1 at c, +1 at domain d, +1 at the real slot, -1 elsewhere
//   fake:      +1 at the fake slot, -1 everywhere else
//   gen(c,d):  identical to real(c,d)
OmniTarget build_multidomain_target(int num_classes, int num_domains, const Role& role);

// Nearest-neighbor downsampling of a per-cell class map. Output cell (i, j)
// copies input cell (floor(i * in_h / out_h), floor(j * in_w / out_w)).
IMat nn_downsample_labels(const IMat& labels, int out_h, int out_w);

// Expands an H x W class map into per-cell omni targets (two-sided scheme),
// column per cell in row-major order, ready for perpixel_omni_loss. The role
// supplies real/fake/gen semantics; its class_index is ignored in favor of
// the map entry for real/gen roles.
TargetMap build_perpixel_targets(const IMat& class_map, int num_classes, const Role& role);

}  // namespace omni
