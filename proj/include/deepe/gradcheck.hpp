#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepe {

struct GradcheckOptions {
  int precision = 64;             // 32 or 64
  bool perturb_backward = false;  // negative control: skews analytic grads
  std::uint64_t seed = 1;
  // 0 picks the default for the precision: 1e-5 at 64-bit, 1e-2 at 32-bit.
  double tolerance = 0.0;
  std::size_t dim = 8;
  std::size_t deepe_blocks = 2;
  std::size_t resnet_blocks = 1;
};

struct GradcheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

struct GradcheckReport {
  double tolerance = 0.0;
  double step = 0.0;
  double norm_floor = 0.0;
  std::vector<GradcheckGroup> groups;

  bool passed() const;
  std::vector<std::string> failures() const;
  double worst() const;
};

double default_gradcheck_tolerance(int precision);

// Central finite differences against the hand-written backward of every
// layer type (linear, batch norm in both modes, dropout, DeepE block, ResNet
// block) and of the full model under the softmax cross-entropy loss.
// Relative error per tensor is ||analytic - numeric|| / max(||analytic||,
// ||numeric||, floor). The floor keeps tensors whose true gradient is zero
// (a bias feeding a train-mode batch norm) from dividing noise by noise.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace deepe
