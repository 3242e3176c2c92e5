#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rfsl/tape.hpp"

namespace rfsl {

// A named set of tensors updated (or deliberately left alone) as a unit.
// Frozen groups are never touched by the optimizer, not even by a zero update.
struct ParameterGroup {
  std::string name;
  std::vector<Tensor*> tensors;
  bool trainable = true;
};

// Declarative description of one model parameter: enough to allocate it,
// initialize it, and count it without allocating (parameter census).
enum class InitKind { kZero, kOne, kGaussian };

struct TensorSpec {
  std::string name;
  Shape shape;
  std::string group;
  InitKind init = InitKind::kZero;
  double stddev = 0.0;  // for kGaussian
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one slot per trainable tensor in group order.
// Lazily sized on the first step; the group layout must not change afterwards.
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

void zero_grads(std::span<const ParameterGroup> groups);
std::vector<Tensor*> trainable_tensors(std::span<const ParameterGroup> groups);

// Bias-corrected Adam over all trainable groups. Reads tensor.grad, updates
// tensor.value in place; grads are left as-is for the caller to clear.
void adam_step(std::span<const ParameterGroup> groups, AdamState& state, const AdamConfig& cfg);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int coords_checked = 0;
};

// Central-difference validation of analytic gradients.
//
// loss(with_grad): evaluates the scalar objective at the current parameter
// values; when with_grad is true it must also accumulate d(loss)/d(param)
// into tensor.grad for every trainable tensor (grads are zeroed beforehand).
// Relative error per coordinate: |a - n| / max(|a|, |n|, 1e-8).
// max_coords_per_tensor == 0 checks every coordinate; otherwise a seeded
// subset of that size is drawn per tensor.
GradCheckResult finite_diff_check(const std::function<double(bool with_grad)>& loss,
                                  std::span<const ParameterGroup> groups, double h = 1e-4,
                                  int max_coords_per_tensor = 0, uint64_t coord_seed = 0);

}  // namespace rfsl
