#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfsl/model.hpp"
#include "rfsl/optim.hpp"

namespace rfsl {

struct OpGradReport {
  std::string op;
  GradCheckResult result;
};

// Central-difference validation (h = 1e-4) of the tape's analytic gradients:
// one report per differentiable operation on small dense inputs, plus one for
// the full composite loss with every parameter group probed on a seeded
// coordinate subset. The loss probe runs on the desk-sized defaults (2-layer
// backbone, d_h 64, stock shapelet bank) unless a model config is supplied.
// The suite passes when worst_rel_err() <= 1e-4.
std::vector<OpGradReport> gradcheck_all(uint64_t seed = 0,
                                        const std::optional<ModelConfig>& model_cfg = {});

double worst_rel_err(std::span<const OpGradReport> reports);

}  // namespace rfsl
