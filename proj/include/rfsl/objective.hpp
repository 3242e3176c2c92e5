#pragma once

#include <span>

#include "rfsl/tape.hpp"

namespace rfsl {

struct LossWeights {
  double lambda1 = 1e-4;  // sparsity
  double lambda2 = 1e-4;  // diversity
};

// Mean over the batch of -log softmax(logits)[label].
Value cls_loss(Tape& tape, Value logits, std::span<const int> labels);

// (1/B) * sum of |entries| of the B x K activation matrix.
Value sparsity_loss(Tape& tape, Value activations);

// Columns of A are L2-normalized (dead columns map to zero), C = |An^T An|,
// and the off-diagonal mean sum(C_ij, i != j) / (K(K-1)) is returned.
// Always lands in [0, 1]; requires K >= 2.
Value diversity_loss(Tape& tape, Value activations);

struct TotalLoss {
  Value total;
  Value cls;
  Value spr;
  Value div;
};

// L_total = L_cls + lambda1 * L_spr + lambda2 * L_div.
TotalLoss total_loss(Tape& tape, Value logits, std::span<const int> labels, Value activations,
                     const LossWeights& weights);

}  // namespace rfsl
