#include "rfsl/objective.hpp"

#include <stdexcept>
#include <vector>

namespace rfsl {

Value cls_loss(Tape& tape, Value logits, std::span<const int> labels) {
  return tape.cross_entropy_with_logits(logits, labels);
}

Value sparsity_loss(Tape& tape, Value activations) {
  const int B = tape.shape(activations).rows;
  return tape.scale(tape.l1_norm(activations), 1.0 / B);
}

Value diversity_loss(Tape& tape, Value activations) {
  const int K = tape.shape(activations).cols;
  if (K < 2) throw std::invalid_argument("diversity_loss: needs at least 2 shapelets");
  Value an = tape.column_normalize(activations);
  Value sim = tape.abs(tape.matmul_tn(an, an));  // K x K, |cosine| between shapelet columns
  std::vector<double> off_diag(static_cast<size_t>(K) * K, 1.0);
  for (int i = 0; i < K; ++i) off_diag[static_cast<size_t>(i) * K + i] = 0.0;
  Value masked = tape.mul(sim, tape.input({K, K}, off_diag));
  return tape.scale(tape.sum_all(masked), 1.0 / (static_cast<double>(K) * (K - 1)));
}

TotalLoss total_loss(Tape& tape, Value logits, std::span<const int> labels, Value activations,
                     const LossWeights& weights) {
  if (weights.lambda1 < 0.0 || weights.lambda2 < 0.0)
    throw std::invalid_argument("loss weights must be non-negative");
  TotalLoss out;
  out.cls = cls_loss(tape, logits, labels);
  out.spr = sparsity_loss(tape, activations);
  out.div = diversity_loss(tape, activations);
  // Exact equality with cls when both weights are zero: skip the adds.
  out.total = out.cls;
  if (weights.lambda1 != 0.0) out.total = tape.add(out.total, tape.scale(out.spr, weights.lambda1));
  if (weights.lambda2 != 0.0) out.total = tape.add(out.total, tape.scale(out.div, weights.lambda2));
  return out;
}

}  // namespace rfsl
