#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rfsl/optim.hpp"
#include "rfsl/signal.hpp"
#include "rfsl/tape.hpp"

namespace rfsl {

struct ShapeletGroup {
  int count = 0;
  int length = 0;
};

struct ShapeletConfig {
  std::vector<ShapeletGroup> groups{{5, 8}, {5, 16}, {3, 32}};
  // Optional per-length distance normalization (divide by sqrt(2*L)); the
  // plain Euclidean definition is the default.
  bool length_normalize = false;

  int total_count() const {
    int k = 0;
    for (const auto& g : groups) k += g.count;
    return k;
  }
};

// Length of shapelet k in bank order (groups concatenated).
std::vector<int> shapelet_lengths(const ShapeletConfig& cfg);

void shapelet_tensor_specs(const ShapeletConfig& cfg, std::vector<TensorSpec>& out);

// d_j = Frobenius distance between the shapelet and the 2xL window starting
// at j; J = T - L + 1 entries. shapelet is row-major 2xL (I row then Q row).
std::vector<double> sliding_distances(const IQFrame& frame, std::span<const double> shapelet,
                                      bool length_normalize = false);

// Softmax-pooled soft minimum: w = softmax(-d), a = sum_j w_j * (-d_j).
// Max-subtracted; always in [-max d, -min d].
double soft_activation(std::span<const double> d);

// (t*, d_min) with ties broken toward the lowest start index.
std::pair<int, double> best_match(const IQFrame& frame, std::span<const double> shapelet,
                                  bool length_normalize = false);

// Full activation vector over a bank given as tensors of shape [2, L_k].
std::vector<double> activations(const IQFrame& frame, std::span<const Tensor* const> bank,
                                bool length_normalize = false);

// Data-sampled initialization: each shapelet copies a uniformly chosen 2xL_k
// window of a uniformly chosen training frame, plus N(0, 0.01^2) jitter.
std::vector<std::vector<double>> init_bank(const ShapeletConfig& cfg, const Dataset& train,
                                           uint64_t seed);

// Tape-side activation row [1, K] for one frame. frame_node is the [2, T]
// input node; shapelet_nodes are bound parameters in bank order. Composes the
// same math as soft_activation so gradients flow through softmax pooling.
Value activation_row(Tape& tape, Value frame_node, std::span<const Value> shapelet_nodes,
                     const ShapeletConfig& cfg);

}  // namespace rfsl
