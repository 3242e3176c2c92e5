#pragma once

#include <span>
#include <vector>

#include "rfsl/optim.hpp"
#include "rfsl/signal.hpp"
#include "rfsl/tape.hpp"

namespace rfsl {

// Strided-convolution front end: 2 input channels (I, Q) over the time axis,
// same-padding, GELU between layers. With the defaults (2 layers, stride 2),
// a 256-sample frame becomes a 64-token sequence.
struct EmbedderConfig {
  int kernel_size = 5;  // odd, for symmetric same-padding
  int layer_count = 2;
  int stride = 2;
  int hidden_channels = 64;
};

int embedder_output_length(const EmbedderConfig& cfg, int frame_length);

// Parameters in bind order: conv0.w, conv0.b, conv1.w, conv1.b, ...
// Channel plan: 2 -> hidden -> ... -> hidden -> d_h.
void embedder_tensor_specs(const EmbedderConfig& cfg, int d_h, std::vector<TensorSpec>& out);

// Tokens [l_seq, d_h] for one frame. params follow the spec order above.
Value embed_frame(Tape& tape, const EmbedderConfig& cfg, std::span<const Value> params,
                  const IQFrame& frame);

}  // namespace rfsl
