#pragma once

#include <string>
#include <vector>

#include "rfsl/optim.hpp"
#include "rfsl/tape.hpp"

namespace rfsl {

// Pre-norm transformer encoder: x += attn(ln1(x)); x += ffn(ln2(x)); final
// layer norm; mean pooling over tokens yields the global feature.
struct BackboneConfig {
  int layer_count = 2;
  int d_h = 64;
  int head_count = 4;
  int ff_width = 256;
  int max_seq = 512;
};

// Which backbone parameter groups stay trainable; everything else is frozen.
// The default mirrors parameter-efficient fine-tuning: positional embeddings
// and layer norms adapt, attention and FFN weights do not.
struct FreezePolicy {
  std::vector<std::string> trainable_groups{"positional_embeddings", "layer_norms"};

  bool is_trainable(const std::string& group) const;
};

void backbone_tensor_specs(const BackboneConfig& cfg, std::vector<TensorSpec>& out);

struct BlockNodes {
  Value ln1_g, ln1_b;
  Value wq, bq, wk, bk, wv, bv, wo, bo;
  Value ln2_g, ln2_b;
  Value ff_w1, ff_b1, ff_w2, ff_b2;
};

struct BackboneNodes {
  Value pos;  // [max_seq, d_h]
  std::vector<BlockNodes> blocks;
  Value lnf_g, lnf_b;
};

// tokens [l_seq, d_h] -> global feature [1, d_h].
Value encode_tokens(Tape& tape, const BackboneConfig& cfg, const BackboneNodes& nodes,
                    Value tokens);

}  // namespace rfsl
