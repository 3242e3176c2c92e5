#include "rfsl/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace rfsl {

namespace {

void check_config(const BackboneConfig& cfg) {
  if (cfg.layer_count < 1) throw std::invalid_argument("backbone: needs at least one layer");
  if (cfg.d_h < 1 || cfg.head_count < 1 || cfg.d_h % cfg.head_count != 0)
    throw std::invalid_argument("backbone: d_h must be a positive multiple of head_count");
  if (cfg.ff_width < 1) throw std::invalid_argument("backbone: ff_width must be positive");
  if (cfg.max_seq < 1) throw std::invalid_argument("backbone: max_seq must be positive");
}

}  // namespace

bool FreezePolicy::is_trainable(const std::string& group) const {
  return std::find(trainable_groups.begin(), trainable_groups.end(), group) !=
         trainable_groups.end();
}

void backbone_tensor_specs(const BackboneConfig& cfg, std::vector<TensorSpec>& out) {
  check_config(cfg);
  // Gaussian 0.02 follows common transformer initialization; it stands in for
  // pre-trained weights, which can be imported over it.
  constexpr double kWStd = 0.02;
  out.push_back({"backbone.pos", {cfg.max_seq, cfg.d_h}, "positional_embeddings",
                 InitKind::kGaussian, kWStd});
  for (int l = 0; l < cfg.layer_count; ++l) {
    const std::string base = "backbone.block" + std::to_string(l);
    out.push_back({base + ".ln1.gamma", {1, cfg.d_h}, "layer_norms", InitKind::kOne, 0.0});
    out.push_back({base + ".ln1.beta", {1, cfg.d_h}, "layer_norms", InitKind::kZero, 0.0});
    for (const char* nm : {"wq", "wk", "wv", "wo"})
      out.push_back({base + ".attn." + std::string(nm), {cfg.d_h, cfg.d_h}, "attention_weights",
                     InitKind::kGaussian, kWStd});
    for (const char* nm : {"bq", "bk", "bv", "bo"})
      out.push_back(
          {base + ".attn." + std::string(nm), {1, cfg.d_h}, "attention_weights", InitKind::kZero, 0.0});
    out.push_back({base + ".ln2.gamma", {1, cfg.d_h}, "layer_norms", InitKind::kOne, 0.0});
    out.push_back({base + ".ln2.beta", {1, cfg.d_h}, "layer_norms", InitKind::kZero, 0.0});
    out.push_back(
        {base + ".ffn.w1", {cfg.d_h, cfg.ff_width}, "ffn_weights", InitKind::kGaussian, kWStd});
    out.push_back({base + ".ffn.b1", {1, cfg.ff_width}, "ffn_weights", InitKind::kZero, 0.0});
    out.push_back(
        {base + ".ffn.w2", {cfg.ff_width, cfg.d_h}, "ffn_weights", InitKind::kGaussian, kWStd});
    out.push_back({base + ".ffn.b2", {1, cfg.d_h}, "ffn_weights", InitKind::kZero, 0.0});
  }
  out.push_back({"backbone.ln_f.gamma", {1, cfg.d_h}, "layer_norms", InitKind::kOne, 0.0});
  out.push_back({"backbone.ln_f.beta", {1, cfg.d_h}, "layer_norms", InitKind::kZero, 0.0});
}

Value encode_tokens(Tape& tape, const BackboneConfig& cfg, const BackboneNodes& nodes,
                    Value tokens) {
  check_config(cfg);
  const Shape ts = tape.shape(tokens);
  if (ts.cols != cfg.d_h) throw std::invalid_argument("encode: token width != d_h");
  if (ts.rows > cfg.max_seq) throw std::invalid_argument("encode: sequence longer than max_seq");
  if (static_cast<int>(nodes.blocks.size()) != cfg.layer_count)
    throw std::invalid_argument("encode: block node count mismatch");

  Value x = tape.add(tokens, tape.slice_rows(nodes.pos, 0, ts.rows));
  const int dk = cfg.d_h / cfg.head_count;
  for (const BlockNodes& b : nodes.blocks) {
    Value h = tape.layer_norm(x, b.ln1_g, b.ln1_b);
    Value q = tape.linear(h, b.wq, b.bq);
    Value k = tape.linear(h, b.wk, b.bk);
    Value v = tape.linear(h, b.wv, b.bv);
    std::vector<Value> heads;
    heads.reserve(static_cast<size_t>(cfg.head_count));
    for (int hd = 0; hd < cfg.head_count; ++hd) {
      heads.push_back(tape.scaled_dot_product_attention(tape.slice_cols(q, hd * dk, dk),
                                                        tape.slice_cols(k, hd * dk, dk),
                                                        tape.slice_cols(v, hd * dk, dk)));
    }
    Value att = cfg.head_count == 1 ? heads[0] : tape.concat_cols(heads);
    x = tape.add(x, tape.linear(att, b.wo, b.bo));

    Value h2 = tape.layer_norm(x, b.ln2_g, b.ln2_b);
    Value f = tape.linear(tape.gelu(tape.linear(h2, b.ff_w1, b.ff_b1)), b.ff_w2, b.ff_b2);
    x = tape.add(x, f);
  }
  x = tape.layer_norm(x, nodes.lnf_g, nodes.lnf_b);
  return tape.mean_axis0(x);
}

}  // namespace rfsl
