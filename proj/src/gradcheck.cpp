#include "rfsl/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rfsl/model.hpp"
#include "rfsl/objective.hpp"
#include "rfsl/rng.hpp"
#include "rfsl/tape.hpp"

namespace rfsl {

namespace {

Tensor gaussian_tensor(const std::string& name, Shape shape, uint64_t seed, double stddev = 1.0) {
  Tensor t(name, shape);
  auto rng = make_rng(seed);
  fill_gaussian(t.value, rng, stddev);
  return t;
}

// Values bounded away from zero, for kinked ops (abs, relu, l1) and for
// denominators; central differences assume the op is smooth across +/-h.
Tensor offset_tensor(const std::string& name, Shape shape, uint64_t seed) {
  Tensor t = gaussian_tensor(name, shape, seed);
  for (double& v : t.value) v = (v < 0.0 ? -1.0 : 1.0) * (0.25 + std::fabs(v));
  return t;
}

Tensor positive_tensor(const std::string& name, Shape shape, uint64_t seed) {
  Tensor t = gaussian_tensor(name, shape, seed);
  for (double& v : t.value) v = 1.0 + std::fabs(v);
  return t;
}

using BuildFn = std::function<Value(Tape&, std::span<const Value>)>;

// Scalarizes the op output with a fixed random weighting, then runs the
// finite-difference probe over every input coordinate.
OpGradReport run_check(std::string name, std::vector<Tensor> tensors, const BuildFn& build,
                       uint64_t seed) {
  ParameterGroup group;
  group.name = "op_inputs";
  for (Tensor& t : tensors) group.tensors.push_back(&t);
  const std::vector<ParameterGroup> groups{group};

  std::vector<double> w;
  {
    Tape probe(false);
    std::vector<Value> vals;
    for (Tensor& t : tensors) vals.push_back(probe.param(t));
    Value y = build(probe, vals);
    w.resize(static_cast<size_t>(probe.shape(y).size()));
    auto rng = make_rng(mix_seed(seed, 0xA11CE));
    fill_gaussian(w, rng, 1.0);
  }

  auto loss = [&](bool with_grad) {
    Tape tape(with_grad);
    std::vector<Value> vals;
    for (Tensor& t : tensors) vals.push_back(tape.param(t));
    Value y = build(tape, vals);
    Value s = tape.sum_all(tape.mul(y, tape.input(tape.shape(y), w)));
    if (with_grad) tape.backward(s);
    return tape.scalar(s);
  };

  OpGradReport rep;
  rep.op = std::move(name);
  rep.result = finite_diff_check(loss, groups, 1e-4);
  return rep;
}

OpGradReport full_loss_check(uint64_t seed, const std::optional<ModelConfig>& model_cfg) {
  // Defaults are the desk setup: 2-layer d_h 64 backbone, stock bank.
  ModelConfig cfg = model_cfg.value_or(ModelConfig{});
  cfg.seed = mix_seed(seed, 0xD15C);
  // Probe every group, frozen ones included; the tape does not know about
  // freezing, so its gradients must be right everywhere.
  cfg.freeze.trainable_groups = {"embedder",      "positional_embeddings",
                                 "layer_norms",   "attention_weights",
                                 "ffn_weights",   "shapelet_bank",
                                 "local_projection", "output_head"};
  Model model(cfg);

  auto rng = make_rng(mix_seed(seed, 0xF8A3));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<IQFrame> frames(2);
  const std::vector<int> labels{0, cfg.class_count - 1};
  for (size_t i = 0; i < frames.size(); ++i) {
    frames[i].frame_length = cfg.frame_length;
    frames[i].device_label = labels[i];
    frames[i].samples.resize(static_cast<size_t>(2) * cfg.frame_length);
    for (auto& s : frames[i].samples) s = static_cast<float>(dist(rng));
  }
  const std::vector<const IQFrame*> ptrs{&frames[0], &frames[1]};
  const LossWeights weights;  // headline lambda values

  auto loss = [&](bool with_grad) {
    Tape tape(with_grad);
    auto nodes = model.bind(tape);
    auto fwd = model.forward_batch(tape, nodes, ptrs);
    auto tl = total_loss(tape, fwd.logits, labels, fwd.activations, weights);
    if (with_grad) tape.backward(tl.total);
    return tape.scalar(tl.total);
  };

  OpGradReport rep;
  rep.op = "composite loss (desk model)";
  rep.result = finite_diff_check(loss, model.groups(), 1e-4, /*max_coords_per_tensor=*/8,
                                 mix_seed(seed, 0xC0DE));
  return rep;
}

}  // namespace

std::vector<OpGradReport> gradcheck_all(uint64_t seed, const std::optional<ModelConfig>& model_cfg) {
  std::vector<OpGradReport> out;
  uint64_t n = 0;
  auto next = [&] { return mix_seed(seed, ++n); };
  auto two = [&](Shape sa, Shape sb) {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("a", sa, next()));
    t.push_back(gaussian_tensor("b", sb, next()));
    return t;
  };
  auto one = [&](Shape s) {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("x", s, next()));
    return t;
  };

  out.push_back(run_check("add", two({3, 4}, {3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.add(v[0], v[1]); },
                          next()));
  out.push_back(run_check("sub", two({3, 4}, {3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.sub(v[0], v[1]); },
                          next()));
  out.push_back(run_check("mul", two({3, 4}, {3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.mul(v[0], v[1]); },
                          next()));
  {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("a", {3, 4}, next()));
    t.push_back(positive_tensor("b", {3, 4}, next()));
    out.push_back(run_check("div", std::move(t),
                            [](Tape& tp, std::span<const Value> v) { return tp.div(v[0], v[1]); },
                            next()));
  }
  out.push_back(run_check("scale", one({3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.scale(v[0], -1.7); },
                          next()));
  out.push_back(run_check("matmul", two({3, 4}, {4, 5}),
                          [](Tape& t, std::span<const Value> v) { return t.matmul(v[0], v[1]); },
                          next()));
  // Thin shapes take the fixed-order kernel rather than the packed one, so
  // they get their own probe.
  out.push_back(run_check("matmul (vector)", two({1, 4}, {4, 5}),
                          [](Tape& t, std::span<const Value> v) { return t.matmul(v[0], v[1]); },
                          next()));
  out.push_back(
      run_check("matmul_nt", two({3, 4}, {5, 4}),
                [](Tape& t, std::span<const Value> v) { return t.matmul_nt(v[0], v[1]); },
                next()));
  out.push_back(
      run_check("matmul_tn", two({4, 3}, {4, 5}),
                [](Tape& t, std::span<const Value> v) { return t.matmul_tn(v[0], v[1]); },
                next()));
  out.push_back(
      run_check("add_row_bias", two({3, 4}, {1, 4}),
                [](Tape& t, std::span<const Value> v) { return t.add_row_bias(v[0], v[1]); },
                next()));
  out.push_back(run_check(
      "im2col", one({6, 2}),
      [](Tape& t, std::span<const Value> v) { return t.im2col(v[0], 3, 2, 1); }, next()));
  {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("x", {8, 2}, next()));
    t.push_back(gaussian_tensor("w", {6, 4}, next(), 0.5));
    t.push_back(gaussian_tensor("b", {1, 4}, next()));
    out.push_back(run_check(
        "conv1d", std::move(t),
        [](Tape& tp, std::span<const Value> v) { return tp.conv1d(v[0], v[1], v[2], 3, 2, 1); },
        next()));
  }
  {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("x", {3, 5}, next()));
    t.push_back(gaussian_tensor("gamma", {1, 5}, next(), 0.2));
    t.push_back(gaussian_tensor("beta", {1, 5}, next(), 0.2));
    for (double& v : t[1].value) v += 1.0;
    out.push_back(run_check(
        "layer_norm", std::move(t),
        [](Tape& tp, std::span<const Value> v) { return tp.layer_norm(v[0], v[1], v[2]); },
        next()));
  }
  out.push_back(run_check("softmax", one({3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.softmax(v[0]); },
                          next()));
  out.push_back(run_check("gelu", one({3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.gelu(v[0]); }, next()));
  {
    std::vector<Tensor> t;
    t.push_back(offset_tensor("x", {3, 4}, next()));
    out.push_back(run_check("relu", std::move(t),
                            [](Tape& tp, std::span<const Value> v) { return tp.relu(v[0]); },
                            next()));
  }
  {
    std::vector<Tensor> t;
    t.push_back(offset_tensor("x", {3, 4}, next()));
    out.push_back(run_check("abs", std::move(t),
                            [](Tape& tp, std::span<const Value> v) { return tp.abs(v[0]); },
                            next()));
  }
  out.push_back(run_check("mean_axis0", one({4, 3}),
                          [](Tape& t, std::span<const Value> v) { return t.mean_axis0(v[0]); },
                          next()));
  out.push_back(run_check("sum_all", one({3, 4}),
                          [](Tape& t, std::span<const Value> v) { return t.sum_all(v[0]); },
                          next()));
  {
    std::vector<Tensor> t;
    t.push_back(offset_tensor("x", {3, 4}, next()));
    out.push_back(run_check("l1_norm", std::move(t),
                            [](Tape& tp, std::span<const Value> v) { return tp.l1_norm(v[0]); },
                            next()));
  }
  out.push_back(
      run_check("slice_rows", one({5, 4}),
                [](Tape& t, std::span<const Value> v) { return t.slice_rows(v[0], 1, 3); },
                next()));
  out.push_back(
      run_check("slice_cols", one({4, 6}),
                [](Tape& t, std::span<const Value> v) { return t.slice_cols(v[0], 2, 3); },
                next()));
  {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("a", {3, 2}, next()));
    t.push_back(gaussian_tensor("b", {3, 3}, next()));
    t.push_back(gaussian_tensor("c", {3, 1}, next()));
    out.push_back(run_check(
        "concat_cols", std::move(t),
        [](Tape& tp, std::span<const Value> v) {
          return tp.concat_cols(std::vector<Value>{v[0], v[1], v[2]});
        },
        next()));
  }
  {
    std::vector<Tensor> t;
    for (int i = 0; i < 3; ++i)
      t.push_back(gaussian_tensor("r" + std::to_string(i), {1, 4}, next()));
    out.push_back(run_check(
        "stack_rows", std::move(t),
        [](Tape& tp, std::span<const Value> v) {
          return tp.stack_rows(std::vector<Value>{v[0], v[1], v[2]});
        },
        next()));
  }
  out.push_back(run_check(
      "cross_entropy_with_logits", one({4, 5}),
      [](Tape& t, std::span<const Value> v) {
        return t.cross_entropy_with_logits(v[0], std::vector<int>{0, 3, 2, 4});
      },
      next()));
  out.push_back(
      run_check("sliding_distance", two({2, 10}, {2, 4}),
                [](Tape& t, std::span<const Value> v) { return t.sliding_distance(v[0], v[1]); },
                next()));
  out.push_back(
      run_check("column_normalize", one({4, 3}),
                [](Tape& t, std::span<const Value> v) { return t.column_normalize(v[0]); },
                next()));
  {
    std::vector<Tensor> t;
    t.push_back(gaussian_tensor("q", {3, 4}, next()));
    t.push_back(gaussian_tensor("k", {5, 4}, next()));
    t.push_back(gaussian_tensor("v", {5, 6}, next()));
    out.push_back(run_check(
        "scaled_dot_product_attention", std::move(t),
        [](Tape& tp, std::span<const Value> v) {
          return tp.scaled_dot_product_attention(v[0], v[1], v[2]);
        },
        next()));
  }

  out.push_back(full_loss_check(seed, model_cfg));
  return out;
}

double worst_rel_err(std::span<const OpGradReport> reports) {
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.result.max_rel_err);
  return worst;
}

}  // namespace rfsl
