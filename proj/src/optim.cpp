#include "rfsl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rfsl/rng.hpp"

namespace rfsl {

void zero_grads(std::span<const ParameterGroup> groups) {
  for (const auto& g : groups)
    for (Tensor* t : g.tensors) t->zero_grad();
}

std::vector<Tensor*> trainable_tensors(std::span<const ParameterGroup> groups) {
  std::vector<Tensor*> out;
  for (const auto& g : groups) {
    if (!g.trainable) continue;
    out.insert(out.end(), g.tensors.begin(), g.tensors.end());
  }
  return out;
}

void adam_step(std::span<const ParameterGroup> groups, AdamState& state, const AdamConfig& cfg) {
  auto params = trainable_tensors(groups);
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->value.size(), 0.0);
      state.v[i].assign(params[i]->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw std::logic_error("adam_step: parameter layout changed under existing state");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i];
    if (t.grad.size() != t.value.size())
      throw std::logic_error("adam_step: missing gradient for tensor " + t.name);
    if (state.m[i].size() != t.value.size())
      throw std::logic_error("adam_step: state size mismatch for tensor " + t.name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < t.value.size(); ++j) {
      const double g = t.grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      t.value[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

GradCheckResult finite_diff_check(const std::function<double(bool with_grad)>& loss,
                                  std::span<const ParameterGroup> groups, double h,
                                  int max_coords_per_tensor, uint64_t coord_seed) {
  auto params = trainable_tensors(groups);
  zero_grads(groups);
  (void)loss(true);  // populate analytic grads at the current point

  // Snapshot: the probe must compare against the gradient at this exact point,
  // and the +/-h evaluations must not see each other's perturbations.
  std::vector<std::vector<double>> analytic(params.size());
  for (size_t i = 0; i < params.size(); ++i) analytic[i] = params[i]->grad;

  GradCheckResult res;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i];
    std::vector<int> coords(t.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords_per_tensor > 0 && static_cast<int>(coords.size()) > max_coords_per_tensor) {
      auto rng = make_rng(mix_seed(coord_seed, static_cast<uint64_t>(i)));
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_tensor);
    }
    for (int j : coords) {
      const double saved = t.value[j];
      t.value[j] = saved + h;
      const double fp = loss(false);
      t.value[j] = saved - h;
      const double fm = loss(false);
      t.value[j] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][j];
      const double rel =
          std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_tensor = t.name;
        res.worst_index = j;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace rfsl
