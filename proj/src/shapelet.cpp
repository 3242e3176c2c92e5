#include "rfsl/shapelet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rfsl/rng.hpp"

namespace rfsl {

std::vector<int> shapelet_lengths(const ShapeletConfig& cfg) {
  std::vector<int> lengths;
  for (const auto& g : cfg.groups) {
    if (g.count < 1 || g.length < 2)
      throw std::invalid_argument("shapelet config: counts >= 1 and lengths >= 2 required");
    for (int i = 0; i < g.count; ++i) lengths.push_back(g.length);
  }
  if (lengths.empty()) throw std::invalid_argument("shapelet config: empty bank");
  return lengths;
}

void shapelet_tensor_specs(const ShapeletConfig& cfg, std::vector<TensorSpec>& out) {
  const auto lengths = shapelet_lengths(cfg);
  for (size_t k = 0; k < lengths.size(); ++k)
    out.push_back({"shapelet." + std::to_string(k), {2, lengths[k]}, "shapelet_bank",
                   InitKind::kGaussian, 0.01});
}

std::vector<double> sliding_distances(const IQFrame& frame, std::span<const double> shapelet,
                                      bool length_normalize) {
  const int T = frame.frame_length;
  if (shapelet.size() % 2 != 0) throw std::invalid_argument("shapelet must be 2 x L");
  const int L = static_cast<int>(shapelet.size() / 2);
  if (L > T) throw std::invalid_argument("shapelet longer than frame");
  const int J = T - L + 1;
  const double scale = length_normalize ? 1.0 / std::sqrt(2.0 * L) : 1.0;
  std::vector<double> d(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) {
    double ss = 0.0;
    for (int c = 0; c < 2; ++c) {
      const float* fr = frame.samples.data() + static_cast<size_t>(c) * T + j;
      const double* sr = shapelet.data() + static_cast<size_t>(c) * L;
      for (int k = 0; k < L; ++k) {
        const double diff = sr[k] - static_cast<double>(fr[k]);
        ss += diff * diff;
      }
    }
    d[static_cast<size_t>(j)] = std::sqrt(ss) * scale;
  }
  return d;
}

double soft_activation(std::span<const double> d) {
  if (d.empty()) throw std::invalid_argument("soft_activation: empty distance vector");
  double mx = -d[0];
  for (double v : d) mx = std::max(mx, -v);
  double z = 0.0, acc = 0.0;
  for (double v : d) {
    const double w = std::exp(-v - mx);
    z += w;
    acc += w * (-v);
  }
  return acc / z;
}

std::pair<int, double> best_match(const IQFrame& frame, std::span<const double> shapelet,
                                  bool length_normalize) {
  const auto d = sliding_distances(frame, shapelet, length_normalize);
  int best = 0;
  for (int j = 1; j < static_cast<int>(d.size()); ++j)
    if (d[static_cast<size_t>(j)] < d[static_cast<size_t>(best)]) best = j;  // strict: ties stay low
  return {best, d[static_cast<size_t>(best)]};
}

std::vector<double> activations(const IQFrame& frame, std::span<const Tensor* const> bank,
                                bool length_normalize) {
  if (bank.empty()) throw std::invalid_argument("activations: empty bank");
  std::vector<double> a(bank.size());
  for (size_t k = 0; k < bank.size(); ++k)
    a[k] = soft_activation(sliding_distances(frame, bank[k]->value, length_normalize));
  return a;
}

std::vector<std::vector<double>> init_bank(const ShapeletConfig& cfg, const Dataset& train,
                                           uint64_t seed) {
  if (train.frames.empty()) throw std::invalid_argument("init_bank: empty training set");
  const auto lengths = shapelet_lengths(cfg);
  for (int L : lengths)
    if (L > train.frame_length) throw std::invalid_argument("init_bank: shapelet longer than frames");
  std::vector<std::vector<double>> bank(lengths.size());
  for (size_t k = 0; k < lengths.size(); ++k) {
    auto rng = make_rng(mix_seed(seed, static_cast<uint64_t>(k)));
    const int L = lengths[k];
    std::uniform_int_distribution<size_t> pick_frame(0, train.frames.size() - 1);
    std::uniform_int_distribution<int> pick_start(0, train.frame_length - L);
    const IQFrame& f = train.frames[pick_frame(rng)];
    const int start = pick_start(rng);
    std::vector<double> v(static_cast<size_t>(2) * L);
    std::normal_distribution<double> jitter(0.0, 0.01);
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < L; ++i)
        v[static_cast<size_t>(c) * L + i] =
            static_cast<double>(f.samples[static_cast<size_t>(c) * train.frame_length + start + i]) +
            jitter(rng);
    bank[k] = std::move(v);
  }
  return bank;
}

Value activation_row(Tape& tape, Value frame_node, std::span<const Value> shapelet_nodes,
                     const ShapeletConfig& cfg) {
  if (shapelet_nodes.empty()) throw std::invalid_argument("activation_row: empty bank");
  std::vector<Value> entries;
  entries.reserve(shapelet_nodes.size());
  for (Value s : shapelet_nodes) {
    Value d = tape.sliding_distance(frame_node, s);
    if (cfg.length_normalize) {
      const int L = tape.shape(s).cols;
      d = tape.scale(d, 1.0 / std::sqrt(2.0 * L));
    }
    Value nd = tape.neg(d);
    entries.push_back(tape.sum_all(tape.mul(tape.softmax(nd), nd)));
  }
  return tape.concat_cols(entries);
}

}  // namespace rfsl
