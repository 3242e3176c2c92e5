#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rfsl/optim.hpp"
#include "rfsl/rng.hpp"
#include "rfsl/shapelet.hpp"
#include "rfsl/signal.hpp"
#include "rfsl/tape.hpp"

using namespace rfsl;

namespace {

IQFrame random_frame(int T, uint64_t seed, int device = 0, int domain = 0) {
  IQFrame f;
  f.frame_length = T;
  f.device_label = device;
  f.domain_label = domain;
  f.samples.resize(static_cast<size_t>(2) * T);
  auto rng = make_rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& s : f.samples) s = static_cast<float>(dist(rng));
  return f;
}

std::vector<double> random_vec(size_t n, uint64_t seed, double stddev = 1.0) {
  std::vector<double> v(n);
  auto rng = make_rng(seed);
  fill_gaussian(v, rng, stddev);
  return v;
}

// Reference with the opposite loop nesting (position-major instead of
// channel-major), so rounding paths differ from the implementation.
std::vector<double> brute_distances(const IQFrame& f, const std::vector<double>& s) {
  const int T = f.frame_length;
  const int L = static_cast<int>(s.size() / 2);
  std::vector<double> d;
  for (int j = 0; j + L <= T; ++j) {
    double ss = 0.0;
    for (int k = 0; k < L; ++k)
      for (int c = 0; c < 2; ++c) {
        const double diff = s[static_cast<size_t>(c) * L + k] -
                            static_cast<double>(f.samples[static_cast<size_t>(c) * T + j + k]);
        ss += diff * diff;
      }
    d.push_back(std::sqrt(ss));
  }
  return d;
}

}  // namespace

TEST_CASE("config bookkeeping") {
  ShapeletConfig cfg;  // defaults: 5x8, 5x16, 3x32
  CHECK(cfg.total_count() == 13);
  auto lens = shapelet_lengths(cfg);
  REQUIRE(lens.size() == 13);
  CHECK(std::count(lens.begin(), lens.end(), 8) == 5);
  CHECK(std::count(lens.begin(), lens.end(), 16) == 5);
  CHECK(std::count(lens.begin(), lens.end(), 32) == 3);

  std::vector<TensorSpec> specs;
  shapelet_tensor_specs(cfg, specs);
  REQUIRE(specs.size() == 13);
  CHECK(specs[0].name == "shapelet.0");
  CHECK(specs[12].name == "shapelet.12");
  CHECK(specs[12].shape == Shape{2, 32});
  for (const auto& s : specs) CHECK(s.group == "shapelet_bank");

  CHECK_THROWS(shapelet_lengths(ShapeletConfig{{{0, 8}}, false}));
  CHECK_THROWS(shapelet_lengths(ShapeletConfig{{{3, 1}}, false}));
  CHECK_THROWS(shapelet_lengths(ShapeletConfig{{}, false}));
}

TEST_CASE("sliding distances match an independent reference") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const int T = 24 + static_cast<int>(seed % 17);
    const int L = 2 + static_cast<int>(seed % 11);
    auto f = random_frame(T, mix_seed(99, seed));
    auto s = random_vec(static_cast<size_t>(2) * L, mix_seed(7, seed));
    auto got = sliding_distances(f, s);
    auto want = brute_distances(f, s);
    REQUIRE(got.size() == static_cast<size_t>(T - L + 1));
    REQUIRE(got.size() == want.size());
    for (size_t j = 0; j < got.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
}

TEST_CASE("length normalization divides by sqrt(2L)") {
  auto f = random_frame(40, 5);
  auto s = random_vec(16, 6);  // L = 8
  auto plain = sliding_distances(f, s, false);
  auto norm = sliding_distances(f, s, true);
  for (size_t j = 0; j < plain.size(); ++j)
    CHECK(norm[j] == doctest::Approx(plain[j] / std::sqrt(16.0)).epsilon(1e-14));
}

TEST_CASE("exact-match window gives exactly zero distance") {
  auto f = random_frame(32, 123);
  const int L = 6, start = 9, T = 32;
  std::vector<double> s(2 * L);
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < L; ++k)
      s[static_cast<size_t>(c) * L + k] = static_cast<double>(f.samples[static_cast<size_t>(c) * T + start + k]);
  auto d = sliding_distances(f, s);
  CHECK(d[start] == 0.0);
  auto [t_star, d_min] = best_match(f, s);
  CHECK(t_star == start);
  CHECK(d_min == 0.0);
}

TEST_CASE("soft activation invariants") {
  auto rng = make_rng(314);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 40;
    std::vector<double> d(static_cast<size_t>(n));
    for (auto& v : d) v = u(rng);
    const double a = soft_activation(d);
    const double dmin = *std::min_element(d.begin(), d.end());
    const double dmax = *std::max_element(d.begin(), d.end());

    // Bounds: a soft minimum of -d lives between -max d and -min d;
    // nonpositive whenever distances are nonnegative.
    CHECK(a <= -dmin + 1e-10);
    CHECK(a >= -dmax - 1e-10);
    CHECK(a <= 1e-10);

    // Uniform shift: adding c to every distance subtracts c from the output.
    const double c = (trial % 2 == 0) ? 3.75 : 1000.0;
    std::vector<double> shifted = d;
    for (auto& v : shifted) v += c;
    CHECK(soft_activation(shifted) == doctest::Approx(a - c).epsilon(1e-10));

    // Permutation invariance.
    std::vector<double> perm = d;
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(soft_activation(perm) == doctest::Approx(a).epsilon(1e-12));
  }
  // Singleton: exactly the negated distance.
  CHECK(soft_activation(std::vector<double>{2.5}) == -2.5);
  CHECK_THROWS(soft_activation(std::vector<double>{}));
}

TEST_CASE("best match prefers the earliest index on ties") {
  // Period-4 frame: the window starting at 2 repeats at 6, 10, ...
  const int T = 18, L = 4;
  IQFrame f;
  f.frame_length = T;
  f.samples.resize(2 * T);
  const float pat_i[4] = {0.3f, -1.2f, 0.8f, 0.1f};
  const float pat_q[4] = {-0.5f, 0.9f, 0.2f, -0.7f};
  for (int t = 0; t < T; ++t) {
    f.samples[static_cast<size_t>(t)] = pat_i[t % 4];
    f.samples[static_cast<size_t>(T) + t] = pat_q[t % 4];
  }
  std::vector<double> s(2 * L);
  for (int k = 0; k < L; ++k) {
    s[static_cast<size_t>(k)] = static_cast<double>(f.samples[static_cast<size_t>(2 + k)]);
    s[static_cast<size_t>(L + k)] = static_cast<double>(f.samples[static_cast<size_t>(T) + 2 + k]);
  }
  auto d = sliding_distances(f, s);
  CHECK(d[2] == 0.0);
  CHECK(d[6] == 0.0);
  CHECK(d[10] == 0.0);
  auto [t_star, d_min] = best_match(f, s);
  CHECK(t_star == 2);
  CHECK(d_min == 0.0);

  // Generic scan agreement on random inputs.
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto rf = random_frame(30, mix_seed(4, seed));
    auto rs = random_vec(10, mix_seed(5, seed));
    auto rd = sliding_distances(rf, rs);
    auto [bt, bd] = best_match(rf, rs);
    CHECK(bd == *std::min_element(rd.begin(), rd.end()));
    CHECK(rd[static_cast<size_t>(bt)] == bd);
    for (int j = 0; j < bt; ++j) CHECK(rd[static_cast<size_t>(j)] > bd);
  }
}

TEST_CASE("data-sampled initialization is deterministic and window-shaped") {
  Dataset train;
  train.frame_length = 64;
  train.class_count = 2;
  for (int i = 0; i < 3; ++i) train.frames.push_back(random_frame(64, 1000 + i, i % 2, 0));

  ShapeletConfig cfg{{{2, 8}, {2, 16}}, false};
  auto bank = init_bank(cfg, train, 42);
  auto bank2 = init_bank(cfg, train, 42);
  auto bank3 = init_bank(cfg, train, 43);
  REQUIRE(bank.size() == 4);
  CHECK(bank == bank2);
  CHECK(bank != bank3);

  // Every shapelet should sit within jitter range of some window of some
  // training frame (jitter sigma 0.01; 0.08 leaves lots of headroom).
  for (const auto& s : bank) {
    const int L = static_cast<int>(s.size() / 2);
    double best = 1e9;
    for (const auto& f : train.frames)
      for (int j = 0; j + L <= train.frame_length; ++j) {
        double worst = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int k = 0; k < L; ++k)
            worst = std::max(worst,
                             std::abs(s[static_cast<size_t>(c) * L + k] -
                                      static_cast<double>(
                                          f.samples[static_cast<size_t>(c) * train.frame_length + j + k])));
        best = std::min(best, worst);
      }
    CHECK(best < 0.08);
  }

  CHECK_THROWS(init_bank(cfg, Dataset{}, 1));
  ShapeletConfig too_long{{{1, 128}}, false};
  CHECK_THROWS(init_bank(too_long, train, 1));
}

TEST_CASE("tape activation row agrees with the plain kernels") {
  const int T = 48;
  ShapeletConfig cfg{{{2, 5}, {1, 9}}, false};
  auto f = random_frame(T, 77);

  std::vector<Tensor> bank;
  std::vector<TensorSpec> specs;
  shapelet_tensor_specs(cfg, specs);
  for (size_t k = 0; k < specs.size(); ++k)
    bank.emplace_back(specs[k].name, specs[k].shape,
                      random_vec(static_cast<size_t>(specs[k].shape.size()), mix_seed(8, k), 0.5));

  for (bool normalize : {false, true}) {
    ShapeletConfig c = cfg;
    c.length_normalize = normalize;

    std::vector<const Tensor*> ptrs;
    for (auto& t : bank) ptrs.push_back(&t);
    auto plain = activations(f, ptrs, normalize);

    Tape tape;
    std::vector<double> fr(f.samples.begin(), f.samples.end());
    Value frame_node = tape.input({2, T}, fr);
    std::vector<Value> nodes;
    for (auto& t : bank) nodes.push_back(tape.param(t));
    Value row = activation_row(tape, frame_node, nodes, c);

    REQUIRE(tape.shape(row) == Shape{1, 3});
    const auto& got = tape.value(row);
    for (size_t k = 0; k < plain.size(); ++k)
      CHECK(got[k] == doctest::Approx(plain[k]).epsilon(1e-12));
  }
}

TEST_CASE("gradients flow through softmax pooling of distances") {
  const int T = 14;
  auto f = random_frame(T, 555);
  ShapeletConfig cfg{{{2, 3}}, false};

  std::vector<Tensor> bank;
  bank.emplace_back("s0", Shape{2, 3}, random_vec(6, 21, 0.7));
  bank.emplace_back("s1", Shape{2, 3}, random_vec(6, 22, 0.7));
  Tensor w("w", {1, 2}, std::vector<double>{0.4, -1.1});

  ParameterGroup g{"bank", {&bank[0], &bank[1], &w}, true};
  std::vector<ParameterGroup> groups{g};

  auto loss = [&](bool with_grad) {
    Tape tape(with_grad);
    std::vector<double> fr(f.samples.begin(), f.samples.end());
    Value frame_node = tape.input({2, T}, fr);
    std::vector<Value> nodes{tape.param(bank[0]), tape.param(bank[1])};
    Value row = activation_row(tape, frame_node, nodes, cfg);
    Value out = tape.sum_all(tape.mul(row, tape.param(w)));
    if (with_grad) tape.backward(out);
    return tape.scalar(out);
  };
  auto result = finite_diff_check(loss, groups);
  CHECK(result.max_rel_err < 1e-5);
}
