#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "rfsl/rng.hpp"
#include "rfsl/signal.hpp"

using namespace rfsl;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  auto p = fs::temp_directory_path() / "rfsl_test_signal";
  fs::create_directories(p);
  return p;
}

IQFrame make_frame(int T, int cls, int dom, uint64_t seed) {
  IQFrame f;
  f.frame_length = T;
  f.device_label = cls;
  f.domain_label = dom;
  f.samples.resize(static_cast<size_t>(2) * T);
  auto rng = make_rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (auto& v : f.samples) v = g(rng);
  return f;
}

Dataset make_dataset(int T, int C, int domains, int per_cell, uint64_t seed) {
  Dataset d;
  d.frame_length = T;
  d.class_count = C;
  for (int c = 0; c < C; ++c)
    for (int dom = 0; dom < domains; ++dom)
      for (int i = 0; i < per_cell; ++i)
        d.frames.push_back(make_frame(T, c, dom, mix_seed(seed, c, dom, i)));
  return d;
}

}  // namespace

TEST_CASE("save then load is the identity, bit for bit") {
  auto dir = test_dir();
  Dataset d = make_dataset(16, 2, 2, 3, 1);
  save_dataset(d, dir / "m.txt", dir / "p.bin");
  Dataset back = load_dataset(dir / "m.txt");
  REQUIRE(back.frames.size() == d.frames.size());
  CHECK(back.frame_length == d.frame_length);
  CHECK(back.class_count == d.class_count);
  for (size_t i = 0; i < d.frames.size(); ++i) {
    CHECK(back.frames[i].device_label == d.frames[i].device_label);
    CHECK(back.frames[i].domain_label == d.frames[i].domain_label);
    CHECK(back.frames[i].samples == d.frames[i].samples);  // float equality == byte equality
  }

  // Second round trip reproduces identical files.
  save_dataset(back, dir / "m2.txt", dir / "p2.bin");
  std::ifstream a(dir / "p.bin", std::ios::binary), b(dir / "p2.bin", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("empty dataset round trips with zero counts") {
  auto dir = test_dir();
  Dataset d;
  d.frame_length = 8;
  d.class_count = 3;
  save_dataset(d, dir / "empty.txt", dir / "empty.bin");
  Dataset back = load_dataset(dir / "empty.txt");
  CHECK(back.frames.empty());
  CHECK(back.class_count == 3);
  CHECK(fs::file_size(dir / "empty.bin") == 8);  // magic only
}

TEST_CASE("payload shorter than manifest declares is rejected") {
  auto dir = test_dir();
  Dataset d = make_dataset(16, 1, 1, 10, 2);
  save_dataset(d, dir / "mm.txt", dir / "pp.bin");
  // Chop one frame off the payload: 10 declared, 9 present.
  fs::resize_file(dir / "pp.bin", fs::file_size(dir / "pp.bin") - 2 * 16 * sizeof(float));
  CHECK_THROWS_WITH_AS(load_dataset(dir / "mm.txt"),
                       doctest::Contains("payload size mismatch"), std::runtime_error);
}

TEST_CASE("corrupt manifests and payloads are rejected with clear errors") {
  auto dir = test_dir();
  {
    std::ofstream bad(dir / "bad.txt");
    bad << "NOT-A-MANIFEST\n";
  }
  CHECK_THROWS_AS(load_dataset(dir / "bad.txt"), std::runtime_error);
  CHECK_THROWS_AS(load_dataset(dir / "missing.txt"), std::runtime_error);

  Dataset d = make_dataset(8, 1, 1, 1, 3);
  save_dataset(d, dir / "nf.txt", dir / "nf.bin");
  {
    // Poison one sample with a NaN.
    std::fstream f(dir / "nf.bin", std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    const float nan = std::nanf("");
    f.write(reinterpret_cast<const char*>(&nan), sizeof(nan));
  }
  CHECK_THROWS_WITH_AS(load_dataset(dir / "nf.txt"), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("normalize_frame: constants, RMS oracle, idempotence, errors") {
  IQFrame c;
  c.frame_length = 4;
  c.samples.assign(8, 2.0f);
  auto n = normalize_frame(c);
  for (float v : n.samples) CHECK(v == 1.0f);

  auto f = make_frame(64, 0, 0, 7);
  auto nf = normalize_frame(f);
  double ss = 0.0;
  for (float v : nf.samples) ss += static_cast<double>(v) * v;
  CHECK(std::sqrt(ss / 128.0) == doctest::Approx(1.0).epsilon(1e-6));

  auto nn = normalize_frame(nf);
  for (size_t i = 0; i < nf.samples.size(); ++i)
    CHECK(nn.samples[i] == doctest::Approx(nf.samples[i]).epsilon(1e-6));

  CHECK(normalize_frame(f, NormalizeMode::kNone).samples == f.samples);

  IQFrame z;
  z.frame_length = 4;
  z.samples.assign(8, 0.0f);
  CHECK_THROWS_AS(normalize_frame(z), std::domain_error);
}

TEST_CASE("downsample: identity, constants, alternating signs, mean preservation") {
  auto f = make_frame(256, 0, 0, 9);
  auto same = downsample(f, 256);
  CHECK(same.samples == f.samples);

  IQFrame c;
  c.frame_length = 512;
  c.samples.assign(1024, 3.25f);
  auto dc = downsample(c, 256);
  CHECK(dc.frame_length == 256);
  for (float v : dc.samples) CHECK(v == 3.25f);

  IQFrame alt;
  alt.frame_length = 512;
  alt.samples.resize(1024);
  for (size_t i = 0; i < alt.samples.size(); ++i) alt.samples[i] = (i % 2 == 0) ? 1.0f : -1.0f;
  auto da = downsample(alt, 256);
  for (float v : da.samples) CHECK(v == 0.0f);

  auto big = make_frame(1024, 0, 0, 10);
  auto ds = downsample(big, 256);
  for (int row = 0; row < 2; ++row) {
    double m_in = 0.0, m_out = 0.0;
    for (int i = 0; i < 1024; ++i) m_in += big.samples[row * 1024 + i];
    for (int i = 0; i < 256; ++i) m_out += ds.samples[row * 256 + i];
    CHECK(m_out / 256.0 == doctest::Approx(m_in / 1024.0).epsilon(1e-6));
  }

  CHECK_THROWS_AS(downsample(make_frame(100, 0, 0, 1), 256), std::invalid_argument);
}

TEST_CASE("split_dataset: degenerate, deterministic, exact stratified counts") {
  Dataset d = make_dataset(4, 2, 1, 100, 11);
  // Tag every frame so partitions can be compared as index sets.
  for (size_t i = 0; i < d.frames.size(); ++i) d.frames[i].samples[0] = static_cast<float>(i);

  auto all = split_dataset(d, {1.0, 0.0, 0.0}, 5);
  CHECK(all.train.frames.size() == 200);
  CHECK(all.val.frames.empty());
  CHECK(all.test.frames.empty());

  auto s1 = split_dataset(d, {0.8, 0.1, 0.1}, 5);
  auto s2 = split_dataset(d, {0.8, 0.1, 0.1}, 5);
  CHECK(s1.train.frames.size() == 160);
  CHECK(s1.val.frames.size() == 20);
  CHECK(s1.test.frames.size() == 20);
  for (int c = 0; c < 2; ++c) {
    CHECK(s1.train.cell_counts()[{c, 0}] == 80);
    CHECK(s1.val.cell_counts()[{c, 0}] == 10);
    CHECK(s1.test.cell_counts()[{c, 0}] == 10);
  }

  std::set<float> seen;
  for (const Dataset* part : {&s1.train, &s1.val, &s1.test})
    for (const auto& f : part->frames) CHECK(seen.insert(f.samples[0]).second);  // disjoint
  CHECK(seen.size() == 200);                                                     // exhaustive

  for (size_t i = 0; i < s1.train.frames.size(); ++i)
    CHECK(s1.train.frames[i].samples[0] == s2.train.frames[i].samples[0]);  // deterministic

  auto s3 = split_dataset(d, {0.8, 0.1, 0.1}, 6);
  bool any_diff = s3.train.frames.size() != s1.train.frames.size();
  for (size_t i = 0; !any_diff && i < s1.train.frames.size(); ++i)
    any_diff = s1.train.frames[i].samples[0] != s3.train.frames[i].samples[0];
  CHECK(any_diff);  // a different seed actually reshuffles

  Dataset tiny = make_dataset(4, 1, 1, 2, 12);
  CHECK_THROWS_AS(split_dataset(tiny, {0.8, 0.1, 0.1}, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(d, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
}
