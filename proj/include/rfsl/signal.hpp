#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rfsl {

// One I/Q capture: samples holds the I row (frame_length floats) followed by
// the Q row. Samples are kept as float32 so disk round-trips are byte-exact.
struct IQFrame {
  int frame_length = 0;
  int device_label = 0;
  int domain_label = 0;
  std::vector<float> samples;

  float i_sample(int n) const { return samples[n]; }
  float q_sample(int n) const { return samples[static_cast<size_t>(frame_length) + n]; }
};

// Frames are kept grouped by (device_label, domain_label) in ascending label
// order; the payload format stores only per-cell counts, so grouping is what
// makes labels recoverable on load.
struct Dataset {
  int frame_length = 0;
  int class_count = 0;
  std::vector<IQFrame> frames;

  std::vector<int> domain_labels() const;                  // sorted, unique
  std::map<std::pair<int, int>, int64_t> cell_counts() const;  // (class, domain) -> frames
};

struct DatasetManifest {
  int frame_length = 0;
  int class_count = 0;
  std::vector<int> domains;
  std::map<std::pair<int, int>, int64_t> counts;
  std::string payload_path;  // resolved relative to the manifest's directory
  std::string encoding = "float32 little-endian frame-major iq-rows";
};

DatasetManifest manifest_for(const Dataset& dataset, std::string payload_path);

// Text manifest + raw float32 payload, both guarded by magic headers.
// save_dataset stably sorts frames into canonical (class, domain) grouping;
// load(save(D)) is the identity for any canonically grouped dataset.
void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                  const std::filesystem::path& payload_path);
Dataset load_dataset(const std::filesystem::path& manifest_path);

enum class NormalizeMode { kUnitPower, kNone };

// Unit-power mode divides both rows by the RMS over all 2*T entries.
// Throws on a zero-energy frame.
IQFrame normalize_frame(const IQFrame& frame, NormalizeMode mode = NormalizeMode::kUnitPower);

// Block-mean decimation: each output sample is the mean of floor(T/target_T)
// consecutive input samples, per row; leftover tail samples are dropped.
IQFrame downsample(const IQFrame& frame, int target_T = 256);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified per (class, domain) cell, seed-deterministic, disjoint and
// exhaustive. Per-cell partition sizes use largest-remainder rounding.
DatasetSplit split_dataset(const Dataset& dataset, SplitRatios ratios, uint64_t seed);

}  // namespace rfsl
