#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rfsl/model.hpp"
#include "rfsl/signal.hpp"

namespace rfsl {

// One top-matching shapelet: where it matched and both waveforms, so the
// overlay can be drawn without touching the model again.
struct ExplanationEntry {
  int shapelet_id = 0;
  int length = 0;
  double activation = 0.0;
  int t_star = 0;      // best-match start index
  double d_min = 0.0;  // distance at t_star
  std::vector<double> matched;   // 2 x L window copied from the frame
  std::vector<double> shapelet;  // 2 x L shapelet values
};

// Top-k shapelets by activation (descending; ties keep bank order). The
// activations come from the same plain kernels the network reports, so the
// numbers match the model bit for bit.
std::vector<ExplanationEntry> explain(const Model& model, const IQFrame& frame, int top_k);

enum class MaskMode { kZeros, kNoise };

// Replaces [start, start+length) on both rows with zeros or seeded Gaussian
// noise at the frame's RMS level.
IQFrame mask_subsequence(const IQFrame& frame, int start, int length, MaskMode mode,
                         uint64_t seed = 0);

struct FaithfulnessRow {
  int length = 0;
  double baseline_accuracy = 0.0;
  double guided_accuracy = 0.0;  // mask the best-matched window of the
                                 // highest-activation shapelet of this length
  double random_accuracy = 0.0;  // mask a uniformly placed window instead
  double guided_drop() const { return baseline_accuracy - guided_accuracy; }
  double random_drop() const { return baseline_accuracy - random_accuracy; }
};

// Paired masking comparison: both arms score the exact same frames and mask
// windows of the same length; only the placement differs.
std::vector<FaithfulnessRow> faithfulness_eval(Model& model, const Dataset& dataset,
                                               std::span<const int> lengths, uint64_t seed,
                                               MaskMode mode = MaskMode::kZeros);

// CSV: one row per (entry, channel, offset) with both waveform values.
void export_explanation_csv(std::span<const ExplanationEntry> entries, const IQFrame& frame,
                            int frame_id, const std::filesystem::path& path);

// Self-contained SVG: stacked I/Q axes, frame trace, dashed overlays at the
// match locations.
void export_explanation_svg(std::span<const ExplanationEntry> entries, const IQFrame& frame,
                            int frame_id, const std::filesystem::path& path);

}  // namespace rfsl
