#include "rfsl/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rfsl/inference.hpp"
#include "rfsl/rng.hpp"
#include "rfsl/shapelet.hpp"

namespace rfsl {

namespace {

std::vector<double> window_copy(const IQFrame& frame, int start, int length) {
  std::vector<double> w(static_cast<size_t>(2 * length));
  for (int o = 0; o < length; ++o) {
    w[o] = frame.i_sample(start + o);
    w[static_cast<size_t>(length) + o] = frame.q_sample(start + o);
  }
  return w;
}

double frame_rms(const IQFrame& frame) {
  double ss = 0.0;
  for (float v : frame.samples) ss += static_cast<double>(v) * v;
  return std::sqrt(ss / static_cast<double>(frame.samples.size()));
}

}  // namespace

std::vector<ExplanationEntry> explain(const Model& model, const IQFrame& frame, int top_k) {
  const ModelConfig& cfg = model.config();
  if (frame.frame_length != cfg.frame_length)
    throw std::invalid_argument("explain: frame length " + std::to_string(frame.frame_length) +
                                " does not match model frame length " +
                                std::to_string(cfg.frame_length));
  const int K = cfg.shapelets.total_count();
  if (top_k < 1 || top_k > K)
    throw std::invalid_argument("explain: top_k must be in [1, " + std::to_string(K) + "], got " +
                                std::to_string(top_k));

  // Same plain kernels the network reports, so these activations match the
  // model's [1, K] feature row bit for bit.
  const std::vector<double> acts = model.activation_values(frame);
  const std::vector<int> lengths = shapelet_lengths(cfg.shapelets);
  const std::vector<const Tensor*> bank = model.shapelet_tensors();

  std::vector<int> order(static_cast<size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return acts[a] > acts[b]; });

  std::vector<ExplanationEntry> out;
  out.reserve(static_cast<size_t>(top_k));
  for (int rank = 0; rank < top_k; ++rank) {
    const int k = order[rank];
    const int L = lengths[k];
    ExplanationEntry e;
    e.shapelet_id = k;
    e.length = L;
    e.activation = acts[k];
    auto [t_star, d_min] = best_match(frame, bank[k]->value, cfg.shapelets.length_normalize);
    e.t_star = t_star;
    e.d_min = d_min;
    e.matched = window_copy(frame, t_star, L);
    e.shapelet = bank[k]->value;
    out.push_back(std::move(e));
  }
  return out;
}

IQFrame mask_subsequence(const IQFrame& frame, int start, int length, MaskMode mode,
                         uint64_t seed) {
  if (start < 0 || length < 0 || start + length > frame.frame_length)
    throw std::invalid_argument("mask_subsequence: window [" + std::to_string(start) + ", " +
                                std::to_string(start + length) + ") out of range for frame of " +
                                std::to_string(frame.frame_length) + " samples");
  IQFrame out = frame;
  if (length == 0) return out;
  const int T = frame.frame_length;
  if (mode == MaskMode::kZeros) {
    for (int o = 0; o < length; ++o) {
      out.samples[static_cast<size_t>(start + o)] = 0.0f;
      out.samples[static_cast<size_t>(T + start + o)] = 0.0f;
    }
    return out;
  }
  // Noise fill at the frame's own RMS level, so the mask does not change the
  // frame's overall energy scale.
  const double rms = frame_rms(frame);
  auto rng = make_rng(seed);
  std::normal_distribution<double> dist(0.0, rms);
  for (int o = 0; o < length; ++o) {
    out.samples[static_cast<size_t>(start + o)] = static_cast<float>(dist(rng));
    out.samples[static_cast<size_t>(T + start + o)] = static_cast<float>(dist(rng));
  }
  return out;
}

std::vector<FaithfulnessRow> faithfulness_eval(Model& model, const Dataset& dataset,
                                               std::span<const int> lengths, uint64_t seed,
                                               MaskMode mode) {
  if (dataset.frames.empty()) throw std::invalid_argument("faithfulness_eval: empty dataset");
  if (lengths.empty()) throw std::invalid_argument("faithfulness_eval: no mask lengths given");
  const ModelConfig& cfg = model.config();
  const std::vector<int> bank_lengths = shapelet_lengths(cfg.shapelets);
  const int T = cfg.frame_length;
  for (int L : lengths) {
    if (std::find(bank_lengths.begin(), bank_lengths.end(), L) == bank_lengths.end())
      throw std::invalid_argument("faithfulness_eval: no shapelet of length " + std::to_string(L) +
                                  " in the bank");
    if (L > T)
      throw std::invalid_argument("faithfulness_eval: mask length " + std::to_string(L) +
                                  " exceeds frame length " + std::to_string(T));
  }

  const size_t N = dataset.frames.size();
  std::vector<const IQFrame*> originals(N);
  for (size_t i = 0; i < N; ++i) originals[i] = &dataset.frames[i];

  auto accuracy_of = [&](std::span<const int> preds) {
    int correct = 0;
    for (size_t i = 0; i < N; ++i)
      if (preds[i] == dataset.frames[i].device_label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(N);
  };

  const std::vector<int> base_preds = predict_batch(model, originals);
  const double baseline = accuracy_of(base_preds);

  // Activations do not depend on the mask length, so compute them once per
  // frame and reuse across the per-length arms.
  std::vector<std::vector<double>> acts(N);
  for (size_t i = 0; i < N; ++i) acts[i] = model.activation_values(dataset.frames[i]);

  const std::vector<const Tensor*> bank = model.shapelet_tensors();

  std::vector<FaithfulnessRow> rows;
  for (int L : lengths) {
    std::vector<IQFrame> guided(N), random(N);
    for (size_t i = 0; i < N; ++i) {
      const IQFrame& frame = dataset.frames[i];
      // Highest-activation shapelet restricted to this length; ties keep bank order.
      int best_k = -1;
      for (int k = 0; k < static_cast<int>(bank_lengths.size()); ++k) {
        if (bank_lengths[k] != L) continue;
        if (best_k < 0 || acts[i][k] > acts[i][best_k]) best_k = k;
      }
      const int t_star =
          best_match(frame, bank[best_k]->value, cfg.shapelets.length_normalize).first;
      guided[i] = mask_subsequence(frame, t_star, L, mode, mix_seed(seed, i, L, 1));

      auto rng = make_rng(mix_seed(seed, i, L, 2));
      std::uniform_int_distribution<int> start_dist(0, T - L);
      random[i] = mask_subsequence(frame, start_dist(rng), L, mode, mix_seed(seed, i, L, 3));
    }

    std::vector<const IQFrame*> guided_ptrs(N), random_ptrs(N);
    for (size_t i = 0; i < N; ++i) {
      guided_ptrs[i] = &guided[i];
      random_ptrs[i] = &random[i];
    }
    FaithfulnessRow row;
    row.length = L;
    row.baseline_accuracy = baseline;
    row.guided_accuracy = accuracy_of(predict_batch(model, guided_ptrs));
    row.random_accuracy = accuracy_of(predict_batch(model, random_ptrs));
    rows.push_back(row);
  }
  return rows;
}

namespace {

// Shortest decimal that round-trips a double.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char trial[40];
      std::snprintf(trial, sizeof(trial), "%.*g", prec, v);
      std::sscanf(trial, "%lf", &back);
      if (back == v) return trial;
    }
  }
  return buf;
}

}  // namespace

void export_explanation_csv(std::span<const ExplanationEntry> entries, const IQFrame& frame,
                            int frame_id, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_explanation_csv: cannot open " + path.string());
  out << "frame_id,shapelet_id,length,t_star,activation,channel,offset,signal_value,"
         "shapelet_value\n";
  for (const ExplanationEntry& e : entries) {
    for (int c = 0; c < 2; ++c) {
      for (int o = 0; o < e.length; ++o) {
        const size_t idx = static_cast<size_t>(c) * e.length + o;
        out << frame_id << ',' << e.shapelet_id << ',' << e.length << ',' << e.t_star << ','
            << fmt(e.activation) << ',' << c << ',' << o << ',' << fmt(e.matched[idx]) << ','
            << fmt(e.shapelet[idx]) << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("export_explanation_csv: write failed for " + path.string());
  (void)frame;
}

namespace {

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

struct AxisLayout {
  double x0, y0, w, h;  // plot box in pixels
  double vmax;          // symmetric value range [-vmax, vmax]
  int T;

  double px(double t) const { return x0 + (T > 1 ? t / (T - 1) * w : 0.5 * w); }
  double py(double v) const { return y0 + 0.5 * h - v / vmax * 0.5 * h * 0.92; }
};

void draw_polyline(std::ofstream& out, const AxisLayout& ax, std::span<const double> ys,
                   double t_offset, const char* color, bool dashed, double width) {
  out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"";
  if (dashed) out << " stroke-dasharray=\"5 4\"";
  out << " points=\"";
  char buf[64];
  for (size_t j = 0; j < ys.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", ax.px(t_offset + static_cast<double>(j)),
                  ax.py(ys[j]));
    out << buf;
  }
  out << "\"/>\n";
}

}  // namespace

void export_explanation_svg(std::span<const ExplanationEntry> entries, const IQFrame& frame,
                            int frame_id, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_explanation_svg: cannot open " + path.string());

  const int T = frame.frame_length;
  const double width = 960, height = 540;
  const double ml = 56, mr = 190, mt = 44, mb = 28, gap = 26;
  const double plot_w = width - ml - mr;
  const double plot_h = (height - mt - mb - gap) / 2;

  double vmax = 0.0;
  for (float v : frame.samples) vmax = std::max(vmax, static_cast<double>(std::fabs(v)));
  for (const ExplanationEntry& e : entries)
    for (double v : e.shapelet) vmax = std::max(vmax, std::fabs(v));
  if (vmax <= 0.0) vmax = 1.0;

  AxisLayout ax_i{ml, mt, plot_w, plot_h, vmax, T};
  AxisLayout ax_q{ml, mt + plot_h + gap, plot_w, plot_h, vmax, T};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "  <text x=\"" << ml << "\" y=\"26\" font-family=\"sans-serif\" font-size=\"15\">frame "
      << frame_id << " &#8212; top shapelet matches</text>\n";

  std::vector<double> row(static_cast<size_t>(T));
  for (int c = 0; c < 2; ++c) {
    const AxisLayout& ax = (c == 0) ? ax_i : ax_q;
    out << "  <rect x=\"" << ax.x0 << "\" y=\"" << ax.y0 << "\" width=\"" << ax.w
        << "\" height=\"" << ax.h << "\" fill=\"none\" stroke=\"#888\"/>\n"
        << "  <line x1=\"" << ax.x0 << "\" y1=\"" << ax.py(0.0) << "\" x2=\"" << ax.x0 + ax.w
        << "\" y2=\"" << ax.py(0.0) << "\" stroke=\"#ddd\"/>\n"
        << "  <text x=\"" << ax.x0 - 34 << "\" y=\"" << ax.y0 + ax.h / 2
        << "\" font-family=\"sans-serif\" font-size=\"14\">" << (c == 0 ? 'I' : 'Q')
        << "</text>\n";
    for (int t = 0; t < T; ++t)
      row[t] = (c == 0) ? frame.i_sample(t) : frame.q_sample(t);
    draw_polyline(out, ax, row, 0.0, "#3a3a4a", false, 1.0);
    for (size_t e = 0; e < entries.size(); ++e) {
      const ExplanationEntry& entry = entries[e];
      std::span<const double> ys(entry.shapelet.data() + static_cast<size_t>(c) * entry.length,
                                 static_cast<size_t>(entry.length));
      draw_polyline(out, ax, ys, entry.t_star, kPalette[e % std::size(kPalette)], true, 1.6);
    }
  }

  double ly = mt + 8;
  const double lx = ml + plot_w + 14;
  for (size_t e = 0; e < entries.size(); ++e) {
    const ExplanationEntry& entry = entries[e];
    const char* color = kPalette[e % std::size(kPalette)];
    char label[96];
    std::snprintf(label, sizeof(label), "s%d  L=%d  t*=%d  a=%.4g", entry.shapelet_id,
                  entry.length, entry.t_star, entry.activation);
    out << "  <line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 22 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"1.6\" stroke-dasharray=\"5 4\"/>\n"
        << "  <text x=\"" << lx + 28 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << label << "</text>\n";
    ly += 18;
  }

  out << "</svg>\n";
  if (!out) throw std::runtime_error("export_explanation_svg: write failed for " + path.string());
}

}  // namespace rfsl
