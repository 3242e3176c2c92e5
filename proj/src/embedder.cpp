#include "rfsl/embedder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rfsl {

namespace {

void check_config(const EmbedderConfig& cfg) {
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
    throw std::invalid_argument("embedder: kernel_size must be odd");
  if (cfg.layer_count < 1) throw std::invalid_argument("embedder: needs at least one layer");
  if (cfg.stride < 1) throw std::invalid_argument("embedder: stride must be positive");
  if (cfg.hidden_channels < 1) throw std::invalid_argument("embedder: hidden_channels must be positive");
}

}  // namespace

int embedder_output_length(const EmbedderConfig& cfg, int frame_length) {
  check_config(cfg);
  const int pad = (cfg.kernel_size - 1) / 2;
  int t = frame_length;
  for (int l = 0; l < cfg.layer_count; ++l) t = (t + 2 * pad - cfg.kernel_size) / cfg.stride + 1;
  return t;
}

void embedder_tensor_specs(const EmbedderConfig& cfg, int d_h, std::vector<TensorSpec>& out) {
  check_config(cfg);
  int in_ch = 2;
  for (int l = 0; l < cfg.layer_count; ++l) {
    const int out_ch = (l == cfg.layer_count - 1) ? d_h : cfg.hidden_channels;
    const int fan_in = cfg.kernel_size * in_ch;
    const std::string base = "embedder.conv" + std::to_string(l);
    out.push_back({base + ".w", {fan_in, out_ch}, "embedder", InitKind::kGaussian,
                   1.0 / std::sqrt(static_cast<double>(fan_in))});
    out.push_back({base + ".b", {1, out_ch}, "embedder", InitKind::kZero, 0.0});
    in_ch = out_ch;
  }
}

Value embed_frame(Tape& tape, const EmbedderConfig& cfg, std::span<const Value> params,
                  const IQFrame& frame) {
  check_config(cfg);
  if (static_cast<int>(params.size()) != 2 * cfg.layer_count)
    throw std::invalid_argument("embedder: wrong parameter count");
  const int T = frame.frame_length;
  if (static_cast<int>(frame.samples.size()) != 2 * T)
    throw std::invalid_argument("embedder: malformed frame");

  // Time-major [T, 2] input: channel 0 = I, channel 1 = Q.
  std::vector<double> tm(static_cast<size_t>(T) * 2);
  for (int t = 0; t < T; ++t) {
    tm[static_cast<size_t>(t) * 2] = frame.samples[static_cast<size_t>(t)];
    tm[static_cast<size_t>(t) * 2 + 1] = frame.samples[static_cast<size_t>(T) + t];
  }
  Value x = tape.input({T, 2}, tm);

  const int pad = (cfg.kernel_size - 1) / 2;
  for (int l = 0; l < cfg.layer_count; ++l) {
    x = tape.conv1d(x, params[static_cast<size_t>(2 * l)], params[static_cast<size_t>(2 * l + 1)],
                    cfg.kernel_size, cfg.stride, pad);
    if (l + 1 < cfg.layer_count) x = tape.gelu(x);
  }
  return x;
}

}  // namespace rfsl
