#include "rfsl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "rfsl/rng.hpp"

namespace rfsl {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<std::complex<double>> convolve_causal(const std::vector<std::complex<double>>& x,
                                                  const std::vector<std::complex<double>>& h) {
  std::vector<std::complex<double>> y(x.size());
  for (size_t n = 0; n < x.size(); ++n) {
    std::complex<double> acc{0.0, 0.0};
    const size_t kmax = std::min(h.size() - 1, n);
    for (size_t k = 0; k <= kmax; ++k) acc += h[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

void check_profile(const ImpairmentProfile& p) {
  const double fields[] = {p.cfo_ppm,  p.iq_gain_db,       p.iq_phase_deg,   p.dc_offset.real(),
                           p.dc_offset.imag(), p.pa_a3,    p.pa_a5,          p.phase_noise_std};
  for (double f : fields)
    if (!std::isfinite(f)) throw std::invalid_argument("impairment profile has non-finite field");
  if (p.phase_noise_std < 0.0)
    throw std::invalid_argument("phase_noise_std must be non-negative");
}

void check_channel(const ChannelProfile& c) {
  if (!std::isfinite(c.snr_db)) throw std::invalid_argument("channel snr_db must be finite");
  if (c.multipath_taps.empty()) throw std::invalid_argument("channel needs at least one tap");
  double energy = 0.0;
  for (auto t : c.multipath_taps) energy += std::norm(t);
  if (std::fabs(energy - 1.0) > 1e-6)
    throw std::invalid_argument("channel taps must carry unit energy");
}

// PA amplitude map g(r) = r + a3 r^3 + a5 r^5 must be strictly increasing on
// the amplitude range unit-power inputs actually reach (QPSK/RRC peaks stay
// well under 2.5x RMS).
bool pa_monotone(double a3, double a5) {
  for (double r = 0.0; r <= 2.5; r += 0.01) {
    const double slope = 1.0 + 3.0 * a3 * r * r + 5.0 * a5 * r * r * r * r;
    if (slope <= 0.0) return false;
  }
  return true;
}

}  // namespace

std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols) {
  if (sps < 1 || span_symbols < 1) throw std::invalid_argument("rrc_taps: bad geometry");
  if (rolloff < 0.0 || rolloff > 1.0) throw std::invalid_argument("rrc_taps: rolloff in [0,1]");
  const int half = span_symbols * sps;
  std::vector<double> h(static_cast<size_t>(2 * half) + 1);
  for (int k = -half; k <= half; ++k) {
    const double t = static_cast<double>(k) / sps;  // in symbol periods
    double v;
    if (k == 0) {
      v = 1.0 - rolloff + 4.0 * rolloff / kPi;
    } else if (rolloff > 0.0 && std::fabs(std::fabs(4.0 * rolloff * t) - 1.0) < 1e-9) {
      const double a = kPi / (4.0 * rolloff);
      v = (rolloff / std::sqrt(2.0)) *
          ((1.0 + 2.0 / kPi) * std::sin(a) + (1.0 - 2.0 / kPi) * std::cos(a));
    } else {
      const double num =
          std::sin(kPi * t * (1.0 - rolloff)) + 4.0 * rolloff * t * std::cos(kPi * t * (1.0 + rolloff));
      const double den = kPi * t * (1.0 - 16.0 * rolloff * rolloff * t * t);
      v = num / den;
    }
    h[static_cast<size_t>(k + half)] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double inv = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= inv;
  return h;
}

std::vector<std::complex<double>> qpsk_rrc_payload(uint64_t seed, int length, int sps,
                                                   double rolloff, int span_symbols) {
  if (length < 1) throw std::invalid_argument("qpsk_rrc_payload: length must be positive");
  const auto h = rrc_taps(sps, rolloff, span_symbols);
  const int len_sym = (length + sps - 1) / sps;
  const int n_sym = len_sym + 2 * span_symbols;

  auto rng = make_rng(seed);
  std::uniform_int_distribution<int> bits(0, 3);
  const double amp = 1.0 / std::sqrt(2.0);
  std::vector<std::complex<double>> train(static_cast<size_t>(n_sym) * sps, {0.0, 0.0});
  for (int m = 0; m < n_sym; ++m) {
    const int b = bits(rng);
    train[static_cast<size_t>(m) * sps] = {(b & 1) ? amp : -amp, (b & 2) ? amp : -amp};
  }

  // Full convolution, then drop the filter delay plus the span of warm-up
  // symbols so sample 0 sits at the first wanted symbol's peak. sqrt(sps)
  // restores unit average power (the unit-energy pulse spreads each symbol
  // over sps samples), keeping PA coefficients on their calibrated scale.
  const int offset = 2 * span_symbols * sps;
  const double gain = std::sqrt(static_cast<double>(sps));
  std::vector<std::complex<double>> out(static_cast<size_t>(length));
  for (int n = 0; n < length; ++n) {
    const int conv_n = n + offset;
    std::complex<double> acc{0.0, 0.0};
    const int kmin = std::max(0, conv_n - static_cast<int>(train.size()) + 1);
    const int kmax = std::min(static_cast<int>(h.size()) - 1, conv_n);
    for (int k = kmin; k <= kmax; ++k) acc += h[static_cast<size_t>(k)] * train[static_cast<size_t>(conv_n - k)];
    out[static_cast<size_t>(n)] = gain * acc;
  }
  return out;
}

std::vector<ImpairmentProfile> make_device_fleet(int device_count, double spread, uint64_t seed) {
  if (device_count < 2) throw std::invalid_argument("fleet needs at least 2 devices");
  if (!(spread >= 0.0) || !std::isfinite(spread))
    throw std::invalid_argument("spread must be finite and non-negative");
  std::vector<ImpairmentProfile> fleet(static_cast<size_t>(device_count));
  for (int m = 0; m < device_count; ++m) {
    auto rng = make_rng(mix_seed(seed, static_cast<uint64_t>(m)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ImpairmentProfile& p = fleet[static_cast<size_t>(m)];
    p.cfo_ppm = 20.0 * u(rng) * spread;
    p.iq_gain_db = 1.0 * u(rng) * spread;
    p.iq_phase_deg = 5.0 * u(rng) * spread;
    p.dc_offset = {0.02 * u(rng) * spread, 0.02 * u(rng) * spread};
    p.pa_a3 = 0.02 * u(rng) * spread;
    p.pa_a5 = 0.002 * u(rng) * spread;
    p.phase_noise_std = (0.0005 + 0.0015 * u01(rng)) * spread;
    if (!pa_monotone(p.pa_a3, p.pa_a5))
      throw std::invalid_argument("device " + std::to_string(m) +
                                  ": PA polynomial not monotone; reduce spread");
  }
  for (int a = 0; a < device_count; ++a) {
    for (int b = a + 1; b < device_count; ++b) {
      const ImpairmentProfile &pa = fleet[a], &pb = fleet[b];
      const double d = std::max({std::fabs(pa.cfo_ppm - pb.cfo_ppm),
                                 std::fabs(pa.iq_gain_db - pb.iq_gain_db),
                                 std::fabs(pa.iq_phase_deg - pb.iq_phase_deg),
                                 std::abs(pa.dc_offset - pb.dc_offset),
                                 std::fabs(pa.pa_a3 - pb.pa_a3),
                                 std::fabs(pa.pa_a5 - pb.pa_a5),
                                 std::fabs(pa.phase_noise_std - pb.phase_noise_std)});
      if (d <= 0.0)
        throw std::invalid_argument("devices " + std::to_string(a) + " and " + std::to_string(b) +
                                    " are identical; increase spread");
    }
  }
  return fleet;
}

IQFrame synth_frame(const ImpairmentProfile& profile, const ChannelProfile& channel,
                    uint64_t payload_seed, int frame_length) {
  check_profile(profile);
  check_channel(channel);
  if (frame_length < 8) throw std::invalid_argument("synth_frame: frame length too short");

  auto x = qpsk_rrc_payload(mix_seed(payload_seed, 0xA11CEull), frame_length);

  // (2) PA nonlinearity y = x + a3 x|x|^2 + a5 x|x|^4.
  for (auto& v : x) {
    const double p2 = std::norm(v);
    v *= 1.0 + profile.pa_a3 * p2 + profile.pa_a5 * p2 * p2;
  }

  // (3) I/Q imbalance: I' = g I, Q' = Q cos(phi) + I sin(phi).
  const double g = std::pow(10.0, profile.iq_gain_db / 20.0);
  const double phi = profile.iq_phase_deg * kPi / 180.0;
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  for (auto& v : x) v = {g * v.real(), v.imag() * cphi + v.real() * sphi};

  // (4) DC offset.
  for (auto& v : x) v += profile.dc_offset;

  // (5) CFO rotation.
  const double f_off = profile.cfo_ppm * 1e-6 * kCarrierCyclesPerSample;  // cycles/sample
  for (size_t n = 0; n < x.size(); ++n)
    x[n] *= std::polar(1.0, 2.0 * kPi * f_off * static_cast<double>(n));

  // (6) Random-walk phase noise.
  {
    auto rng = make_rng(mix_seed(payload_seed, 0xFEEDull));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double theta = 0.0;
    for (auto& v : x) {
      theta += profile.phase_noise_std * gauss(rng);
      v *= std::polar(1.0, theta);
    }
  }

  // (7) Multipath + AWGN.
  auto y = convolve_causal(x, channel.multipath_taps);
  if (channel.snr_db < kNoiselessSnrDb) {
    double psig = 0.0;
    for (auto v : y) psig += std::norm(v);
    psig /= static_cast<double>(y.size());
    const double nvar = psig * std::pow(10.0, -channel.snr_db / 10.0);
    const double namp = std::sqrt(nvar / 2.0);
    auto rng = make_rng(mix_seed(payload_seed, 0xB0Bull));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : y) v += std::complex<double>(namp * gauss(rng), namp * gauss(rng));
  }

  // (8) Emit 2 x T and unit-power normalize.
  IQFrame f;
  f.frame_length = frame_length;
  f.samples.resize(static_cast<size_t>(2) * frame_length);
  for (int n = 0; n < frame_length; ++n) {
    f.samples[static_cast<size_t>(n)] = static_cast<float>(y[static_cast<size_t>(n)].real());
    f.samples[static_cast<size_t>(frame_length) + n] =
        static_cast<float>(y[static_cast<size_t>(n)].imag());
  }
  return normalize_frame(f, NormalizeMode::kUnitPower);
}

Dataset synth_dataset(const std::vector<ImpairmentProfile>& fleet,
                      const std::vector<ChannelProfile>& channels, int frames_per_cell,
                      uint64_t seed, int frame_length) {
  if (fleet.empty() || channels.empty())
    throw std::invalid_argument("synth_dataset: fleet and channel list must be nonempty");
  if (frames_per_cell < 0) throw std::invalid_argument("synth_dataset: negative frame count");
  if (frame_length < 1) throw std::invalid_argument("synth_dataset: frame_length must be >= 1");

  std::vector<size_t> chan_order(channels.size());
  std::iota(chan_order.begin(), chan_order.end(), 0);
  std::sort(chan_order.begin(), chan_order.end(), [&](size_t a, size_t b) {
    return channels[a].domain_label < channels[b].domain_label;
  });
  for (size_t i = 1; i < chan_order.size(); ++i)
    if (channels[chan_order[i]].domain_label == channels[chan_order[i - 1]].domain_label)
      throw std::invalid_argument("synth_dataset: duplicate domain label");

  Dataset ds;
  ds.frame_length = frame_length;
  ds.class_count = static_cast<int>(fleet.size());
  ds.frames.reserve(fleet.size() * channels.size() * static_cast<size_t>(frames_per_cell));
  for (size_t c = 0; c < fleet.size(); ++c) {
    for (size_t d : chan_order) {
      for (int i = 0; i < frames_per_cell; ++i) {
        const uint64_t ps = mix_seed(seed, static_cast<uint64_t>(c),
                                     static_cast<uint64_t>(channels[d].domain_label),
                                     static_cast<uint64_t>(i));
        IQFrame f = synth_frame(fleet[c], channels[d], ps, ds.frame_length);
        f.device_label = static_cast<int>(c);
        f.domain_label = channels[d].domain_label;
        ds.frames.push_back(std::move(f));
      }
    }
  }
  return ds;
}

}  // namespace rfsl
