#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "rfsl/signal.hpp"

namespace rfsl {

// Per-device hardware signature. The class signal of the synthetic data is
// exactly this parameter set; everything else is shared randomness.
struct ImpairmentProfile {
  double cfo_ppm = 0.0;        // carrier frequency offset, parts per million
  double iq_gain_db = 0.0;     // I/Q amplitude mismatch
  double iq_phase_deg = 0.0;   // I/Q phase mismatch
  std::complex<double> dc_offset{0.0, 0.0};
  double pa_a3 = 0.0;          // odd-order memoryless PA polynomial
  double pa_a5 = 0.0;
  double phase_noise_std = 0.0;  // radians per sample, random-walk increment
};

// Propagation environment == domain. Taps must carry unit energy.
// snr_db must be finite; values >= kNoiselessSnrDb add no noise at all
// (the would-be noise amplitude is below double precision anyway).
struct ChannelProfile {
  double snr_db = 30.0;
  std::vector<std::complex<double>> multipath_taps{{1.0, 0.0}};
  int domain_label = 0;
};

constexpr double kNoiselessSnrDb = 300.0;

// Carrier-to-sample-rate ratio used to turn ppm into cycles/sample
// (think 2.4 GHz carrier captured at 20 MS/s).
constexpr double kCarrierCyclesPerSample = 120.0;

// Random QPSK symbols, root-raised-cosine shaped at sps samples/symbol.
// Returns exactly `length` complex baseband samples, unnormalized.
std::vector<std::complex<double>> qpsk_rrc_payload(uint64_t seed, int length, int sps = 4,
                                                   double rolloff = 0.35, int span_symbols = 8);

// Unit-energy root-raised-cosine taps (span_symbols each side of center).
std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols);

// C seeded profiles, pairwise distinct, PA map checked monotone on the
// amplitude range seen by unit-power inputs. spread scales every impairment
// magnitude; spread 0 collapses the fleet and is rejected.
std::vector<ImpairmentProfile> make_device_fleet(int device_count, double spread, uint64_t seed);

// Impairment + channel pipeline, in order: QPSK/RRC payload -> PA
// nonlinearity -> I/Q imbalance -> DC offset -> CFO rotation -> random-walk
// phase noise -> multipath convolution + AWGN -> unit-power normalize.
IQFrame synth_frame(const ImpairmentProfile& profile, const ChannelProfile& channel,
                    uint64_t payload_seed, int frame_length = 256);

// Full grid: every device x every channel x frames_per_cell, labeled and in
// canonical (class, domain) order. Bit-identical under the same seed.
Dataset synth_dataset(const std::vector<ImpairmentProfile>& fleet,
                      const std::vector<ChannelProfile>& channels, int frames_per_cell,
                      uint64_t seed, int frame_length = 256);

}  // namespace rfsl
