// SPDX-License-Identifier: Apache-2.0
//
// Channel statistics on multipath sets: power delay profile, RMS delay
// spread, frequency correlation, random-phase impulse response and
// segment-wise Shannon capacity.

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "som/scenegen.hpp"

namespace som {

struct Impulse {
  double delay_s = 0.0;
  double power_w = 0.0;
};
using PdpEntry = std::vector<Impulse>;

PdpEntry pdp(const MultipathSet& paths);
double rms_delay_spread(const PdpEntry& entry);
double mean_delay(const PdpEntry& entry);

std::vector<std::complex<double>> fcf(const PdpEntry& entry, const std::vector<double>& delta_f_hz);
// |xi(df)| / xi(0)
std::vector<double> fcf_normalized(const PdpEntry& entry, const std::vector<double>& delta_f_hz);

// sqrt(P_n) exp(j phi_n), phi_n ~ U[0, 2 pi) per valid path.
std::vector<std::complex<double>> synthesize_cir(const MultipathSet& paths, std::uint64_t seed);
double draw_phase(Rng& rng);

struct CapacityConfig {
  double bandwidth_hz = 20e6;
  int segments = 128;
  double noise_psd_dbm_per_hz = -174.0;
  std::uint64_t seed = 0;

  void validate() const;
  double noise_psd_w_per_hz() const;
};

// Per-segment received power |H(f_s)|^2 / S at baseband offsets
// f_s = -B/2 + (s - 1/2) B/S.
std::vector<double> segment_powers(const std::vector<std::complex<double>>& taps, const MultipathSet& paths,
                                   const CapacityConfig& cfg);
// (B/S) sum_s log2(1 + P_s / (N0 B / S))
double capacity_from_segment_powers(const std::vector<double>& powers, const CapacityConfig& cfg);
double channel_capacity(const MultipathSet& paths, const CapacityConfig& cfg);

}  // namespace som
