// SPDX-License-Identifier: Apache-2.0

#include "som/chanstats.hpp"

#include <cmath>

namespace som {

PdpEntry pdp(const MultipathSet& paths) {
  PdpEntry out;
  for (const PathEntry& p : paths.paths) {
    if (!p.valid) continue;
    out.push_back(Impulse{p.delay_s, p.power_ratio * paths.total_power_w});
  }
  return out;
}

double mean_delay(const PdpEntry& entry) {
  double p = 0.0, pt = 0.0;
  for (const Impulse& i : entry) {
    p += i.power_w;
    pt += i.power_w * i.delay_s;
  }
  if (!(p > 0.0)) throw DomainError("mean_delay: zero total power");
  return pt / p;
}

double rms_delay_spread(const PdpEntry& entry) {
  double p = 0.0;
  for (const Impulse& i : entry) p += i.power_w;
  if (!(p > 0.0)) throw DomainError("rms_delay_spread: zero total power");
  const double mean = mean_delay(entry);
  // central form avoids cancellation at large absolute delays
  double m2 = 0.0;
  for (const Impulse& i : entry) m2 += i.power_w * (i.delay_s - mean) * (i.delay_s - mean);
  return std::sqrt(std::max(0.0, m2 / p));
}

std::vector<std::complex<double>> fcf(const PdpEntry& entry, const std::vector<double>& delta_f_hz) {
  std::vector<std::complex<double>> out;
  out.reserve(delta_f_hz.size());
  for (double df : delta_f_hz) {
    std::complex<double> xi = 0.0;
    for (const Impulse& i : entry) xi += i.power_w * std::polar(1.0, -2.0 * kPi * df * i.delay_s);
    out.push_back(xi);
  }
  return out;
}

std::vector<double> fcf_normalized(const PdpEntry& entry, const std::vector<double>& delta_f_hz) {
  double xi0 = 0.0;
  for (const Impulse& i : entry) xi0 += i.power_w;
  if (!(xi0 > 0.0)) throw DomainError("fcf_normalized: zero total power");
  std::vector<double> out;
  for (const auto& v : fcf(entry, delta_f_hz)) out.push_back(std::abs(v) / xi0);
  return out;
}

double draw_phase(Rng& rng) {
  double phi = 2.0 * kPi * rng.uniform();
  if (phi >= 2.0 * kPi) phi = 0.0;
  return phi;
}

std::vector<std::complex<double>> synthesize_cir(const MultipathSet& paths, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::complex<double>> taps;
  for (const Impulse& i : pdp(paths)) taps.push_back(std::polar(std::sqrt(i.power_w), draw_phase(rng)));
  return taps;
}

void CapacityConfig::validate() const {
  if (segments < 1) throw ConfigError("capacity: segments must be >= 1");
  if (!(bandwidth_hz > 0)) throw ConfigError("capacity: bandwidth must be > 0");
  if (!std::isfinite(noise_psd_dbm_per_hz)) throw ConfigError("capacity: noise density must be finite");
}

double CapacityConfig::noise_psd_w_per_hz() const { return std::pow(10.0, noise_psd_dbm_per_hz / 10.0) * 1e-3; }

std::vector<double> segment_powers(const std::vector<std::complex<double>>& taps, const MultipathSet& paths,
                                   const CapacityConfig& cfg) {
  cfg.validate();
  const PdpEntry entry = pdp(paths);
  if (taps.size() != entry.size()) throw ShapeError("segment_powers: one tap per valid path expected");
  const double b = cfg.bandwidth_hz;
  const int s_count = cfg.segments;
  std::vector<double> out(static_cast<std::size_t>(s_count));
  for (int s = 0; s < s_count; ++s) {
    const double f = -b / 2.0 + (s + 0.5) * b / s_count;
    std::complex<double> h = 0.0;
    for (std::size_t n = 0; n < taps.size(); ++n) h += taps[n] * std::polar(1.0, -2.0 * kPi * f * entry[n].delay_s);
    out[static_cast<std::size_t>(s)] = std::norm(h) / s_count;
  }
  return out;
}

double capacity_from_segment_powers(const std::vector<double>& powers, const CapacityConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(powers.size()) != cfg.segments) throw ShapeError("capacity: one power per segment expected");
  const double seg_bw = cfg.bandwidth_hz / cfg.segments;
  const double noise = cfg.noise_psd_w_per_hz() * seg_bw;
  double c = 0.0;
  for (double p : powers) c += std::log2(1.0 + p / noise);
  return seg_bw * c;
}

double channel_capacity(const MultipathSet& paths, const CapacityConfig& cfg) {
  return capacity_from_segment_powers(segment_powers(synthesize_cir(paths, cfg.seed), paths, cfg), cfg);
}

}  // namespace som
