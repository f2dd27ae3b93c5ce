#include "lll/phy_energy.hpp"

#include <algorithm>
#include <cmath>

namespace lll {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw PhyError(what);
}

bool legal_bandwidth(double bw_hz) {
  return bw_hz == 125000.0 || bw_hz == 500000.0;
}

}  // namespace

CodingRate coding_rate_from_denominator(int denominator) {
  require(denominator >= 5 && denominator <= 8,
          "coding rate denominator must be in [5,8], got " +
              std::to_string(denominator));
  return static_cast<CodingRate>(denominator);
}

void TransmissionParams::validate() const {
  require(sf >= 6 && sf <= 12, "sf must be in [6,12], got " + std::to_string(sf));
  require(legal_bandwidth(bw_hz), "unsupported bandwidth " + std::to_string(bw_hz));
  const int d = static_cast<int>(cr);
  require(d >= 5 && d <= 8, "invalid coding rate");
  require(preamble_symbols >= 0, "preamble_symbols must be >= 0");
  require(de == 0 || de == 1, "de must be 0 or 1");
  require(sf - 2 * de > 0, "sf - 2*de must be positive");
}

double RadioPowerProfile::tx_power(int power_dbm) const {
  auto it = p_tx_w.find(power_dbm);
  if (it == p_tx_w.end()) {
    throw PhyError("no transmit power entry for level " +
                   std::to_string(power_dbm) + " dBm");
  }
  return it->second;
}

int RadioPowerProfile::min_level() const {
  require(!p_tx_w.empty(), "empty transmit power table");
  return p_tx_w.begin()->first;
}

int RadioPowerProfile::max_level() const {
  require(!p_tx_w.empty(), "empty transmit power table");
  return p_tx_w.rbegin()->first;
}

void RadioPowerProfile::validate() const {
  require(!p_tx_w.empty(), "p_tx_w must not be empty");
  for (const auto& [level, watts] : p_tx_w) {
    require(watts >= 0.0 && std::isfinite(watts),
            "p_tx_w[" + std::to_string(level) + "] must be >= 0");
  }
  require(p_sleep_w >= 0.0, "p_sleep_w must be >= 0");
  require(p_rc_osc_w >= p_sleep_w, "p_rc_osc_w must be >= p_sleep_w");
  require(p_rx_w >= p_rc_osc_w, "p_rx_w must be >= p_rc_osc_w");
}

RadioPowerProfile default_power_profile() {
  constexpr double kVolts = 3.3;
  RadioPowerProfile p;
  p.p_tx_w = {{2, 0.024 * kVolts},
              {5, 0.026 * kVolts},
              {8, 0.030 * kVolts},
              {11, 0.035 * kVolts},
              {14, 0.044 * kVolts}};
  p.p_rx_w = 0.011 * kVolts;
  p.p_rc_osc_w = p.p_rx_w / 2.0;
  p.p_sleep_w = 0.0;
  return p;
}

void CadTimers::validate_for(const TransmissionParams& offload) const {
  require(t1_s > 0.0 && std::isfinite(t1_s), "cad t1_s must be > 0");
  require(t2_s > 0.0 && std::isfinite(t2_s), "cad t2_s must be > 0");
  require(t2_s >= cad_probe_duration(offload.sf, offload.bw_hz),
          "cad t2_s is shorter than a two-symbol probe at the offload parameters");
}

double symbol_duration(int sf, double bw_hz) {
  require(sf >= 6 && sf <= 12, "sf must be in [6,12], got " + std::to_string(sf));
  require(bw_hz > 0.0 && std::isfinite(bw_hz), "bandwidth must be > 0");
  return std::ldexp(1.0, sf) / bw_hz;
}

double packet_symbols(int payload_bytes, int sf, CodingRate cr, int de,
                      int preamble_symbols, FrameKind kind) {
  require(payload_bytes >= 0, "payload_bytes must be >= 0");
  require(preamble_symbols >= 0, "preamble_symbols must be >= 0");
  require(de == 0 || de == 1, "de must be 0 or 1");
  const int denom = sf - 2 * de;
  require(denom > 0, "sf - 2*de must be positive");

  const int numerator = kind == FrameKind::Data
                            ? 8 * payload_bytes - 4 * sf + 24
                            : 8 - 4 * sf;
  // Integer ceiling, valid for negative numerators as well.
  const int q = numerator / denom;
  const int blocks = q + ((numerator % denom != 0 && numerator > 0) ? 1 : 0);
  const double coded = std::max(blocks * coding_multiplier(cr), 0.0);
  return preamble_symbols + 4.25 + 8.0 + coded;
}

double airtime(const TransmissionParams& params, int payload_bytes,
               FrameKind kind) {
  return packet_symbols(payload_bytes, params.sf, params.cr, params.de,
                        params.preamble_symbols, kind) *
         symbol_duration(params.sf, params.bw_hz);
}

double tx_energy(const RadioPowerProfile& profile,
                 const TransmissionParams& params, int payload_bytes,
                 FrameKind kind) {
  return profile.tx_power(params.power_dbm) * airtime(params, payload_bytes, kind);
}

double rx_energy(const RadioPowerProfile& profile, double duration_s) {
  require(duration_s >= 0.0, "receive duration must be >= 0");
  return profile.p_rx_w * duration_s;
}

double cad_probe_duration(int sf, double bw_hz) {
  return 2.0 * symbol_duration(sf, bw_hz);
}

double cad_cycle_energy(const RadioPowerProfile& profile,
                        const CadTimers& timers,
                        const TransmissionParams& offload) {
  const double probe = cad_probe_duration(offload.sf, offload.bw_hz);
  require(timers.t2_s >= probe,
          "cad probe does not fit into t2_s at the offload parameters");
  return timers.t2_s * profile.p_rc_osc_w +
         probe * (profile.p_rx_w - profile.p_rc_osc_w);
}

namespace {

// Forwarded frame: conventional modulation, offloaded payload and preamble.
TransmissionParams forwarded_frame(const TransmissionParams& offload,
                                   const TransmissionParams& conv) {
  TransmissionParams fw = conv;
  fw.preamble_symbols = offload.preamble_symbols;
  return fw;
}

}  // namespace

double forward_energy(const RadioPowerProfile& profile,
                      const TransmissionParams& offload,
                      const TransmissionParams& conv, int payload_bytes) {
  const double receive = profile.p_rx_w * airtime(offload, payload_bytes);
  const double forward = profile.tx_power(conv.power_dbm) *
                         airtime(forwarded_frame(offload, conv), payload_bytes);
  return receive + forward;
}

double ack_energy(const RadioPowerProfile& profile,
                  const TransmissionParams& offload, double t_rx_s) {
  require(t_rx_s >= 0.0, "t_rx_s must be >= 0");
  return 2.0 * profile.p_rx_w * t_rx_s +
         2.0 * profile.tx_power(offload.power_dbm) *
             airtime(offload, 0, FrameKind::Ack);
}

double correction_energy(const RadioPowerProfile& profile,
                         const CadTimers& timers,
                         const TransmissionParams& offload,
                         const TransmissionParams& conv, int payload_bytes,
                         double t_rx_s, CorrectionDivisor divisor) {
  require(t_rx_s >= 0.0, "t_rx_s must be >= 0");
  const double busy = 2.0 * t_rx_s +
                      2.0 * airtime(offload, 0, FrameKind::Ack) +
                      airtime(offload, payload_bytes) +
                      airtime(forwarded_frame(offload, conv), payload_bytes);
  double per_second = 0.0;
  switch (divisor) {
    case CorrectionDivisor::CadPeriod:
      per_second = 1.0 / timers.period();
      break;
    case CorrectionDivisor::OffloadSymbol:
      per_second = 1.0 / symbol_duration(offload.sf, offload.bw_hz);
      break;
    case CorrectionDivisor::ConventionalSymbol:
      per_second = 1.0 / symbol_duration(conv.sf, conv.bw_hz);
      break;
  }
  return cad_cycle_energy(profile, timers, offload) * per_second * busy;
}

double pair_packet_overhead(const RadioPowerProfile& profile,
                            const CadTimers& timers, const LadingPair& pair,
                            CorrectionDivisor divisor) {
  return forward_energy(profile, pair.offload, pair.conv, pair.payload_bytes) +
         ack_energy(profile, pair.offload, pair.t_rx_s) -
         correction_energy(profile, timers, pair.offload, pair.conv,
                           pair.payload_bytes, pair.t_rx_s, divisor);
}

double lading_power(const RadioPowerProfile& profile, const CadTimers& timers,
                    const TransmissionParams& listen, double gamma,
                    std::span<const LadingPair> pairs,
                    CorrectionDivisor divisor) {
  require(gamma >= 1.0, "gamma must be >= 1");
  double rate = 0.0;
  for (const auto& pair : pairs) {
    require(pair.tau_s > 0.0, "tau_s must be > 0");
    rate += gamma / pair.tau_s *
            pair_packet_overhead(profile, timers, pair, divisor);
  }
  return cad_cycle_energy(profile, timers, listen) / timers.period() + rate;
}

double lading_energy(const RadioPowerProfile& profile, double t_lm_s,
                     const CadTimers& timers, const TransmissionParams& listen,
                     double gamma, std::span<const LadingPair> pairs,
                     CorrectionDivisor divisor) {
  require(t_lm_s >= 0.0, "t_lm_s must be >= 0");
  return t_lm_s * lading_power(profile, timers, listen, gamma, pairs, divisor);
}

double offload_packet_energy(const RadioPowerProfile& profile,
                             const TransmissionParams& offload,
                             int payload_bytes) {
  return tx_energy(profile, offload, payload_bytes);
}

int min_preamble_symbols(const CadTimers& timers, int sf, double bw_hz) {
  const double symbols =
      (timers.t1_s + 2.0 * timers.t2_s) / symbol_duration(sf, bw_hz);
  // Guard against 12.000000000001 style round-off on exact multiples.
  return static_cast<int>(std::ceil(symbols - 1e-9));
}

double required_power_dbm(double sensitivity_dbm, double distance_m) {
  require(distance_m >= 1.0, "distance must be >= the 1 m reference distance");
  return sensitivity_dbm + kReferenceLossDb +
         10.0 * kPathLossExponent * std::log10(distance_m / 1.0);
}

double initial_offload_power(double sensitivity_dbm, double distance_m,
                             PowerRange range) {
  return std::clamp(required_power_dbm(sensitivity_dbm, distance_m),
                    range.min_dbm, range.max_dbm);
}

std::optional<int> power_level_at_least(const RadioPowerProfile& profile,
                                        double required_dbm) {
  for (const auto& [level, watts] : profile.p_tx_w) {
    if (level + 1e-9 >= required_dbm) return level;
  }
  return std::nullopt;
}

int low_data_rate_flag(int sf, double bw_hz) {
  return symbol_duration(sf, bw_hz) > 0.016 ? 1 : 0;
}

double path_loss_db(double distance_m) {
  const double d = std::max(distance_m, 1.0);
  return kReferenceLossDb + 10.0 * kPathLossExponent * std::log10(d);
}

}  // namespace lll
