#pragma once

// LoRa airtime and radio energy model.
//
// Everything in here is a pure function of its arguments. Times are in
// seconds, powers in watts, energies in joules, power levels in dBm.

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace lll {

/// Forward error correction rate 4/5 .. 4/8.
enum class CodingRate : int { CR4_5 = 5, CR4_6 = 6, CR4_7 = 7, CR4_8 = 8 };

/// Airtime multiplier 1/CR (5/4 for 4/5, ..., 8/4 for 4/8).
constexpr double coding_multiplier(CodingRate cr) {
  return static_cast<int>(cr) / 4.0;
}

CodingRate coding_rate_from_denominator(int denominator);

enum class FrameKind {
  Data,  ///< header + payload + CRC
  Ack    ///< header only, no payload and no CRC
};

class PhyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One radio configuration.
struct TransmissionParams {
  int sf = 7;
  double bw_hz = 125000.0;
  CodingRate cr = CodingRate::CR4_5;
  int power_dbm = 14;
  int channel = 0;
  int preamble_symbols = 8;
  bool iq_inverted = false;
  int de = 0;

  /// Throws PhyError when a field is outside its legal range.
  void validate() const;

  bool operator==(const TransmissionParams&) const = default;
};

struct RadioPowerProfile {
  std::map<int, double> p_tx_w;  ///< power level (dBm) -> electrical draw
  double p_rx_w = 0.0;
  double p_rc_osc_w = 0.0;
  double p_sleep_w = 0.0;

  /// Throws PhyError naming the level if it is not in the table.
  double tx_power(int power_dbm) const;
  bool has_level(int power_dbm) const { return p_tx_w.count(power_dbm) != 0; }
  int min_level() const;
  int max_level() const;

  void validate() const;
};

/// 3.3 V supply. RX 11 mA, RC-oscillator idle at half of RX, TX currents
/// typical of a PA_BOOST SX1276 module at 2/5/8/11/14 dBm.
RadioPowerProfile default_power_profile();

/// Low-power-listening timers: sleep `t1_s`, then a `t2_s` slot that starts
/// with a two-symbol CAD probe.
struct CadTimers {
  double t1_s = 0.0041;
  double t2_s = 0.0041;

  double period() const { return t1_s + t2_s; }
  /// Throws PhyError if a timer is non-positive or the probe at `offload`
  /// does not fit into `t2_s`.
  void validate_for(const TransmissionParams& offload) const;
};

/// How the displaced-CAD correction converts busy airtime into CAD cycles.
enum class CorrectionDivisor {
  CadPeriod,         ///< busy time / (T1 + T2)
  OffloadSymbol,     ///< busy time / symbol time at offload parameters
  ConventionalSymbol ///< busy time / symbol time at conventional parameters
};

double symbol_duration(int sf, double bw_hz);

/// Fractional symbol count of a frame, preamble included.
double packet_symbols(int payload_bytes, int sf, CodingRate cr, int de,
                      int preamble_symbols, FrameKind kind = FrameKind::Data);

double airtime(const TransmissionParams& params, int payload_bytes,
               FrameKind kind = FrameKind::Data);

double tx_energy(const RadioPowerProfile& profile,
                 const TransmissionParams& params, int payload_bytes,
                 FrameKind kind = FrameKind::Data);

double rx_energy(const RadioPowerProfile& profile, double duration_s);

/// Duration of a two-symbol CAD probe.
double cad_probe_duration(int sf, double bw_hz);

/// Energy of one T1 + T2 listening cycle with no detection.
double cad_cycle_energy(const RadioPowerProfile& profile,
                        const CadTimers& timers,
                        const TransmissionParams& offload);

/// Receive one offloaded frame at `offload` and forward it at `conv`. The
/// forwarded frame keeps the offloaded frame's preamble length.
double forward_energy(const RadioPowerProfile& profile,
                      const TransmissionParams& offload,
                      const TransmissionParams& conv, int payload_bytes);

/// Two ACK transmissions to the depleting node plus two gateway receive
/// windows of total length `t_rx_s`.
double ack_energy(const RadioPowerProfile& profile,
                  const TransmissionParams& offload, double t_rx_s);

/// CAD energy not spent while the radio is busy with one offloaded frame.
double correction_energy(const RadioPowerProfile& profile,
                         const CadTimers& timers,
                         const TransmissionParams& offload,
                         const TransmissionParams& conv, int payload_bytes,
                         double t_rx_s,
                         CorrectionDivisor divisor = CorrectionDivisor::CadPeriod);

/// One depleting node served by a lading node.
struct LadingPair {
  double tau_s = 0.0;  ///< minimum inter-arrival of the depleting node
  TransmissionParams offload;
  TransmissionParams conv;  ///< the lading node's conventional parameters
  int payload_bytes = 0;
  double t_rx_s = 0.0;
};

/// Per-packet lading cost of one pair: E_FW + E_ack - E_CR.
double pair_packet_overhead(const RadioPowerProfile& profile,
                            const CadTimers& timers, const LadingPair& pair,
                            CorrectionDivisor divisor = CorrectionDivisor::CadPeriod);

/// Total lading overhead over `t_lm_s`. Linear in `t_lm_s`. `listen` is the
/// offload configuration the lading node probes for.
double lading_energy(const RadioPowerProfile& profile, double t_lm_s,
                     const CadTimers& timers, const TransmissionParams& listen,
                     double gamma,
                     std::span<const LadingPair> pairs,
                     CorrectionDivisor divisor = CorrectionDivisor::CadPeriod);

/// Lading energy per second of lading time, i.e. lading_energy(1 s).
double lading_power(const RadioPowerProfile& profile, const CadTimers& timers,
                    const TransmissionParams& listen, double gamma, std::span<const LadingPair> pairs,
                    CorrectionDivisor divisor = CorrectionDivisor::CadPeriod);

/// Energy for a depleting node to send one frame to its lading partner.
double offload_packet_energy(const RadioPowerProfile& profile,
                             const TransmissionParams& offload,
                             int payload_bytes);

/// Shortest preamble that spans a full CAD period plus one probe slot.
int min_preamble_symbols(const CadTimers& timers, int sf, double bw_hz);

struct PowerRange {
  double min_dbm = 2.0;
  double max_dbm = 14.0;
};

/// Log-distance link budget: the power that just reaches `sensitivity_dbm`
/// at `distance_m`, clamped to `range`.
double initial_offload_power(double sensitivity_dbm, double distance_m,
                             PowerRange range = {});

/// Same as initial_offload_power but unclamped.
double required_power_dbm(double sensitivity_dbm, double distance_m);

/// Smallest table level >= `required_dbm`, if any.
std::optional<int> power_level_at_least(const RadioPowerProfile& profile,
                                        double required_dbm);

int low_data_rate_flag(int sf, double bw_hz);

inline constexpr double kReferenceLossDb = 7.7;
inline constexpr double kPathLossExponent = 3.76;

/// 7.7 dB + 37.6 log10(d). Distances below 1 m are treated as 1 m.
double path_loss_db(double distance_m);

}  // namespace lll
