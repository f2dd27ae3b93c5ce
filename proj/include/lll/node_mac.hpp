#pragma once

// Per-node MAC state and the rules the event loop applies to it: traffic
// generation, Class-A receive windows, back-off, CAD scheduling inside idle
// gaps, mode commands and the energy ledger.

#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lll/medium.hpp"
#include "lll/phy_energy.hpp"
#include "lll/rng.hpp"

namespace lll {

enum class Mode { Conventional, Offloading, Lading };
const char* to_string(Mode mode);

enum class PacketKind { Data, Heartbeat };
const char* to_string(PacketKind kind);

inline constexpr int kMaxAttempts = 8;

struct Packet {
  std::uint64_t id = 0;  ///< unique per origin node
  int origin_id = 0;
  int carrier_id = 0;
  int payload_bytes = 0;
  double created_s = 0.0;
  int attempt_count = 0;  ///< attempts made so far, at most kMaxAttempts
  PacketKind kind = PacketKind::Data;
  /// Set on the copy an affluent node forwards for a depleting node.
  bool forwarded = false;
  /// Preamble the forwarded copy keeps from the offloaded frame.
  int forward_preamble = 0;
};

/// Per-node traffic band. Inter-arrival times are uniform in
/// [3600/rate_hi, 3600/rate_lo] seconds.
struct TrafficModel {
  double rate_lo_per_h = 2.0;
  double rate_hi_per_h = 4.0;
  double heartbeat_period_s = 3600.0;
  int payload_bytes = 10;

  /// Minimum inter-arrival time.
  double tau_s() const { return 3600.0 / rate_hi_per_h; }
  void validate() const;
};

struct MacTimings {
  double rx1_delay_s = 1.0;
  double rx2_delay_s = 2.0;
  double rx_window_symbols = 5.0;
  double backoff_base_s = 1.0;
  double guard_s = 5.0;

  void validate() const;
};

struct NodeState {
  int id = 0;
  Position position;
  double budget_j = 0.0;
  double reserve_j = 0.0;
  double consumed_j = 0.0;
  double tau_s = 1.0;
  double heartbeat_period_s = 3600.0;
  Mode mode = Mode::Conventional;
  TransmissionParams conv_params;
  TransmissionParams offload_params;  ///< valid while a session is set up
  CadTimers cad_timers;
  bool depleted = false;
  double depleted_at_s = -1.0;

  /// Mode of the accepted session; `mode` follows it inside the session's
  /// time span and is Conventional outside it.
  Mode session = Mode::Conventional;
  // Lading session.
  double lading_start_s = 0.0;
  double lading_deadline_s = 0.0;
  double lading_allowance_j = 0.0;
  double lading_spent_j = 0.0;
  // Offloading session.
  int partner = -1;
  double offload_start_s = 0.0;
  double offload_until_s = 0.0;
  std::uint64_t plan_id = 0;  ///< last plan this node accepted

  double remaining_j() const { return budget_j - consumed_j; }
};

/// Records `joules` against the node. Returns true exactly when this debit
/// makes the node depleted. A depleted node stays depleted.
bool debit(NodeState& node, double joules, double now_s);

double sample_interarrival(const TrafficModel& traffic, Rng& rng);

struct TrafficState {
  double next_data_s = 0.0;
  double last_emission_s = 0.0;
  std::uint64_t emitted = 0;
};

/// Next time the traffic source needs attention (data or heartbeat).
double next_traffic_time(const TrafficState& state, const TrafficModel& traffic);

/// Emits the packet due at `now_s`, if any, and advances `state`. Data wins
/// over a heartbeat falling due at the same instant.
std::optional<Packet> generate_traffic(const NodeState& node, TrafficState& state,
                                       const TrafficModel& traffic, double now_s,
                                       Rng& rng);

/// Uniform in [base, base + 2^(attempt-1)] seconds, attempt >= 1.
double backoff_delay(int attempt, double base_s, Rng& rng);

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct ClassAWindows {
  Interval rx1;
  Interval rx2;
};

/// RX1/RX2 after an uplink ending at `tx_end_s`, each `rx_window_symbols`
/// long at the listening parameters.
ClassAWindows class_a_windows(double tx_end_s, const TransmissionParams& listen,
                              const MacTimings& timings);

/// Parameters of the uplink a node uses for `packet` at `now_s`.
TransmissionParams uplink_params(const NodeState& node, const Packet& packet,
                                 double now_s);

/// True when the node's own traffic should go to its lading partner.
bool offloading_active(const NodeState& node, double now_s);

bool lading_active(const NodeState& node, double now_s);

/// Sets `mode` from the accepted session at `now_s`. Once the session has
/// ended it is cleared and the node is back in Conventional mode.
void refresh_mode(NodeState& node, double now_s);

// ---------------------------------------------------------------------------
// CAD in idle gaps. A gap that begins at `anchor` repeats
// [sleep t1][probe 2 symbols][idle rest of t2] until the radio is needed.

/// Number of complete cycles in a gap of `length_s`.
std::int64_t cad_cycles(double length_s, const CadTimers& timers);

/// Energy of the first `length_s` seconds of a gap, partial cycle included.
double cad_gap_energy(const RadioPowerProfile& profile, const CadTimers& timers,
                      const TransmissionParams& listen, double length_s);

/// Start of the first probe of a gap anchored at `anchor_s` that lies fully
/// inside [preamble_start_s, preamble_end_s] and ends by `gap_end_s`.
std::optional<double> first_detecting_probe(double anchor_s, double gap_end_s,
                                            const CadTimers& timers,
                                            const TransmissionParams& listen,
                                            double preamble_start_s,
                                            double preamble_end_s);

// ---------------------------------------------------------------------------
// Radio reservations: intervals the single radio is committed to.

class RadioSchedule {
 public:
  struct Slot {
    Interval span;
    std::uint64_t tag = 0;
  };

  /// Reserves `span`; throws if it overlaps an existing reservation.
  void reserve(Interval span, std::uint64_t tag);
  /// Drops every reservation carrying `tag`.
  void release(std::uint64_t tag);
  /// Drops reservations that ended at or before `t`.
  void prune(double t);
  void clear() { slots_.clear(); }

  bool is_free(Interval span) const;
  /// Earliest t >= `from` such that every `relative` interval shifted by t
  /// is free.
  double earliest_fit(double from, const std::vector<Interval>& relative) const;

  /// Start of the idle gap that contains `t`, not earlier than `floor_s`.
  double gap_start(double t, double floor_s) const;
  /// End of the idle gap that contains `t` (infinity when unbounded).
  double gap_end(double t) const;

  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<Slot> slots_;  // sorted by start, non-overlapping
  double last_pruned_end_ = -std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------

struct ModeCommand {
  enum class Type { EnterLading, EnterOffloading, RevertConventional };
  Type type = Type::RevertConventional;
  std::uint64_t plan_id = 0;
  double start_s = 0.0;   ///< offloading start; lading begins guard_s earlier
  double until_s = 0.0;   ///< lading deadline or end of offloading
  double allowance_j = 0.0;
  int partner = -1;
  TransmissionParams offload;
};

const char* to_string(ModeCommand::Type type);

/// Applies a command received at `now_s`. Returns false for a depleted node
/// or a command that has already expired.
bool apply_mode_command(NodeState& node, const ModeCommand& command,
                        double now_s, const MacTimings& timings);

}  // namespace lll
