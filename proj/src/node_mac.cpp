#include "lll/node_mac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lll {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Conventional: return "conventional";
    case Mode::Offloading: return "offloading";
    case Mode::Lading: return "lading";
  }
  return "?";
}

const char* to_string(PacketKind kind) {
  return kind == PacketKind::Data ? "data" : "heartbeat";
}

const char* to_string(ModeCommand::Type type) {
  switch (type) {
    case ModeCommand::Type::EnterLading: return "enter_lading";
    case ModeCommand::Type::EnterOffloading: return "enter_offloading";
    case ModeCommand::Type::RevertConventional: return "revert_conventional";
  }
  return "?";
}

void TrafficModel::validate() const {
  if (!(rate_lo_per_h > 0.0) || !(rate_hi_per_h >= rate_lo_per_h)) {
    throw std::invalid_argument("traffic rates must satisfy 0 < lo <= hi");
  }
  if (!(heartbeat_period_s > 0.0)) {
    throw std::invalid_argument("heartbeat_period_s must be > 0");
  }
  if (payload_bytes < 0 || payload_bytes > 255) {
    throw std::invalid_argument("payload_bytes must be in [0,255]");
  }
}

void MacTimings::validate() const {
  if (!(rx1_delay_s > 0.0) || !(rx2_delay_s > rx1_delay_s)) {
    throw std::invalid_argument("receive delays must satisfy 0 < rx1 < rx2");
  }
  if (!(rx_window_symbols > 0.0)) {
    throw std::invalid_argument("rx_window_symbols must be > 0");
  }
  if (!(backoff_base_s >= 0.0)) throw std::invalid_argument("backoff_base_s must be >= 0");
  if (!(guard_s >= 0.0)) throw std::invalid_argument("guard_s must be >= 0");
}

bool debit(NodeState& node, double joules, double now_s) {
  if (!(joules >= 0.0) || !std::isfinite(joules)) {
    throw std::invalid_argument("debit must be a finite non-negative amount");
  }
  node.consumed_j += joules;
  if (!node.depleted && node.consumed_j >= node.budget_j) {
    node.depleted = true;
    node.depleted_at_s = now_s;
    return true;
  }
  return false;
}

double sample_interarrival(const TrafficModel& traffic, Rng& rng) {
  return rng.uniform(3600.0 / traffic.rate_hi_per_h, 3600.0 / traffic.rate_lo_per_h);
}

double next_traffic_time(const TrafficState& state, const TrafficModel& traffic) {
  return std::min(state.next_data_s,
                  state.last_emission_s + traffic.heartbeat_period_s);
}

std::optional<Packet> generate_traffic(const NodeState& node, TrafficState& state,
                                       const TrafficModel& traffic, double now_s,
                                       Rng& rng) {
  if (node.depleted) return std::nullopt;
  Packet p;
  p.origin_id = node.id;
  p.carrier_id = node.id;
  p.payload_bytes = traffic.payload_bytes;
  p.created_s = now_s;
  if (now_s >= state.next_data_s) {
    p.kind = PacketKind::Data;
    state.next_data_s = now_s + sample_interarrival(traffic, rng);
  } else if (now_s >= state.last_emission_s + traffic.heartbeat_period_s) {
    p.kind = PacketKind::Heartbeat;
  } else {
    return std::nullopt;
  }
  p.id = ++state.emitted;
  state.last_emission_s = now_s;
  return p;
}

double backoff_delay(int attempt, double base_s, Rng& rng) {
  if (attempt < 1) throw std::invalid_argument("attempt must be >= 1");
  return rng.uniform(base_s, base_s + std::ldexp(1.0, attempt - 1));
}

ClassAWindows class_a_windows(double tx_end_s, const TransmissionParams& listen,
                              const MacTimings& timings) {
  const double len =
      timings.rx_window_symbols * symbol_duration(listen.sf, listen.bw_hz);
  ClassAWindows w;
  w.rx1 = {tx_end_s + timings.rx1_delay_s, tx_end_s + timings.rx1_delay_s + len};
  w.rx2 = {tx_end_s + timings.rx2_delay_s, tx_end_s + timings.rx2_delay_s + len};
  return w;
}

bool offloading_active(const NodeState& node, double now_s) {
  return node.mode == Mode::Offloading && node.partner >= 0 &&
         now_s >= node.offload_start_s && now_s < node.offload_until_s;
}

bool lading_active(const NodeState& node, double now_s) {
  return node.mode == Mode::Lading && now_s >= node.lading_start_s &&
         now_s < node.lading_deadline_s;
}

TransmissionParams uplink_params(const NodeState& node, const Packet& packet,
                                 double now_s) {
  if (packet.forwarded) {
    TransmissionParams p = node.conv_params;
    p.preamble_symbols = packet.forward_preamble;
    return p;
  }
  return offloading_active(node, now_s) ? node.offload_params : node.conv_params;
}

void refresh_mode(NodeState& node, double now_s) {
  switch (node.session) {
    case Mode::Lading:
      if (now_s >= node.lading_deadline_s) {
        node.session = Mode::Conventional;
        node.mode = Mode::Conventional;
      } else {
        node.mode = now_s >= node.lading_start_s ? Mode::Lading : Mode::Conventional;
      }
      break;
    case Mode::Offloading:
      if (now_s >= node.offload_until_s) {
        node.session = Mode::Conventional;
        node.mode = Mode::Conventional;
        node.partner = -1;
      } else {
        node.mode =
            now_s >= node.offload_start_s ? Mode::Offloading : Mode::Conventional;
      }
      break;
    case Mode::Conventional:
      node.mode = Mode::Conventional;
      break;
  }
}

std::int64_t cad_cycles(double length_s, const CadTimers& timers) {
  if (!(length_s > 0.0)) return 0;
  return static_cast<std::int64_t>(std::floor(length_s / timers.period()));
}

double cad_gap_energy(const RadioPowerProfile& profile, const CadTimers& timers,
                      const TransmissionParams& listen, double length_s) {
  if (!(length_s > 0.0)) return 0.0;
  const std::int64_t full = cad_cycles(length_s, timers);
  const double probe = cad_probe_duration(listen.sf, listen.bw_hz);
  const double r = length_s - static_cast<double>(full) * timers.period();
  // Sleep in t1 is treated as free, matching the per-cycle energy.
  double partial = 0.0;
  if (r > timers.t1_s) {
    const double awake = std::min(r - timers.t1_s, timers.t2_s);
    partial = std::min(awake, probe) * profile.p_rx_w +
              std::max(awake - probe, 0.0) * profile.p_rc_osc_w;
  }
  return static_cast<double>(full) * cad_cycle_energy(profile, timers, listen) +
         partial;
}

std::optional<double> first_detecting_probe(double anchor_s, double gap_end_s,
                                            const CadTimers& timers,
                                            const TransmissionParams& listen,
                                            double preamble_start_s,
                                            double preamble_end_s) {
  const double period = timers.period();
  const double first = anchor_s + timers.t1_s;
  double k = std::max(0.0, std::ceil((preamble_start_s - first) / period));
  while (first + k * period < preamble_start_s) k += 1.0;
  while (k > 0.0 && first + (k - 1.0) * period >= preamble_start_s) k -= 1.0;
  const double start = first + k * period;
  const double end = start + cad_probe_duration(listen.sf, listen.bw_hz);
  if (end <= preamble_end_s && end <= gap_end_s) return start;
  return std::nullopt;
}

void RadioSchedule::reserve(Interval span, std::uint64_t tag) {
  if (!(span.end_s >= span.start_s)) throw std::logic_error("reversed reservation");
  if (!is_free(span)) throw std::logic_error("overlapping radio reservation");
  auto it = std::lower_bound(
      slots_.begin(), slots_.end(), span.start_s,
      [](const Slot& s, double t) { return s.span.start_s < t; });
  slots_.insert(it, Slot{span, tag});
}

void RadioSchedule::release(std::uint64_t tag) {
  std::erase_if(slots_, [tag](const Slot& s) { return s.tag == tag; });
}

void RadioSchedule::prune(double t) {
  std::erase_if(slots_, [&](const Slot& s) {
    if (s.span.end_s > t) return false;
    last_pruned_end_ = std::max(last_pruned_end_, s.span.end_s);
    return true;
  });
}

bool RadioSchedule::is_free(Interval span) const {
  if (span.end_s <= span.start_s) return true;
  for (const auto& s : slots_) {
    if (s.span.start_s >= span.end_s) break;
    if (span.start_s < s.span.end_s && s.span.start_s < s.span.end_s) return false;
  }
  return true;
}

double RadioSchedule::earliest_fit(double from,
                                   const std::vector<Interval>& relative) const {
  double t = from;
  bool moved = true;
  while (moved) {
    moved = false;
    for (const auto& r : relative) {
      const Interval span{t + r.start_s, t + r.end_s};
      for (const auto& s : slots_) {
        if (s.span.start_s >= span.end_s) break;
        if (span.start_s < s.span.end_s && s.span.start_s < s.span.end_s) {
          t = s.span.end_s - r.start_s;
          moved = true;
          break;
        }
      }
      if (moved) break;
    }
  }
  return t;
}

double RadioSchedule::gap_start(double t, double floor_s) const {
  double start = std::max(floor_s, last_pruned_end_);
  for (const auto& s : slots_) {
    if (s.span.start_s > t) break;
    start = std::max(start, s.span.end_s);
  }
  return start;
}

double RadioSchedule::gap_end(double t) const {
  for (const auto& s : slots_) {
    if (s.span.end_s <= t) continue;
    return std::max(s.span.start_s, t);
  }
  return std::numeric_limits<double>::infinity();
}

bool apply_mode_command(NodeState& node, const ModeCommand& command,
                        double now_s, const MacTimings& timings) {
  if (node.depleted) return false;
  switch (command.type) {
    case ModeCommand::Type::EnterLading:
      if (command.until_s <= now_s) return false;
      node.session = Mode::Lading;
      node.lading_start_s = std::max(now_s, command.start_s - timings.guard_s);
      node.lading_deadline_s = command.until_s;
      node.lading_allowance_j = command.allowance_j;
      node.lading_spent_j = 0.0;
      node.offload_params = command.offload;
      node.partner = -1;
      break;
    case ModeCommand::Type::EnterOffloading:
      if (command.until_s <= now_s) return false;
      node.session = Mode::Offloading;
      node.partner = command.partner;
      node.offload_start_s = std::max(now_s, command.start_s);
      node.offload_until_s = command.until_s;
      node.offload_params = command.offload;
      break;
    case ModeCommand::Type::RevertConventional:
      node.session = Mode::Conventional;
      node.partner = -1;
      break;
  }
  node.plan_id = command.plan_id;
  refresh_mode(node, now_s);
  return true;
}

}  // namespace lll
