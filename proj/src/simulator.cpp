#include "lll/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lll/rng.hpp"

namespace lll {

using ojson = nlohmann::ordered_json;

void EventLog::emit(const ojson& event) {
  if (enabled_) lines_.push_back(event.dump());
}

void EventLog::write(std::ostream& out) const {
  for (const auto& line : lines_) out << line << '\n';
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSettleTick_s = 60.0;
const Position kGateway{0.0, 0.0};

enum class Ev : int {
  FrameEnd = 0,
  RxDone = 1,
  RxClose = 2,
  Probe = 3,
  AckTx = 4,
  ModeTick = 5,
  TxStart = 6,
  Traffic = 7,
  Settle = 8,
  Cycle = 9,
};

struct Event {
  double t = 0.0;
  int node = 0;
  Ev kind = Ev::Traffic;
  std::uint64_t seq = 0;
  std::uint64_t a = 0;
  int b = 0;
};

struct Later {
  bool operator()(const Event& x, const Event& y) const {
    if (x.t != y.t) return x.t > y.t;
    if (x.node != y.node) return x.node > y.node;
    if (x.kind != y.kind) return static_cast<int>(x.kind) > static_cast<int>(y.kind);
    return x.seq > y.seq;
  }
};

struct Exchange {
  std::uint64_t tag = 0;  // tag: tx, tag+1: rx1, tag+2: rx2
  Packet packet;
  TransmissionParams params;
  TransmissionParams ack_params;
  int target = kGatewayId;
  double tx_end = 0.0;
  ClassAWindows windows;
  double window_len = 0.0;
  double ack_air = 0.0;
  bool gw_ack[2] = {false, false};
  std::optional<ModeCommand> piggy;
  std::optional<TransmissionParams> adr;
};

struct SimNode {
  NodeState st;
  TrafficModel traffic;
  TrafficState ts;
  Rng traffic_rng{0};
  Rng backoff_rng{0};
  bool high_rate = false;
  int cell = 0;

  std::deque<Packet> queue;
  bool in_exchange = false;
  Exchange ex;
  RadioSchedule radio;
  double cad_from = 0.0;
  bool traffic_scheduled = false;

  std::set<std::pair<int, std::uint64_t>> forwarded_seen;
  std::map<int, bool> partners_notified;
  bool revert_requested = false;

  Mode tracked_mode = Mode::Conventional;
  double mode_since = 0.0;
  NodeMetrics m;
};

struct Listener {
  int node = 0;
  bool lading = false;  // lading reception; otherwise a receive window
  std::uint64_t tag = 0;
  int window = 0;
  double from = 0.0;
};

struct FrameMeta {
  int sender = 0;
  bool uplink = false;
  std::uint64_t exchange_tag = 0;
  Packet packet;
  double carrier_consumed = 0.0;
  std::uint64_t carrier_plan = 0;
  TransmissionParams carrier_conv;
  std::optional<ModeCommand> command;
  std::vector<Listener> listeners;
};

struct PendingAck {
  int target = 0;
  TransmissionParams params;
  std::uint64_t packet_id = 0;
};

struct ServerNode {
  double reported_consumed = 0.0;
  double last_contact = 0.0;
  double busy_until = -kInf;
  double report_time = 0.0;
  // Lading allowance granted but not yet visible in a report.
  double granted_j = 0.0;
  double granted_until = -kInf;

  double estimated_consumed() const {
    return reported_consumed + (report_time < granted_until ? granted_j : 0.0);
  }
  TransmissionParams conv;
  AdrState adr;
};

struct PendingCommand {
  ModeCommand cmd;
  bool released = false;
  bool sent = false;
  int depends_on = -1;
};

class Simulator {
 public:
  Simulator(const ScenarioConfig& config, bool keep_log)
      : c_(config),
        log_(keep_log),
        medium_(config.link),
        cells_(config.channel_count),
        window_(config.gamma_window),
        loss_rng_(Rng::derive(config.seed, Stream::DownlinkLoss)) {
    init();
  }

  RunResult run();

 private:
  void init();
  void push(double t, int node, Ev kind, std::uint64_t a = 0, int b = 0) {
    queue_.push(Event{t, node, kind, seq_++, a, b});
  }
  std::uint64_t new_tags(int n) {
    const std::uint64_t t = next_tag_;
    next_tag_ += static_cast<std::uint64_t>(n);
    return t;
  }

  template <class F>
  void log(F&& make) {
    if (log_.enabled()) log_.emit(make());
  }

  // Ledger.
  void charge(int n, double joules, const char* cause, bool lading_related);
  void on_depleted(int n);
  void settle(int n);
  void track_mode(int n);

  // Traffic and uplink exchanges.
  void on_traffic(int n);
  void try_start(int n);
  void on_tx_start(int n, std::uint64_t tag);
  void on_frame_end(int n, std::uint64_t frame_id);
  void on_rx_close(int n, std::uint64_t tag, int k);
  void on_rx_done(int n, std::uint64_t tag, int k);
  void window_failed(int n, int k);
  void attempt_failed(int n);
  void exchange_succeeded(int n, int k);
  void finish_exchange(int n);
  void apply_downlink(int n, const std::optional<ModeCommand>& cmd,
                      const std::optional<TransmissionParams>& adr);
  void schedule_mode_ticks(int n);

  // Lading.
  std::optional<double> find_probe(int w, const OnAirTransmission& f, double from) const;
  void schedule_detections(const OnAirTransmission& f);
  void on_probe(int w, std::uint64_t frame_id);
  void resolve_lading_rx(const OnAirTransmission& f, const FrameMeta& meta,
                         const Listener& l);
  void resolve_window_rx(const OnAirTransmission& f, const FrameMeta& meta,
                         const Listener& l);
  void on_ack_tx(int w, std::uint64_t ack_tag);
  void request_revert(int w);
  void maybe_finish_revert(int w);

  // Server.
  void gateway_receive(const OnAirTransmission& f, const FrameMeta& meta);
  void replan();
  void attach_command(int carrier, Exchange& ex);
  double gamma() const {
    return c_.gamma_mode == GammaMode::Fixed ? c_.gamma_value : estimate_gamma(window_);
  }

  void on_cycle();
  Metrics finish();

  const ScenarioConfig& c_;
  EventLog log_;
  Medium medium_;
  CellMap cells_;
  RetransWindow window_;
  Rng loss_rng_;
  PlannerConfig planner_;

  std::vector<SimNode> nodes_;
  std::vector<ServerNode> server_;
  std::map<int, PendingCommand> pending_;
  std::map<std::uint64_t, FrameMeta> frames_;
  std::map<std::uint64_t, PendingAck> acks_;
  std::set<std::pair<int, std::uint64_t>> delivered_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_tag_ = 1;
  std::uint64_t next_frame_ = 1;
  std::uint64_t next_plan_ = 1;
  double now_ = 0.0;
  double cycle_end_ = 0.0;

  Metrics m_;
  std::vector<std::pair<double, std::uint64_t>> deliveries_;  // (time, bytes)
};

void Simulator::init() {
  const auto setups = resolve_nodes(c_);
  std::vector<Position> positions;
  for (const auto& s : setups) positions.push_back(s.position);
  const CellAssignment cells = assign_cells(cells_, positions, c_.split_threshold);

  planner_.profile = c_.radio;
  planner_.link = c_.link;
  planner_.cad = c_.cad;
  planner_.offload_sf = c_.offload_sf;
  planner_.bw_hz = c_.bw_hz;
  planner_.cr = c_.cr;
  planner_.power_range = {static_cast<double>(c_.radio.min_level()),
                          static_cast<double>(c_.radio.max_level())};
  planner_.rx_window_symbols = c_.mac.rx_window_symbols;
  planner_.divisor = c_.correction_divisor;

  cycle_end_ = c_.recharge_cycle_s;
  m_.duration_s = c_.duration_s;

  nodes_.resize(setups.size());
  server_.resize(setups.size());
  for (std::size_t i = 0; i < setups.size(); ++i) {
    const NodeSetup& s = setups[i];
    SimNode& N = nodes_[i];
    const int id = static_cast<int>(i);
    N.st.id = id;
    N.st.position = s.position;
    N.st.budget_j = s.budget_j;
    N.st.reserve_j = s.reserve_j;
    N.st.tau_s = s.traffic.tau_s();
    N.st.heartbeat_period_s = s.traffic.heartbeat_period_s;
    N.st.cad_timers = c_.cad;
    TransmissionParams base;
    base.bw_hz = c_.bw_hz;
    base.cr = c_.cr;
    base.preamble_symbols = c_.conventional_preamble;
    base.channel = cells.channel[i];
    N.st.conv_params = initial_conventional_params(c_.adr, c_.link, c_.radio,
                                                   distance(s.position, kGateway), base);
    N.traffic = s.traffic;
    N.high_rate = s.high_rate;
    N.cell = cells.cell[i];
    N.traffic_rng = Rng::derive(c_.seed, Stream::Traffic, i);
    N.backoff_rng = Rng::derive(c_.seed, Stream::Backoff, i);
    N.ts.next_data_s = N.traffic_rng.uniform(0.0, 3600.0 / s.traffic.rate_lo_per_h);
    N.ts.last_emission_s = 0.0;
    N.m.id = id;
    N.m.budget_j = s.budget_j;
    N.m.high_rate = s.high_rate;

    server_[i].conv = N.st.conv_params;

    const double first = next_traffic_time(N.ts, N.traffic);
    if (first < c_.duration_s) {
      push(first, id, Ev::Traffic);
      N.traffic_scheduled = true;
    }
  }
  for (double t = c_.recharge_cycle_s; t < c_.duration_s; t += c_.recharge_cycle_s) {
    push(t, -1, Ev::Cycle);
  }
  log([&] {
    ojson e{{"t", 0.0}, {"ev", "start"}, {"protocol", to_string(c_.protocol)},
            {"seed", c_.seed}, {"nodes", c_.node_count}};
    return e;
  });
  for (const auto& N : nodes_) {
    log([&] {
      return ojson{{"t", 0.0},
                   {"ev", "node"},
                   {"node", N.st.id},
                   {"x", N.st.position.x},
                   {"y", N.st.position.y},
                   {"budget_j", N.st.budget_j},
                   {"cell", N.cell},
                   {"channel", N.st.conv_params.channel},
                   {"sf", N.st.conv_params.sf},
                   {"high_rate", N.high_rate}};
    });
  }
}

// ---------------------------------------------------------------------------
// Ledger.

void Simulator::charge(int n, double joules, const char* cause, bool lading_related) {
  if (!std::isfinite(joules) || joules < 0.0) {
    throw std::runtime_error(std::string("non-finite or negative energy for cause ") +
                             cause + " at node " + std::to_string(n));
  }
  if (joules == 0.0) return;
  SimNode& N = nodes_[n];
  const bool newly = debit(N.st, joules, now_);
  m_.total_debited_j += joules;
  if (lading_related && N.st.session == Mode::Lading) N.st.lading_spent_j += joules;
  log([&] {
    return ojson{{"t", now_}, {"ev", "debit"}, {"node", n}, {"j", joules}, {"cause", cause}};
  });
  if (newly) {
    on_depleted(n);
  } else if (lading_related && N.st.session == Mode::Lading && !N.revert_requested &&
             N.st.lading_spent_j >= N.st.lading_allowance_j) {
    request_revert(n);
  }
}

void Simulator::on_depleted(int n) {
  SimNode& N = nodes_[n];
  const bool lading = N.st.mode == Mode::Lading;
  log([&] {
    return ojson{{"t", now_}, {"ev", "depleted"}, {"node", n}, {"mode", to_string(N.st.mode)}};
  });
  if (lading) ++m_.lading_depletions;
  if (m_.first_depleted_node < 0) {
    m_.first_depleted_node = n;
    m_.lifetime_s = now_;
  }
  if (N.m.depleted_at_s < 0.0) N.m.depleted_at_s = now_;
  N.queue.clear();
  N.in_exchange = false;
  N.radio.clear();
}

void Simulator::track_mode(int n) {
  SimNode& N = nodes_[n];
  if (N.tracked_mode == N.st.mode) return;
  const double span = now_ - N.mode_since;
  if (N.tracked_mode == Mode::Lading) N.m.lading_s += span;
  if (N.tracked_mode == Mode::Offloading) N.m.offloading_s += span;
  log([&] {
    return ojson{{"t", now_}, {"ev", "mode"}, {"node", n}, {"from", to_string(N.tracked_mode)},
                 {"to", to_string(N.st.mode)}};
  });
  N.tracked_mode = N.st.mode;
  N.mode_since = now_;
  if (N.st.mode == Mode::Lading) {
    N.cad_from = now_;
    push(std::min(now_ + kSettleTick_s, N.st.lading_deadline_s), n, Ev::Settle);
  }
}

// CAD energy of every idle gap inside the lading span up to now.
void Simulator::settle(int n) {
  SimNode& N = nodes_[n];
  if (N.st.session != Mode::Lading || N.st.depleted) {
    N.cad_from = now_;
    N.radio.prune(now_);
    return;
  }
  const double lo = std::max(N.cad_from, N.st.lading_start_s);
  const double hi = std::min(now_, N.st.lading_deadline_s);
  N.cad_from = std::max(N.cad_from, now_);
  if (!(hi > lo)) {
    N.radio.prune(std::min(now_, lo));
    return;
  }
  const TransmissionParams& listen = N.st.offload_params;
  const double period = c_.cad.period();
  double energy = 0.0;
  std::int64_t cycles = 0;
  double t = lo;
  while (t < hi) {
    bool moved = false;
    for (const auto& s : N.radio.slots()) {
      if (s.span.start_s <= t && t < s.span.end_s) {
        t = s.span.end_s;
        moved = true;
      }
    }
    if (moved) continue;
    const double anchor = N.radio.gap_start(t, N.st.lading_start_s);
    const double end = std::min(N.radio.gap_end(t), hi);
    energy += cad_gap_energy(c_.radio, c_.cad, listen, end - anchor) -
              cad_gap_energy(c_.radio, c_.cad, listen, t - anchor);
    cycles += static_cast<std::int64_t>(std::floor((end - anchor) / period)) -
              static_cast<std::int64_t>(std::floor((t - anchor) / period));
    t = end;
  }
  N.radio.prune(hi);
  if (energy > 0.0) {
    // Logged as one aggregated debit per settlement.
    const bool newly = debit(N.st, energy, now_);
    m_.total_debited_j += energy;
    N.st.lading_spent_j += energy;
    log([&] {
      return ojson{{"t", now_}, {"ev", "debit"}, {"node", n}, {"j", energy},
                   {"cause", "cad"}, {"cycles", cycles}};
    });
    if (newly) {
      on_depleted(n);
    } else if (!N.revert_requested && N.st.lading_spent_j >= N.st.lading_allowance_j) {
      request_revert(n);
    }
  }
}

// ---------------------------------------------------------------------------
// Traffic and uplink exchanges.

void Simulator::on_traffic(int n) {
  SimNode& N = nodes_[n];
  N.traffic_scheduled = false;
  if (N.st.depleted) return;
  settle(n);
  refresh_mode(N.st, now_);
  track_mode(n);
  if (auto p = generate_traffic(N.st, N.ts, N.traffic, now_, N.traffic_rng)) {
    if (p->kind == PacketKind::Data) ++N.m.generated;
    log([&] {
      return ojson{{"t", now_}, {"ev", "packet"}, {"node", n}, {"pkt", p->id},
                   {"kind", to_string(p->kind)}};
    });
    N.queue.push_back(*p);
    try_start(n);
  }
  double next = next_traffic_time(N.ts, N.traffic);
  if (next <= now_) next = std::nextafter(now_, kInf);
  if (next < c_.duration_s) {
    push(next, n, Ev::Traffic);
    N.traffic_scheduled = true;
  }
}

void Simulator::try_start(int n) {
  SimNode& N = nodes_[n];
  if (N.in_exchange || N.queue.empty() || N.st.depleted) return;
  N.in_exchange = true;
  N.ex = Exchange{};
  N.ex.tag = new_tags(3);
  N.ex.packet = N.queue.front();
  push(now_, n, Ev::TxStart, N.ex.tag);
}

void Simulator::on_tx_start(int n, std::uint64_t tag) {
  SimNode& N = nodes_[n];
  if (N.st.depleted || !N.in_exchange || N.ex.tag != tag) return;
  settle(n);
  refresh_mode(N.st, now_);
  track_mode(n);
  Exchange& ex = N.ex;

  ex.params = uplink_params(N.st, ex.packet, now_);
  const bool offload = !ex.packet.forwarded && offloading_active(N.st, now_);
  ex.target = offload ? N.st.partner : kGatewayId;
  ex.ack_params = ex.params;
  if (!offload) ex.ack_params.preamble_symbols = c_.conventional_preamble;

  const int payload = ex.packet.payload_bytes;
  const double air = airtime(ex.params, payload);
  ex.ack_air = airtime(ex.ack_params, 0, FrameKind::Ack);
  ex.window_len = c_.mac.rx_window_symbols * symbol_duration(ex.params.sf, ex.params.bw_hz);
  const double hold = std::max(ex.window_len, ex.ack_air);
  const std::vector<Interval> rel{
      {0.0, air},
      {air + c_.mac.rx1_delay_s, air + c_.mac.rx1_delay_s + hold},
      {air + c_.mac.rx2_delay_s, air + c_.mac.rx2_delay_s + hold}};
  const double t = N.radio.earliest_fit(now_, rel);
  if (t > now_) {
    push(t, n, Ev::TxStart, tag);
    return;
  }

  ++ex.packet.attempt_count;
  const char* cause = ex.packet.forwarded ? "forward_tx" : (offload ? "offload_tx" : "tx");
  charge(n, tx_energy(c_.radio, ex.params, payload), cause, ex.packet.forwarded);
  if (N.st.depleted) return;

  ex.tx_end = now_ + air;
  ex.windows = class_a_windows(ex.tx_end, ex.params, c_.mac);
  N.radio.reserve({now_, ex.tx_end}, tag);
  N.radio.reserve({ex.windows.rx1.start_s, ex.windows.rx1.start_s + hold}, tag + 1);
  N.radio.reserve({ex.windows.rx2.start_s, ex.windows.rx2.start_s + hold}, tag + 2);

  OnAirTransmission f = make_transmission(next_frame_++, n, N.st.position, ex.params, now_,
                                          payload, FrameKind::Data, ex.target,
                                          ex.packet.id);
  FrameMeta meta;
  meta.sender = n;
  meta.uplink = true;
  meta.exchange_tag = tag;
  meta.packet = ex.packet;
  meta.carrier_consumed = N.st.consumed_j;
  meta.carrier_plan = N.st.plan_id;
  meta.carrier_conv = N.st.conv_params;
  if (offload) ++m_.offload_attempts;
  log([&] {
    return ojson{{"t", now_},
                 {"ev", "tx"},
                 {"node", n},
                 {"frame", f.id},
                 {"kind", "data"},
                 {"target", f.target},
                 {"origin", ex.packet.origin_id},
                 {"pkt", ex.packet.id},
                 {"attempt", ex.packet.attempt_count},
                 {"sf", f.params.sf},
                 {"channel", f.params.channel},
                 {"power_dbm", f.params.power_dbm},
                 {"preamble", f.params.preamble_symbols},
                 {"iq_inverted", f.params.iq_inverted},
                 {"end", f.end_s}};
  });
  frames_[f.id] = std::move(meta);
  const auto hit = medium_.add(f);
  if (f.params.iq_inverted) schedule_detections(f);
  push(f.end_s, n, Ev::FrameEnd, f.id);
  (void)hit;
}

void Simulator::on_frame_end(int n, std::uint64_t frame_id) {
  OnAirTransmission f = medium_.finish(frame_id);
  auto it = frames_.find(frame_id);
  FrameMeta meta = std::move(it->second);
  frames_.erase(it);
  if (f.collided) {
    log([&] { return ojson{{"t", now_}, {"ev", "collided"}, {"frame", f.id}}; });
  }

  if (meta.uplink && f.target == kGatewayId) gateway_receive(f, meta);
  for (const auto& l : meta.listeners) {
    if (l.lading) {
      resolve_lading_rx(f, meta, l);
    } else {
      resolve_window_rx(f, meta, l);
    }
  }

  SimNode& N = nodes_[n];
  if (meta.uplink) {
    if (!N.st.depleted && N.in_exchange && N.ex.tag == meta.exchange_tag) {
      push(N.ex.windows.rx1.start_s + N.ex.window_len, n, Ev::RxClose, N.ex.tag, 0);
    }
  } else {
    maybe_finish_revert(n);
  }
}

void Simulator::on_rx_close(int n, std::uint64_t tag, int k) {
  SimNode& N = nodes_[n];
  if (N.st.depleted || !N.in_exchange || N.ex.tag != tag) return;
  settle(n);
  Exchange& ex = N.ex;
  const double open = k == 0 ? ex.windows.rx1.start_s : ex.windows.rx2.start_s;
  const bool lading_related = ex.packet.forwarded;
  if (ex.target == kGatewayId) {
    if (ex.gw_ack[k]) {
      push(open + ex.ack_air, n, Ev::RxDone, tag, k);
      return;
    }
    charge(n, rx_energy(c_.radio, ex.window_len), lading_related ? "forward_rx" : "rx_window",
           lading_related);
    if (!N.st.depleted) window_failed(n, k);
    return;
  }
  // Node-to-node ACK: lock on to a matching frame that started in the window.
  const ListenerTuning tuning = ListenerTuning::of(ex.ack_params);
  for (const auto& f : medium_.active()) {
    if (f.target != n || f.frame != FrameKind::Ack) continue;
    if (f.params.channel != tuning.channel || f.params.sf != tuning.sf ||
        f.params.bw_hz != tuning.bw_hz || f.params.iq_inverted != tuning.iq_inverted) {
      continue;
    }
    if (f.start_s < open - 1e-9 || f.start_s > open + ex.window_len) continue;
    frames_.at(f.id).listeners.push_back(Listener{n, false, tag, k, open});
    return;
  }
  charge(n, rx_energy(c_.radio, ex.window_len), "rx_window", false);
  if (!N.st.depleted) window_failed(n, k);
}

void Simulator::on_rx_done(int n, std::uint64_t tag, int k) {
  SimNode& N = nodes_[n];
  if (N.st.depleted || !N.in_exchange || N.ex.tag != tag) return;
  settle(n);
  charge(n, rx_energy(c_.radio, N.ex.ack_air), N.ex.packet.forwarded ? "forward_rx" : "rx_ack",
         N.ex.packet.forwarded);
  if (N.st.depleted) return;
  exchange_succeeded(n, k);
}

void Simulator::window_failed(int n, int k) {
  SimNode& N = nodes_[n];
  if (k == 0) {
    push(N.ex.windows.rx2.start_s + N.ex.window_len, n, Ev::RxClose, N.ex.tag, 1);
  } else {
    attempt_failed(n);
  }
}

void Simulator::attempt_failed(int n) {
  SimNode& N = nodes_[n];
  Exchange& ex = N.ex;
  for (int i = 0; i < 3; ++i) N.radio.release(ex.tag + i);
  if (ex.packet.attempt_count < kMaxAttempts) {
    const double delay = backoff_delay(ex.packet.attempt_count, c_.mac.backoff_base_s,
                                       N.backoff_rng);
    N.queue.front() = ex.packet;
    ex.tag = new_tags(3);
    push(now_ + delay, n, Ev::TxStart, ex.tag);
    return;
  }
  log([&] {
    return ojson{{"t", now_}, {"ev", "drop"}, {"node", n}, {"origin", ex.packet.origin_id},
                 {"pkt", ex.packet.id}};
  });
  if (ex.packet.kind == PacketKind::Data) ++nodes_[ex.packet.origin_id].m.dropped;
  if (ex.target != kGatewayId && N.st.session == Mode::Offloading) {
    // The partner is unreachable; fall back for the rest of the session.
    N.st.session = Mode::Conventional;
    N.st.partner = -1;
    refresh_mode(N.st, now_);
    track_mode(n);
  }
  finish_exchange(n);
}

void Simulator::exchange_succeeded(int n, int k) {
  SimNode& N = nodes_[n];
  if (k == 0) N.radio.release(N.ex.tag + 2);
  const auto cmd = N.ex.piggy;
  const auto adr = N.ex.adr;
  finish_exchange(n);
  apply_downlink(n, cmd, adr);
}

void Simulator::finish_exchange(int n) {
  SimNode& N = nodes_[n];
  N.in_exchange = false;
  if (!N.queue.empty()) N.queue.pop_front();
  try_start(n);
}

void Simulator::apply_downlink(int n, const std::optional<ModeCommand>& cmd,
                               const std::optional<TransmissionParams>& adr) {
  SimNode& N = nodes_[n];
  if (adr) {
    N.st.conv_params.power_dbm = adr->power_dbm;
    N.st.conv_params.sf = adr->sf;
    N.st.conv_params.de = adr->de;
  }
  if (!cmd) return;
  const Mode old_session = N.st.session;
  const bool ok = apply_mode_command(N.st, *cmd, now_, c_.mac);
  log([&] {
    return ojson{{"t", now_},      {"ev", "command"},       {"node", n},
                 {"cmd", to_string(cmd->type)}, {"plan", cmd->plan_id},
                 {"start", cmd->start_s},  {"until", cmd->until_s},
                 {"partner", cmd->partner}, {"applied", ok}};
  });
  if (!ok) return;
  if (cmd->type == ModeCommand::Type::EnterLading) {
    N.revert_requested = false;
    N.partners_notified.clear();
    N.cad_from = N.st.lading_start_s;
  }
  if (old_session == Mode::Lading && N.st.session != Mode::Lading) ++m_.early_reverts;
  track_mode(n);
  schedule_mode_ticks(n);
}

void Simulator::schedule_mode_ticks(int n) {
  const NodeState& st = nodes_[n].st;
  auto at = [&](double t) {
    if (t > now_ && t < c_.duration_s) push(t, n, Ev::ModeTick);
  };
  if (st.session == Mode::Lading) {
    at(st.lading_start_s);
    at(st.lading_deadline_s);
  } else if (st.session == Mode::Offloading) {
    at(st.offload_start_s);
    at(st.offload_until_s);
  }
}

// ---------------------------------------------------------------------------
// Lading.

std::optional<double> Simulator::find_probe(int w, const OnAirTransmission& f,
                                            double from) const {
  const SimNode& W = nodes_[w];
  const NodeState& st = W.st;
  double t = std::max({f.start_s, st.lading_start_s, from});
  while (t < f.preamble_end_s && t < st.lading_deadline_s) {
    bool moved = false;
    for (const auto& s : W.radio.slots()) {
      if (s.span.start_s <= t && t < s.span.end_s) {
        t = s.span.end_s;
        moved = true;
      }
    }
    if (moved) continue;
    const double anchor = W.radio.gap_start(t, st.lading_start_s);
    const double end = W.radio.gap_end(t);
    const auto p = first_detecting_probe(anchor, end, c_.cad, st.offload_params, t,
                                         f.preamble_end_s);
    if (p) {
      if (*p < st.lading_deadline_s) return p;
      return std::nullopt;
    }
    if (end >= f.preamble_end_s) return std::nullopt;
    t = end;
  }
  return std::nullopt;
}

void Simulator::schedule_detections(const OnAirTransmission& f) {
  for (const auto& W : nodes_) {
    const int w = W.st.id;
    if (w == f.sender_id || W.st.depleted || W.st.session != Mode::Lading) continue;
    if (!receivable(c_.link, f, W.st.position, ListenerTuning::of(W.st.offload_params))) {
      continue;
    }
    if (const auto p = find_probe(w, f, f.start_s)) push(*p, w, Ev::Probe, f.id);
  }
}

void Simulator::on_probe(int w, std::uint64_t frame_id) {
  SimNode& W = nodes_[w];
  if (W.st.depleted || W.st.session != Mode::Lading) return;
  const OnAirTransmission* f = medium_.find(frame_id);
  if (f == nullptr) return;
  settle(w);
  if (W.st.depleted) return;
  const auto p = find_probe(w, *f, f->start_s);
  if (!p) return;
  if (*p > now_ + 1e-12) {
    push(*p, w, Ev::Probe, frame_id);
    return;
  }
  if (*p < now_ - 1e-12) return;

  const double probe = cad_probe_duration(W.st.offload_params.sf, W.st.offload_params.bw_hz);
  const Interval recv{now_ + probe, f->end_s};
  const bool for_me = f->frame == FrameKind::Data && f->target == w;
  const double ack_air = airtime(f->params, 0, FrameKind::Ack);
  const Interval a1{f->end_s + c_.mac.rx1_delay_s, f->end_s + c_.mac.rx1_delay_s + ack_air};
  const Interval a2{f->end_s + c_.mac.rx2_delay_s, f->end_s + c_.mac.rx2_delay_s + ack_air};
  if (!W.radio.is_free(recv) || (for_me && (!W.radio.is_free(a1) || !W.radio.is_free(a2)))) {
    log([&] {
      return ojson{{"t", now_}, {"ev", "cad_busy"}, {"node", w}, {"frame", frame_id}};
    });
    return;
  }
  const std::uint64_t tag = new_tags(3);
  W.radio.reserve(recv, tag);
  if (for_me) {
    W.radio.reserve(a1, tag + 1);
    W.radio.reserve(a2, tag + 2);
  }
  frames_.at(frame_id).listeners.push_back(Listener{w, true, tag, 0, recv.start_s});
  ++m_.cad_wakeups;
  if (!for_me) ++m_.false_wakeups;
  log([&] {
    return ojson{{"t", now_}, {"ev", "cad_wake"}, {"node", w}, {"frame", frame_id},
                 {"false_wakeup", !for_me}};
  });
}

void Simulator::resolve_lading_rx(const OnAirTransmission& f, const FrameMeta& meta,
                                  const Listener& l) {
  SimNode& W = nodes_[l.node];
  if (W.st.depleted) return;
  const int w = l.node;
  settle(w);
  const bool for_me = f.frame == FrameKind::Data && f.target == w;
  charge(w, rx_energy(c_.radio, f.end_s - l.from), for_me ? "lading_rx" : "false_wakeup",
         true);
  if (W.st.depleted) return;
  const bool ok = survives_at(c_.link, f, W.st.position) &&
                  receivable(c_.link, f, W.st.position, ListenerTuning::of(W.st.offload_params));
  if (!for_me || !ok) {
    W.radio.release(l.tag + 1);
    W.radio.release(l.tag + 2);
    return;
  }
  const Packet& pkt = meta.packet;
  const auto key = std::make_pair(pkt.origin_id, pkt.id);
  const bool fresh = W.forwarded_seen.insert(key).second;
  W.partners_notified.emplace(f.sender_id, false);
  log([&] {
    return ojson{{"t", now_}, {"ev", "offload_rx"}, {"node", w}, {"from", f.sender_id},
                 {"origin", pkt.origin_id}, {"pkt", pkt.id}, {"duplicate", !fresh}};
  });
  for (int i = 1; i <= 2; ++i) {
    acks_[l.tag + i] = PendingAck{f.sender_id, f.params, pkt.id};
    push(f.end_s + (i == 1 ? c_.mac.rx1_delay_s : c_.mac.rx2_delay_s), w, Ev::AckTx,
         l.tag + i);
  }
  if (fresh) {
    Packet fw = pkt;
    fw.carrier_id = w;
    fw.attempt_count = 0;
    fw.forwarded = true;
    fw.forward_preamble = f.params.preamble_symbols;
    W.queue.push_back(fw);
    ++m_.forwarded;
    try_start(w);
  }
}

void Simulator::resolve_window_rx(const OnAirTransmission& f, const FrameMeta& meta,
                                  const Listener& l) {
  SimNode& U = nodes_[l.node];
  const int u = l.node;
  if (U.st.depleted || !U.in_exchange || U.ex.tag != l.tag) return;
  settle(u);
  charge(u, rx_energy(c_.radio, f.end_s - l.from), "rx_ack", false);
  if (U.st.depleted) return;
  const bool ok = survives_at(c_.link, f, U.st.position) &&
                  receivable(c_.link, f, U.st.position, ListenerTuning::of(U.ex.ack_params));
  if (!ok) {
    window_failed(u, l.window);
    return;
  }
  U.ex.piggy = meta.command;
  exchange_succeeded(u, l.window);
}

void Simulator::on_ack_tx(int w, std::uint64_t ack_tag) {
  auto it = acks_.find(ack_tag);
  if (it == acks_.end()) return;
  const PendingAck pa = it->second;
  acks_.erase(it);
  SimNode& W = nodes_[w];
  if (W.st.depleted) return;
  settle(w);
  charge(w, tx_energy(c_.radio, pa.params, 0, FrameKind::Ack), "lading_ack", true);
  if (W.st.depleted) return;
  OnAirTransmission f = make_transmission(next_frame_++, w, W.st.position, pa.params, now_,
                                          0, FrameKind::Ack, pa.target, pa.packet_id);
  FrameMeta meta;
  meta.sender = w;
  if (W.revert_requested) {
    ModeCommand revert;
    revert.type = ModeCommand::Type::RevertConventional;
    revert.plan_id = W.st.plan_id;
    meta.command = revert;
    W.partners_notified[pa.target] = true;
  }
  log([&] {
    return ojson{{"t", now_}, {"ev", "tx"}, {"node", w}, {"frame", f.id}, {"kind", "ack"},
                 {"target", f.target}, {"pkt", pa.packet_id}, {"sf", f.params.sf},
                 {"channel", f.params.channel}, {"power_dbm", f.params.power_dbm},
                 {"revert", meta.command.has_value()}, {"end", f.end_s}};
  });
  frames_[f.id] = std::move(meta);
  medium_.add(f);
  schedule_detections(f);
  push(f.end_s, w, Ev::FrameEnd, f.id);
}

void Simulator::request_revert(int w) {
  SimNode& W = nodes_[w];
  W.revert_requested = true;
  log([&] {
    return ojson{{"t", now_}, {"ev", "revert_request"}, {"node", w},
                 {"spent_j", W.st.lading_spent_j}, {"allowance_j", W.st.lading_allowance_j}};
  });
  maybe_finish_revert(w);
}

void Simulator::maybe_finish_revert(int w) {
  SimNode& W = nodes_[w];
  if (!W.revert_requested || W.st.session != Mode::Lading || W.st.depleted) return;
  for (const auto& [u, notified] : W.partners_notified) {
    if (!notified) return;
  }
  settle(w);
  W.st.session = Mode::Conventional;
  W.revert_requested = false;
  refresh_mode(W.st, now_);
  ++m_.early_reverts;
  track_mode(w);
}

// ---------------------------------------------------------------------------
// Server.

void Simulator::gateway_receive(const OnAirTransmission& f, const FrameMeta& meta) {
  const ListenerTuning tuning{f.params.channel, f.params.sf, f.params.bw_hz, false};
  if (!survives_at(c_.link, f, kGateway) || !receivable(c_.link, f, kGateway, tuning)) {
    log([&] { return ojson{{"t", now_}, {"ev", "gw_lost"}, {"frame", f.id}}; });
    return;
  }
  const int carrier = meta.sender;
  const Packet& pkt = meta.packet;
  ServerNode& S = server_[carrier];
  S.last_contact = now_;
  S.reported_consumed = meta.carrier_consumed;
  S.report_time = f.start_s;
  S.conv = meta.carrier_conv;
  auto pend = pending_.find(carrier);
  if (pend != pending_.end() && pend->second.sent &&
      meta.carrier_plan >= pend->second.cmd.plan_id) {
    pending_.erase(pend);
  }
  window_.push(pkt.attempt_count);

  const bool fresh = delivered_.insert({pkt.origin_id, pkt.id}).second;
  if (fresh) {
    ++m_.packets_delivered;
    if (pkt.kind == PacketKind::Data) {
      SimNode& O = nodes_[pkt.origin_id];
      ++O.m.delivered;
      if (pkt.forwarded) ++O.m.offloaded;
      m_.bytes_delivered += static_cast<std::uint64_t>(pkt.payload_bytes);
      deliveries_.emplace_back(now_, static_cast<std::uint64_t>(pkt.payload_bytes));
    }
  } else {
    ++m_.duplicates;
  }
  log([&] {
    return ojson{{"t", now_},
                 {"ev", "gw_rx"},
                 {"node", carrier},
                 {"origin", pkt.origin_id},
                 {"pkt", pkt.id},
                 {"kind", to_string(pkt.kind)},
                 {"bytes", pkt.payload_bytes},
                 {"attempt", pkt.attempt_count},
                 {"forwarded", pkt.forwarded},
                 {"duplicate", !fresh}};
  });

  SimNode& N = nodes_[carrier];
  const bool same_exchange = N.in_exchange && N.ex.tag == meta.exchange_tag;
  TransmissionParams conv = S.conv;
  std::optional<TransmissionParams> adr;
  if (adr_update(S.adr, conv, c_.adr, c_.link, c_.radio, distance(N.st.position, kGateway))) {
    adr = conv;
    S.conv = conv;
  }
  if (c_.protocol == Protocol::LLL) replan();
  if (!same_exchange) return;
  N.ex.adr = adr;
  attach_command(carrier, N.ex);
  N.ex.gw_ack[0] = !loss_rng_.bernoulli(c_.downlink_loss_probability);
  N.ex.gw_ack[1] = !N.ex.gw_ack[0] && !loss_rng_.bernoulli(c_.downlink_loss_probability);
}

void Simulator::attach_command(int carrier, Exchange& ex) {
  auto it = pending_.find(carrier);
  if (it == pending_.end()) return;
  PendingCommand& p = it->second;
  if (p.cmd.until_s <= now_) {
    pending_.erase(it);
    return;
  }
  if (!p.released) return;
  ex.piggy = p.cmd;
  if (!p.sent) {
    p.sent = true;
    for (auto& [id, dep] : pending_) {
      if (dep.depends_on == carrier) dep.released = true;
    }
  }
}

void Simulator::replan() {
  ++m_.replans;
  const double remaining = cycle_end_ - now_;
  if (remaining <= 0.0) return;
  const double g = gamma();

  std::vector<NodeView> views;
  views.reserve(nodes_.size());
  for (const auto& N : nodes_) {
    const ServerNode& S = server_[N.st.id];
    if (S.busy_until > now_) continue;
    if (S.estimated_consumed() >= N.st.budget_j) continue;
    NodeView v;
    v.id = N.st.id;
    v.position = N.st.position;
    v.cell = N.cell;
    v.budget_j = N.st.budget_j;
    v.reserve_j = N.st.reserve_j;
    v.consumed_j = S.estimated_consumed();
    v.tau_s = N.st.tau_s;
    v.heartbeat_period_s = N.st.heartbeat_period_s;
    v.last_contact_s = S.last_contact;
    v.payload_bytes = N.traffic.payload_bytes;
    v.conv_params = S.conv;
    views.push_back(v);
  }
  const Classification classes = classify_nodes(views, g, remaining, c_.radio);
  if (classes.affluent.empty() || classes.depleting.empty()) return;
  PairingPlan plan =
      select_pairs(views, classes, g, remaining, planner_, cells_.channel_by_cell());
  plan = dispatch_exclusive(plan, views, g, remaining, planner_);
  if (plan.affluent.empty()) return;
  const std::uint64_t plan_id = next_plan_++;
  const ScheduledTransition sched = schedule_mode_transition(
      plan, views, now_, cycle_end_, c_.mac.guard_s, plan_id);
  if (sched.commands.empty()) return;
  ++m_.plans;

  for (const auto& a : plan.affluent) {
    auto cmd = sched.commands.find(a.affluent);
    if (cmd == sched.commands.end()) continue;
    pending_[a.affluent] = PendingCommand{cmd->second, true, false, -1};
    server_[a.affluent].busy_until = cmd->second.until_s;
    server_[a.affluent].granted_j = cmd->second.allowance_j;
    server_[a.affluent].granted_until = cmd->second.until_s;
    for (const auto& p : a.pairs) {
      const ModeCommand& off = sched.commands.at(p.depleting);
      pending_[p.depleting] = PendingCommand{off, false, false, a.affluent};
      server_[p.depleting].busy_until = cmd->second.until_s;
    }
  }
  log([&] {
    ojson pairs = ojson::array();
    ojson t_lm = ojson::object();
    for (const auto& a : plan.affluent) {
      if (!sched.commands.count(a.affluent)) continue;
      t_lm[std::to_string(a.affluent)] = a.t_lm_s;
      for (const auto& p : a.pairs) pairs.push_back({p.depleting, a.affluent});
    }
    return ojson{{"t", now_},
                 {"ev", "plan"},
                 {"plan", plan_id},
                 {"gamma", g},
                 {"affluent", classes.affluent},
                 {"depleting", classes.depleting},
                 {"pairs", pairs},
                 {"t_lm_s", t_lm},
                 {"start", sched.effective_start_s}};
  });
}

void Simulator::on_cycle() {
  for (auto& N : nodes_) settle(N.st.id);
  cycle_end_ += c_.recharge_cycle_s;
  // Split crowded cells before the next cycle.
  std::map<int, int> counts;
  std::vector<Position> positions;
  for (const auto& N : nodes_) {
    positions.push_back(N.st.position);
    if (!N.st.depleted) ++counts[N.cell];
  }
  const CellAssignment cells = assign_cells(cells_, positions, c_.split_threshold, &counts);
  for (auto& N : nodes_) {
    const int i = N.st.id;
    N.cell = cells.cell[i];
    N.st.conv_params.channel = cells.channel[i];
    server_[i].conv.channel = cells.channel[i];
    server_[i].reported_consumed = 0.0;
    server_[i].busy_until = -kInf;
    server_[i].granted_j = 0.0;
    server_[i].granted_until = -kInf;
    N.st.consumed_j = 0.0;
    N.st.depleted = false;
    N.st.session = Mode::Conventional;
    N.st.partner = -1;
    N.revert_requested = false;
    refresh_mode(N.st, now_);
    track_mode(i);
    if (!N.traffic_scheduled) {
      N.ts.next_data_s = std::max(N.ts.next_data_s, now_);
      N.ts.last_emission_s = now_;
      push(next_traffic_time(N.ts, N.traffic), i, Ev::Traffic);
      N.traffic_scheduled = true;
    }
  }
  pending_.clear();
  log([&] { return ojson{{"t", now_}, {"ev", "cycle"}, {"cells", cells_.cells().size()}}; });
}

RunResult Simulator::run() {
  while (!queue_.empty()) {
    const Event e = queue_.top();
    if (e.t >= c_.duration_s) break;
    queue_.pop();
    now_ = e.t;
    switch (e.kind) {
      case Ev::Traffic: on_traffic(e.node); break;
      case Ev::TxStart: on_tx_start(e.node, e.a); break;
      case Ev::FrameEnd: on_frame_end(e.node, e.a); break;
      case Ev::RxClose: on_rx_close(e.node, e.a, e.b); break;
      case Ev::RxDone: on_rx_done(e.node, e.a, e.b); break;
      case Ev::Probe: on_probe(e.node, e.a); break;
      case Ev::AckTx: on_ack_tx(e.node, e.a); break;
      case Ev::ModeTick: {
        SimNode& N = nodes_[e.node];
        settle(e.node);
        refresh_mode(N.st, now_);
        track_mode(e.node);
        break;
      }
      case Ev::Settle: {
        SimNode& N = nodes_[e.node];
        if (N.st.session != Mode::Lading || N.st.depleted) break;
        settle(e.node);
        if (N.st.session == Mode::Lading && !N.st.depleted &&
            now_ + kSettleTick_s < N.st.lading_deadline_s) {
          push(now_ + kSettleTick_s, e.node, Ev::Settle);
        }
        break;
      }
      case Ev::Cycle: on_cycle(); break;
    }
  }
  now_ = c_.duration_s;
  RunResult out;
  out.metrics = finish();
  out.log = std::move(log_);
  return out;
}

Metrics Simulator::finish() {
  for (auto& N : nodes_) {
    settle(N.st.id);
    refresh_mode(N.st, now_);
    // Close the open mode span.
    const double span = now_ - N.mode_since;
    if (N.tracked_mode == Mode::Lading) N.m.lading_s += span;
    if (N.tracked_mode == Mode::Offloading) N.m.offloading_s += span;
    N.mode_since = now_;
  }
  Metrics m = m_;
  m.collisions = medium_.collisions();
  if (m.first_depleted_node < 0) {
    m.lifetime_s = c_.duration_s;
    m.lifetime_censored = true;
  }
  const double window = std::min(m.lifetime_s, c_.duration_s);
  for (const auto& [t, bytes] : deliveries_) {
    if (t <= window) m.bytes_in_window += bytes;
  }
  m.throughput_bytes_per_s = window > 0.0 ? static_cast<double>(m.bytes_in_window) / window : 0.0;
  for (const auto& N : nodes_) {
    NodeMetrics nm = N.m;
    nm.consumed_j = N.st.consumed_j;
    m.nodes.push_back(nm);
  }
  log([&] {
    return ojson{{"t", now_}, {"ev", "end"}, {"lifetime_s", m.lifetime_s},
                 {"bytes_delivered", m.bytes_delivered}};
  });
  return m;
}

}  // namespace

RunResult run_simulation(const ScenarioConfig& config, bool keep_log) {
  config.validate();
  Simulator sim(config, keep_log);
  return sim.run();
}

ojson to_json(const Metrics& m) {
  ojson nodes = ojson::array();
  for (const auto& n : m.nodes) {
    nodes.push_back(ojson{{"id", n.id},
                          {"high_rate", n.high_rate},
                          {"budget_j", n.budget_j},
                          {"consumed_j", n.consumed_j},
                          {"depleted_at_s", n.depleted_at_s < 0.0 ? ojson(nullptr)
                                                                  : ojson(n.depleted_at_s)},
                          {"generated", n.generated},
                          {"delivered", n.delivered},
                          {"dropped", n.dropped},
                          {"offloaded", n.offloaded},
                          {"lading_s", n.lading_s},
                          {"offloading_s", n.offloading_s}});
  }
  return ojson{{"duration_s", m.duration_s},
               {"lifetime_s", m.lifetime_s},
               {"lifetime_censored", m.lifetime_censored},
               {"first_depleted_node", m.first_depleted_node},
               {"bytes_delivered", m.bytes_delivered},
               {"bytes_in_window", m.bytes_in_window},
               {"throughput_bytes_per_s", m.throughput_bytes_per_s},
               {"packets_delivered", m.packets_delivered},
               {"counts",
                {{"collisions", m.collisions},
                 {"duplicates", m.duplicates},
                 {"cad_wakeups", m.cad_wakeups},
                 {"false_wakeups", m.false_wakeups},
                 {"offload_attempts", m.offload_attempts},
                 {"forwarded", m.forwarded},
                 {"replans", m.replans},
                 {"plans", m.plans},
                 {"early_reverts", m.early_reverts}}},
               {"safety",
                {{"lading_depletions", m.lading_depletions},
                 {"tx_after_depletion", m.tx_after_depletion}}},
               {"total_debited_j", m.total_debited_j},
               {"nodes", nodes}};
}

Metrics compute_metrics(const std::vector<std::string>& log_lines,
                        const ScenarioConfig& config) {
  Metrics m;
  m.duration_s = config.duration_s;
  std::map<int, NodeMetrics> per_node;
  std::set<int> depleted;
  std::vector<std::pair<double, std::uint64_t>> deliveries;
  std::map<int, std::string> mode_of;
  for (const auto& line : log_lines) {
    const auto e = nlohmann::json::parse(line);
    const std::string ev = e.at("ev").get<std::string>();
    const double t = e.at("t").get<double>();
    if (ev == "node") {
      NodeMetrics& n = per_node[e.at("node").get<int>()];
      n.id = e.at("node").get<int>();
      n.budget_j = e.at("budget_j").get<double>();
      n.high_rate = e.at("high_rate").get<bool>();
    } else if (ev == "debit") {
      const double j = e.at("j").get<double>();
      per_node[e.at("node").get<int>()].consumed_j += j;
      m.total_debited_j += j;
    } else if (ev == "depleted") {
      const int id = e.at("node").get<int>();
      depleted.insert(id);
      if (e.at("mode").get<std::string>() == "lading") ++m.lading_depletions;
      if (m.first_depleted_node < 0) {
        m.first_depleted_node = id;
        m.lifetime_s = t;
      }
      if (per_node[id].depleted_at_s < 0.0) per_node[id].depleted_at_s = t;
    } else if (ev == "tx") {
      if (depleted.count(e.at("node").get<int>())) ++m.tx_after_depletion;
    } else if (ev == "cycle") {
      depleted.clear();
    } else if (ev == "gw_rx") {
      if (e.at("duplicate").get<bool>()) {
        ++m.duplicates;
        continue;
      }
      ++m.packets_delivered;
      if (e.at("kind").get<std::string>() != "data") continue;
      const auto bytes = e.at("bytes").get<std::uint64_t>();
      NodeMetrics& o = per_node[e.at("origin").get<int>()];
      ++o.delivered;
      if (e.at("forwarded").get<bool>()) ++o.offloaded;
      m.bytes_delivered += bytes;
      deliveries.emplace_back(t, bytes);
    } else if (ev == "drop") {
      ++per_node[e.at("origin").get<int>()].dropped;
    } else if (ev == "cad_wake") {
      ++m.cad_wakeups;
      if (e.at("false_wakeup").get<bool>()) ++m.false_wakeups;
    } else if (ev == "plan") {
      ++m.plans;
    }
  }
  if (m.first_depleted_node < 0) {
    m.lifetime_s = config.duration_s;
    m.lifetime_censored = true;
  }
  const double window = std::min(m.lifetime_s, config.duration_s);
  for (const auto& [t, bytes] : deliveries) {
    if (t <= window) m.bytes_in_window += bytes;
  }
  m.throughput_bytes_per_s =
      window > 0.0 ? static_cast<double>(m.bytes_in_window) / window : 0.0;
  for (auto& [id, n] : per_node) m.nodes.push_back(n);
  return m;
}

std::vector<SweepRow> sweep(const nlohmann::json& base_document, const std::string& param,
                            const std::vector<std::string>& values,
                            const std::vector<std::uint64_t>& seeds,
                            const std::vector<Protocol>& protocols) {
  std::vector<SweepRow> rows;
  for (const auto& value : values) {
    for (const auto seed : seeds) {
      for (const auto protocol : protocols) {
        SweepRow row;
        row.param = param;
        row.value = value;
        row.seed = seed;
        row.protocol = to_string(protocol);
        try {
          nlohmann::json doc = base_document;
          set_document_field(doc, param, value);
          doc["seed"] = seed;
          doc["protocol"] = to_string(protocol);
          const ScenarioConfig config = load_scenario(doc);
          const RunResult r = run_simulation(config);
          row.lifetime_s = r.metrics.lifetime_s;
          row.throughput_Bps = r.metrics.throughput_bytes_per_s;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSweepHeader << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.param) << ',' << csv_field(r.value) << ',' << r.seed << ','
        << r.protocol << ',';
    if (r.error.empty()) {
      out << fmt(r.lifetime_s) << ',' << fmt(r.throughput_Bps) << ',';
    } else {
      out << ",," << csv_field(r.error);
    }
    out << '\n';
  }
}

}  // namespace lll
