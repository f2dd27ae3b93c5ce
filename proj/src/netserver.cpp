#include "lll/netserver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace lll {

RetransWindow::RetransWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("window size must be >= 1");
}

void RetransWindow::push(int attempts) {
  if (attempts < 1 || attempts > kMaxAttempts) {
    throw std::invalid_argument("attempt count out of range: " +
                                std::to_string(attempts));
  }
  entries_.push_back(attempts);
  if (entries_.size() > capacity_) entries_.pop_front();
}

double estimate_gamma(std::span<const int> window) {
  if (window.empty()) return 1.0;
  const double sum = std::accumulate(window.begin(), window.end(), 0.0);
  return sum / static_cast<double>(window.size());
}

double estimate_gamma(const RetransWindow& window) {
  const std::vector<int> copy(window.entries().begin(), window.entries().end());
  return estimate_gamma(std::span<const int>(copy));
}

double expected_tx_count(double gamma, double t_remaining_s, double tau_s) {
  if (!(tau_s > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (t_remaining_s < 0.0) throw std::invalid_argument("remaining time must be >= 0");
  return gamma * t_remaining_s / tau_s;
}

double conventional_mode_energy(const RadioPowerProfile& profile,
                                const TransmissionParams& conv, int payload_bytes,
                                double n_tx) {
  return n_tx * tx_energy(profile, conv, payload_bytes);
}

double remaining_conventional_energy(const NodeView& node, double gamma,
                                     double t_remaining_s,
                                     const RadioPowerProfile& profile) {
  return conventional_mode_energy(
      profile, node.conv_params, node.payload_bytes,
      expected_tx_count(gamma, t_remaining_s, node.tau_s));
}

double residual_energy(const NodeView& node, double gamma, double t_remaining_s,
                       const RadioPowerProfile& profile) {
  return node.budget_j - node.reserve_j -
         remaining_conventional_energy(node, gamma, t_remaining_s, profile) -
         node.consumed_j;
}

Classification classify_nodes(std::span<const NodeView> nodes, double gamma,
                              double t_remaining_s,
                              const RadioPowerProfile& profile) {
  Classification out;
  for (const auto& v : nodes) {
    if (!v.live) continue;
    const double e_cm = remaining_conventional_energy(v, gamma, t_remaining_s, profile);
    if (e_cm < v.budget_j - v.reserve_j - v.consumed_j) {
      out.affluent.push_back(v.id);
    } else {
      out.depleting.push_back(v.id);
    }
  }
  std::sort(out.affluent.begin(), out.affluent.end());
  std::sort(out.depleting.begin(), out.depleting.end());
  return out;
}

double compute_lading_time(double residual_j, double lading_power_w, double cap_s) {
  const double cap = std::max(cap_s, 0.0);
  if (!(residual_j > 0.0)) return 0.0;
  if (!(lading_power_w > 0.0)) return cap;
  return std::min(residual_j / lading_power_w, cap);
}

std::optional<TransmissionParams> offload_params_for(const PlannerConfig& config,
                                                     Position from, Position to,
                                                     int channel) {
  const double sens = config.link.sensitivity(config.offload_sf);
  const double d = std::max(distance(from, to), 1.0);
  const double wanted = initial_offload_power(sens, d, config.power_range);
  // The clamp can land below what the link needs at the top of the range.
  if (required_power_dbm(sens, d) > config.power_range.max_dbm + 1e-9) {
    return std::nullopt;
  }
  const auto level = power_level_at_least(config.profile, wanted);
  if (!level) return std::nullopt;
  TransmissionParams p;
  p.sf = config.offload_sf;
  p.bw_hz = config.bw_hz;
  p.cr = config.cr;
  p.power_dbm = *level;
  p.channel = channel;
  p.preamble_symbols = min_preamble_symbols(config.cad, p.sf, p.bw_hz);
  p.iq_inverted = true;
  p.de = low_data_rate_flag(p.sf, p.bw_hz);
  return p;
}

std::size_t greedy_prefix(const PlannerConfig& config,
                          const TransmissionParams& listen, double gamma,
                          double residual_j, double cap_s,
                          std::vector<PairCandidate>& candidates, double& t_lm_s) {
  std::sort(candidates.begin(), candidates.end(),
            [](const PairCandidate& a, const PairCandidate& b) {
              if (a.e_om_j != b.e_om_j) return a.e_om_j < b.e_om_j;
              return a.depleting < b.depleting;
            });
  std::vector<LadingPair> pairs;
  pairs.reserve(candidates.size());
  for (const auto& c : candidates) pairs.push_back(c.pair);

  std::size_t n = candidates.size();
  while (true) {
    const double power =
        lading_power(config.profile, config.cad, listen, gamma,
                     std::span<const LadingPair>(pairs.data(), n), config.divisor);
    t_lm_s = compute_lading_time(residual_j, power, cap_s);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (candidates[i].tau_s > t_lm_s) {
        ok = false;
        break;
      }
    }
    if (ok || n == 0) return n;
    --n;
  }
}

namespace {

std::unordered_map<int, const NodeView*> index_by_id(std::span<const NodeView> nodes) {
  std::unordered_map<int, const NodeView*> out;
  for (const auto& v : nodes) out[v.id] = &v;
  return out;
}

TransmissionParams listen_params(const PlannerConfig& config, int channel) {
  TransmissionParams p;
  p.sf = config.offload_sf;
  p.bw_hz = config.bw_hz;
  p.cr = config.cr;
  p.channel = channel;
  p.iq_inverted = true;
  p.preamble_symbols = min_preamble_symbols(config.cad, p.sf, p.bw_hz);
  p.de = low_data_rate_flag(p.sf, p.bw_hz);
  return p;
}

double gateway_ack_listen_s(const PlannerConfig& config, const TransmissionParams& conv) {
  return config.rx_window_symbols * symbol_duration(conv.sf, conv.bw_hz);
}

AffluentPlan plan_for(const PlannerConfig& config, const NodeView& v,
                      std::vector<PairCandidate> candidates, double gamma,
                      double t_remaining_s, int channel) {
  AffluentPlan plan;
  plan.affluent = v.id;
  plan.listen = listen_params(config, channel);
  plan.residual_j = residual_energy(v, gamma, t_remaining_s, config.profile);
  const std::size_t kept = greedy_prefix(config, plan.listen, gamma, plan.residual_j,
                                         t_remaining_s, candidates, plan.t_lm_s);
  std::vector<LadingPair> pairs;
  for (std::size_t i = 0; i < kept; ++i) {
    pairs.push_back(candidates[i].pair);
    plan.pairs.push_back(PlannedPair{candidates[i].depleting, v.id,
                                     candidates[i].e_om_j, candidates[i].pair.offload});
  }
  plan.lading_power_w = lading_power(config.profile, config.cad, plan.listen, gamma,
                                     pairs, config.divisor);
  return plan;
}

PairCandidate candidate_for(const PlannerConfig& config, const NodeView& u,
                            const NodeView& v, const TransmissionParams& offload) {
  PairCandidate c;
  c.depleting = u.id;
  c.tau_s = u.tau_s;
  c.e_om_j = offload_packet_energy(config.profile, offload, u.payload_bytes);
  c.pair.tau_s = u.tau_s;
  c.pair.offload = offload;
  c.pair.conv = v.conv_params;
  c.pair.payload_bytes = u.payload_bytes;
  c.pair.t_rx_s = gateway_ack_listen_s(config, v.conv_params);
  return c;
}

}  // namespace

PairingPlan select_pairs(std::span<const NodeView> nodes,
                         const Classification& classes, double gamma,
                         double t_remaining_s, const PlannerConfig& config,
                         const std::map<int, int>& cell_channel) {
  const auto by_id = index_by_id(nodes);
  PairingPlan plan;
  for (int vid : classes.affluent) {
    const NodeView& v = *by_id.at(vid);
    const int channel = cell_channel.at(v.cell);
    std::vector<PairCandidate> candidates;
    for (int uid : classes.depleting) {
      const NodeView& u = *by_id.at(uid);
      if (u.cell != v.cell) continue;
      const auto offload = offload_params_for(config, u.position, v.position, channel);
      if (!offload) continue;
      candidates.push_back(candidate_for(config, u, v, *offload));
    }
    plan.affluent.push_back(
        plan_for(config, v, std::move(candidates), gamma, t_remaining_s, channel));
  }
  return plan;
}

PairingPlan dispatch_exclusive(const PairingPlan& plan, std::span<const NodeView> nodes,
                               double gamma, double t_remaining_s,
                               const PlannerConfig& config) {
  const auto by_id = index_by_id(nodes);
  std::vector<const AffluentPlan*> order;
  for (const auto& a : plan.affluent) {
    if (!a.pairs.empty()) order.push_back(&a);
  }
  std::sort(order.begin(), order.end(), [](const AffluentPlan* a, const AffluentPlan* b) {
    if (a->pairs.size() != b->pairs.size()) return a->pairs.size() > b->pairs.size();
    if (a->t_lm_s != b->t_lm_s) return a->t_lm_s > b->t_lm_s;
    return a->affluent < b->affluent;
  });

  std::unordered_set<int> taken;
  PairingPlan out;
  out.effective_start_s = plan.effective_start_s;
  for (const AffluentPlan* a : order) {
    const NodeView& v = *by_id.at(a->affluent);
    std::vector<PairCandidate> candidates;
    for (const auto& p : a->pairs) {
      if (taken.count(p.depleting)) continue;
      candidates.push_back(candidate_for(config, *by_id.at(p.depleting), v, p.offload));
    }
    if (candidates.empty()) continue;
    AffluentPlan kept = plan_for(config, v, std::move(candidates), gamma,
                                 t_remaining_s, a->listen.channel);
    if (kept.pairs.empty()) continue;
    for (const auto& p : kept.pairs) taken.insert(p.depleting);
    out.affluent.push_back(std::move(kept));
  }
  std::sort(out.affluent.begin(), out.affluent.end(),
            [](const AffluentPlan& a, const AffluentPlan& b) {
              return a.affluent < b.affluent;
            });
  return out;
}

// ---------------------------------------------------------------------------

CellMap::CellMap(int n_channels) : n_channels_(n_channels), next_id_(n_channels) {
  if (n_channels < 1) throw std::invalid_argument("need at least one channel");
  for (int i = 0; i < n_channels; ++i) cells_.push_back(Cell{i, i, {}, i});
}

int CellMap::sector_of(Position p) const {
  double angle = std::atan2(p.y, p.x);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  const int s = static_cast<int>(angle / (2.0 * std::numbers::pi) * n_channels_);
  return std::clamp(s, 0, n_channels_ - 1);
}

int CellMap::cell_of(Position p) const {
  const int sector = sector_of(p);
  for (const auto& c : cells_) {
    if (c.sector != sector) continue;
    bool inside = true;
    for (const auto& step : c.path) {
      const int q = (p.x >= step.cx ? 1 : 0) + (p.y >= step.cy ? 2 : 0);
      if (q != step.quadrant) {
        inside = false;
        break;
      }
    }
    if (inside) return c.id;
  }
  throw std::logic_error("position not covered by any cell");
}

const Cell& CellMap::cell(int cell_id) const {
  for (const auto& c : cells_) {
    if (c.id == cell_id) return c;
  }
  throw std::out_of_range("unknown cell " + std::to_string(cell_id));
}

std::map<int, int> CellMap::channel_by_cell() const {
  std::map<int, int> out;
  for (const auto& c : cells_) out[c.id] = c.channel;
  return out;
}

bool CellMap::adjacent(int a, int b) const {
  if (a == b) return false;
  const int sa = cell(a).sector;
  const int sb = cell(b).sector;
  const int diff = std::abs(sa - sb);
  return diff <= 1 || diff == n_channels_ - 1;
}

bool CellMap::split(int cell_id, std::span<const Position> members) {
  if (members.size() < 2) return false;
  auto it = std::find_if(cells_.begin(), cells_.end(),
                         [&](const Cell& c) { return c.id == cell_id; });
  if (it == cells_.end()) throw std::out_of_range("unknown cell");
  double x0 = members[0].x, x1 = x0, y0 = members[0].y, y1 = y0;
  for (const auto& p : members) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const Cell parent = *it;
  cells_.erase(it);
  for (int q = 0; q < 4; ++q) {
    Cell child = parent;
    child.id = next_id_++;
    child.path.push_back(QuadStep{(x0 + x1) / 2.0, (y0 + y1) / 2.0, q});
    cells_.push_back(child);
    // Lowest channel not used by any adjacent cell.
    std::vector<bool> used(n_channels_, false);
    for (const auto& other : cells_) {
      if (other.id != child.id && adjacent(child.id, other.id)) {
        used[other.channel] = true;
      }
    }
    auto free = std::find(used.begin(), used.end(), false);
    cells_.back().channel =
        free == used.end() ? parent.channel : static_cast<int>(free - used.begin());
  }
  return true;
}

CellAssignment assign_cells(CellMap& map, std::span<const Position> positions,
                            int split_threshold, const std::map<int, int>* counts) {
  if (counts != nullptr) {
    std::vector<int> over;
    for (const auto& [cell, n] : *counts) {
      if (n > split_threshold) over.push_back(cell);
    }
    for (int cell : over) {
      std::vector<Position> members;
      for (const auto& p : positions) {
        if (map.cell_of(p) == cell) members.push_back(p);
      }
      map.split(cell, members);
    }
  }
  const auto channels = map.channel_by_cell();
  CellAssignment out;
  for (const auto& p : positions) {
    const int c = map.cell_of(p);
    out.cell.push_back(c);
    out.channel.push_back(channels.at(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

TransmissionParams initial_conventional_params(const AdrConfig& adr,
                                               const LinkModel& link,
                                               const RadioPowerProfile& profile,
                                               double distance_m,
                                               TransmissionParams base) {
  if (adr.conventional_sf.empty()) throw std::invalid_argument("empty SF range");
  std::vector<int> sfs = adr.conventional_sf;
  std::sort(sfs.begin(), sfs.end());
  base.power_dbm = profile.max_level();
  base.sf = sfs.back();
  const double rx = base.power_dbm - path_loss_db(distance_m);
  for (int sf : sfs) {
    if (rx - link.sensitivity(sf) >= adr.sf_margin_db) {
      base.sf = sf;
      break;
    }
  }
  base.de = low_data_rate_flag(base.sf, base.bw_hz);
  return base;
}

bool adr_update(AdrState& state, TransmissionParams& conv, const AdrConfig& adr,
                const LinkModel& link, const RadioPowerProfile& profile,
                double distance_m) {
  ++state.received;
  if (adr.packets_per_step <= 0 || state.received % adr.packets_per_step != 0) {
    return false;
  }
  const double target = conv.power_dbm - adr.step_db;
  std::optional<int> level;
  for (const auto& [dbm, watts] : profile.p_tx_w) {
    if (dbm <= target + 1e-9) level = dbm;
  }
  if (!level) return false;
  const double margin = *level - path_loss_db(distance_m) - link.sensitivity(conv.sf);
  if (margin < adr.step_margin_db) return false;
  conv.power_dbm = *level;
  return true;
}

// ---------------------------------------------------------------------------

ScheduledTransition schedule_mode_transition(const PairingPlan& plan,
                                             std::span<const NodeView> nodes,
                                             double now_s, double cycle_end_s,
                                             double guard_s,
                                             std::uint64_t plan_id) {
  const auto by_id = index_by_id(nodes);
  auto predicted_contact = [&](int id) {
    const NodeView& n = *by_id.at(id);
    return n.last_contact_s + std::min(n.heartbeat_period_s, n.tau_s);
  };

  ScheduledTransition out;
  out.effective_start_s = now_s;
  for (const auto& a : plan.affluent) {
    if (a.pairs.empty()) continue;
    double start = std::max(now_s, predicted_contact(a.affluent));
    for (const auto& p : a.pairs) start = std::max(start, predicted_contact(p.depleting));
    const double lading_from = start - guard_s;
    const double deadline = std::min(lading_from + a.t_lm_s, cycle_end_s);
    const double until = deadline - guard_s;
    if (start >= cycle_end_s || until <= start) {
      out.dropped.push_back(a.affluent);
      continue;
    }
    out.effective_start_s = std::max(out.effective_start_s, start);

    ModeCommand lading;
    lading.type = ModeCommand::Type::EnterLading;
    lading.plan_id = plan_id;
    lading.start_s = start;
    lading.until_s = deadline;
    lading.allowance_j = a.lading_power_w * (deadline - lading_from);
    lading.offload = a.listen;
    out.commands[a.affluent] = lading;

    for (const auto& p : a.pairs) {
      ModeCommand off;
      off.type = ModeCommand::Type::EnterOffloading;
      off.plan_id = plan_id;
      off.start_s = start;
      off.until_s = until;
      off.partner = a.affluent;
      off.offload = p.offload;
      out.commands[p.depleting] = off;
    }
  }
  return out;
}

}  // namespace lll
