#include "lll/medium.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lll {

double distance(Position a, Position b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

OnAirTransmission make_transmission(std::uint64_t id, int sender_id,
                                    Position origin,
                                    const TransmissionParams& params,
                                    double start_s, int payload_bytes,
                                    FrameKind frame, int target,
                                    std::uint64_t packet_id) {
  OnAirTransmission tx;
  tx.id = id;
  tx.sender_id = sender_id;
  tx.origin = origin;
  tx.params = params;
  tx.start_s = start_s;
  tx.preamble_end_s =
      start_s + params.preamble_symbols * symbol_duration(params.sf, params.bw_hz);
  tx.end_s = start_s + airtime(params, payload_bytes, frame);
  tx.payload_bytes = payload_bytes;
  tx.frame = frame;
  tx.target = target;
  tx.packet_id = packet_id;
  return tx;
}

double LinkModel::sensitivity(int sf) const {
  auto it = sensitivity_dbm_by_sf.find(sf);
  if (it == sensitivity_dbm_by_sf.end()) {
    throw std::invalid_argument("no receiver sensitivity for SF" +
                                std::to_string(sf));
  }
  return it->second;
}

void LinkModel::validate() const {
  if (sensitivity_dbm_by_sf.empty()) {
    throw std::invalid_argument("sensitivity table must not be empty");
  }
  double previous = 0.0;
  bool first = true;
  for (const auto& [sf, dbm] : sensitivity_dbm_by_sf) {
    if (!first && !(dbm < previous)) {
      throw std::invalid_argument(
          "sensitivity must decrease strictly with SF (SF" + std::to_string(sf) + ")");
    }
    previous = dbm;
    first = false;
  }
  if (capture_threshold_db < 0.0) {
    throw std::invalid_argument("capture_threshold_db must be >= 0");
  }
}

LinkModel default_link_model() {
  LinkModel link;
  link.sensitivity_dbm_by_sf = {{7, -123.0},  {8, -126.0},  {9, -129.0},
                                {10, -132.0}, {11, -134.5}, {12, -137.0}};
  return link;
}

double received_power_dbm(const OnAirTransmission& tx, Position receiver) {
  return tx.params.power_dbm - path_loss_db(distance(tx.origin, receiver));
}

bool receivable(const LinkModel& link, const OnAirTransmission& tx,
                Position receiver, const ListenerTuning& tuning) {
  if (tx.params.channel != tuning.channel || tx.params.sf != tuning.sf ||
      tx.params.bw_hz != tuning.bw_hz ||
      tx.params.iq_inverted != tuning.iq_inverted) {
    return false;
  }
  // Link budgets computed to land exactly on the sensitivity must pass.
  constexpr double kTolDb = 1e-9;
  return received_power_dbm(tx, receiver) + kTolDb >= link.sensitivity(tx.params.sf);
}

bool interferes(const LinkModel& link, const OnAirTransmission& a,
                const OnAirTransmission& b) {
  if (a.id == b.id) return false;
  const bool overlap = a.start_s < b.end_s && b.start_s < a.end_s;
  if (!overlap) return false;
  if (a.params.channel != b.params.channel || a.params.sf != b.params.sf ||
      a.params.bw_hz != b.params.bw_hz) {
    return false;
  }
  if (link.iq_orthogonal && a.params.iq_inverted != b.params.iq_inverted) {
    return false;
  }
  return true;
}

std::vector<bool> resolve_collisions(const LinkModel& link,
                                     std::span<const OnAirTransmission> frames,
                                     Position receiver) {
  std::vector<bool> survives(frames.size(), true);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = 0; j < frames.size(); ++j) {
      if (i == j || !interferes(link, frames[i], frames[j])) continue;
      if (link.capture_enabled) {
        const double own = received_power_dbm(frames[i], receiver);
        const double other = received_power_dbm(frames[j], receiver);
        if (own - other >= link.capture_threshold_db) continue;
      }
      survives[i] = false;
      break;
    }
  }
  return survives;
}

bool cad_detects(const LinkModel& link, const ListenerTuning& tuning,
                 double probe_start, double probe_len,
                 std::span<const OnAirTransmission> active, Position listener) {
  const double probe_end = probe_start + probe_len;
  return std::any_of(active.begin(), active.end(), [&](const auto& tx) {
    return tx.start_s <= probe_start && probe_end <= tx.preamble_end_s &&
           receivable(link, tx, listener, tuning);
  });
}

bool survives_at(const LinkModel& link, const OnAirTransmission& tx,
                 Position receiver) {
  if (!link.capture_enabled) return tx.interferers.empty();
  const double own = received_power_dbm(tx, receiver);
  for (const auto& other : tx.interferers) {
    const double theirs =
        other.power_dbm - path_loss_db(distance(other.origin, receiver));
    if (own - theirs < link.capture_threshold_db) return false;
  }
  return true;
}

std::vector<std::uint64_t> Medium::add(OnAirTransmission tx) {
  std::vector<std::uint64_t> hit;
  for (auto& other : active_) {
    if (!interferes(link_, tx, other)) continue;
    if (!other.collided) ++collisions_;
    if (!tx.collided) ++collisions_;
    other.collided = true;
    tx.collided = true;
    other.interferers.push_back({tx.id, tx.origin, tx.params.power_dbm});
    tx.interferers.push_back({other.id, other.origin, other.params.power_dbm});
    hit.push_back(other.id);
  }
  active_.push_back(std::move(tx));
  return hit;
}

OnAirTransmission Medium::finish(std::uint64_t id) {
  auto it = std::find_if(active_.begin(), active_.end(),
                         [id](const auto& tx) { return tx.id == id; });
  if (it == active_.end()) {
    throw std::logic_error("finishing unknown transmission " + std::to_string(id));
  }
  OnAirTransmission tx = std::move(*it);
  active_.erase(it);
  return tx;
}

const OnAirTransmission* Medium::find(std::uint64_t id) const {
  auto it = std::find_if(active_.begin(), active_.end(),
                         [id](const auto& tx) { return tx.id == id; });
  return it == active_.end() ? nullptr : &*it;
}

}  // namespace lll
