#pragma once

// Shared radio medium: log-distance propagation, receivability, ALOHA-style
// collisions and CAD preamble detection.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "lll/phy_energy.hpp"

namespace lll {

struct Position {
  double x = 0.0;
  double y = 0.0;
};

double distance(Position a, Position b);

inline constexpr int kGatewayId = -1;
inline constexpr int kBroadcastId = -2;

/// Another frame that overlapped this one in a conflicting configuration.
struct Interferer {
  std::uint64_t id = 0;
  Position origin;
  int power_dbm = 0;
};

struct OnAirTransmission {
  std::uint64_t id = 0;
  int sender_id = 0;
  Position origin;
  TransmissionParams params;
  double start_s = 0.0;
  double preamble_end_s = 0.0;
  double end_s = 0.0;
  std::uint64_t packet_id = 0;
  int payload_bytes = 0;
  FrameKind frame = FrameKind::Data;
  int target = kGatewayId;  ///< kGatewayId, kBroadcastId or a node id
  bool collided = false;
  std::vector<Interferer> interferers;
};

/// Builds a transmission that starts at `start_s` with timing derived from
/// the frame's airtime.
OnAirTransmission make_transmission(std::uint64_t id, int sender_id,
                                    Position origin,
                                    const TransmissionParams& params,
                                    double start_s, int payload_bytes,
                                    FrameKind frame, int target,
                                    std::uint64_t packet_id = 0);

struct LinkModel {
  std::map<int, double> sensitivity_dbm_by_sf;
  bool capture_enabled = false;
  double capture_threshold_db = 6.0;
  /// Regular and inverted I-Q frames do not interfere when true.
  bool iq_orthogonal = true;

  double sensitivity(int sf) const;
  void validate() const;
};

/// SF7..SF12 at 125 kHz.
LinkModel default_link_model();

/// What a receiver is tuned to.
struct ListenerTuning {
  int channel = 0;
  int sf = 7;
  double bw_hz = 125000.0;
  bool iq_inverted = false;

  static ListenerTuning of(const TransmissionParams& p) {
    return {p.channel, p.sf, p.bw_hz, p.iq_inverted};
  }
};

double received_power_dbm(const OnAirTransmission& tx, Position receiver);

bool receivable(const LinkModel& link, const OnAirTransmission& tx,
                Position receiver, const ListenerTuning& tuning);

/// True when the two frames overlap in time and share channel, SF, bandwidth
/// and (if I-Q orthogonality is on) I-Q orientation.
bool interferes(const LinkModel& link, const OnAirTransmission& a,
                const OnAirTransmission& b);

/// Per-transmission survival (true = not destroyed) for a set of frames.
/// With capture enabled, survival is judged at `receiver`: a frame survives
/// when it is `capture_threshold_db` stronger than every interferer.
std::vector<bool> resolve_collisions(const LinkModel& link,
                                     std::span<const OnAirTransmission> frames,
                                     Position receiver = {});

/// Whether `tx` is decodable at `receiver` given the interferers recorded
/// on it. Without capture any interferer destroys the frame.
bool survives_at(const LinkModel& link, const OnAirTransmission& tx,
                 Position receiver);

/// Does a CAD probe over [probe_start, probe_start + probe_len] fire?
bool cad_detects(const LinkModel& link, const ListenerTuning& tuning,
                 double probe_start, double probe_len,
                 std::span<const OnAirTransmission> active, Position listener);

/// Live frames on the air. Collision flags are set as frames are added.
class Medium {
 public:
  explicit Medium(LinkModel link) : link_(std::move(link)) {}

  const LinkModel& link() const { return link_; }

  /// Registers a new frame and records mutual interference with every live
  /// frame it conflicts with. Returns the ids of those frames.
  std::vector<std::uint64_t> add(OnAirTransmission tx);
  /// Removes and returns the frame.
  OnAirTransmission finish(std::uint64_t id);

  const OnAirTransmission* find(std::uint64_t id) const;
  std::span<const OnAirTransmission> active() const { return active_; }

  std::uint64_t collisions() const { return collisions_; }

 private:
  LinkModel link_;
  std::vector<OnAirTransmission> active_;
  std::uint64_t collisions_ = 0;
};

}  // namespace lll
