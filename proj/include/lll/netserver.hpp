#pragma once

// Network-server side planning: retransmission overhead estimate,
// affluent/depleting classification, lading-time budgeting, greedy pairing,
// cells and channels, ADR and transition scheduling.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lll/medium.hpp"
#include "lll/node_mac.hpp"
#include "lll/phy_energy.hpp"

namespace lll {

/// Network-wide sliding window of per-packet attempt counts.
class RetransWindow {
 public:
  explicit RetransWindow(std::size_t capacity = 100);

  void push(int attempts);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<int>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<int> entries_;
};

/// Mean of the window; 1 when empty.
double estimate_gamma(std::span<const int> window);
double estimate_gamma(const RetransWindow& window);

/// gamma * T_zeta / tau.
double expected_tx_count(double gamma, double t_remaining_s, double tau_s);

/// n_tx conventional transmissions of `payload_bytes` at `conv`.
double conventional_mode_energy(const RadioPowerProfile& profile,
                                const TransmissionParams& conv, int payload_bytes,
                                double n_tx);

/// What the server knows about one node.
struct NodeView {
  int id = 0;
  Position position;
  int cell = 0;
  double budget_j = 0.0;
  double reserve_j = 0.0;
  double consumed_j = 0.0;  ///< last reported
  double tau_s = 1.0;
  double heartbeat_period_s = 3600.0;
  double last_contact_s = 0.0;
  int payload_bytes = 10;
  TransmissionParams conv_params;
  bool live = true;
};

/// Planner configuration shared by every replanning call.
struct PlannerConfig {
  RadioPowerProfile profile;
  LinkModel link;
  CadTimers cad;
  int offload_sf = 7;
  double bw_hz = 125000.0;
  CodingRate cr = CodingRate::CR4_5;
  PowerRange power_range;
  /// Receive window length in conventional symbols; the gateway-ACK listening
  /// time charged per forwarded frame is this many symbols at the lading
  /// node's conventional parameters.
  double rx_window_symbols = 5.0;
  CorrectionDivisor divisor = CorrectionDivisor::CadPeriod;
};

struct Classification {
  std::vector<int> affluent;
  std::vector<int> depleting;
};

/// Remaining-cycle conventional energy of `node`.
double remaining_conventional_energy(const NodeView& node, double gamma,
                                     double t_remaining_s,
                                     const RadioPowerProfile& profile);

/// Affluent iff E_CM < budget - reserve - consumed. Non-live nodes are
/// skipped; results are in ascending id order.
Classification classify_nodes(std::span<const NodeView> nodes, double gamma,
                              double t_remaining_s,
                              const RadioPowerProfile& profile);

/// E_r = budget - reserve - E_CM - consumed (may be negative).
double residual_energy(const NodeView& node, double gamma, double t_remaining_s,
                       const RadioPowerProfile& profile);

/// T_LM = E_r / power, clamped to [0, cap_s]. A non-positive power yields
/// the cap (or 0 when E_r <= 0).
double compute_lading_time(double residual_j, double lading_power_w, double cap_s);

/// Offload configuration for u -> v: fixed low SF, the smallest table power
/// that closes the link, inverted I-Q, preamble long enough for CAD. Empty
/// when the link cannot be closed at the highest available level.
std::optional<TransmissionParams> offload_params_for(const PlannerConfig& config,
                                                     Position from, Position to,
                                                     int channel);

struct PlannedPair {
  int depleting = 0;
  int affluent = 0;
  double e_om_j = 0.0;
  TransmissionParams offload;
};

struct AffluentPlan {
  int affluent = 0;
  double t_lm_s = 0.0;
  double residual_j = 0.0;
  double lading_power_w = 0.0;
  TransmissionParams listen;
  std::vector<PlannedPair> pairs;  ///< ascending (E_OM, depleting id)
};

struct PairingPlan {
  std::vector<AffluentPlan> affluent;  ///< ascending affluent id
  double effective_start_s = 0.0;
};

/// Candidate pair used by select_pairs' core loop.
struct PairCandidate {
  int depleting = 0;
  double e_om_j = 0.0;
  double tau_s = 1.0;
  LadingPair pair;
};

/// Greedy core for one affluent node: sort by (E_OM, id), compute T_LM, drop
/// the last pair while some tau exceeds T_LM. Returns the kept prefix length
/// and writes the final T_LM.
std::size_t greedy_prefix(const PlannerConfig& config,
                          const TransmissionParams& listen, double gamma,
                          double residual_j, double cap_s,
                          std::vector<PairCandidate>& candidates, double& t_lm_s);

/// For each affluent node, pairs it with every reachable depleting node in
/// its cell and prunes greedily. A depleting node may appear under several
/// affluent nodes; see dispatch_exclusive.
PairingPlan select_pairs(std::span<const NodeView> nodes,
                         const Classification& classes, double gamma,
                         double t_remaining_s, const PlannerConfig& config,
                         const std::map<int, int>& cell_channel);

/// Resolves a plan so every depleting node has at most one affluent partner.
/// Affluent nodes with more pairs go first (then longer T_LM, then lower id);
/// later ones lose the depleting nodes already taken and get T_LM recomputed.
PairingPlan dispatch_exclusive(const PairingPlan& plan, std::span<const NodeView> nodes,
                               double gamma, double t_remaining_s,
                               const PlannerConfig& config);

// ---------------------------------------------------------------------------
// Cells.

/// One quadtree step: the child holding points in `quadrant` around
/// (cx, cy); quadrant = (x >= cx) + 2 (y >= cy).
struct QuadStep {
  double cx = 0.0;
  double cy = 0.0;
  int quadrant = 0;
};

struct Cell {
  int id = 0;
  int sector = 0;
  std::vector<QuadStep> path;
  int channel = 0;
};

class CellMap {
 public:
  /// `n_channels` equal angular sectors around the gateway; sector i on
  /// channel i.
  explicit CellMap(int n_channels);

  int cell_of(Position p) const;
  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(int cell_id) const;
  std::map<int, int> channel_by_cell() const;

  /// Replaces cell `cell_id` by four children split at the midpoint of
  /// `members`' bounding box. Children take the lowest channels not used by
  /// adjacent cells. Returns false (no change) for fewer than two members.
  bool split(int cell_id, std::span<const Position> members);

  /// Cells in the same or neighbouring sectors.
  bool adjacent(int a, int b) const;

  int n_channels() const { return n_channels_; }

 private:
  int sector_of(Position p) const;

  int n_channels_;
  std::vector<Cell> cells_;
  int next_id_;
};

struct CellAssignment {
  std::vector<int> cell;     ///< per node index
  std::vector<int> channel;  ///< per node index
};

/// Assigns cells and channels to `positions`. With `counts` (affluent +
/// depleting per current cell) every cell whose count exceeds
/// `split_threshold` is split first.
CellAssignment assign_cells(CellMap& map, std::span<const Position> positions,
                            int split_threshold,
                            const std::map<int, int>* counts = nullptr);

// ---------------------------------------------------------------------------
// ADR.

struct AdrConfig {
  std::vector<int> conventional_sf{9, 10};
  double sf_margin_db = 10.0;   ///< margin needed to pick the lower SF
  double step_db = 3.0;
  int packets_per_step = 20;
  double step_margin_db = 6.0;  ///< margin kept after a power step-down
};

struct AdrState {
  int received = 0;
};

/// Initial conventional parameters for a node at `distance_m` from the
/// gateway: highest power, lowest SF in range with at least `sf_margin_db`
/// of margin, else the highest SF.
TransmissionParams initial_conventional_params(const AdrConfig& adr,
                                               const LinkModel& link,
                                               const RadioPowerProfile& profile,
                                               double distance_m,
                                               TransmissionParams base);

/// Counts a received uplink; every `packets_per_step` packets lowers power
/// by `step_db` to the next table level if the margin stays at least
/// `step_margin_db`. Returns true when the parameters changed.
bool adr_update(AdrState& state, TransmissionParams& conv, const AdrConfig& adr,
                const LinkModel& link, const RadioPowerProfile& profile,
                double distance_m);

// ---------------------------------------------------------------------------
// Transition scheduling.

struct ScheduledTransition {
  double effective_start_s = 0.0;
  std::vector<int> dropped;  ///< affluent nodes with no contact before cycle end
  std::map<int, ModeCommand> commands;
};

/// Start = latest predicted contact (last contact + min(heartbeat, tau)) over
/// all transitioning nodes, not before `now_s`. Lading runs for exactly
/// T_LM from start - guard; offloading covers [start, lading end - guard).
/// Affluent plans whose start falls after `cycle_end_s` are dropped.
ScheduledTransition schedule_mode_transition(const PairingPlan& plan,
                                             std::span<const NodeView> nodes,
                                             double now_s, double cycle_end_s,
                                             double guard_s,
                                             std::uint64_t plan_id);

}  // namespace lll
