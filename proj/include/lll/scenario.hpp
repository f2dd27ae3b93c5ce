#pragma once

// Experiment definition loaded from JSON. See docs/scenario_schema.md.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lll/medium.hpp"
#include "lll/netserver.hpp"
#include "lll/node_mac.hpp"
#include "lll/phy_energy.hpp"

namespace lll {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Protocol { LoRaWAN, LLL };
const char* to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& name);

enum class GammaMode { Fixed, Window };

struct RechargeSegment {
  double duration_s = 0.0;
  double power_w = 0.0;
};

/// Piecewise-constant integral of harvested power over one cycle.
double integrate_recharge(const std::vector<RechargeSegment>& trace);

/// Optional per-node overrides; anything left empty is drawn from the seed.
struct NodeSpec {
  std::optional<Position> position;
  std::optional<double> budget_j;
  std::optional<double> rate_lo_per_h;
  std::optional<double> rate_hi_per_h;
  std::optional<double> heartbeat_period_s;
  std::optional<std::vector<RechargeSegment>> recharge;
};

struct ScenarioConfig {
  int node_count = 0;
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::LLL;

  double disc_radius_m = 3500.0;
  double duration_s = 86400.0;
  double recharge_cycle_s = 86400.0;

  int channel_count = 8;
  double channel_base_mhz = 902.3;
  double channel_step_mhz = 0.2;

  double bw_hz = 125000.0;
  CodingRate cr = CodingRate::CR4_5;
  int conventional_preamble = 8;
  int offload_sf = 7;
  AdrConfig adr;

  CadTimers cad;
  RadioPowerProfile radio = default_power_profile();
  LinkModel link = default_link_model();

  enum class BudgetMode { Uniform, PerNode, Recharge };
  BudgetMode budget_mode = BudgetMode::Uniform;
  double budget_lo_j = 6.0;
  double budget_hi_j = 25.0;
  std::vector<double> budgets_j;
  /// One trace shared by all nodes, or one per node.
  std::vector<std::vector<RechargeSegment>> recharge_traces;
  double reserve_fraction = 0.0;

  double high_rate_fraction = 0.03;
  double high_rate_lo_per_h = 20.0;
  double high_rate_hi_per_h = 30.0;
  double low_rate_lo_per_h = 2.0;
  double low_rate_hi_per_h = 4.0;
  int payload_bytes = 10;
  double heartbeat_period_s = 3600.0;

  GammaMode gamma_mode = GammaMode::Fixed;
  double gamma_value = 2.0;
  std::size_t gamma_window = 100;

  MacTimings mac;
  int split_threshold = 10;
  CorrectionDivisor correction_divisor = CorrectionDivisor::CadPeriod;
  double downlink_loss_probability = 0.0;

  std::vector<NodeSpec> nodes;

  /// Throws ScenarioError naming the offending field.
  void validate() const;
};

/// Parses and validates a scenario document. Unknown keys are rejected;
/// every error message starts with the JSON path of the field.
ScenarioConfig load_scenario(const nlohmann::json& document);
ScenarioConfig load_scenario_file(const std::string& path);

/// Everything random about the node population, fixed by the seed.
struct NodeSetup {
  Position position;
  double budget_j = 0.0;
  double reserve_j = 0.0;
  TrafficModel traffic;
  bool high_rate = false;
};

std::vector<NodeSetup> resolve_nodes(const ScenarioConfig& config);

/// Sets `dotted_path` (e.g. "traffic.high_rate_fraction") in a scenario
/// document to `value`, parsed as JSON when possible and as a string
/// otherwise.
void set_document_field(nlohmann::json& document, const std::string& dotted_path,
                        const std::string& value);

}  // namespace lll
