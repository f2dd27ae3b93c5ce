#pragma once

// Discrete-event engine, event log, metrics and parameter sweeps.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lll/scenario.hpp"

namespace lll {

/// JSON-lines event log. When disabled nothing is formatted.
class EventLog {
 public:
  explicit EventLog(bool enabled = false) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  void emit(const nlohmann::ordered_json& event);
  const std::vector<std::string>& lines() const { return lines_; }
  void write(std::ostream& out) const;

 private:
  bool enabled_;
  std::vector<std::string> lines_;
};

struct NodeMetrics {
  int id = 0;
  double budget_j = 0.0;
  double consumed_j = 0.0;
  double depleted_at_s = -1.0;
  bool high_rate = false;
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t offloaded = 0;  ///< own packets delivered through a lading node
  double lading_s = 0.0;
  double offloading_s = 0.0;
};

struct Metrics {
  double duration_s = 0.0;
  double lifetime_s = 0.0;
  bool lifetime_censored = false;  ///< no node depleted within the run
  int first_depleted_node = -1;
  std::uint64_t bytes_delivered = 0;         ///< whole run
  std::uint64_t bytes_in_window = 0;         ///< within [0, lifetime]
  double throughput_bytes_per_s = 0.0;
  std::uint64_t packets_delivered = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t collisions = 0;
  std::uint64_t cad_wakeups = 0;
  std::uint64_t false_wakeups = 0;
  std::uint64_t offload_attempts = 0;
  std::uint64_t forwarded = 0;
  std::uint64_t replans = 0;
  std::uint64_t plans = 0;
  std::uint64_t lading_depletions = 0;
  std::uint64_t tx_after_depletion = 0;
  std::uint64_t early_reverts = 0;
  double total_debited_j = 0.0;
  std::vector<NodeMetrics> nodes;
};

nlohmann::ordered_json to_json(const Metrics& metrics);

struct RunResult {
  Metrics metrics;
  EventLog log;
};

/// Runs one simulation. The event log is kept only when `keep_log` is set.
RunResult run_simulation(const ScenarioConfig& config, bool keep_log = false);

/// Recomputes lifetime, delivery, throughput and per-node energy from an
/// event log.
Metrics compute_metrics(const std::vector<std::string>& log_lines,
                        const ScenarioConfig& config);

struct SweepRow {
  std::string param;
  std::string value;
  std::uint64_t seed = 0;
  std::string protocol;
  double lifetime_s = 0.0;
  double throughput_Bps = 0.0;
  std::string error;
};

/// One row per (value, seed, protocol), in that nesting order. A failing run
/// yields a row with `error` set and the sweep continues.
std::vector<SweepRow> sweep(const nlohmann::json& base_document, const std::string& param,
                            const std::vector<std::string>& values,
                            const std::vector<std::uint64_t>& seeds,
                            const std::vector<Protocol>& protocols);

inline constexpr const char* kSweepHeader =
    "param,value,seed,protocol,lifetime_s,throughput_Bps,error";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace lll
