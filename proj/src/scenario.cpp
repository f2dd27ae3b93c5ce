#include "lll/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "lll/rng.hpp"

namespace lll {

using nlohmann::json;

const char* to_string(Protocol protocol) {
  return protocol == Protocol::LoRaWAN ? "lorawan" : "lll";
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "lorawan") return Protocol::LoRaWAN;
  if (name == "lll") return Protocol::LLL;
  throw ScenarioError("protocol: expected \"lorawan\" or \"lll\", got \"" + name + "\"");
}

double integrate_recharge(const std::vector<RechargeSegment>& trace) {
  double total = 0.0;
  for (const auto& s : trace) {
    if (!(s.duration_s > 0.0)) throw ScenarioError("recharge segment duration must be > 0");
    if (!(s.power_w >= 0.0)) throw ScenarioError("recharge segment power must be >= 0");
    total += s.duration_s * s.power_w;
  }
  return total;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ScenarioError(path + ": " + what);
}

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

/// Reads one JSON object, remembering which keys were consumed so that
/// leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "(root)" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return join(path_, key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) fail(path(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path(key), "must be finite");
    return d;
  }

  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(path(key), "expected an integer");
    return v.get<long long>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(path(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) fail(path(key), "expected a string");
    return v.get<std::string>();
  }

  ObjectReader object(const std::string& key) { return ObjectReader(raw(key), path(key)); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(path(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "must be finite");
  return d;
}

std::pair<double, double> range_of(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [lo, hi]");
  const double lo = as_number(v[0], path + "[0]");
  const double hi = as_number(v[1], path + "[1]");
  if (!(lo <= hi)) fail(path, "lo must not exceed hi");
  return {lo, hi};
}

std::vector<RechargeSegment> trace_of(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected a list of [duration_s, power_w]");
  std::vector<RechargeSegment> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || v[i].size() != 2) fail(p, "expected [duration_s, power_w]");
    RechargeSegment s{as_number(v[i][0], p + "[0]"), as_number(v[i][1], p + "[1]")};
    if (!(s.duration_s > 0.0)) fail(p, "duration must be > 0");
    if (!(s.power_w >= 0.0)) fail(p, "power must be >= 0");
    out.push_back(s);
  }
  return out;
}

int level_key(const std::string& key, const std::string& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(key, &used);
    if (used != key.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(path, "key \"" + key + "\" is not an integer");
  }
}

void read_radio(ObjectReader r, RadioPowerProfile& radio) {
  if (r.has("p_tx_w")) {
    const json& table = r.raw("p_tx_w");
    if (!table.is_object() || table.empty()) fail(r.path("p_tx_w"), "expected a non-empty object");
    radio.p_tx_w.clear();
    for (auto it = table.begin(); it != table.end(); ++it) {
      const std::string p = r.path("p_tx_w") + "." + it.key();
      radio.p_tx_w[level_key(it.key(), p)] = as_number(it.value(), p);
    }
  }
  radio.p_rx_w = r.number("p_rx_w", radio.p_rx_w);
  radio.p_rc_osc_w = r.number("p_rc_osc_w", radio.p_rc_osc_w);
  radio.p_sleep_w = r.number("p_sleep_w", radio.p_sleep_w);
  r.finish();
  try {
    radio.validate();
  } catch (const std::exception& e) {
    fail("radio", e.what());
  }
}

void read_link(ObjectReader r, LinkModel& link) {
  if (r.has("sensitivity_dbm")) {
    const json& table = r.raw("sensitivity_dbm");
    if (!table.is_object() || table.empty()) {
      fail(r.path("sensitivity_dbm"), "expected a non-empty object");
    }
    link.sensitivity_dbm_by_sf.clear();
    for (auto it = table.begin(); it != table.end(); ++it) {
      const std::string p = r.path("sensitivity_dbm") + "." + it.key();
      link.sensitivity_dbm_by_sf[level_key(it.key(), p)] = as_number(it.value(), p);
    }
  }
  link.capture_enabled = r.boolean("capture", link.capture_enabled);
  link.capture_threshold_db = r.number("capture_threshold_db", link.capture_threshold_db);
  link.iq_orthogonal = r.boolean("iq_orthogonal", link.iq_orthogonal);
  r.finish();
  try {
    link.validate();
  } catch (const std::exception& e) {
    fail("link", e.what());
  }
}

CorrectionDivisor divisor_from(const std::string& s, const std::string& path) {
  if (s == "cad_period") return CorrectionDivisor::CadPeriod;
  if (s == "offload_symbol") return CorrectionDivisor::OffloadSymbol;
  if (s == "conventional_symbol") return CorrectionDivisor::ConventionalSymbol;
  fail(path, "expected cad_period, offload_symbol or conventional_symbol");
}

NodeSpec read_node(ObjectReader r) {
  NodeSpec n;
  if (r.has("x") || r.has("y")) {
    if (!(r.has("x") && r.has("y"))) fail(r.path("x"), "x and y must be given together");
    n.position = Position{r.number("x", 0.0), r.number("y", 0.0)};
  }
  if (r.has("budget_j")) n.budget_j = r.number("budget_j", 0.0);
  if (r.has("rate_per_hour")) {
    const auto [lo, hi] = range_of(r.raw("rate_per_hour"), r.path("rate_per_hour"));
    n.rate_lo_per_h = lo;
    n.rate_hi_per_h = hi;
  }
  if (r.has("heartbeat_period_s")) n.heartbeat_period_s = r.number("heartbeat_period_s", 0.0);
  if (r.has("recharge_trace")) {
    n.recharge = trace_of(r.raw("recharge_trace"), r.path("recharge_trace"));
  }
  r.finish();
  return n;
}

}  // namespace

ScenarioConfig load_scenario(const json& document) {
  ScenarioConfig c;
  ObjectReader r(document, "");

  if (!r.has("seed")) fail("seed", "required field is missing");
  {
    const json& s = r.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      fail("seed", "expected a non-negative integer");
    }
    c.seed = s.get<std::uint64_t>();
  }
  if (r.has("nodes")) {
    const json& nodes = r.raw("nodes");
    if (!nodes.is_array()) fail("nodes", "expected a list");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      c.nodes.push_back(read_node(ObjectReader(nodes[i], "nodes[" + std::to_string(i) + "]")));
    }
  }
  if (r.has("node_count")) {
    c.node_count = static_cast<int>(r.integer("node_count", 0));
    if (!c.nodes.empty() && c.node_count != static_cast<int>(c.nodes.size())) {
      fail("node_count", "does not match the length of nodes");
    }
  } else if (!c.nodes.empty()) {
    c.node_count = static_cast<int>(c.nodes.size());
  } else {
    fail("node_count", "required field is missing");
  }
  c.protocol = protocol_from_string(r.string("protocol", to_string(c.protocol)));
  c.disc_radius_m = r.number("disc_radius_m", c.disc_radius_m);
  c.duration_s = r.number("duration_s", c.duration_s);
  c.recharge_cycle_s = r.number("recharge_cycle_s", c.recharge_cycle_s);

  if (r.has("channels")) {
    auto ch = r.object("channels");
    c.channel_count = static_cast<int>(ch.integer("count", c.channel_count));
    c.channel_base_mhz = ch.number("base_mhz", c.channel_base_mhz);
    c.channel_step_mhz = ch.number("step_mhz", c.channel_step_mhz);
    ch.finish();
  }
  c.bw_hz = r.number("bandwidth_hz", c.bw_hz);
  if (r.has("coding_rate")) {
    const long long d = r.integer("coding_rate", 5);
    if (d < 5 || d > 8) fail("coding_rate", "expected a denominator in [5,8]");
    c.cr = coding_rate_from_denominator(static_cast<int>(d));
  }
  c.conventional_preamble =
      static_cast<int>(r.integer("conventional_preamble", c.conventional_preamble));
  c.offload_sf = static_cast<int>(r.integer("offload_sf", c.offload_sf));

  if (r.has("adr")) {
    auto a = r.object("adr");
    if (a.has("conventional_sf")) {
      const json& v = a.raw("conventional_sf");
      if (!v.is_array() || v.empty()) fail(a.path("conventional_sf"), "expected a non-empty list");
      c.adr.conventional_sf.clear();
      for (const auto& sf : v) {
        if (!sf.is_number_integer()) fail(a.path("conventional_sf"), "expected integers");
        c.adr.conventional_sf.push_back(sf.get<int>());
      }
    }
    c.adr.sf_margin_db = a.number("sf_margin_db", c.adr.sf_margin_db);
    c.adr.step_db = a.number("step_db", c.adr.step_db);
    c.adr.packets_per_step = static_cast<int>(a.integer("packets_per_step", c.adr.packets_per_step));
    c.adr.step_margin_db = a.number("step_margin_db", c.adr.step_margin_db);
    a.finish();
  }
  if (r.has("cad")) {
    auto t = r.object("cad");
    c.cad.t1_s = t.number("t1_s", c.cad.t1_s);
    c.cad.t2_s = t.number("t2_s", c.cad.t2_s);
    t.finish();
  }
  if (r.has("radio")) read_radio(r.object("radio"), c.radio);
  if (r.has("link")) read_link(r.object("link"), c.link);

  if (r.has("budgets")) {
    auto b = r.object("budgets");
    int given = 0;
    if (b.has("uniform_j")) {
      ++given;
      c.budget_mode = ScenarioConfig::BudgetMode::Uniform;
      std::tie(c.budget_lo_j, c.budget_hi_j) = range_of(b.raw("uniform_j"), b.path("uniform_j"));
    }
    if (b.has("per_node_j")) {
      ++given;
      c.budget_mode = ScenarioConfig::BudgetMode::PerNode;
      const json& v = b.raw("per_node_j");
      if (!v.is_array()) fail(b.path("per_node_j"), "expected a list");
      for (std::size_t i = 0; i < v.size(); ++i) {
        c.budgets_j.push_back(as_number(v[i], b.path("per_node_j") + "[" + std::to_string(i) + "]"));
      }
    }
    if (b.has("recharge_trace")) {
      ++given;
      c.budget_mode = ScenarioConfig::BudgetMode::Recharge;
      c.recharge_traces.push_back(trace_of(b.raw("recharge_trace"), b.path("recharge_trace")));
    }
    if (b.has("recharge_traces")) {
      ++given;
      c.budget_mode = ScenarioConfig::BudgetMode::Recharge;
      const json& v = b.raw("recharge_traces");
      if (!v.is_array()) fail(b.path("recharge_traces"), "expected a list of traces");
      for (std::size_t i = 0; i < v.size(); ++i) {
        c.recharge_traces.push_back(
            trace_of(v[i], b.path("recharge_traces") + "[" + std::to_string(i) + "]"));
      }
    }
    if (given > 1) fail("budgets", "give exactly one of uniform_j, per_node_j, recharge_trace(s)");
    b.finish();
  }
  c.reserve_fraction = r.number("reserve_fraction", c.reserve_fraction);

  if (r.has("traffic")) {
    auto t = r.object("traffic");
    c.high_rate_fraction = t.number("high_rate_fraction", c.high_rate_fraction);
    if (t.has("high_rate_per_hour")) {
      std::tie(c.high_rate_lo_per_h, c.high_rate_hi_per_h) =
          range_of(t.raw("high_rate_per_hour"), t.path("high_rate_per_hour"));
    }
    if (t.has("low_rate_per_hour")) {
      std::tie(c.low_rate_lo_per_h, c.low_rate_hi_per_h) =
          range_of(t.raw("low_rate_per_hour"), t.path("low_rate_per_hour"));
    }
    c.payload_bytes = static_cast<int>(t.integer("payload_bytes", c.payload_bytes));
    c.heartbeat_period_s = t.number("heartbeat_period_s", c.heartbeat_period_s);
    t.finish();
  }
  if (r.has("gamma")) {
    auto g = r.object("gamma");
    const std::string mode = g.string("mode", "fixed");
    if (mode == "fixed") {
      c.gamma_mode = GammaMode::Fixed;
    } else if (mode == "window") {
      c.gamma_mode = GammaMode::Window;
    } else {
      fail(g.path("mode"), "expected \"fixed\" or \"window\"");
    }
    c.gamma_value = g.number("value", c.gamma_value);
    const long long w = g.integer("window", static_cast<long long>(c.gamma_window));
    if (w < 1) fail(g.path("window"), "must be >= 1");
    c.gamma_window = static_cast<std::size_t>(w);
    g.finish();
  }
  if (r.has("mac")) {
    auto m = r.object("mac");
    c.mac.rx1_delay_s = m.number("rx1_delay_s", c.mac.rx1_delay_s);
    c.mac.rx2_delay_s = m.number("rx2_delay_s", c.mac.rx2_delay_s);
    c.mac.rx_window_symbols = m.number("rx_window_symbols", c.mac.rx_window_symbols);
    c.mac.backoff_base_s = m.number("backoff_base_s", c.mac.backoff_base_s);
    c.mac.guard_s = m.number("guard_s", c.mac.guard_s);
    m.finish();
  }
  if (r.has("planner")) {
    auto p = r.object("planner");
    c.split_threshold = static_cast<int>(p.integer("split_threshold", c.split_threshold));
    if (p.has("correction_divisor")) {
      c.correction_divisor =
          divisor_from(p.string("correction_divisor", ""), p.path("correction_divisor"));
    }
    p.finish();
  }
  c.downlink_loss_probability =
      r.number("downlink_loss_probability", c.downlink_loss_probability);
  r.finish();

  c.validate();
  return c;
}

void ScenarioConfig::validate() const {
  auto check = [](bool ok, const char* path, const std::string& what) {
    if (!ok) fail(path, what);
  };
  check(node_count >= 1, "node_count", "must be >= 1");
  check(disc_radius_m > 0.0, "disc_radius_m", "must be > 0");
  check(duration_s > 0.0, "duration_s", "must be > 0");
  check(recharge_cycle_s > 0.0, "recharge_cycle_s", "must be > 0");
  check(channel_count >= 1, "channels.count", "must be >= 1");
  check(channel_step_mhz > 0.0, "channels.step_mhz", "must be > 0");
  check(bw_hz == 125000.0 || bw_hz == 500000.0, "bandwidth_hz", "must be 125000 or 500000");
  check(conventional_preamble >= 0, "conventional_preamble", "must be >= 0");
  check(offload_sf >= 6 && offload_sf <= 12, "offload_sf", "must be in [6,12]");
  check(link.sensitivity_dbm_by_sf.count(offload_sf) == 1, "offload_sf",
        "has no entry in link.sensitivity_dbm");
  for (int sf : adr.conventional_sf) {
    check(sf >= 6 && sf <= 12, "adr.conventional_sf", "SF must be in [6,12]");
    check(link.sensitivity_dbm_by_sf.count(sf) == 1, "adr.conventional_sf",
          "SF " + std::to_string(sf) + " has no entry in link.sensitivity_dbm");
  }
  check(adr.step_db >= 0.0, "adr.step_db", "must be >= 0");
  check(adr.packets_per_step >= 1, "adr.packets_per_step", "must be >= 1");
  check(cad.t1_s > 0.0, "cad.t1_s", "must be > 0");
  check(cad.t2_s > 0.0, "cad.t2_s", "must be > 0");
  check(cad.t2_s >= cad_probe_duration(offload_sf, bw_hz), "cad.t2_s",
        "shorter than a two-symbol probe at the offload spreading factor");
  check(budget_lo_j >= 0.0, "budgets.uniform_j", "must be >= 0");
  if (budget_mode == BudgetMode::PerNode) {
    check(static_cast<int>(budgets_j.size()) == node_count, "budgets.per_node_j",
          "needs one entry per node");
    for (double b : budgets_j) check(b >= 0.0, "budgets.per_node_j", "must be >= 0");
  }
  if (budget_mode == BudgetMode::Recharge) {
    check(recharge_traces.size() == 1 ||
              static_cast<int>(recharge_traces.size()) == node_count,
          "budgets.recharge_traces", "needs one trace or one per node");
  }
  check(reserve_fraction >= 0.0 && reserve_fraction <= 1.0, "reserve_fraction",
        "must be in [0,1]");
  check(high_rate_fraction >= 0.0 && high_rate_fraction <= 1.0,
        "traffic.high_rate_fraction", "must be in [0,1]");
  check(high_rate_lo_per_h > 0.0, "traffic.high_rate_per_hour", "rates must be > 0");
  check(low_rate_lo_per_h > 0.0, "traffic.low_rate_per_hour", "rates must be > 0");
  check(payload_bytes >= 0 && payload_bytes <= 255, "traffic.payload_bytes",
        "must be in [0,255]");
  check(heartbeat_period_s > 0.0, "traffic.heartbeat_period_s", "must be > 0");
  check(gamma_value >= 1.0, "gamma.value", "must be >= 1");
  check(mac.rx1_delay_s > 0.0 && mac.rx2_delay_s > mac.rx1_delay_s, "mac.rx2_delay_s",
        "delays must satisfy 0 < rx1 < rx2");
  check(mac.rx_window_symbols > 0.0, "mac.rx_window_symbols", "must be > 0");
  check(mac.backoff_base_s >= 0.0, "mac.backoff_base_s", "must be >= 0");
  check(mac.guard_s >= 0.0, "mac.guard_s", "must be >= 0");
  check(split_threshold >= 0, "planner.split_threshold", "must be >= 0");
  check(downlink_loss_probability >= 0.0 && downlink_loss_probability <= 1.0,
        "downlink_loss_probability", "must be in [0,1]");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const std::string p = "nodes[" + std::to_string(i) + "]";
    if (n.budget_j && *n.budget_j < 0.0) fail(p + ".budget_j", "must be >= 0");
    if (n.rate_lo_per_h && !(*n.rate_lo_per_h > 0.0)) fail(p + ".rate_per_hour", "must be > 0");
    if (n.heartbeat_period_s && !(*n.heartbeat_period_s > 0.0)) {
      fail(p + ".heartbeat_period_s", "must be > 0");
    }
    if (n.position && std::hypot(n.position->x, n.position->y) > disc_radius_m) {
      fail(p + ".x", "position lies outside the disc");
    }
  }
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path + ": cannot open scenario file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return load_scenario(doc);
}

std::vector<NodeSetup> resolve_nodes(const ScenarioConfig& c) {
  const int n = c.node_count;
  std::vector<NodeSetup> out(n);

  Rng placement = Rng::derive(c.seed, Stream::Placement);
  Rng budgets = Rng::derive(c.seed, Stream::Budget);
  Rng classes = Rng::derive(c.seed, Stream::TrafficClass);

  // Exactly round(fraction * n) high-rate nodes, chosen by a partial shuffle.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  const int high = static_cast<int>(std::lround(c.high_rate_fraction * n));
  for (int i = 0; i < high; ++i) {
    const int j = i + static_cast<int>(classes.uniform01() * (n - i));
    std::swap(order[i], order[std::min(j, n - 1)]);
  }
  std::vector<bool> is_high(n, false);
  for (int i = 0; i < high; ++i) is_high[order[i]] = true;

  for (int i = 0; i < n; ++i) {
    NodeSetup& s = out[i];
    const NodeSpec* spec = i < static_cast<int>(c.nodes.size()) ? &c.nodes[i] : nullptr;

    // Uniform over the disc area.
    const double r = c.disc_radius_m * std::sqrt(placement.uniform01());
    const double a = 2.0 * std::numbers::pi * placement.uniform01();
    s.position = {r * std::cos(a), r * std::sin(a)};
    if (spec && spec->position) s.position = *spec->position;

    const double drawn = budgets.uniform(c.budget_lo_j, c.budget_hi_j);
    switch (c.budget_mode) {
      case ScenarioConfig::BudgetMode::Uniform: s.budget_j = drawn; break;
      case ScenarioConfig::BudgetMode::PerNode: s.budget_j = c.budgets_j[i]; break;
      case ScenarioConfig::BudgetMode::Recharge:
        s.budget_j = integrate_recharge(
            c.recharge_traces.size() == 1 ? c.recharge_traces[0] : c.recharge_traces[i]);
        break;
    }
    if (spec && spec->recharge) s.budget_j = integrate_recharge(*spec->recharge);
    if (spec && spec->budget_j) s.budget_j = *spec->budget_j;
    s.reserve_j = c.reserve_fraction * s.budget_j;

    s.high_rate = is_high[i];
    s.traffic.rate_lo_per_h = s.high_rate ? c.high_rate_lo_per_h : c.low_rate_lo_per_h;
    s.traffic.rate_hi_per_h = s.high_rate ? c.high_rate_hi_per_h : c.low_rate_hi_per_h;
    s.traffic.heartbeat_period_s = c.heartbeat_period_s;
    s.traffic.payload_bytes = c.payload_bytes;
    if (spec && spec->rate_lo_per_h) {
      s.traffic.rate_lo_per_h = *spec->rate_lo_per_h;
      s.traffic.rate_hi_per_h = *spec->rate_hi_per_h;
    }
    if (spec && spec->heartbeat_period_s) s.traffic.heartbeat_period_s = *spec->heartbeat_period_s;
  }
  return out;
}

void set_document_field(json& document, const std::string& dotted_path,
                        const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  json* cur = &document;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ScenarioError("empty parameter path");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*cur)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ScenarioError(dotted_path + ": not an object path");
    cur = &next;
  }
  (*cur)[parts.back()] = parsed;
}

}  // namespace lll
