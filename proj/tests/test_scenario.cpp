#include <gtest/gtest.h>

#include <cmath>

#include "lll/scenario.hpp"

using namespace lll;
using nlohmann::json;

namespace {

std::string error_of(const json& doc) {
  try {
    load_scenario(doc);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Scenario, MinimalDocumentDefaults) {
  const auto c = load_scenario(json{{"seed", 3}, {"node_count", 5}});
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.node_count, 5);
  EXPECT_EQ(c.protocol, Protocol::LLL);
  EXPECT_DOUBLE_EQ(c.duration_s, 86400.0);
  EXPECT_DOUBLE_EQ(c.cad.t1_s, 0.0041);
  EXPECT_EQ(c.offload_sf, 7);
  EXPECT_EQ(c.correction_divisor, CorrectionDivisor::CadPeriod);
}

TEST(Scenario, UnknownFieldNamedWithPath) {
  EXPECT_EQ(error_of(json{{"seed", 1}, {"node_count", 2}, {"bogus", 1}}),
            "bogus: unknown field");
  EXPECT_EQ(error_of(json{{"seed", 1}, {"node_count", 2}, {"cad", {{"t3_s", 1}}}}),
            "cad.t3_s: unknown field");
  EXPECT_EQ(error_of(json{{"seed", 1}, {"nodes", json::array({{{"z", 1}}})}}),
            "nodes[0].z: unknown field");
}

TEST(Scenario, InvalidValuesNamed) {
  EXPECT_EQ(error_of(json{{"seed", 1}, {"node_count", 2}, {"disc_radius_m", -1}}),
            "disc_radius_m: must be > 0");
  EXPECT_EQ(error_of(json{{"node_count", 2}}), "seed: required field is missing");
  EXPECT_EQ(error_of(json{{"seed", 1}, {"node_count", 2}, {"protocol", "x"}}).rfind("protocol", 0),
            0u);
  EXPECT_EQ(error_of(json{{"seed", 1}, {"node_count", 2}, {"cad", {{"t2_s", 0.001}}}}).rfind(
                "cad.t2_s", 0),
            0u);
  EXPECT_EQ(error_of(json{{"seed", 1},
                          {"node_count", 2},
                          {"traffic", {{"low_rate_per_hour", {4, 2}}}}}),
            "traffic.low_rate_per_hour: lo must not exceed hi");
}

TEST(Scenario, BudgetsWithinRange) {
  const auto c = load_scenario(
      json{{"seed", 9}, {"node_count", 300}, {"budgets", {{"uniform_j", {6, 25}}}}});
  const auto nodes = resolve_nodes(c);
  for (const auto& n : nodes) {
    EXPECT_GE(n.budget_j, 6.0);
    EXPECT_LE(n.budget_j, 25.0);
    EXPECT_LE(std::hypot(n.position.x, n.position.y), c.disc_radius_m);
  }
}

TEST(Scenario, HighRateCountIsRounded) {
  const auto c = load_scenario(
      json{{"seed", 2}, {"node_count", 200}, {"traffic", {{"high_rate_fraction", 0.03}}}});
  int high = 0;
  for (const auto& n : resolve_nodes(c)) {
    if (n.high_rate) {
      ++high;
      EXPECT_GE(n.traffic.rate_lo_per_h, 20.0);
    }
  }
  EXPECT_EQ(high, 6);
}

TEST(Scenario, NodeOverridesApply) {
  const auto c = load_scenario(json::parse(R"({
    "seed": 1,
    "nodes": [{"x": 10, "y": 20, "budget_j": 7, "rate_per_hour": [5, 6]}, {}]
  })"));
  const auto n = resolve_nodes(c);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_DOUBLE_EQ(n[0].position.x, 10.0);
  EXPECT_DOUBLE_EQ(n[0].budget_j, 7.0);
  EXPECT_DOUBLE_EQ(n[0].traffic.rate_hi_per_h, 6.0);
}

TEST(Scenario, SameSeedSameNodes) {
  const json doc{{"seed", 4}, {"node_count", 20}};
  const auto a = resolve_nodes(load_scenario(doc));
  const auto b = resolve_nodes(load_scenario(doc));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].position.x, b[i].position.x);
    EXPECT_EQ(a[i].budget_j, b[i].budget_j);
  }
}

TEST(Recharge, Integration) {
  EXPECT_DOUBLE_EQ(integrate_recharge({{3600.0, 0.001}}), 3.6);
  EXPECT_DOUBLE_EQ(integrate_recharge({}), 0.0);
  EXPECT_NEAR(integrate_recharge({{3600.0, 0.001}, {7200.0, 0.001}, {100.0, 0.0}}), 10.8,
              1e-12);
  EXPECT_THROW(integrate_recharge({{0.0, 1.0}}), ScenarioError);
  EXPECT_THROW(integrate_recharge({{1.0, -1.0}}), ScenarioError);

  const auto c = load_scenario(json::parse(R"({
    "seed": 1, "node_count": 2, "budgets": {"recharge_trace": [[3600, 0.001]]}
  })"));
  for (const auto& n : resolve_nodes(c)) EXPECT_DOUBLE_EQ(n.budget_j, 3.6);
}

TEST(SetField, DottedPathsAndParsing) {
  json doc{{"seed", 1}};
  set_document_field(doc, "traffic.high_rate_fraction", "0.1");
  set_document_field(doc, "protocol", "lorawan");
  set_document_field(doc, "node_count", "12");
  EXPECT_DOUBLE_EQ(doc["traffic"]["high_rate_fraction"].get<double>(), 0.1);
  EXPECT_EQ(doc["protocol"], "lorawan");
  EXPECT_EQ(load_scenario(doc).node_count, 12);
  EXPECT_THROW(set_document_field(doc, "seed.x", "1"), ScenarioError);
}
