#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "lll/netserver.hpp"
#include "pairing_check.hpp"

using namespace lll;

namespace {

NodeView view(int id, Position p, double budget, double consumed, double tau, int sf = 9) {
  NodeView v;
  v.id = id;
  v.position = p;
  v.budget_j = budget;
  v.consumed_j = consumed;
  v.tau_s = tau;
  v.conv_params.sf = sf;
  return v;
}

}  // namespace

TEST(Gamma, WindowMeanAndCapacity) {
  RetransWindow w(3);
  EXPECT_DOUBLE_EQ(estimate_gamma(w), 1.0);
  w.push(1);
  w.push(2);
  w.push(3);
  EXPECT_DOUBLE_EQ(estimate_gamma(w), 2.0);
  w.push(6);
  EXPECT_EQ(w.size(), 3u);
  EXPECT_DOUBLE_EQ(estimate_gamma(w), 11.0 / 3.0);
  EXPECT_THROW(w.push(0), std::invalid_argument);
  EXPECT_THROW(w.push(kMaxAttempts + 1), std::invalid_argument);
  EXPECT_THROW(RetransWindow(0), std::invalid_argument);
}

TEST(Gamma, ExpectedTransmissions) {
  EXPECT_DOUBLE_EQ(expected_tx_count(2.0, 3600.0, 120.0), 60.0);
  EXPECT_THROW(expected_tx_count(1.0, 10.0, 0.0), std::invalid_argument);
}

TEST(Classify, ThresholdAndResidual) {
  const RadioPowerProfile prof = default_power_profile();
  NodeView v = view(0, {}, 10.0, 0.0, 600.0);
  const double e_cm = remaining_conventional_energy(v, 1.0, 86400.0, prof);
  EXPECT_NEAR(e_cm, 144.0 * tx_energy(prof, v.conv_params, 10), 1e-12);

  std::vector<NodeView> nodes{v, v, v};
  nodes[0].budget_j = e_cm + 0.5;
  nodes[1].id = 1;
  nodes[1].budget_j = e_cm;  // equality is depleting
  nodes[2].id = 2;
  nodes[2].budget_j = 1e6;
  nodes[2].live = false;
  const auto c = classify_nodes(nodes, 1.0, 86400.0, prof);
  EXPECT_EQ(c.affluent, std::vector<int>{0});
  EXPECT_EQ(c.depleting, std::vector<int>{1});
  EXPECT_NEAR(residual_energy(nodes[0], 1.0, 86400.0, prof), 0.5, 1e-9);
}

TEST(LadingTime, Cases) {
  EXPECT_DOUBLE_EQ(compute_lading_time(10.0, 0.01, 1e6), 1000.0);
  EXPECT_DOUBLE_EQ(compute_lading_time(10.0, 0.01, 500.0), 500.0);
  EXPECT_DOUBLE_EQ(compute_lading_time(-1.0, 0.01, 500.0), 0.0);
  EXPECT_DOUBLE_EQ(compute_lading_time(0.0, 0.01, 500.0), 0.0);
  EXPECT_DOUBLE_EQ(compute_lading_time(1.0, 0.0, 500.0), 500.0);
}

TEST(OffloadParams, LowestClosingLevel) {
  PlannerConfig cfg = pairing_check::planner();
  const auto near = offload_params_for(cfg, {0, 0}, {10, 0}, 3);
  ASSERT_TRUE(near);
  EXPECT_EQ(near->sf, 7);
  EXPECT_EQ(near->power_dbm, 2);
  EXPECT_EQ(near->channel, 3);
  EXPECT_TRUE(near->iq_inverted);
  EXPECT_EQ(near->preamble_symbols, min_preamble_symbols(cfg.cad, 7, 125e3));

  // Pick a distance that needs just over 8 dBm.
  const double d = std::pow(10.0, (8.5 + 123.0 - kReferenceLossDb) / 37.6);
  const auto mid = offload_params_for(cfg, {0, 0}, {d, 0}, 0);
  ASSERT_TRUE(mid);
  EXPECT_EQ(mid->power_dbm, 11);

  const double far = std::pow(10.0, (14.5 + 123.0 - kReferenceLossDb) / 37.6);
  EXPECT_FALSE(offload_params_for(cfg, {0, 0}, {far, 0}, 0));
}

TEST(Pairing, MatchesPrefixOracleOnRandomInstances) {
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    const auto inst = pairing_check::random_instance(seed);
    const std::string err = pairing_check::check(inst);
    EXPECT_TRUE(err.empty()) << "seed " << seed << ": " << err;
  }
}

TEST(Pairing, UnreachableDepletingNodeSkipped) {
  PlannerConfig cfg = pairing_check::planner();
  std::vector<NodeView> nodes{view(0, {0, 0}, 1e3, 0.0, 3600.0),
                              view(1, {1e5, 0}, 6.0, 6.0, 120.0)};
  Classification c{{0}, {1}};
  const auto plan = select_pairs(nodes, c, 1.0, 3600.0, cfg, {{0, 0}});
  ASSERT_EQ(plan.affluent.size(), 1u);
  EXPECT_TRUE(plan.affluent[0].pairs.empty());
}

TEST(Pairing, DispatchGivesEachDepletingNodeOnePartner) {
  PlannerConfig cfg = pairing_check::planner();
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> coord(-800.0, 800.0);
  for (int round = 0; round < 50; ++round) {
    std::vector<NodeView> nodes;
    Classification c;
    for (int i = 0; i < 12; ++i) {
      const bool aff = i < 4;
      nodes.push_back(view(i, {coord(g), coord(g)}, aff ? 200.0 : 6.0, aff ? 0.0 : 6.0,
                           aff ? 3600.0 : 150.0 + 10 * i));
      (aff ? c.affluent : c.depleting).push_back(i);
    }
    const auto raw = select_pairs(nodes, c, 1.5, 40000.0, cfg, {{0, 0}});
    const auto plan = dispatch_exclusive(raw, nodes, 1.5, 40000.0, cfg);
    std::set<int> seen;
    for (const auto& a : plan.affluent) {
      EXPECT_FALSE(a.pairs.empty());
      for (const auto& p : a.pairs) {
        EXPECT_TRUE(seen.insert(p.depleting).second) << "round " << round;
        EXPECT_LE(nodes[p.depleting].tau_s, a.t_lm_s);
      }
    }
  }
}

TEST(Cells, SectorsAndSplit) {
  CellMap map(4);
  EXPECT_EQ(map.cells().size(), 4u);
  EXPECT_EQ(map.cell_of({10, 1}), 0);
  EXPECT_EQ(map.cell_of({-10, 1}), 1);
  EXPECT_EQ(map.cell_of({-10, -1}), 2);
  EXPECT_EQ(map.cell_of({10, -1}), 3);
  EXPECT_TRUE(map.adjacent(0, 3));
  EXPECT_FALSE(map.adjacent(0, 2));

  const std::vector<Position> members{{10, 10}, {30, 10}, {10, 30}, {30, 30}};
  EXPECT_FALSE(map.split(0, std::span<const Position>(members.data(), 1)));
  ASSERT_TRUE(map.split(0, members));
  EXPECT_EQ(map.cells().size(), 7u);
  std::set<int> ids;
  for (const auto& p : members) ids.insert(map.cell_of(p));
  EXPECT_EQ(ids.size(), 4u);
  // Children avoid channels of adjacent cells.
  for (const auto& a : map.cells()) {
    for (const auto& b : map.cells()) {
      if (a.sector != b.sector && map.adjacent(a.id, b.id) && a.id < 4 && b.id >= 4) {
        EXPECT_NE(a.channel, b.channel);
      }
    }
  }
}

TEST(Cells, AssignSplitsCrowdedCell) {
  CellMap map(8);
  std::vector<Position> pos;
  for (int i = 0; i < 12; ++i) pos.push_back({100.0 + i, 10.0 + i});
  const std::map<int, int> counts{{0, 12}};
  const auto a = assign_cells(map, pos, 10, &counts);
  EXPECT_GT(map.cells().size(), 8u);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    EXPECT_GE(a.cell[i], 8);
    EXPECT_EQ(a.channel[i], map.channel_by_cell().at(a.cell[i]));
  }
}

TEST(Adr, InitialSfAndPowerSteps) {
  const AdrConfig adr;
  const LinkModel link = default_link_model();
  const RadioPowerProfile prof = default_power_profile();
  const auto near = initial_conventional_params(adr, link, prof, 100.0, {});
  EXPECT_EQ(near.sf, 9);
  EXPECT_EQ(near.power_dbm, 14);
  const auto far = initial_conventional_params(adr, link, prof, 3500.0, {});
  EXPECT_EQ(far.sf, 10);

  AdrConfig fast = adr;
  fast.packets_per_step = 2;
  AdrState st;
  TransmissionParams p = near;
  EXPECT_FALSE(adr_update(st, p, fast, link, prof, 100.0));
  EXPECT_TRUE(adr_update(st, p, fast, link, prof, 100.0));
  EXPECT_EQ(p.power_dbm, 11);

  // A marginal link does not step down.
  TransmissionParams edge = far;
  AdrState st2;
  st2.received = 1;
  EXPECT_FALSE(adr_update(st2, edge, fast, link, prof, 3500.0));
  EXPECT_EQ(edge.power_dbm, 14);
}

TEST(Transition, StartDeadlineAndAllowance) {
  std::vector<NodeView> nodes{view(0, {}, 100, 0, 600), view(1, {}, 6, 6, 200)};
  nodes[0].last_contact_s = 1000.0;
  nodes[0].heartbeat_period_s = 3600.0;
  nodes[1].last_contact_s = 1500.0;
  PairingPlan plan;
  AffluentPlan a;
  a.affluent = 0;
  a.t_lm_s = 1000.0;
  a.lading_power_w = 0.01;
  PlannedPair pp;
  pp.depleting = 1;
  pp.affluent = 0;
  a.pairs.push_back(pp);
  plan.affluent.push_back(a);

  const auto s = schedule_mode_transition(plan, nodes, 100.0, 86400.0, 5.0, 9);
  EXPECT_DOUBLE_EQ(s.effective_start_s, 1700.0);
  const auto& l = s.commands.at(0);
  EXPECT_EQ(l.type, ModeCommand::Type::EnterLading);
  EXPECT_DOUBLE_EQ(l.start_s, 1700.0);
  EXPECT_DOUBLE_EQ(l.until_s, 2695.0);
  EXPECT_NEAR(l.allowance_j, 10.0, 1e-12);
  const auto& o = s.commands.at(1);
  EXPECT_EQ(o.partner, 0);
  EXPECT_DOUBLE_EQ(o.until_s, 2690.0);
  EXPECT_EQ(o.plan_id, 9u);

  // Clamped at the cycle end, allowance shrinks with the window.
  const auto c = schedule_mode_transition(plan, nodes, 100.0, 2000.0, 5.0, 9);
  EXPECT_DOUBLE_EQ(c.commands.at(0).until_s, 2000.0);
  EXPECT_NEAR(c.commands.at(0).allowance_j, 0.01 * 305.0, 1e-12);

  const auto d = schedule_mode_transition(plan, nodes, 100.0, 1600.0, 5.0, 9);
  EXPECT_EQ(d.dropped, std::vector<int>{0});
  EXPECT_TRUE(d.commands.empty());
}
