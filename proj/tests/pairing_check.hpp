#pragma once

// Random single-cell pairing instances checked against the prefix oracle.

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lll/netserver.hpp"
#include "oracles.hpp"

namespace pairing_check {

struct Instance {
  std::vector<lll::NodeView> nodes;
  lll::Classification classes;
  double gamma = 1.0;
  double t_remaining = 0.0;
};

inline lll::PlannerConfig planner() {
  lll::PlannerConfig c;
  c.profile = lll::default_power_profile();
  c.link = lll::default_link_model();
  return c;
}

inline Instance random_instance(std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> n_aff(1, 3), n_dep(1, 8), sf(9, 10);
  std::uniform_real_distribution<double> coord(-1500.0, 1500.0), budget(6.0, 25.0),
      tau(60.0, 1500.0), remaining(600.0, 86400.0), gamma(1.0, 3.0), frac(0.0, 1.0);
  Instance inst;
  inst.gamma = gamma(g);
  inst.t_remaining = remaining(g);
  const int a = n_aff(g);
  const int d = n_dep(g);
  for (int i = 0; i < a + d; ++i) {
    lll::NodeView v;
    v.id = i;
    v.position = {coord(g), coord(g)};
    v.cell = 0;
    v.conv_params.sf = sf(g);
    v.conv_params.power_dbm = 14;
    v.payload_bytes = 10;
    v.tau_s = tau(g);
    v.heartbeat_period_s = 3600.0;
    if (i < a) {
      // Keep E_r spread so lading time sometimes binds and sometimes not.
      const double demand = lll::remaining_conventional_energy(
          v, inst.gamma, inst.t_remaining, lll::default_power_profile());
      v.budget_j = demand + std::pow(10.0, -1.0 + 3.0 * frac(g));
      v.consumed_j = 0.0;
      inst.classes.affluent.push_back(i);
    } else {
      v.budget_j = budget(g);
      v.consumed_j = v.budget_j;
      inst.classes.depleting.push_back(i);
    }
    inst.nodes.push_back(v);
  }
  return inst;
}

/// Checks one instance. Returns an empty string on success.
inline std::string check(const Instance& inst) {
  const lll::PlannerConfig cfg = planner();
  const lll::RadioPowerProfile& prof = cfg.profile;
  const std::map<int, int> channels{{0, 0}};
  const lll::PairingPlan plan = lll::select_pairs(inst.nodes, inst.classes, inst.gamma,
                                                  inst.t_remaining, cfg, channels);
  std::ostringstream why;
  if (plan.affluent.size() != inst.classes.affluent.size()) return "affluent count";

  const double tsym7 = oracle::symbol_time(7, 125e3);
  const int preamble =
      static_cast<int>(std::ceil((cfg.cad.t1_s + 2 * cfg.cad.t2_s) / tsym7 - 1e-9));
  const oracle::Power listen{0.0, prof.p_rx_w, prof.p_rc_osc_w};
  const double cad_w = oracle::cad_power(cfg.cad.t1_s, cfg.cad.t2_s, 7, 125e3, listen);

  for (const auto& ap : plan.affluent) {
    const lll::NodeView& v = inst.nodes[ap.affluent];
    const int csf = v.conv_params.sf;
    const double conv_air = oracle::airtime(v.payload_bytes, csf, 125e3, 5, 0, 8);
    const double residual = v.budget_j - v.reserve_j - v.consumed_j -
                            inst.gamma * inst.t_remaining / v.tau_s * prof.tx_power(14) *
                                conv_air;

    std::vector<oracle::PairCost> costs;
    std::vector<int> ids;
    for (int uid : inst.classes.depleting) {
      const lll::NodeView& u = inst.nodes[uid];
      const double d = std::max(std::hypot(u.position.x - v.position.x,
                                           u.position.y - v.position.y), 1.0);
      const double need = -123.0 + 7.7 + 37.6 * std::log10(d);
      if (need > 14.0 + 1e-9) continue;
      const double clamped = std::clamp(need, 2.0, 14.0);
      int level = 14;
      for (int l : {14, 11, 8, 5, 2}) {
        if (l + 1e-9 >= clamped) level = l;
      }
      const double a_off = oracle::airtime(u.payload_bytes, 7, 125e3, 5, 0, preamble);
      const double per_packet = oracle::pair_overhead(
          prof.p_rx_w, prof.tx_power(14), prof.tx_power(level), cad_w, u.payload_bytes, csf,
          7, 125e3, preamble, 5.0);
      costs.push_back({u.tau_s, prof.tx_power(level) * a_off, per_packet});
      ids.push_back(uid);
    }
    // Stable order by (E_OM, id): ids are already ascending.
    std::vector<std::size_t> order(costs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return costs[x].e_om < costs[y].e_om;
    });
    std::vector<oracle::PairCost> sorted;
    for (auto i : order) sorted.push_back(costs[i]);
    const auto best =
        oracle::longest_feasible_prefix(sorted, residual, cad_w, inst.gamma, inst.t_remaining);

    if (ap.pairs.size() != best.kept) {
      why << "affluent " << v.id << ": kept " << ap.pairs.size() << " want " << best.kept;
      return why.str();
    }
    for (std::size_t i = 0; i < best.kept; ++i) {
      if (ap.pairs[i].depleting != ids[order[i]]) {
        why << "affluent " << v.id << ": pair " << i << " is " << ap.pairs[i].depleting
            << " want " << ids[order[i]];
        return why.str();
      }
    }
    if (std::abs(ap.t_lm_s - best.t_lm) > 1e-9 * std::max(1.0, best.t_lm)) {
      why << "affluent " << v.id << ": T_LM " << ap.t_lm_s << " want " << best.t_lm;
      return why.str();
    }
    // Energy fits the residual, and the lading time covers every tau.
    double power = cad_w;
    for (std::size_t i = 0; i < best.kept; ++i) {
      power += inst.gamma / sorted[i].tau * sorted[i].per_packet;
    }
    if (ap.t_lm_s > 0.0 && power * ap.t_lm_s > residual * (1.0 + 1e-9)) {
      return "lading energy exceeds residual";
    }
    for (const auto& p : ap.pairs) {
      if (inst.nodes[p.depleting].tau_s > ap.t_lm_s) return "tau exceeds lading time";
    }
  }
  return {};
}

}  // namespace pairing_check
