#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lll/phy_energy.hpp"
#include "oracles.hpp"

using namespace lll;

namespace {

TransmissionParams params(int sf, double bw = 125000.0, int preamble = 8,
                          CodingRate cr = CodingRate::CR4_5, int power = 14) {
  TransmissionParams p;
  p.sf = sf;
  p.bw_hz = bw;
  p.cr = cr;
  p.preamble_symbols = preamble;
  p.power_dbm = power;
  p.de = low_data_rate_flag(sf, bw);
  return p;
}

RadioPowerProfile flat_profile(double tx, double rx, double rc) {
  RadioPowerProfile p;
  p.p_tx_w = {{2, tx}, {14, tx}};
  p.p_rx_w = rx;
  p.p_rc_osc_w = rc;
  return p;
}

}  // namespace

TEST(SymbolDuration, KnownValues) {
  EXPECT_DOUBLE_EQ(symbol_duration(7, 125000.0), 0.001024);
  EXPECT_DOUBLE_EQ(symbol_duration(12, 500000.0), 0.008192);
}

TEST(SymbolDuration, DoublesWithSfHalvesWithBandwidth) {
  for (int sf = 6; sf < 12; ++sf) {
    EXPECT_DOUBLE_EQ(symbol_duration(sf + 1, 125000.0), 2.0 * symbol_duration(sf, 125000.0));
    EXPECT_DOUBLE_EQ(symbol_duration(sf, 250000.0), symbol_duration(sf, 125000.0) / 2.0);
  }
}

TEST(PacketSymbols, HandEvaluatedCases) {
  EXPECT_DOUBLE_EQ(packet_symbols(2, 7, CodingRate::CR4_5, 0, 13), 27.75);
  EXPECT_DOUBLE_EQ(packet_symbols(2, 10, CodingRate::CR4_5, 0, 13), 25.25);
  EXPECT_DOUBLE_EQ(packet_symbols(0, 7, CodingRate::CR4_5, 0, 13, FrameKind::Ack), 25.25);
  EXPECT_DOUBLE_EQ(packet_symbols(0, 7, CodingRate::CR4_5, 0, 0, FrameKind::Ack), 12.25);
}

TEST(PacketSymbols, RejectsNonPositiveBlockWidth) {
  EXPECT_THROW(packet_symbols(10, 6, CodingRate::CR4_5, 3, 8), PhyError);
}

TEST(PacketSymbols, MonotoneAndQuarterFractions) {
  for (int sf = 7; sf <= 12; ++sf) {
    for (int de = 0; de <= 1; ++de) {
      double prev = -1.0;
      for (int pl = 0; pl <= 255; ++pl) {
        const double s = packet_symbols(pl, sf, CodingRate::CR4_5, de, 8);
        EXPECT_GE(s, prev);
        prev = s;
        const double frac = s - std::floor(s);
        EXPECT_TRUE(frac == 0.0 || frac == 0.25 || frac == 0.5 || frac == 0.75) << s;
        EXPECT_LE(s, packet_symbols(pl, sf, CodingRate::CR4_8, de, 8));
      }
    }
  }
}

TEST(Airtime, MatchesOracleOnGrid) {
  for (int sf = 7; sf <= 12; ++sf) {
    for (double bw : {125000.0, 500000.0}) {
      for (int cr = 5; cr <= 8; ++cr) {
        for (int pl : {0, 2, 10, 51}) {
          for (int pre : {8, 13}) {
            const TransmissionParams p = params(sf, bw, pre, static_cast<CodingRate>(cr));
            const double want = oracle::airtime(pl, sf, bw, cr, p.de, pre);
            EXPECT_NEAR(airtime(p, pl), want, 1e-12 * want);
          }
        }
      }
    }
  }
}

TEST(Airtime, HandEvaluated) {
  EXPECT_NEAR(airtime(params(7, 125000.0, 13), 2), 0.028416, 1e-15);
  EXPECT_NEAR(airtime(params(7, 125000.0, 13), 0, FrameKind::Ack), 0.025856, 1e-15);
}

TEST(TxEnergy, ProductOfPowerAndAirtime) {
  const RadioPowerProfile p = flat_profile(0.1, 0.05, 0.025);
  EXPECT_NEAR(tx_energy(p, params(7, 125000.0, 13), 2), 2.8416e-3, 1e-15);
  EXPECT_EQ(tx_energy(flat_profile(0.0, 0.0, 0.0), params(7), 10), 0.0);
}

TEST(TxEnergy, UnknownLevelNamesIt) {
  const RadioPowerProfile p = flat_profile(0.1, 0.05, 0.025);
  try {
    tx_energy(p, params(7, 125000.0, 8, CodingRate::CR4_5, 11), 10);
    FAIL();
  } catch (const PhyError& e) {
    EXPECT_NE(std::string(e.what()).find("11"), std::string::npos);
  }
}

TEST(CadCycleEnergy, HandEvaluated) {
  const RadioPowerProfile p = flat_profile(0.1, 26.4e-3, 13.2e-3);
  const CadTimers t{0.0041, 0.0041};
  EXPECT_NEAR(cad_cycle_energy(p, t, params(7)), 4.1e-3 * 13.2e-3 + 2.048e-3 * 13.2e-3,
              1e-15);
}

TEST(CadCycleEnergy, ProbeMustFit) {
  const RadioPowerProfile p = flat_profile(0.1, 26.4e-3, 13.2e-3);
  EXPECT_THROW(cad_cycle_energy(p, CadTimers{0.0041, 0.001}, params(7)), PhyError);
}

TEST(MinPreamble, KnownValues) {
  EXPECT_EQ(min_preamble_symbols(CadTimers{0.0041, 0.0041}, 7, 125000.0), 13);
  EXPECT_EQ(min_preamble_symbols(CadTimers{0.0041, 0.0041}, 8, 125000.0), 7);
}

TEST(MinPreamble, PreambleCoversPeriodPlusProbeSlot) {
  for (double t1 : {0.001, 0.0041, 0.02, 0.1}) {
    for (double t2 : {0.0041, 0.006}) {
      for (int sf = 7; sf <= 8; ++sf) {
        const int n = min_preamble_symbols(CadTimers{t1, t2}, sf, 125000.0);
        EXPECT_GE(n * symbol_duration(sf, 125000.0), t1 + 2 * t2 - 1e-12);
        EXPECT_LT((n - 1) * symbol_duration(sf, 125000.0), t1 + 2 * t2);
      }
    }
  }
}

TEST(LadingEnergy, LinearInTime) {
  const RadioPowerProfile prof = default_power_profile();
  const CadTimers t;
  TransmissionParams off = params(7, 125000.0, 13, CodingRate::CR4_5, 2);
  off.iq_inverted = true;
  const std::vector<LadingPair> pairs{{120.0, off, params(9), 10, 5 * symbol_duration(9, 125e3)}};
  const double one = lading_energy(prof, 1000.0, t, off, 2.0, pairs);
  EXPECT_NEAR(lading_energy(prof, 2000.0, t, off, 2.0, pairs), 2.0 * one, 1e-12 * one);
  EXPECT_NEAR(lading_power(prof, t, off, 2.0, pairs) * 1000.0, one, 1e-12 * one);
}

TEST(LadingEnergy, NoPairsIsPureListening) {
  const RadioPowerProfile prof = default_power_profile();
  const CadTimers t;
  const TransmissionParams off = params(7, 125000.0, 13, CodingRate::CR4_5, 2);
  const oracle::Power pw{0.0, prof.p_rx_w, prof.p_rc_osc_w};
  EXPECT_NEAR(lading_power(prof, t, off, 1.0, {}),
              oracle::cad_power(t.t1_s, t.t2_s, 7, 125e3, pw), 1e-15);
}

TEST(LadingEnergy, PairTermMatchesOracle) {
  const RadioPowerProfile prof = default_power_profile();
  const CadTimers t;
  TransmissionParams off = params(7, 125000.0, 13, CodingRate::CR4_5, 5);
  const TransmissionParams conv = params(10);
  const double t_rx = 5 * symbol_duration(10, 125e3);
  const LadingPair pair{300.0, off, conv, 10, t_rx};

  const double a_off = oracle::airtime(10, 7, 125e3, 5, 0, 13);
  const double a_fw = oracle::airtime(10, 10, 125e3, 5, 0, 13);
  const double a_ack = oracle::airtime(0, 7, 125e3, 5, 0, 13, true);
  const double e_cad = t.t2_s * prof.p_rc_osc_w +
                       2 * symbol_duration(7, 125e3) * (prof.p_rx_w - prof.p_rc_osc_w);
  const double per_packet = prof.p_rx_w * a_off + prof.tx_power(14) * a_fw +
                            2 * prof.p_rx_w * t_rx + 2 * prof.tx_power(5) * a_ack -
                            e_cad / t.period() * (2 * t_rx + 2 * a_ack + a_off + a_fw);
  EXPECT_NEAR(pair_packet_overhead(prof, t, pair), per_packet, 1e-12 * per_packet);
  const double want = e_cad / t.period() + 1.5 / 300.0 * per_packet;
  EXPECT_NEAR(lading_power(prof, t, off, 1.5, std::vector<LadingPair>{pair}), want,
              1e-12 * want);
}

TEST(LadingEnergy, DivisorChoicesOrderAsExpected) {
  const RadioPowerProfile prof = default_power_profile();
  const CadTimers t;
  const TransmissionParams off = params(7, 125000.0, 13, CodingRate::CR4_5, 2);
  const TransmissionParams conv = params(10);
  const double cad_period = correction_energy(prof, t, off, conv, 10, 0.04,
                                              CorrectionDivisor::CadPeriod);
  const double offload_sym = correction_energy(prof, t, off, conv, 10, 0.04,
                                               CorrectionDivisor::OffloadSymbol);
  EXPECT_NEAR(offload_sym / cad_period, t.period() / symbol_duration(7, 125e3), 1e-9);
}

TEST(OffloadEnergy, CheaperThanConventional) {
  const RadioPowerProfile prof = default_power_profile();
  const int pre = min_preamble_symbols(CadTimers{}, 7, 125e3);
  for (int sf = 9; sf <= 12; ++sf) {
    for (int lvl : {2, 5, 8, 11, 14}) {
      const TransmissionParams off = params(7, 125e3, pre, CodingRate::CR4_5, lvl);
      const TransmissionParams conv = params(sf, 125e3, 8, CodingRate::CR4_5, 14);
      EXPECT_LT(offload_packet_energy(prof, off, 10), tx_energy(prof, conv, 10));
    }
  }
}

TEST(LinkBudget, RequiredAndClampedPower) {
  const double sens = -123.0;
  EXPECT_NEAR(required_power_dbm(sens, 1.0), -123.0 + 7.7, 1e-12);
  EXPECT_NEAR(required_power_dbm(sens, 1000.0), -123.0 + 7.7 + 112.8, 1e-9);
  EXPECT_DOUBLE_EQ(initial_offload_power(sens, 10.0), 2.0);
  EXPECT_DOUBLE_EQ(initial_offload_power(sens, 100000.0), 14.0);
  const RadioPowerProfile prof = default_power_profile();
  EXPECT_EQ(power_level_at_least(prof, 2.5), 5);
  EXPECT_EQ(power_level_at_least(prof, 14.0), 14);
  EXPECT_FALSE(power_level_at_least(prof, 14.5).has_value());
}

TEST(Params, Validation) {
  TransmissionParams p = params(7);
  EXPECT_NO_THROW(p.validate());
  p.bw_hz = 250000.0;
  EXPECT_THROW(p.validate(), PhyError);
  p = params(7);
  p.sf = 13;
  EXPECT_THROW(p.validate(), PhyError);
  EXPECT_THROW(coding_rate_from_denominator(9), PhyError);
}

TEST(DefaultProfile, SatisfiesOrdering) {
  const RadioPowerProfile p = default_power_profile();
  EXPECT_NO_THROW(p.validate());
  EXPECT_DOUBLE_EQ(p.p_rc_osc_w * 2.0, p.p_rx_w);
  EXPECT_NEAR(p.p_rx_w, 0.0363, 1e-12);
}

TEST(LowDataRate, SixteenMillisecondRule) {
  EXPECT_EQ(low_data_rate_flag(10, 125e3), 0);
  EXPECT_EQ(low_data_rate_flag(11, 125e3), 1);
  EXPECT_EQ(low_data_rate_flag(12, 500e3), 0);
}
