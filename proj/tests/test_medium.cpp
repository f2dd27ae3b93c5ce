#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "lll/medium.hpp"

using namespace lll;

namespace {

TransmissionParams on(int sf, int channel, bool inverted = false, int power = 14) {
  TransmissionParams p;
  p.sf = sf;
  p.channel = channel;
  p.iq_inverted = inverted;
  p.power_dbm = power;
  return p;
}

OnAirTransmission frame(std::uint64_t id, const TransmissionParams& p, double start,
                        Position origin = {0.0, 0.0}) {
  return make_transmission(id, static_cast<int>(id), origin, p, start, 10,
                           FrameKind::Data, kGatewayId);
}

}  // namespace

TEST(Transmission, TimingFromAirtime) {
  const auto f = frame(1, on(7, 0), 10.0);
  EXPECT_DOUBLE_EQ(f.preamble_end_s, 10.0 + 8 * 0.001024);
  EXPECT_NEAR(f.end_s - f.start_s, airtime(on(7, 0), 10), 1e-15);
}

TEST(Receivable, SensitivityBoundary) {
  const LinkModel link = default_link_model();
  // SF7 at 14 dBm: the link closes while 14 - PL >= -123.
  const double max_loss = 14.0 + 123.0;
  const double d = std::pow(10.0, (max_loss - kReferenceLossDb) / (10.0 * kPathLossExponent));
  const auto f = frame(1, on(7, 0), 0.0);
  const ListenerTuning tune = ListenerTuning::of(on(7, 0));
  EXPECT_TRUE(receivable(link, f, Position{d * 0.999, 0.0}, tune));
  EXPECT_FALSE(receivable(link, f, Position{d * 1.001, 0.0}, tune));
}

TEST(Receivable, TuningMustMatch) {
  const LinkModel link = default_link_model();
  const auto f = frame(1, on(7, 2), 0.0);
  const Position near{10.0, 0.0};
  EXPECT_TRUE(receivable(link, f, near, ListenerTuning::of(on(7, 2))));
  EXPECT_FALSE(receivable(link, f, near, ListenerTuning::of(on(8, 2))));
  EXPECT_FALSE(receivable(link, f, near, ListenerTuning::of(on(7, 3))));
  EXPECT_FALSE(receivable(link, f, near, ListenerTuning::of(on(7, 2, true))));
}

TEST(Collisions, SameConfigurationOverlapCollides) {
  const LinkModel link = default_link_model();
  const std::vector<OnAirTransmission> frames{frame(1, on(7, 0), 0.0),
                                              frame(2, on(7, 0), 0.01)};
  const auto s = resolve_collisions(link, frames);
  EXPECT_FALSE(s[0]);
  EXPECT_FALSE(s[1]);
}

TEST(Collisions, OrthogonalDimensionsDoNotCollide) {
  const LinkModel link = default_link_model();
  for (const auto& other : {on(8, 0), on(7, 1), on(7, 0, true)}) {
    const std::vector<OnAirTransmission> frames{frame(1, on(7, 0), 0.0),
                                                frame(2, other, 0.01)};
    const auto s = resolve_collisions(link, frames);
    EXPECT_TRUE(s[0]);
    EXPECT_TRUE(s[1]);
  }
}

TEST(Collisions, IqOverlapWhenNotOrthogonal) {
  LinkModel link = default_link_model();
  link.iq_orthogonal = false;
  const std::vector<OnAirTransmission> frames{frame(1, on(7, 0), 0.0),
                                              frame(2, on(7, 0, true), 0.01)};
  EXPECT_FALSE(resolve_collisions(link, frames)[0]);
}

TEST(Collisions, DisjointInTimeSurvive) {
  const LinkModel link = default_link_model();
  const auto a = frame(1, on(7, 0), 0.0);
  const auto b = frame(2, on(7, 0), a.end_s);
  const std::vector<OnAirTransmission> frames{a, b};
  const auto s = resolve_collisions(link, frames);
  EXPECT_TRUE(s[0] && s[1]);
}

TEST(Collisions, CaptureKeepsStrongerFrame) {
  LinkModel link = default_link_model();
  link.capture_enabled = true;
  const std::vector<OnAirTransmission> frames{frame(1, on(7, 0), 0.0, {10.0, 0.0}),
                                              frame(2, on(7, 0), 0.01, {1000.0, 0.0})};
  const auto s = resolve_collisions(link, frames, Position{0.0, 0.0});
  EXPECT_TRUE(s[0]);
  EXPECT_FALSE(s[1]);
}

TEST(MediumClass, RecordsInterferersAndCounts) {
  Medium m(default_link_model());
  m.add(frame(1, on(7, 0), 0.0));
  m.add(frame(2, on(8, 0), 0.0));
  const auto hit = m.add(frame(3, on(7, 0), 0.01));
  ASSERT_EQ(hit.size(), 1u);
  EXPECT_EQ(hit[0], 1u);
  EXPECT_EQ(m.collisions(), 2u);
  const auto one = m.finish(1);
  EXPECT_TRUE(one.collided);
  EXPECT_FALSE(survives_at(m.link(), one, {0.0, 0.0}));
  EXPECT_EQ(m.find(1), nullptr);
  ASSERT_NE(m.find(2), nullptr);
  EXPECT_FALSE(m.find(2)->collided);
  EXPECT_THROW(m.finish(42), std::logic_error);
}

TEST(MediumClass, SurvivalAgreesWithBatchResolution) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> t(0.0, 2.0);
  std::uniform_int_distribution<int> sf(7, 8), ch(0, 1);
  for (int round = 0; round < 50; ++round) {
    Medium m(default_link_model());
    std::vector<OnAirTransmission> frames;
    for (std::uint64_t i = 1; i <= 12; ++i) frames.push_back(frame(i, on(sf(rng), ch(rng)), t(rng)));
    std::sort(frames.begin(), frames.end(),
              [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
    for (const auto& f : frames) m.add(f);
    const auto batch = resolve_collisions(m.link(), frames);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      EXPECT_EQ(survives_at(m.link(), *m.find(frames[i].id), {0.0, 0.0}), batch[i]);
    }
  }
}

TEST(CadDetects, ProbeMustLieInsidePreamble) {
  const LinkModel link = default_link_model();
  const TransmissionParams p = on(7, 0, true, 2);
  const std::vector<OnAirTransmission> air{frame(1, p, 1.0, {50.0, 0.0})};
  const ListenerTuning tune = ListenerTuning::of(p);
  const double probe = cad_probe_duration(7, 125e3);
  EXPECT_TRUE(cad_detects(link, tune, 1.0, probe, air, {0.0, 0.0}));
  EXPECT_FALSE(cad_detects(link, tune, 0.999, probe, air, {0.0, 0.0}));
  EXPECT_FALSE(cad_detects(link, tune, air[0].preamble_end_s - probe / 2, probe, air,
                           {0.0, 0.0}));
  EXPECT_FALSE(cad_detects(link, ListenerTuning::of(on(7, 0)), 1.0, probe, air,
                           {0.0, 0.0}));
}
