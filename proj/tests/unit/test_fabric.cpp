#include "dasm/fabric.hpp"

#include <gtest/gtest.h>

using namespace dasm;

TEST(Fabric, GlobalSumMetersTwoFloatsPerAgentPerScalar) {
  Fabric f(4);
  f.set_phase(Phase::Dcg);
  const std::array<std::array<double, 2>, 4> c{{{1, 10}, {2, 20}, {3, 30}, {4, 40}}};
  const auto s = f.global_sum<2>(std::span<const std::array<double, 2>>(c));
  EXPECT_EQ(s[0], 10.0);
  EXPECT_EQ(s[1], 100.0);
  EXPECT_EQ(f.ledger().phase(Phase::Dcg).global_floats, 16u);
  EXPECT_EQ(f.ledger().phase(Phase::Init).global_floats, 0u);
  const std::vector<double> one{1.5, 2.5, 3.0, -1.0};
  EXPECT_EQ(f.global_sum(one), 6.0);
  EXPECT_EQ(f.ledger().phase(Phase::Dcg).global_floats, 24u);
}

TEST(Fabric, GlobalMinBreaksTiesByLowestId) {
  Fabric f(5);
  const std::vector<double> v{3.0, -1.0, 2.0, -1.0, 0.0};
  const auto r = f.global_min(v);
  EXPECT_EQ(r.value, -1.0);
  EXPECT_EQ(r.agent, 1);
  EXPECT_EQ(f.ledger().total().global_floats, 10u);
}

TEST(Fabric, GlobalAllMetersBooleans) {
  Fabric f(3);
  f.set_phase(Phase::Asm);
  EXPECT_TRUE(f.global_all({true, true, true}));
  EXPECT_FALSE(f.global_all({true, false, true}));
  EXPECT_EQ(f.ledger().phase(Phase::Asm).global_booleans, 12u);
  EXPECT_EQ(f.ledger().total().global_floats, 0u);
}

TEST(Fabric, MissingParticipantIsReported) {
  Fabric f(3);
  try {
    f.global_all({true, true});
    FAIL() << "expected a barrier error";
  } catch (const FabricError& e) {
    EXPECT_NE(std::string(e.what()).find("missing participant(s) 2"), std::string::npos);
  }
  // The failed round leaves no residue and charges nothing.
  EXPECT_TRUE(f.global_all({true, true, true}));
  EXPECT_EQ(f.ledger().total().global_booleans, 6u);
  EXPECT_THROW(f.global_sum(std::vector<double>(4, 1.0)), FabricError);
}

TEST(Fabric, NeighborExchangeRoutesAndMeters) {
  Fabric f(3);
  f.set_phase(Phase::Dcg);
  std::vector<Envelope> out{{2, 0, {1.0, 2.0}}, {1, 0, {3.0}}, {0, 2, {4.0, 5.0, 6.0}}};
  const auto in = f.neighbor_exchange(out);
  ASSERT_EQ(in[0].size(), 2u);
  EXPECT_EQ(in[0][0].from, 1);
  EXPECT_EQ(in[0][1].from, 2);
  EXPECT_TRUE(in[1].empty());
  EXPECT_EQ(in[2][0].payload.size(), 3u);
  EXPECT_EQ(f.ledger().phase(Phase::Dcg).local_floats, 6u);
}

TEST(Fabric, NeighborExchangeValidatesSizes) {
  Fabric f(2);
  const Fabric::LinkSizes sizes{{{0, 1}, 2}, {{1, 0}, 2}};
  EXPECT_THROW(f.neighbor_exchange({{0, 1, {1.0}}}, &sizes), FabricError);
  EXPECT_THROW(f.neighbor_exchange({{0, 0, {1.0}}}), FabricError);
  EXPECT_THROW(f.neighbor_exchange({{0, 5, {1.0}}}), FabricError);
  EXPECT_NO_THROW(f.neighbor_exchange({{0, 1, {1.0, 2.0}}}, &sizes));
  EXPECT_EQ(f.ledger().total().local_floats, 2u);
}

TEST(Fabric, PhaseScopeRestores) {
  Fabric f(1);
  f.set_phase(Phase::Asm);
  {
    Fabric::PhaseScope s(f, Phase::Admm);
    EXPECT_EQ(f.phase(), Phase::Admm);
  }
  EXPECT_EQ(f.phase(), Phase::Asm);
  EXPECT_STREQ(phase_name(Phase::Init), "init");
}

TEST(CommLedger, TotalsArePhaseSums) {
  CommLedger l;
  l.charge_global_floats(Phase::Init, 3);
  l.charge_global_floats(Phase::Dcg, 5);
  l.charge_local_floats(Phase::Asm, 7);
  l.charge_global_booleans(Phase::Admm, 2);
  const TrafficCount t = l.total();
  EXPECT_EQ(t, (TrafficCount{8, 2, 7}));
  EXPECT_EQ(t - l.phase(Phase::Dcg), (TrafficCount{3, 2, 7}));
}

TEST(RoundBarrier, RejectsDoublePost) {
  RoundBarrier b(2);
  b.post(0);
  EXPECT_THROW(b.post(0), FabricError);
  EXPECT_EQ(b.missing(), IndexList{1});
  b.post(1);
  b.advance();
  EXPECT_EQ(b.round(), 1u);
}
