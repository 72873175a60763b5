#include "dasm/dcg.hpp"
#include "support/dcg_reference.hpp"

#include <gtest/gtest.h>

using namespace dasm;
using namespace dasm::fixtures;

namespace {

CondensedAgent scalar_agent(Index id, double S, double s) {
  CondensedAgent ca;
  ca.agent = id;
  ca.S_hat = Matrix::Constant(1, 1, S);
  ca.s_local = Vector::Constant(1, s);
  ca.Lambda_local = Vector::Constant(1, 2.0);
  ca.coupling_rows = {0};
  ca.n_c = 1;
  return ca;
}

}  // namespace

TEST(Dcg, ScalarExampleConvergesInOneIteration) {
  const std::vector<CondensedAgent> cas{scalar_agent(0, 1.0, 2.0), scalar_agent(1, 1.0, 2.0)};
  Fabric f(2);
  const auto res = dcg_solve(cas, zero_lambda(cas), {}, f);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_DOUBLE_EQ(res.lambda[0](0), 2.0);
  EXPECT_DOUBLE_EQ(res.lambda[1](0), 2.0);
  EXPECT_EQ(res.residual, 0.0);
}

TEST(Dcg, ZeroCouplingReturnsImmediately) {
  CondensedAgent ca;
  ca.S_hat = Matrix::Zero(0, 0);
  ca.s_local = Vector::Zero(0);
  ca.Lambda_local = Vector::Zero(0);
  Fabric f(1);
  const auto res = dcg_solve(std::vector<CondensedAgent>{ca}, {Vector::Zero(0)}, {}, f);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_EQ(f.ledger().total(), TrafficCount{});
}

TEST(Dcg, RejectsInconsistentInitialMultipliers) {
  const std::vector<CondensedAgent> cas{scalar_agent(0, 1.0, 2.0), scalar_agent(1, 1.0, 2.0)};
  Fabric f(2);
  EXPECT_THROW(dcg_solve(cas, {Vector::Constant(1, 1.0), Vector::Constant(1, 0.0)}, {}, f), DcgError);
}

TEST(Dcg, SingularSchurIsReported) {
  const std::vector<CondensedAgent> cas{scalar_agent(0, 0.0, 2.0), scalar_agent(1, 0.0, 2.0)};
  Fabric f(2);
  EXPECT_THROW(dcg_solve(cas, zero_lambda(cas), {}, f), DcgError);
}

TEST(Dcg, IterationLimitCarriesBestIterate) {
  UniformSampler rng(8);
  const auto in = random_condensed_instance(rng, 4, 3);
  Fabric f(4);
  DcgOptions opt;
  opt.max_iter = 1;
  opt.eps = 1e-14;
  try {
    dcg_solve(in.cas, zero_lambda(in.cas), opt, f);
    FAIL() << "expected iteration limit";
  } catch (const DcgError& e) {
    EXPECT_EQ(e.best_lambda().size(), 4u);
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Dcg, MatchesCentralizedCgIterateByIterate) {
  UniformSampler rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = random_condensed_instance(rng, rng.integer(2, 6), rng.integer(1, 4));
    const Index n_c = in.S.rows();
    const auto central = centralized_cg(in.cas, n_c, 1e-7, n_c + 5);
    Fabric f(static_cast<Index>(in.cas.size()));
    std::vector<Vector> seen;
    DcgOptions opt;
    opt.observer = [&](const DcgState& st) { seen.push_back(gather(in.cas, st.agents, n_c)); };
    const auto res = dcg_solve(in.cas, zero_lambda(in.cas), opt, f);
    EXPECT_LE(res.iterations, n_c + 5);
    ASSERT_EQ(seen.size(), central.size());
    for (std::size_t k = 0; k < seen.size(); ++k) {
      const double scale = std::max(1.0, central[k].lpNorm<Eigen::Infinity>());
      EXPECT_LE((seen[k] - central[k]).lpNorm<Eigen::Infinity>(), 1e-12 * scale) << "iteration " << k;
    }
    const Vector exact = in.S.ldlt().solve(in.s);
    Vector final = Vector::Zero(n_c);
    for (std::size_t i = 0; i < in.cas.size(); ++i)
      for (Index a = 0; a < in.cas[i].n_local(); ++a) final(in.cas[i].coupling_rows[a]) = res.lambda[i](a);
    EXPECT_LE((final - exact).lpNorm<Eigen::Infinity>(), 1e-5 * std::max(1.0, exact.lpNorm<Eigen::Infinity>()));
  }
}

TEST(Dcg, SharedRowsStayBitIdentical) {
  UniformSampler rng(99);
  const auto in = random_condensed_instance(rng, 5, 3);
  const auto overlap = NeighborOverlap::from_agents(in.cas);
  Fabric f(5);
  DcgOptions opt;
  opt.observer = [&](const DcgState& st) {
    for (Index i = 0; i < 5; ++i)
      for (const auto& [j, pairs] : overlap.links(i))
        for (const auto& [pi, pj] : pairs) {
          ASSERT_EQ(st.agents[i].lambda(pi), st.agents[j].lambda(pj));
          ASSERT_EQ(st.agents[i].r(pi), st.agents[j].r(pj));
          ASSERT_EQ(st.agents[i].p(pi), st.agents[j].p(pj));
        }
  };
  dcg_solve(in.cas, zero_lambda(in.cas), opt, f);
}

TEST(Dcg, LedgerIdentities) {
  UniformSampler rng(4);
  const auto in = random_condensed_instance(rng, 6, 4);
  const auto M = static_cast<std::uint64_t>(in.cas.size());
  const auto n_c = static_cast<std::uint64_t>(in.S.rows());
  Fabric f(static_cast<Index>(M));
  const auto res = dcg_solve(in.cas, zero_lambda(in.cas), {}, f);
  const auto k = static_cast<std::uint64_t>(res.iterations);
  const auto& dcg = f.ledger().phase(Phase::Dcg);
  EXPECT_EQ(dcg.global_floats, 4 * M * k);
  EXPECT_EQ(dcg.global_booleans, 2 * M * k);
  EXPECT_EQ(dcg.local_floats, 2 * n_c * k);
  const auto& init = f.ledger().phase(Phase::Init);
  EXPECT_EQ(init.global_floats, 2 * M);
  EXPECT_EQ(init.global_booleans, 2 * M);
  EXPECT_EQ(init.local_floats, 2 * n_c);
  EXPECT_EQ(res.traffic, f.ledger().total());
}
