#include "dasm/asm.hpp"
#include "dasm/oracle.hpp"
#include "support/random_instances.hpp"

#include <gtest/gtest.h>

using namespace dasm;

namespace {

// One agent, one variable, no equalities or coupling.
AgentQP scalar_qp(double h, double q, const std::vector<std::pair<double, double>>& rows) {
  AgentQP qp;
  qp.layout = VariableLayout(1, 0, 1, {});
  qp.H = Matrix::Constant(1, 1, h);
  qp.q = Vector::Constant(1, q);
  qp.C_eq = Matrix::Zero(0, 1);
  qp.b_eq = Vector::Zero(0);
  qp.C_ineq = Matrix::Zero(static_cast<Index>(rows.size()), 1);
  qp.b_ineq = Vector::Zero(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    qp.C_ineq(static_cast<Index>(r), 0) = rows[r].first;
    qp.b_ineq(static_cast<Index>(r)) = rows[r].second;
  }
  qp.C_cpl = Matrix::Zero(0, 1);
  qp.coupling_multiplicity = Vector::Zero(0);
  return qp;
}

std::vector<AgentQP> random_problem(UniformSampler& rng, Index agents, Index N, double x_scale) {
  fixtures::RandomNetworkSpec spec;
  spec.agents = agents;
  spec.max_state = 2;
  spec.max_input = 2;
  const auto net = fixtures::random_network(rng, spec);
  auto qps = build_qps(net, N, fixtures::random_state(rng, net, x_scale));
  for (auto& qp : qps) qp.q = fixtures::random_matrix(rng, qp.nz(), 1, -0.5, 0.5);
  return qps;
}

Vector stack(const std::vector<Vector>& z) {
  Index n = 0;
  for (const auto& v : z) n += v.size();
  Vector out(n);
  n = 0;
  for (const auto& v : z) {
    out.segment(n, v.size()) = v;
    n += v.size();
  }
  return out;
}

}  // namespace

TEST(StepLength, ZeroStepIsFull) {
  const auto qp = scalar_qp(1.0, 0.0, {{1.0, 1.0}});
  const auto sl = compute_step_length(Vector::Zero(1), Vector::Zero(1), qp, {});
  EXPECT_EQ(sl.alpha, 1.0);
  EXPECT_EQ(sl.blocking_row, -1);
}

TEST(StepLength, ScalarBlockingConstraint) {
  const auto qp = scalar_qp(1.0, 0.0, {{1.0, 1.0}});
  const auto sl = compute_step_length(Vector::Zero(1), Vector::Constant(1, 2.0), qp, {});
  EXPECT_DOUBLE_EQ(sl.alpha, 0.5);
  EXPECT_EQ(sl.blocking_row, 0);
  EXPECT_EQ(compute_step_length(Vector::Zero(1), Vector::Constant(1, 2.0), qp, {0}).alpha, 1.0);
  EXPECT_EQ(compute_step_length(Vector::Zero(1), Vector::Constant(1, -2.0), qp, {}).alpha, 1.0);
}

TEST(StepLength, TiesGoToLowestRow) {
  const auto qp = scalar_qp(1.0, 0.0, {{2.0, 2.0}, {1.0, 1.0}, {1.0, 1.0}});
  const auto sl = compute_step_length(Vector::Zero(1), Vector::Constant(1, 4.0), qp, {0});
  EXPECT_EQ(sl.blocking_row, 1);
  EXPECT_DOUBLE_EQ(sl.alpha, 0.25);
}

TEST(StepLength, InfeasibleIterateIsAnError) {
  const auto qp = scalar_qp(1.0, 0.0, {{1.0, 1.0}});
  EXPECT_THROW(compute_step_length(Vector::Constant(1, 1.1), Vector::Constant(1, 1.0), qp, {}), AsmError);
}

TEST(StepLength, LandsOnBlockingBoundary) {
  UniformSampler rng(12);
  for (int t = 0; t < 50; ++t) {
    const auto qps = random_problem(rng, 2, 3, 0.5);
    const auto& qp = qps[0];
    Vector z = Vector::Zero(qp.nz());
    for (Index k = 0; k < qp.layout.horizon; ++k)
      for (Index c = 0; c < qp.layout.m; ++c) z(qp.layout.u(k, c)) = 0.1 * rng.uniform(-1, 1);
    const Vector dz = fixtures::random_matrix(rng, qp.nz(), 1, -3, 3);
    const auto sl = compute_step_length(z, dz, qp, {});
    if (sl.blocking_row < 0) continue;
    EXPECT_NEAR(qp.C_ineq.row(sl.blocking_row).dot(z + sl.alpha * dz), qp.b_ineq(sl.blocking_row), 1e-10);
    EXPECT_LE((qp.C_ineq * (z + sl.alpha * dz) - qp.b_ineq).maxCoeff(), 1e-10);
  }
}

TEST(Asm, ScalarBoundActive) {
  const std::vector<AgentQP> qps{scalar_qp(1.0, 0.0, {{1.0, -1.0}})};
  Fabric f(1);
  const auto res = asm_solve(qps, {}, {}, f);
  EXPECT_NEAR(res.z[0](0), -1.0, 1e-12);
  ASSERT_EQ(res.active[0], IndexList{0});
  EXPECT_NEAR(res.duals[0].active(0), 1.0, 1e-12);
}

TEST(Asm, InteriorOptimumNeedsOneStep) {
  const std::vector<AgentQP> qps{scalar_qp(2.0, -1.0, {{1.0, 5.0}, {-1.0, 5.0}})};
  Fabric f(1);
  const auto res = asm_solve(qps, {}, {}, f);
  EXPECT_NEAR(res.z[0](0), 0.5, 1e-12);
  EXPECT_TRUE(res.active[0].empty());
  EXPECT_EQ(res.stats.outer_iterations, 1);
  EXPECT_EQ(res.stats.init_rounds, 1);
}

TEST(Asm, RemovesConstraintWithNegativeMultiplier) {
  // Warm start with the wrong bound active; the method must release it.
  const std::vector<AgentQP> qps{scalar_qp(1.0, -0.5, {{1.0, 1.0}, {-1.0, 1.0}})};
  Fabric f(1);
  const auto res = asm_solve(qps, {{1}}, {}, f);
  EXPECT_NEAR(res.z[0](0), 0.5, 1e-12);
  EXPECT_TRUE(res.active[0].empty());
  EXPECT_EQ(res.stats.constraints_removed, 1);
}

TEST(Asm, DropsDependentWarmRows) {
  const std::vector<AgentQP> qps{scalar_qp(1.0, 0.0, {{1.0, -1.0}, {1.0, -1.0}})};
  Fabric f(1);
  const auto res = asm_solve(qps, {{0, 1}}, {}, f);
  EXPECT_NEAR(res.z[0](0), -1.0, 1e-12);
  EXPECT_EQ(res.active[0].size(), 1u);
}

TEST(Asm, MatchesDenseOracleOnRandomNetworks) {
  UniformSampler rng(2024);
  for (int t = 0; t < 20; ++t) {
    const auto qps = random_problem(rng, rng.integer(2, 4), rng.integer(2, 4), 3.0);
    Fabric f(static_cast<Index>(qps.size()));
    AsmConfig cfg;
    cfg.record_trace = true;
    cfg.eps_dcg = 1e-10;
    const auto res = asm_solve(qps, {}, cfg, f);
    const auto dense = oracle::to_dense_qp(stack_global(qps));
    const auto ref = oracle::solve_dense_qp(dense);
    EXPECT_LE(detail::inf_norm(stack(res.z) - ref.z), 1e-6) << "trial " << t;
    EXPECT_NEAR(detail::objective(qps, res.z), ref.objective, 1e-8 * std::max(1.0, std::abs(ref.objective)));
    EXPECT_LE(oracle::kkt_residual(qps, res).max(), 1e-6);
    for (const auto& rec : res.stats.trace) {
      EXPECT_LE(rec.equality_residual, 1e-8);
      EXPECT_LE(rec.inequality_violation, 1e-9);
      EXPECT_LE(rec.coupling_residual, 1e-7);
    }
  }
}

TEST(Asm, WarmStartFromOptimalSetIsFixedPoint) {
  UniformSampler rng(31);
  const auto qps = random_problem(rng, 3, 3, 3.0);
  Fabric f1(3);
  const auto first = asm_solve(qps, {}, {}, f1);
  Fabric f2(3);
  const auto second = asm_solve(qps, first.active, {}, f2);
  EXPECT_EQ(second.stats.init_rounds, 1);
  EXPECT_EQ(second.stats.outer_iterations, 1);
  EXPECT_EQ(second.stats.constraints_added, 0);
  EXPECT_LE(detail::inf_norm(stack(second.z) - stack(first.z)), 1e-6);
}

TEST(Asm, LedgerCountsPerOuterIteration) {
  UniformSampler rng(77);
  const auto qps = random_problem(rng, 3, 3, 3.0);
  const auto M = static_cast<std::uint64_t>(qps.size());
  Fabric f(3);
  const auto res = asm_solve(qps, {}, {}, f);
  const auto K = static_cast<std::uint64_t>(res.stats.outer_iterations);
  EXPECT_EQ(f.ledger().phase(Phase::Asm).global_floats, 2 * M * K);
  EXPECT_EQ(f.ledger().phase(Phase::Asm).global_booleans, 2 * M * K);
  EXPECT_EQ(f.ledger().phase(Phase::Asm).local_floats, 0u);
  EXPECT_EQ(res.stats.traffic, f.ledger().total());
  const auto dcg_iters = static_cast<std::uint64_t>(res.stats.dcg_iterations());
  EXPECT_EQ(f.ledger().phase(Phase::Dcg).global_floats, 4 * M * dcg_iters);
}

TEST(Asm, IterationLimitCarriesStats) {
  UniformSampler rng(5);
  const auto qps = random_problem(rng, 3, 4, 20.0);
  Fabric f(3);
  AsmConfig cfg;
  cfg.max_outer = 1;
  cfg.max_init_rounds = 1;
  EXPECT_THROW(asm_solve(qps, {}, cfg, f), AsmError);
}
