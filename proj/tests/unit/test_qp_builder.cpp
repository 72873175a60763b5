#include "dasm/qp_builder.hpp"
#include "support/random_instances.hpp"

#include <gtest/gtest.h>

using namespace dasm;

namespace {

std::vector<Vector> zeros(const NetworkModel& net) {
  std::vector<Vector> x;
  for (const auto& a : net.agents()) x.push_back(Vector::Zero(a.n()));
  return x;
}

// Consistent stacked z from full-network trajectories: copies take the owner's states.
std::vector<Vector> consistent_point(const NetworkModel& net, const std::vector<AgentQP>& qps, const std::vector<Matrix>& xs,
                                     const std::vector<Matrix>& us) {
  std::vector<Vector> z;
  for (Index i = 0; i < net.size(); ++i) {
    const auto& L = qps[i].layout;
    Vector zi = Vector::Zero(L.size());
    for (Index k = 0; k <= L.horizon; ++k) zi.segment(L.x(k, 0), L.n) = xs[i].col(k);
    for (Index k = 0; k < L.horizon; ++k) zi.segment(L.u(k, 0), L.m) = us[i].col(k);
    for (std::size_t s = 0; s < L.copies.size(); ++s)
      for (Index k = 0; k < L.horizon; ++k) zi.segment(L.v(s, k, 0), L.copies[s].dim) = xs[L.copies[s].neighbor].col(k);
    z.push_back(zi);
  }
  return z;
}

}  // namespace

TEST(QpBuilder, ChainDimensions) {
  const auto net = build_chain_of_masses(ChainParams{});
  const auto qps = build_qps(net, 12, zeros(net));
  Index nz = 0, neq = 0, nin = 0;
  for (const auto& qp : qps) {
    nz += qp.nz();
    neq += qp.n_eq();
    nin += qp.n_ineq();
    EXPECT_EQ(qp.n_c, 432);
  }
  EXPECT_EQ(qps[4].nz(), 86);
  EXPECT_EQ(qps[0].nz(), 62);
  EXPECT_EQ(nz, 812);
  EXPECT_EQ(neq, 260);
  EXPECT_EQ(nin, 240);
  EXPECT_EQ(stack_global(qps).C_cpl.rows(), 432);
}

TEST(QpBuilder, LayoutOffsets) {
  VariableLayout L(3, 2, 1, {{1, 2}, {4, 3}});
  EXPECT_EQ(L.terminal_offset(), 6);
  EXPECT_EQ(L.u_offset(), 8);
  EXPECT_EQ(L.v_offset(), 11);
  EXPECT_EQ(L.v(0, 0, 0), 11);
  EXPECT_EQ(L.v(1, 0, 0), 17);
  EXPECT_EQ(L.v(1, 2, 2), 25);
  EXPECT_EQ(L.size(), 26);
}

TEST(QpBuilder, CouplingRowsEachTouchTwoAgents) {
  const auto net = build_chain_of_masses(ChainParams{});
  const auto qps = build_qps(net, 12, zeros(net));
  const auto S = stack_global(qps);
  for (Index r = 0; r < S.C_cpl.rows(); ++r) {
    EXPECT_EQ(S.C_cpl.row(r).sum(), 0.0);
    EXPECT_EQ(S.C_cpl.row(r).cwiseAbs().sum(), 2.0);
  }
  Index rows = 0;
  for (const auto& qp : qps) {
    rows += qp.n_local_coupling();
    EXPECT_TRUE((qp.coupling_multiplicity.array() == 2.0).all());
    EXPECT_TRUE(std::is_sorted(qp.coupling_rows.begin(), qp.coupling_rows.end()));
  }
  EXPECT_EQ(rows, 2 * 432);
}

TEST(QpBuilder, CouplingRowOrder) {
  const auto net = build_chain_of_masses(ChainParams{});
  const CouplingIndex cpl(net, 12);
  // Agent 0 copies agent 1 first.
  EXPECT_EQ(cpl.row(0).copier, 0);
  EXPECT_EQ(cpl.row(0).owner, 1);
  EXPECT_EQ(cpl.row(1).component, 1);
  EXPECT_EQ(cpl.row(2).k, 1);
  EXPECT_EQ(cpl.row(24).copier, 1);
  EXPECT_EQ(cpl.row(24).owner, 0);
  EXPECT_EQ(cpl.row(48).owner, 2);
}

TEST(QpBuilder, InitialStateUpdateOnlyTouchesRhs) {
  const auto net = build_chain_of_masses(ChainParams{});
  auto qps = build_qps(net, 12, zeros(net));
  const auto before = qps[3];
  update_initial_state(qps[3], Eigen::Vector2d(0.5, -0.25));
  EXPECT_EQ(qps[3].b_eq(0), 0.5);
  EXPECT_EQ(qps[3].b_eq(1), -0.25);
  EXPECT_EQ((qps[3].b_eq.tail(qps[3].n_eq() - 2) - before.b_eq.tail(before.n_eq() - 2)).norm(), 0.0);
  EXPECT_EQ((qps[3].C_eq - before.C_eq).norm(), 0.0);
  EXPECT_THROW(update_initial_state(qps[3], Vector::Zero(3)), DimensionError);
}

TEST(QpBuilder, RejectsBadInputs) {
  const auto net = build_chain_of_masses(ChainParams{});
  EXPECT_THROW(build_qps(net, 0, zeros(net)), Error);
  EXPECT_THROW(build_qps(net, 12, {}), DimensionError);
}

TEST(QpBuilder, StackedCostMatchesCentralizedCost) {
  UniformSampler rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    fixtures::RandomNetworkSpec spec;
    spec.agents = rng.integer(2, 6);
    spec.max_state = 3;
    spec.max_input = 2;
    spec.terminal_weight = trial % 2 == 0;
    const auto net = fixtures::random_network(rng, spec);
    const Index N = rng.integer(1, 5);
    const auto x0 = fixtures::random_state(rng, net, 1.0);
    const auto qps = build_qps(net, N, x0);

    // Roll out the coupled dynamics with random inputs.
    std::vector<Matrix> xs, us;
    for (const auto& a : net.agents()) {
      xs.push_back(Matrix::Zero(a.n(), N + 1));
      us.push_back(fixtures::random_matrix(rng, a.m(), N, -1.0, 1.0));
    }
    for (Index i = 0; i < net.size(); ++i) xs[i].col(0) = x0[i];
    for (Index k = 0; k < N; ++k) {
      PlantState st;
      std::vector<Vector> u;
      for (Index i = 0; i < net.size(); ++i) {
        st.x.push_back(xs[i].col(k));
        u.push_back(us[i].col(k));
      }
      const auto next = plant_step(net, st, u);
      for (Index i = 0; i < net.size(); ++i) xs[i].col(k + 1) = next.x[i];
    }

    const auto z = consistent_point(net, qps, xs, us);
    double spread = 0.0, central = 0.0;
    for (Index i = 0; i < net.size(); ++i) {
      const auto& qp = qps[i];
      spread += 0.5 * z[i].dot(qp.H * z[i]);
      EXPECT_LE(detail::inf_norm(qp.C_eq * z[i] - qp.b_eq), 1e-12);
      const auto& a = net.agent(i);
      for (Index k = 0; k < N; ++k)
        central += 0.5 * (xs[i].col(k).dot(a.Q * xs[i].col(k)) + us[i].col(k).dot(a.R * us[i].col(k)));
      central += 0.5 * xs[i].col(N).dot(a.P * xs[i].col(N));
    }
    EXPECT_NEAR(spread, central, 1e-10 * std::max(1.0, std::abs(central)));

    const auto S = stack_global(qps);
    Vector zs(S.nz());
    for (Index i = 0; i < net.size(); ++i) zs.segment(S.z_offset[i], z[i].size()) = z[i];
    EXPECT_LE(detail::inf_norm(S.C_cpl * zs), 1e-14);
  }
}
