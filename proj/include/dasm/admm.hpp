#pragma once

#include "dasm/asm.hpp"
#include "dasm/fabric.hpp"
#include "dasm/linalg.hpp"
#include "dasm/qp_builder.hpp"

#include <map>
#include <string>
#include <vector>

namespace dasm {

struct AdmmConfig {
  double rho = 1.0;
  double eps_r = 1e-6;
  double eps_d = 1e-3;
  Index max_iter = 5000;
  AsmConfig local;  // single-agent active-set solves of the z-update

  static AdmmConfig admm1(double rho = 1.0) { return {rho, 1e-6, 1e-3, 5000, {}}; }
  static AdmmConfig admm2(double rho = 1.0) { return {rho, 1e-4, 1e-2, 5000, {}}; }
};

struct AdmmState {
  std::vector<Vector> z;
  std::vector<Vector> z_bar;
  std::vector<Vector> lambda;  // per agent, indexed by the agent's coupling rows
  ActiveSet local_active;
  Index iterations = 0;
};

struct AdmmResult {
  AdmmState state;
  bool converged = false;
  TrafficCount traffic;
};

namespace detail {

/// The variable each local coupling row acts on and its coefficient (+1 owner, -1 copier).
inline std::vector<std::pair<Index, double>> coupling_columns(const AgentQP& qp) {
  std::vector<std::pair<Index, double>> cols;
  for (Index r = 0; r < qp.n_local_coupling(); ++r) {
    Index c = -1;
    for (Index k = 0; k < qp.nz(); ++k) {
      if (qp.C_cpl(r, k) != 0.0) {
        c = k;
        break;
      }
    }
    cols.emplace_back(c, qp.C_cpl(r, c));
  }
  return cols;
}

}  // namespace detail

/// z-update of one agent: argmin 1/2 z'Hz + q'z + lambda' C z + rho/2 ||C (z - z_bar)||^2
/// over the agent's own equality and inequality rows, solved by the single-agent
/// active-set method. Factorizations are reused across calls.
class AdmmLocalProblem {
 public:
  AdmmLocalProblem(const AgentQP& qp, double rho) : qp_(&qp), rho_(rho) {
    if (!(rho > 0.0)) throw Error("admm: rho must be positive");
    CtC_ = qp.C_cpl.transpose() * qp.C_cpl;
    AgentQP local = qp;
    local.agent = 0;
    local.H = qp.H + rho * CtC_;
    local.C_cpl = Matrix::Zero(0, qp.nz());
    local.coupling_rows.clear();
    local.coupling_multiplicity = Vector::Zero(0);
    local.n_c = 0;
    local_.push_back(std::move(local));
  }

  AsmResult solve(const Vector& z_bar, const Vector& lambda, const IndexList& warm_active, const AsmConfig& cfg = {}) {
    detail::require_dims(z_bar.size() == qp_->nz() && lambda.size() == qp_->n_local_coupling(), "admm_local_qp: dimension mismatch");
    local_[0].q = qp_->q + qp_->C_cpl.transpose() * lambda - rho_ * (CtC_ * z_bar);
    Fabric fabric(1);
    return asm_solve(local_, ActiveSet{warm_active}, cfg, fabric, &cache_);
  }

  const AgentQP& local_qp() const { return local_[0]; }

 private:
  const AgentQP* qp_;
  double rho_;
  Matrix CtC_;
  std::vector<AgentQP> local_;
  CondenseCache cache_;
};

inline AsmResult admm_local_qp(const AgentQP& qp, const Vector& z_bar, const Vector& lambda, double rho, const IndexList& warm_active,
                               const AsmConfig& cfg = {}) {
  AdmmLocalProblem local(qp, rho);
  return local.solve(z_bar, lambda, warm_active, cfg);
}

/// Averaging rounds: copies travel to their owners, owners average
///   xbar_i = sum_{j in out(i)} (x_i + v_ij) / (2 |out(i)|)
/// and send the averages back; z_bar takes x^N and u from z.
inline std::vector<Vector> admm_average(const std::vector<AgentQP>& qps, const std::vector<Vector>& z, Fabric& fabric) {
  const auto M = static_cast<Index>(qps.size());
  Fabric::PhaseScope scope(fabric, Phase::Admm);

  struct RowRef {
    Index owner = -1, owner_pos = -1, copier = -1, copier_pos = -1;
  };
  std::map<Index, RowRef> rows;
  std::vector<std::vector<std::pair<Index, double>>> cols;
  for (Index i = 0; i < M; ++i) {
    cols.push_back(detail::coupling_columns(qps[i]));
    for (Index r = 0; r < qps[i].n_local_coupling(); ++r) {
      auto& ref = rows[qps[i].coupling_rows[r]];
      if (cols[i][r].second > 0.0) {
        ref.owner = i;
        ref.owner_pos = r;
      } else {
        ref.copier = i;
        ref.copier_pos = r;
      }
    }
  }

  // Copies to owners (ascending global row within each message).
  std::map<std::pair<Index, Index>, Envelope> up;
  for (const auto& [row, ref] : rows) {
    auto& env = up[{ref.copier, ref.owner}];
    env.from = ref.copier;
    env.to = ref.owner;
    env.payload.push_back(z[ref.copier](cols[ref.copier][ref.copier_pos].first));
  }
  std::vector<Envelope> outbox;
  for (auto& [k, e] : up) outbox.push_back(std::move(e));
  auto inbox = fabric.neighbor_exchange(std::move(outbox));

  std::vector<Vector> z_bar = z;
  std::vector<std::map<Index, std::pair<double, Index>>> sums(static_cast<std::size_t>(M));  // owner var -> (sum of copies, count)
  for (Index i = 0; i < M; ++i) {
    for (const auto& env : inbox[i]) {
      std::size_t k = 0;
      for (const auto& [row, ref] : rows) {
        if (ref.owner != i || ref.copier != env.from) continue;
        auto& s = sums[i][cols[i][ref.owner_pos].first];
        s.first += env.payload[k++];
        s.second += 1;
      }
    }
    for (const auto& [var, s] : sums[i]) {
      const double x = z[i](var);
      z_bar[i](var) = (static_cast<double>(s.second) * x + s.first) / (2.0 * static_cast<double>(s.second));
    }
  }

  // Averages back to the copiers.
  std::map<std::pair<Index, Index>, Envelope> down;
  for (const auto& [row, ref] : rows) {
    auto& env = down[{ref.owner, ref.copier}];
    env.from = ref.owner;
    env.to = ref.copier;
    env.payload.push_back(z_bar[ref.owner](cols[ref.owner][ref.owner_pos].first));
  }
  outbox.clear();
  for (auto& [k, e] : down) outbox.push_back(std::move(e));
  inbox = fabric.neighbor_exchange(std::move(outbox));
  for (Index i = 0; i < M; ++i) {
    for (const auto& env : inbox[i]) {
      std::size_t k = 0;
      for (const auto& [row, ref] : rows) {
        if (ref.copier != i || ref.owner != env.from) continue;
        z_bar[i](cols[i][ref.copier_pos].first) = env.payload[k++];
      }
    }
  }
  return z_bar;
}

/// lambda + rho C (z - z_bar)
inline Vector admm_dual_update(const AgentQP& qp, const Vector& z, const Vector& z_bar, const Vector& lambda, double rho) {
  return lambda + rho * (qp.C_cpl * (z - z_bar));
}

/// Per-agent stopping test
///   ||C(z - zbar)|| <= eps_r min{max{||Cz||, ||C zbar||}, 1}  and
///   ||rho C(z+ - z)|| <= eps_d min{||lambda||, 1}   (max norms).
inline bool admm_converged(const AgentQP& qp, const Vector& z_new, const Vector& z_old, const Vector& z_bar, const Vector& lambda, double rho,
                           double eps_r, double eps_d) {
  const Vector Cz = qp.C_cpl * z_new;
  const Vector Czb = qp.C_cpl * z_bar;
  const double primal = detail::inf_norm(Cz - Czb);
  const double primal_bound = eps_r * std::min(std::max(detail::inf_norm(Cz), detail::inf_norm(Czb)), 1.0);
  const double dual = detail::inf_norm(rho * (qp.C_cpl * (z_new - z_old)));
  const double dual_bound = eps_d * std::min(detail::inf_norm(lambda), 1.0);
  return primal <= primal_bound && dual <= dual_bound;
}

/// Zero-padded one-step shift of every trajectory block, used to warm start z_bar.
inline Vector shift_trajectory(const AgentQP& qp, const Vector& z) {
  const auto& L = qp.layout;
  const Index N = L.horizon;
  Vector out = Vector::Zero(z.size());
  for (Index k = 0; k + 1 < N; ++k) {
    out.segment(L.x(k, 0), L.n) = z.segment(L.x(k + 1, 0), L.n);
    out.segment(L.u(k, 0), L.m) = z.segment(L.u(k + 1, 0), L.m);
    for (std::size_t s = 0; s < L.copies.size(); ++s)
      out.segment(L.v(s, k, 0), L.copies[s].dim) = z.segment(L.v(s, k + 1, 0), L.copies[s].dim);
  }
  return out;
}

inline AdmmState admm_cold_start(const std::vector<AgentQP>& qps) {
  AdmmState st;
  for (const auto& qp : qps) {
    st.z.push_back(Vector::Zero(qp.nz()));
    st.z_bar.push_back(Vector::Zero(qp.nz()));
    st.lambda.push_back(Vector::Zero(qp.n_local_coupling()));
    st.local_active.emplace_back();
  }
  return st;
}

/// Runs ADMM from `init` until every agent passes its stopping test.
inline AdmmResult admm_solve(const std::vector<AgentQP>& qps, AdmmState init, const AdmmConfig& cfg, Fabric& fabric) {
  if (!(cfg.rho > 0.0)) throw Error("admm: rho must be positive");
  const auto M = static_cast<Index>(qps.size());
  detail::require_dims(M == fabric.agents() && static_cast<Index>(init.z_bar.size()) == M, "admm_solve: agent count mismatch");
  const TrafficCount before = fabric.ledger().total();
  AdmmResult res;
  res.state = std::move(init);
  auto& st = res.state;
  st.iterations = 0;
  if (st.z.size() != st.z_bar.size()) st.z = st.z_bar;
  if (st.local_active.size() != qps.size()) st.local_active.assign(qps.size(), {});

  std::vector<AdmmLocalProblem> locals;
  locals.reserve(qps.size());
  for (const auto& qp : qps) locals.emplace_back(qp, cfg.rho);

  while (st.iterations < cfg.max_iter) {
    std::vector<Vector> z_new;
    for (Index i = 0; i < M; ++i) {
      auto local = locals[i].solve(st.z_bar[i], st.lambda[i], st.local_active[i], cfg.local);
      z_new.push_back(std::move(local.z[0]));
      st.local_active[i] = std::move(local.active[0]);
    }
    st.z_bar = admm_average(qps, z_new, fabric);
    std::vector<bool> flags;
    for (Index i = 0; i < M; ++i) {
      st.lambda[i] = admm_dual_update(qps[i], z_new[i], st.z_bar[i], st.lambda[i], cfg.rho);
      flags.push_back(admm_converged(qps[i], z_new[i], st.z[i], st.z_bar[i], st.lambda[i], cfg.rho, cfg.eps_r, cfg.eps_d));
    }
    st.z = std::move(z_new);
    ++st.iterations;
    bool done = false;
    {
      Fabric::PhaseScope scope(fabric, Phase::Admm);
      done = fabric.global_all(flags);
    }
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.traffic = fabric.ledger().total() - before;
  return res;
}

}  // namespace dasm
