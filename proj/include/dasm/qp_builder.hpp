#pragma once

#include "dasm/linalg.hpp"
#include "dasm/model.hpp"

#include <string>
#include <vector>

namespace dasm {

/// Position of agent i's decision variables z_i = [x_i^0..x_i^{N-1}, x_i^N, u_i^0..u_i^{N-1}, v_i].
/// The copy block v_i is neighbor-major: one sub-block per in-neighbor in
/// ascending id, each holding that neighbor's state for k = 0..N-1.
struct VariableLayout {
  struct CopyBlock {
    Index neighbor = 0;
    Index dim = 0;
    Index offset = 0;
  };

  Index horizon = 0;
  Index n = 0;
  Index m = 0;
  std::vector<CopyBlock> copies;

  VariableLayout() = default;
  VariableLayout(Index N, Index state_dim, Index input_dim, const std::vector<std::pair<Index, Index>>& in_neighbor_dims)
      : horizon(N), n(state_dim), m(input_dim) {
    Index off = v_offset();
    for (const auto& [j, nj] : in_neighbor_dims) {
      copies.push_back({j, nj, off});
      off += N * nj;
    }
  }

  Index x_offset() const { return 0; }
  Index terminal_offset() const { return horizon * n; }
  Index u_offset() const { return (horizon + 1) * n; }
  Index v_offset() const { return (horizon + 1) * n + horizon * m; }
  Index copy_dim() const {
    Index v = 0;
    for (const auto& c : copies) v += c.dim;
    return v;
  }
  /// n_zi = (N+1) n_i + N (m_i + v_i)
  Index size() const { return (horizon + 1) * n + horizon * (m + copy_dim()); }

  /// k = N addresses the terminal state.
  Index x(Index k, Index c) const { return k * n + c; }
  Index u(Index k, Index c) const { return u_offset() + k * m + c; }
  Index v(std::size_t slot, Index k, Index c) const { return copies[slot].offset + k * copies[slot].dim + c; }
};

/// Global ordering of the consensus rows v_ji^k = x_j^k. Rows are edge-major
/// (edges sorted by copier id, then owner id), then time, then component.
class CouplingIndex {
 public:
  struct Row {
    Index owner = 0;   // j, whose state is copied
    Index copier = 0;  // i, who holds v_ji
    Index k = 0;
    Index component = 0;
  };

  CouplingIndex() = default;
  CouplingIndex(const NetworkModel& net, Index N) : horizon_(N), touching_(static_cast<std::size_t>(net.size())) {
    for (Index i = 0; i < net.size(); ++i) {
      for (Index j : net.in_neighbors(i)) {
        const Index nj = net.agent(j).n();
        for (Index k = 0; k < N; ++k) {
          for (Index c = 0; c < nj; ++c) {
            const auto r = static_cast<Index>(rows_.size());
            rows_.push_back({j, i, k, c});
            touching_[j].push_back(r);
            touching_[i].push_back(r);
          }
        }
      }
    }
    for (auto& t : touching_) std::sort(t.begin(), t.end());
  }

  Index horizon() const { return horizon_; }
  Index size() const { return static_cast<Index>(rows_.size()); }
  const Row& row(Index r) const { return rows_.at(r); }
  /// C(i): ascending global rows touching agent i.
  const IndexList& rows_of(Index agent) const { return touching_.at(agent); }

 private:
  Index horizon_ = 0;
  std::vector<Row> rows_;
  std::vector<IndexList> touching_;
};

/// Agent i's block of the partially separable QP
///   min 1/2 z'Hz + q'z  s.t.  C_eq z = b_eq,  C_ineq z <= b_ineq,  sum_i C_cpl,i z_i = 0.
/// The coupling matrix is held compressed: row r of C_cpl is global row coupling_rows[r].
struct AgentQP {
  Index agent = 0;
  VariableLayout layout;
  Matrix H;
  Vector q;
  Matrix C_eq;
  Vector b_eq;
  Matrix C_ineq;
  Vector b_ineq;
  Matrix C_cpl;
  IndexList coupling_rows;
  Vector coupling_multiplicity;  // diagonal of Lambda_i
  Index n_c = 0;

  Index nz() const { return H.rows(); }
  Index n_eq() const { return C_eq.rows(); }
  Index n_ineq() const { return C_ineq.rows(); }
  Index n_local_coupling() const { return C_cpl.rows(); }

  /// Expands the compressed coupling block to the full n_c x n_zi matrix.
  Matrix coupling_matrix() const {
    Matrix full = Matrix::Zero(n_c, nz());
    for (Index r = 0; r < C_cpl.rows(); ++r) full.row(coupling_rows[r]) = C_cpl.row(r);
    return full;
  }
};

inline AgentQP build_agent_qp(const NetworkModel& net, const CouplingIndex& cpl, Index i, const Vector& x0) {
  const auto& a = net.agent(i);
  const Index N = cpl.horizon();
  if (N < 1) throw Error("horizon must be at least 1");
  detail::require_dims(x0.size() == a.n(), "build_agent_qp: initial state has wrong dimension");
  const Index n = a.n();
  const Index m = a.m();

  std::vector<std::pair<Index, Index>> in_dims;
  for (Index j : net.in_neighbors(i)) in_dims.emplace_back(j, net.agent(j).n());

  AgentQP qp;
  qp.agent = i;
  qp.layout = VariableLayout(N, n, m, in_dims);
  const auto& L = qp.layout;
  const Index nz = L.size();

  // Hessian: diag(Q~_i x N, P_i, R_i x N, [Q~_j x N]_j), Q~ = Q / (|out| + 1).
  qp.H = Matrix::Zero(nz, nz);
  const double share_i = 1.0 / static_cast<double>(net.out_neighbors(i).size() + 1);
  for (Index k = 0; k < N; ++k) {
    qp.H.block(L.x(k, 0), L.x(k, 0), n, n) = share_i * a.Q;
    qp.H.block(L.u(k, 0), L.u(k, 0), m, m) = a.R;
  }
  qp.H.block(L.terminal_offset(), L.terminal_offset(), n, n) = a.P;
  for (std::size_t s = 0; s < L.copies.size(); ++s) {
    const auto& blk = L.copies[s];
    const auto& aj = net.agent(blk.neighbor);
    const double share_j = 1.0 / static_cast<double>(net.out_neighbors(blk.neighbor).size() + 1);
    for (Index k = 0; k < N; ++k) qp.H.block(L.v(s, k, 0), L.v(s, k, 0), blk.dim, blk.dim) = share_j * aj.Q;
  }
  qp.q = Vector::Zero(nz);

  // Equalities: x^0 = x0, then x^{k+1} - A_self x^k - B u^k - sum_j A_ij v_ji^k = 0.
  qp.C_eq = Matrix::Zero((N + 1) * n, nz);
  qp.b_eq = Vector::Zero((N + 1) * n);
  qp.C_eq.block(0, L.x(0, 0), n, n).setIdentity();
  qp.b_eq.head(n) = x0;
  for (Index k = 0; k < N; ++k) {
    const Index r = (k + 1) * n;
    qp.C_eq.block(r, L.x(k + 1, 0), n, n).setIdentity();
    qp.C_eq.block(r, L.x(k, 0), n, n) = -a.A_self;
    qp.C_eq.block(r, L.u(k, 0), n, m) = -a.B;
    for (std::size_t s = 0; s < L.copies.size(); ++s) {
      const auto& blk = L.copies[s];
      qp.C_eq.block(r, L.v(s, k, 0), n, blk.dim) = -a.A_in.at(blk.neighbor);
    }
  }

  // Input box as one-sided rows: u <= u_hi, -u <= -u_lo.
  qp.C_ineq = Matrix::Zero(2 * N * m, nz);
  qp.b_ineq = Vector::Zero(2 * N * m);
  for (Index k = 0; k < N; ++k) {
    for (Index c = 0; c < m; ++c) {
      const Index r = 2 * (k * m + c);
      qp.C_ineq(r, L.u(k, c)) = 1.0;
      qp.b_ineq(r) = a.u_hi(c);
      qp.C_ineq(r + 1, L.u(k, c)) = -1.0;
      qp.b_ineq(r + 1) = -a.u_lo(c);
    }
  }

  // Coupling: +1 on the owner's x_j^k, -1 on the copier's v_ji^k.
  qp.n_c = cpl.size();
  qp.coupling_rows = cpl.rows_of(i);
  qp.C_cpl = Matrix::Zero(static_cast<Index>(qp.coupling_rows.size()), nz);
  qp.coupling_multiplicity = Vector::Constant(static_cast<Index>(qp.coupling_rows.size()), 2.0);
  for (std::size_t r = 0; r < qp.coupling_rows.size(); ++r) {
    const auto& row = cpl.row(qp.coupling_rows[r]);
    const auto lr = static_cast<Index>(r);
    if (row.owner == i) {
      qp.C_cpl(lr, L.x(row.k, row.component)) = 1.0;
    } else {
      std::size_t slot = 0;
      while (L.copies[slot].neighbor != row.owner) ++slot;
      qp.C_cpl(lr, L.v(slot, row.k, row.component)) = -1.0;
    }
  }
  return qp;
}

inline std::vector<AgentQP> build_qps(const NetworkModel& net, Index N, const std::vector<Vector>& x0) {
  detail::require_dims(static_cast<Index>(x0.size()) == net.size(), "build_qps: one initial state per agent required");
  const CouplingIndex cpl(net, N);
  std::vector<AgentQP> qps;
  qps.reserve(x0.size());
  for (Index i = 0; i < net.size(); ++i) qps.push_back(build_agent_qp(net, cpl, i, x0[i]));
  return qps;
}

/// Replaces the initial-condition right-hand side; nothing else changes.
inline void update_initial_state(AgentQP& qp, const Vector& x0) {
  detail::require_dims(x0.size() == qp.layout.n, "update_initial_state: initial state has wrong dimension");
  qp.b_eq.head(qp.layout.n) = x0;
}

/// Centralized stacking of all agent blocks. Decision vector is [z_0; z_1; ...].
struct StackedQp {
  Matrix H;
  Vector q;
  Matrix C_eq;
  Vector b_eq;
  Matrix C_ineq;
  Vector b_ineq;
  Matrix C_cpl;
  IndexList z_offset;     // size M + 1
  IndexList eq_offset;    // size M + 1
  IndexList ineq_offset;  // size M + 1

  Index nz() const { return H.rows(); }
  Vector agent_block(const Vector& z, Index i) const { return z.segment(z_offset[i], z_offset[i + 1] - z_offset[i]); }
};

inline StackedQp stack_global(const std::vector<AgentQP>& qps) {
  if (qps.empty()) throw Error("stack_global: no agents");
  const auto M = static_cast<Index>(qps.size());
  StackedQp s;
  s.z_offset.assign(M + 1, 0);
  s.eq_offset.assign(M + 1, 0);
  s.ineq_offset.assign(M + 1, 0);
  const Index n_c = qps.front().n_c;
  for (Index i = 0; i < M; ++i) {
    if (qps[i].n_c != n_c) throw Error("stack_global: inconsistent coupling row count across agents");
    s.z_offset[i + 1] = s.z_offset[i] + qps[i].nz();
    s.eq_offset[i + 1] = s.eq_offset[i] + qps[i].n_eq();
    s.ineq_offset[i + 1] = s.ineq_offset[i] + qps[i].n_ineq();
  }
  const Index nz = s.z_offset[M];
  s.H = Matrix::Zero(nz, nz);
  s.q = Vector::Zero(nz);
  s.C_eq = Matrix::Zero(s.eq_offset[M], nz);
  s.b_eq = Vector::Zero(s.eq_offset[M]);
  s.C_ineq = Matrix::Zero(s.ineq_offset[M], nz);
  s.b_ineq = Vector::Zero(s.ineq_offset[M]);
  s.C_cpl = Matrix::Zero(n_c, nz);
  for (Index i = 0; i < M; ++i) {
    const auto& qp = qps[i];
    const Index z0 = s.z_offset[i];
    s.H.block(z0, z0, qp.nz(), qp.nz()) = qp.H;
    s.q.segment(z0, qp.nz()) = qp.q;
    s.C_eq.block(s.eq_offset[i], z0, qp.n_eq(), qp.nz()) = qp.C_eq;
    s.b_eq.segment(s.eq_offset[i], qp.n_eq()) = qp.b_eq;
    s.C_ineq.block(s.ineq_offset[i], z0, qp.n_ineq(), qp.nz()) = qp.C_ineq;
    s.b_ineq.segment(s.ineq_offset[i], qp.n_ineq()) = qp.b_ineq;
    for (Index r = 0; r < qp.C_cpl.rows(); ++r) s.C_cpl.block(qp.coupling_rows[r], z0, 1, qp.nz()) = qp.C_cpl.row(r);
  }
  return s;
}

}  // namespace dasm
