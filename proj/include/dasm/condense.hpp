#pragma once

#include "dasm/linalg.hpp"
#include "dasm/qp_builder.hpp"

#include <map>
#include <string>
#include <vector>

namespace dasm {

/// Raised when the working set is rank deficient or the reduced Hessian is
/// not positive definite.
class CondenseError : public Error {
 public:
  enum class Kind { RankDeficient, ReducedHessianIndefinite, SingularGram };

  CondenseError(Kind kind, Index agent, Index row, const std::string& what)
      : Error(what), kind_(kind), agent_(agent), row_(row) {}

  Kind kind() const { return kind_; }
  Index agent() const { return agent_; }
  /// Working-set row found dependent on the rows before it (-1 if not applicable).
  Index dependent_row() const { return row_; }

 private:
  Kind kind_;
  Index agent_;
  Index row_;
};

/// [C_eq; active inequality rows] and the right-hand side used for the step.
struct WorkingConstraints {
  Matrix C;
  Vector d;
  Index n_eq = 0;

  Index rows() const { return C.rows(); }
};

/// Stacks the equality rows with the given inequality rows, in that order. With
/// `absolute` the rhs is [b_eq; b_ineq(active)], otherwise zero.
inline WorkingConstraints make_working_set(const AgentQP& qp, const IndexList& active, bool absolute) {
  WorkingConstraints w;
  w.n_eq = qp.n_eq();
  const Index rows = qp.n_eq() + static_cast<Index>(active.size());
  w.C.resize(rows, qp.nz());
  w.d = Vector::Zero(rows);
  w.C.topRows(qp.n_eq()) = qp.C_eq;
  if (absolute) w.d.head(qp.n_eq()) = qp.b_eq;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const Index r = qp.n_eq() + static_cast<Index>(a);
    w.C.row(r) = qp.C_ineq.row(active[a]);
    if (absolute) w.d(r) = qp.b_ineq(active[a]);
  }
  return w;
}

inline constexpr double kRankTolerance = 1e-9;
inline constexpr double kPivotTolerance = 1e-12;

/// Null-space reduction of one agent's equality-constrained step problem
///   min 1/2 dz'H dz + g'dz  s.t.  C dz = d,  coupling rows C_cpl dz (shared).
/// With dz = Z v + Y w, the agent contributes S_i = Cbar Hbar^-1 Cbar' and
/// s_i = b - Cbar Hbar^-1 gbar to the coupling Schur system, compressed to C(i).
struct CondensedAgent {
  Index agent = 0;
  Matrix Z;
  Matrix Y;
  Matrix CY;  // C Y, lower triangular
  Matrix ZtHY;
  Matrix CplY;
  Vector w;
  Eigen::LLT<Matrix> H_red;
  Vector g_bar;
  Matrix C_bar;      // C_cpl Z, |C(i)| x (nz - nh)
  Vector b;          // C_cpl Y w
  Matrix Hinv_Cbar;  // Hbar^-1 Cbar'
  Vector Hinv_gbar;
  Matrix S_hat;
  Vector s_local;
  Vector Lambda_local;
  IndexList coupling_rows;
  Index n_c = 0;

  Index n_free() const { return Z.cols(); }
  Index n_local() const { return static_cast<Index>(coupling_rows.size()); }

  /// I_C(i)' S_hat I_C(i): the full n_c x n_c Schur contribution.
  Matrix expand_schur() const {
    Matrix S = Matrix::Zero(n_c, n_c);
    for (Index a = 0; a < n_local(); ++a)
      for (Index b2 = 0; b2 < n_local(); ++b2) S(coupling_rows[a], coupling_rows[b2]) = S_hat(a, b2);
    return S;
  }
  Vector expand_rhs() const {
    Vector s = Vector::Zero(n_c);
    for (Index a = 0; a < n_local(); ++a) s(coupling_rows[a]) = s_local(a);
    return s;
  }
};

/// The part of the reduction that depends only on H and the working-set rows.
inline CondensedAgent condense_factor(const AgentQP& qp, const WorkingConstraints& work) {
  const Index nz = qp.nz();
  const Index nh = work.rows();
  detail::require_dims(work.C.cols() == nz && work.d.size() == nh, "condense: working set does not match the agent QP");

  CondensedAgent ca;
  ca.agent = qp.agent;
  ca.coupling_rows = qp.coupling_rows;
  ca.Lambda_local = qp.coupling_multiplicity;
  ca.n_c = qp.n_c;

  if (nh > nz) {
    throw CondenseError(CondenseError::Kind::RankDeficient, qp.agent, nz,
                        "agent " + std::to_string(qp.agent) + ": more working rows than variables");
  }

  // C' = Q [R; 0]  =>  Y = Q_1, Z = Q_2, C Y = R'.
  Eigen::HouseholderQR<Matrix> qr(work.C.transpose());
  const Matrix Q = qr.householderQ() * Matrix::Identity(nz, nz);
  const Matrix R = qr.matrixQR().topRows(nh).triangularView<Eigen::Upper>();
  const double scale = std::max(1.0, detail::max_abs(work.C));
  for (Index k = 0; k < nh; ++k) {
    if (std::abs(R(k, k)) < kRankTolerance * scale) {
      throw CondenseError(CondenseError::Kind::RankDeficient, qp.agent, k,
                          "agent " + std::to_string(qp.agent) + ": working-set row " + std::to_string(k) +
                              " is linearly dependent on the rows before it");
    }
  }
  ca.Y = Q.leftCols(nh);
  ca.Z = Q.rightCols(nz - nh);
  ca.CY = R.transpose();

  if (nz - nh > 0) {
    const Matrix ZtH = ca.Z.transpose() * qp.H;
    ca.H_red.compute(ZtH * ca.Z);
    const Matrix L = ca.H_red.matrixL();
    if (ca.H_red.info() != Eigen::Success || (L.diagonal().array().square() < kPivotTolerance).any()) {
      throw CondenseError(CondenseError::Kind::ReducedHessianIndefinite, qp.agent, -1,
                          "agent " + std::to_string(qp.agent) + ": reduced Hessian is not positive definite");
    }
    ca.ZtHY = ZtH * ca.Y;
    ca.C_bar = qp.C_cpl * ca.Z;
    ca.Hinv_Cbar = ca.H_red.solve(ca.C_bar.transpose());
  } else {
    ca.ZtHY = Matrix::Zero(0, nh);
    ca.C_bar = Matrix::Zero(ca.n_local(), 0);
    ca.Hinv_Cbar = Matrix::Zero(0, ca.n_local());
  }
  ca.CplY = qp.C_cpl * ca.Y;
  const Matrix S = ca.C_bar * ca.Hinv_Cbar;
  ca.S_hat = 0.5 * (S + S.transpose());
  return ca;
}

/// Fills the parts that depend on the working-set rhs d and the gradient g.
inline void condense_rhs(CondensedAgent& ca, const WorkingConstraints& work, const Vector& g) {
  detail::require_dims(work.d.size() == ca.CY.rows() && g.size() == ca.Z.rows(), "condense: rhs or gradient has wrong dimension");
  ca.w = ca.CY.triangularView<Eigen::Lower>().solve(work.d);
  if (ca.n_free() > 0) {
    ca.g_bar = ca.Z.transpose() * g + ca.ZtHY * ca.w;
    ca.Hinv_gbar = ca.H_red.solve(ca.g_bar);
  } else {
    ca.g_bar = Vector::Zero(0);
    ca.Hinv_gbar = Vector::Zero(0);
  }
  ca.b = ca.CplY * ca.w;
  ca.s_local = ca.b - ca.C_bar * ca.Hinv_gbar;
}

inline CondensedAgent condense(const AgentQP& qp, const WorkingConstraints& work, const Vector& g) {
  detail::require_dims(g.size() == qp.nz(), "condense: gradient has wrong dimension");
  CondensedAgent ca = condense_factor(qp, work);
  condense_rhs(ca, work, g);
  return ca;
}

/// Reuses factorizations across solves of problems that differ only in q and
/// the right-hand sides. Keyed by agent and working-set row list.
class CondenseCache {
 public:
  explicit CondenseCache(std::size_t max_entries_per_agent = 256) : cap_(max_entries_per_agent) {}

  CondensedAgent get(const AgentQP& qp, const IndexList& active, const WorkingConstraints& work, const Vector& g) {
    if (static_cast<std::size_t>(qp.agent) >= maps_.size()) maps_.resize(static_cast<std::size_t>(qp.agent) + 1);
    auto& m = maps_[static_cast<std::size_t>(qp.agent)];
    auto it = m.find(active);
    if (it == m.end()) {
      if (m.size() >= cap_) m.clear();
      it = m.emplace(active, condense_factor(qp, work)).first;
    }
    CondensedAgent ca = it->second;
    condense_rhs(ca, work, g);
    return ca;
  }

 private:
  std::size_t cap_;
  std::vector<std::map<IndexList, CondensedAgent>> maps_;
};

/// dz = Z Hbar^-1 (-gbar - Cbar' lambda) + Y (C Y)^-1 d, with lambda indexed by C(i).
inline Vector backsubstitute(const CondensedAgent& ca, const Vector& lambda_local) {
  detail::require_dims(lambda_local.size() == ca.n_local(), "backsubstitute: multiplier vector must be indexed by C(i)");
  Vector dz = ca.Y * ca.w;
  if (ca.n_free() > 0) dz -= ca.Z * (ca.Hinv_gbar + ca.Hinv_Cbar * lambda_local);
  return dz;
}

struct DualEstimate {
  Vector gamma;     // all working rows
  Vector equality;  // first n_eq entries
  Vector active;    // one per active inequality, in active-set order
  double residual = 0.0;
};

/// gamma = (C C')^-1 C (-g - C_cpl' lambda), the least-squares multipliers of
/// the working set once the step has vanished.
inline DualEstimate recover_duals(const AgentQP& qp, const WorkingConstraints& work, const Vector& g, const Vector& lambda_local) {
  detail::require_dims(g.size() == qp.nz() && lambda_local.size() == qp.n_local_coupling(), "recover_duals: dimension mismatch");
  const Vector rhs = -g - qp.C_cpl.transpose() * lambda_local;
  const Matrix gram = work.C * work.C.transpose();
  Eigen::LLT<Matrix> llt(gram);
  if (gram.rows() > 0) {
    const Matrix L = llt.matrixL();
    if (llt.info() != Eigen::Success || (L.diagonal().array().square() < kPivotTolerance).any()) {
      throw CondenseError(CondenseError::Kind::SingularGram, qp.agent, -1,
                          "agent " + std::to_string(qp.agent) + ": working-set Gram matrix is singular");
    }
  }
  DualEstimate out;
  out.gamma = gram.rows() > 0 ? Vector(llt.solve(work.C * rhs)) : Vector::Zero(0);
  out.equality = out.gamma.head(work.n_eq);
  out.active = out.gamma.tail(work.rows() - work.n_eq);
  out.residual = detail::inf_norm(work.C.transpose() * out.gamma - rhs);
  return out;
}

}  // namespace dasm
