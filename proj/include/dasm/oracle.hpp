#pragma once

#include "dasm/asm.hpp"
#include "dasm/linalg.hpp"
#include "dasm/model.hpp"
#include "dasm/qp_builder.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dasm::oracle {

// Centralized references. Nothing here touches the condense/DCG/ASM code path.

class OracleError : public Error {
 public:
  enum class Kind { Infeasible, NotConvex, CapExceeded };
  OracleError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// min 1/2 z'Hz + q'z  s.t.  A_eq z = b_eq,  A_ineq z <= b_ineq.
struct DenseQp {
  Matrix H;
  Vector q;
  Matrix A_eq;
  Vector b_eq;
  Matrix A_ineq;
  Vector b_ineq;

  Index nz() const { return H.rows(); }
  double objective(const Vector& z) const { return 0.5 * z.dot(H * z) + q.dot(z); }
};

/// Coupling rows are appended to the equality block.
inline DenseQp to_dense_qp(const StackedQp& s) {
  DenseQp d;
  d.H = s.H;
  d.q = s.q;
  d.A_eq.resize(s.C_eq.rows() + s.C_cpl.rows(), s.nz());
  d.A_eq << s.C_eq, s.C_cpl;
  d.b_eq = Vector::Zero(d.A_eq.rows());
  d.b_eq.head(s.b_eq.size()) = s.b_eq;
  d.A_ineq = s.C_ineq;
  d.b_ineq = s.b_ineq;
  return d;
}

struct DenseQpSolution {
  Vector z;
  Vector nu;  // equality multipliers
  Vector mu;  // inequality multipliers, >= 0
  IndexList active;
  double objective = 0.0;
  Index iterations = 0;
};

struct KktReport {
  double stationarity = 0.0;
  double primal_equality = 0.0;
  double primal_inequality = 0.0;
  double dual_feasibility = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal_equality, primal_inequality, dual_feasibility, complementarity}); }
};

/// Residuals of H z + q + A_eq' nu + A_ineq' mu = 0, A_eq z = b_eq, A_ineq z <= b_ineq, mu >= 0, mu .* slack = 0.
inline KktReport kkt_residual(const DenseQp& qp, const Vector& z, const Vector& nu, const Vector& mu) {
  KktReport r;
  Vector grad = qp.H * z + qp.q;
  if (qp.A_eq.rows() > 0) grad += qp.A_eq.transpose() * nu;
  if (qp.A_ineq.rows() > 0) grad += qp.A_ineq.transpose() * mu;
  r.stationarity = detail::inf_norm(grad);
  if (qp.A_eq.rows() > 0) r.primal_equality = detail::inf_norm(qp.A_eq * z - qp.b_eq);
  if (qp.A_ineq.rows() > 0) {
    const Vector slack = qp.A_ineq * z - qp.b_ineq;
    r.primal_inequality = std::max(0.0, slack.maxCoeff());
    r.dual_feasibility = std::max(0.0, -mu.minCoeff());
    r.complementarity = detail::inf_norm(mu.cwiseProduct(slack));
  }
  return r;
}

namespace detail {

/// Goldfarb-Idnani dual active-set method for min 1/2 y'Gy + a'y s.t. N y <= c
/// with G positive definite. Needs no feasible starting point.
class DualActiveSet {
 public:
  DualActiveSet(const Matrix& G, const Vector& a, const Matrix& N, const Vector& c) : G_(G), a_(a), N_(N), c_(c) {}

  struct Result {
    Vector y;
    Vector mu;
    IndexList active;
    Index iterations = 0;
  };

  Result solve(Index max_iter = 10000) {
    const Index n = G_.rows();
    const Index m = N_.rows();
    Eigen::LLT<Matrix> llt(G_);
    if (llt.info() != Eigen::Success) throw OracleError(OracleError::Kind::NotConvex, "reduced Hessian is not positive definite");
    const Matrix L = llt.matrixL();
    J_ = L.transpose().triangularView<Eigen::Upper>().solve(Matrix::Identity(n, n));
    R_ = Matrix::Zero(n, n);
    q_ = 0;
    active_.clear();
    u_.clear();

    Vector y = -llt.solve(a_);
    const double scale = std::max(1.0, c_.size() > 0 ? c_.cwiseAbs().maxCoeff() : 0.0);
    const double tol = 1e-12 * scale;
    Index iter = 0;

    for (;;) {
      if (++iter > max_iter) throw OracleError(OracleError::Kind::CapExceeded, "dual active-set iteration limit");
      // Most violated constraint (violation = N_j y - c_j > 0).
      Index p = -1;
      double worst = tol;
      for (Index j = 0; j < m; ++j) {
        if (is_active(j)) continue;
        const double v = N_.row(j).dot(y) - c_(j);
        if (v > worst) {
          worst = v;
          p = j;
        }
      }
      if (p < 0) break;

      double u_p = 0.0;
      for (;;) {
        // Work with the >= form n'y >= e, n = -N_p, e = -c_p.
        const Vector np = -N_.row(p).transpose();
        const Vector d = J_.transpose() * np;
        const Vector z = J_.rightCols(n - q_) * d.tail(n - q_);
        Vector r = Vector::Zero(q_);
        if (q_ > 0) r = R_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d.head(q_));

        double t1 = std::numeric_limits<double>::infinity();
        Index l = -1;
        for (Index k = 0; k < q_; ++k) {
          if (r(k) > 0.0 && u_[k] / r(k) < t1) {
            t1 = u_[k] / r(k);
            l = k;
          }
        }
        const double zn = z.dot(np);
        const double slack = np.dot(y) + c_(p);  // n'y - e, negative while violated
        double t2 = std::numeric_limits<double>::infinity();
        if (z.norm() > 1e-14 && zn > 0.0) t2 = -slack / zn;

        if (std::isinf(t1) && std::isinf(t2)) throw OracleError(OracleError::Kind::Infeasible, "quadratic program is infeasible");
        if (std::isinf(t2)) {
          for (Index k = 0; k < q_; ++k) u_[k] -= t1 * r(k);
          u_p += t1;
          drop(l);
          continue;
        }
        const double t = std::min(t1, t2);
        y += t * z;
        for (Index k = 0; k < q_; ++k) u_[k] -= t * r(k);
        u_p += t;
        if (t == t2) {
          add(p, d, u_p);
          break;
        }
        drop(l);
      }
    }

    Result res;
    res.y = y;
    res.mu = Vector::Zero(m);
    for (Index k = 0; k < q_; ++k) res.mu(active_[k]) = u_[k];
    res.active = active_;
    std::sort(res.active.begin(), res.active.end());
    res.iterations = iter;
    return res;
  }

 private:
  bool is_active(Index j) const { return std::find(active_.begin(), active_.end(), j) != active_.end(); }

  void add(Index p, Vector d, double u_p) {
    const Index n = J_.rows();
    for (Index j = n - 1; j > q_; --j) {
      const double h = std::hypot(d(j - 1), d(j));
      if (h == 0.0) continue;
      const double cc = d(j - 1) / h;
      const double ss = d(j) / h;
      d(j - 1) = h;
      d(j) = 0.0;
      const Vector a = J_.col(j - 1);
      const Vector b = J_.col(j);
      J_.col(j - 1) = cc * a + ss * b;
      J_.col(j) = -ss * a + cc * b;
    }
    R_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    active_.push_back(p);
    u_.push_back(u_p);
    ++q_;
  }

  void drop(Index l) {
    for (Index k = l; k < q_ - 1; ++k) R_.col(k) = R_.col(k + 1);
    R_.col(q_ - 1).setZero();
    for (Index j = l; j < q_ - 1; ++j) {
      const double h = std::hypot(R_(j, j), R_(j + 1, j));
      if (h == 0.0) continue;
      const double cc = R_(j, j) / h;
      const double ss = R_(j + 1, j) / h;
      for (Index k = j; k < q_ - 1; ++k) {
        const double a = R_(j, k);
        const double b = R_(j + 1, k);
        R_(j, k) = cc * a + ss * b;
        R_(j + 1, k) = -ss * a + cc * b;
      }
      const Vector a = J_.col(j);
      const Vector b = J_.col(j + 1);
      J_.col(j) = cc * a + ss * b;
      J_.col(j + 1) = -ss * a + cc * b;
    }
    active_.erase(active_.begin() + l);
    u_.erase(u_.begin() + l);
    --q_;
  }

  const Matrix& G_;
  const Vector& a_;
  const Matrix& N_;
  const Vector& c_;
  Matrix J_;
  Matrix R_;
  Index q_ = 0;
  IndexList active_;
  std::vector<double> u_;
};

}  // namespace detail

/// Centralized solve: eliminate the equalities with an orthogonal null-space
/// basis, then run a dual active-set method on the reduced problem.
inline DenseQpSolution solve_dense_qp(const DenseQp& qp) {
  const Index n = qp.nz();
  dasm::detail::require_dims(qp.H.cols() == n && qp.q.size() == n && qp.A_eq.cols() == n && qp.A_ineq.cols() == n &&
                                 qp.b_eq.size() == qp.A_eq.rows() && qp.b_ineq.size() == qp.A_ineq.rows(),
                             "solve_dense_qp: inconsistent dimensions");
  Vector z_p = Vector::Zero(n);
  Matrix Z = Matrix::Identity(n, n);
  Eigen::CompleteOrthogonalDecomposition<Matrix> eq_cod;
  if (qp.A_eq.rows() > 0) {
    eq_cod.compute(qp.A_eq);
    z_p = eq_cod.solve(qp.b_eq);
    if (dasm::detail::inf_norm(qp.A_eq * z_p - qp.b_eq) > 1e-9 * std::max(1.0, dasm::detail::inf_norm(qp.b_eq))) {
      throw OracleError(OracleError::Kind::Infeasible, "equality constraints are inconsistent");
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(qp.A_eq.transpose());
    const Index rank = qr.rank();
    const Matrix Q = qr.householderQ() * Matrix::Identity(n, n);
    Z = Q.rightCols(n - rank);
  }

  const Matrix G = Z.transpose() * qp.H * Z;
  const Vector a = Z.transpose() * (qp.H * z_p + qp.q);
  const Matrix N = qp.A_ineq * Z;
  const Vector c = qp.b_ineq - qp.A_ineq * z_p;
  const Matrix Gs = 0.5 * (G + G.transpose());
  detail::DualActiveSet gi(Gs, a, N, c);
  const auto red = gi.solve();

  DenseQpSolution sol;
  sol.z = z_p + Z * red.y;
  sol.mu = red.mu;
  sol.active = red.active;
  sol.iterations = red.iterations;
  sol.objective = qp.objective(sol.z);
  if (qp.A_eq.rows() > 0) {
    Vector rhs = -(qp.H * sol.z + qp.q);
    if (qp.A_ineq.rows() > 0) rhs -= qp.A_ineq.transpose() * sol.mu;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(qp.A_eq.transpose());
    sol.nu = cod.solve(rhs);
  } else {
    sol.nu = Vector::Zero(0);
  }
  return sol;
}

/// Exhaustive search over working sets: every subset of inequality rows is
/// treated as equalities, the KKT system solved, and the primal/dual feasible
/// candidate with the lowest objective returned.
inline DenseQpSolution enumerate_active_sets(const DenseQp& qp, Index max_ineq = 20) {
  const Index n = qp.nz();
  const Index p = qp.A_eq.rows();
  const Index m = qp.A_ineq.rows();
  if (m > max_ineq || m > 20) throw OracleError(OracleError::Kind::CapExceeded, "enumeration is capped at " + std::to_string(std::min<Index>(max_ineq, 20)) + " inequality rows");
  const double tol = 1e-9;

  DenseQpSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    IndexList rows;
    for (Index j = 0; j < m; ++j)
      if (mask & (std::uint64_t{1} << j)) rows.push_back(j);
    const Index k = static_cast<Index>(rows.size());
    if (p + k > n) continue;
    Matrix K = Matrix::Zero(n + p + k, n + p + k);
    Vector rhs = Vector::Zero(n + p + k);
    K.topLeftCorner(n, n) = qp.H;
    rhs.head(n) = -qp.q;
    if (p > 0) {
      K.block(0, n, n, p) = qp.A_eq.transpose();
      K.block(n, 0, p, n) = qp.A_eq;
      rhs.segment(n, p) = qp.b_eq;
    }
    for (Index a = 0; a < k; ++a) {
      K.block(0, n + p + a, n, 1) = qp.A_ineq.row(rows[a]).transpose();
      K.block(n + p + a, 0, 1, n) = qp.A_ineq.row(rows[a]);
      rhs(n + p + a) = qp.b_ineq(rows[a]);
    }
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible()) continue;
    const Vector x = lu.solve(rhs);
    const Vector z = x.head(n);
    const Vector mu_w = x.tail(k);
    if (k > 0 && mu_w.minCoeff() < -tol) continue;
    if (m > 0 && (qp.A_ineq * z - qp.b_ineq).maxCoeff() > tol) continue;
    const double f = qp.objective(z);
    if (!found || f < best.objective - 1e-12) {
      found = true;
      best.z = z;
      best.nu = x.segment(n, p);
      best.mu = Vector::Zero(m);
      for (Index a = 0; a < k; ++a) best.mu(rows[a]) = mu_w(a);
      best.active = rows;
      best.objective = f;
    }
    ++best.iterations;
  }
  if (!found) throw OracleError(OracleError::Kind::Infeasible, "no working set yields a KKT point");
  return best;
}

/// Maps a distributed solution onto the stacked problem's multipliers
/// ([C_eq rows; coupling rows], then inequality rows) and checks KKT.
inline KktReport kkt_residual(const std::vector<AgentQP>& qps, const AsmResult& res) {
  const StackedQp s = stack_global(qps);
  const DenseQp d = to_dense_qp(s);
  const auto M = static_cast<Index>(qps.size());
  Vector z(s.nz());
  Vector nu = Vector::Zero(d.A_eq.rows());
  Vector mu = Vector::Zero(d.A_ineq.rows());
  for (Index i = 0; i < M; ++i) {
    z.segment(s.z_offset[i], qps[i].nz()) = res.z[i];
    nu.segment(s.eq_offset[i], qps[i].n_eq()) = res.duals[i].equality;
    mu.segment(s.ineq_offset[i], qps[i].n_ineq()) = res.inequality_multipliers(i, qps[i].n_ineq());
    for (Index r = 0; r < qps[i].n_local_coupling(); ++r) nu(s.C_eq.rows() + qps[i].coupling_rows[r]) = res.lambda[i](r);
  }
  return kkt_residual(d, z, nu, mu);
}

struct Rollout {
  std::vector<std::vector<Vector>> states;  // steps + 1 entries
  std::vector<std::vector<Vector>> inputs;  // steps entries
  bool ok = true;
  std::string error;
};

/// Closed loop with the centralized MPC: solve, apply u^0, advance the plant.
inline Rollout centralized_mpc_rollout(const NetworkModel& net, const std::vector<Vector>& x0, Index N, Index steps) {
  Rollout out;
  PlantState x{x0, 0};
  out.states.push_back(x.x);
  auto qps = build_qps(net, N, x0);
  for (Index t = 0; t < steps; ++t) {
    for (Index i = 0; i < net.size(); ++i) update_initial_state(qps[i], x.x[i]);
    const StackedQp s = stack_global(qps);
    DenseQpSolution sol;
    try {
      sol = solve_dense_qp(to_dense_qp(s));
    } catch (const Error& e) {
      out.ok = false;
      out.error = e.what();
      return out;
    }
    std::vector<Vector> u;
    for (Index i = 0; i < net.size(); ++i) u.push_back(s.agent_block(sol.z, i).segment(qps[i].layout.u(0, 0), qps[i].layout.m));
    x = plant_step(net, x, u);
    out.inputs.push_back(std::move(u));
    out.states.push_back(x.x);
  }
  return out;
}

}  // namespace dasm::oracle
