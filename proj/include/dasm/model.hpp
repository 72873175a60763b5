#pragma once

#include "dasm/linalg.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <vector>

namespace dasm {

/// One subsystem of the coupled network
///   x_i^+ = A_self x_i + B u_i + sum_{j in in(i)} A_in[j] x_j
/// together with its input box and MPC weights. Agent ids are 0-based.
struct AgentModel {
  Index id = 0;
  Matrix A_self;
  Matrix B;
  std::map<Index, Matrix> A_in;  // keyed by in-neighbor id
  Vector u_lo;
  Vector u_hi;
  Matrix Q;
  Matrix R;
  Matrix P;

  Index n() const { return A_self.rows(); }
  Index m() const { return B.cols(); }
};

class NetworkModel {
 public:
  NetworkModel() = default;

  /// Validates dimensions, weights, bounds and topology; throws on violation.
  explicit NetworkModel(std::vector<AgentModel> agents) : agents_(std::move(agents)) {
    const auto M = static_cast<Index>(agents_.size());
    if (M == 0) throw Error("network must contain at least one agent");
    in_.assign(agents_.size(), {});
    out_.assign(agents_.size(), {});
    for (Index i = 0; i < M; ++i) {
      const auto& a = agents_[i];
      const std::string tag = "agent " + std::to_string(i) + ": ";
      if (a.id != i) throw Error(tag + "agent ids must be 0..M-1 in order");
      detail::require_dims(a.A_self.rows() == a.A_self.cols() && a.n() > 0, tag + "A_self must be square and non-empty");
      detail::require_dims(a.B.rows() == a.n() && a.m() > 0, tag + "B must have n rows and at least one column");
      detail::require_dims(a.u_lo.size() == a.m() && a.u_hi.size() == a.m(), tag + "input bounds must have length m");
      detail::require_dims(a.Q.rows() == a.n() && a.Q.cols() == a.n(), tag + "Q must be n x n");
      detail::require_dims(a.R.rows() == a.m() && a.R.cols() == a.m(), tag + "R must be m x m");
      detail::require_dims(a.P.rows() == a.n() && a.P.cols() == a.n(), tag + "P must be n x n");
      for (Index c = 0; c < a.m(); ++c) {
        if (!(a.u_lo(c) < 0.0 && 0.0 < a.u_hi(c))) throw Error(tag + "input box must contain the origin in its interior");
      }
      if (!detail::is_positive_definite(a.Q)) throw Error(tag + "Q must be symmetric positive definite");
      if (!detail::is_positive_definite(a.R)) throw Error(tag + "R must be symmetric positive definite");
      if (!detail::is_positive_semidefinite(a.P)) throw Error(tag + "P must be symmetric positive semi-definite");
    }
    for (Index i = 0; i < M; ++i) {
      for (const auto& [j, Aij] : agents_[i].A_in) {
        if (j < 0 || j >= M) throw Error("agent " + std::to_string(i) + ": in-neighbor id out of range");
        if (j == i) throw Error("agent " + std::to_string(i) + ": self-coupling belongs in A_self");
        detail::require_dims(Aij.rows() == agents_[i].n() && Aij.cols() == agents_[j].n(),
                             "agent " + std::to_string(i) + ": A_in block has wrong shape");
        in_[i].push_back(j);
        out_[j].push_back(i);
      }
    }
    for (auto& o : out_) std::sort(o.begin(), o.end());
    all_.resize(agents_.size());
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      std::set_union(in_[i].begin(), in_[i].end(), out_[i].begin(), out_[i].end(), std::back_inserter(all_[i]));
    }
  }

  Index size() const { return static_cast<Index>(agents_.size()); }
  const AgentModel& agent(Index i) const { return agents_.at(i); }
  const std::vector<AgentModel>& agents() const { return agents_; }

  const IndexList& in_neighbors(Index i) const { return in_.at(i); }
  const IndexList& out_neighbors(Index i) const { return out_.at(i); }
  /// Union of in- and out-neighbors, ascending.
  const IndexList& neighbors(Index i) const { return all_.at(i); }

  Index state_dim() const {
    Index n = 0;
    for (const auto& a : agents_) n += a.n();
    return n;
  }
  Index input_dim() const {
    Index m = 0;
    for (const auto& a : agents_) m += a.m();
    return m;
  }

 private:
  std::vector<AgentModel> agents_;
  std::vector<IndexList> in_;
  std::vector<IndexList> out_;
  std::vector<IndexList> all_;
};

/// Per-agent state vectors at one time instant.
struct PlantState {
  std::vector<Vector> x;
  Index time = 0;
};

struct ChainParams {
  Index masses = 10;
  double mass = 1.0;       // kg
  double stiffness = 3.0;  // N/m
  double damping = 3.0;    // N s/m
  double dt = 0.2;         // s
  double u_max = 1.0;      // N
  double q_position = 10.0;
  double q_velocity = 10.0;
  double r_input = 1.0;
  Matrix P = Matrix::Zero(2, 2);
};

/// Chain of masses m*y_i'' = u_i + sum_{j = i +- 1} [k (y_j - y_i) + d (v_j - v_i)],
/// forward-Euler discretized. End masses are attached only to their single
/// chain neighbor. With k = d = 0 no coupling edges are created.
inline NetworkModel build_chain_of_masses(const ChainParams& p) {
  if (p.masses < 2) throw Error("chain of masses needs at least two masses");
  if (!(p.dt > 0.0) || !(p.mass > 0.0)) throw Error("mass and sampling time must be positive");
  if (p.stiffness < 0.0 || p.damping < 0.0) throw Error("stiffness and damping must be non-negative");
  if (!(p.u_max > 0.0)) throw Error("input bound must be positive");
  if (!(p.q_position > 0.0 && p.q_velocity > 0.0 && p.r_input > 0.0)) throw Error("weights must be positive");
  const bool coupled = p.stiffness > 0.0 || p.damping > 0.0;
  const double ks = p.stiffness / p.mass;
  const double ds = p.damping / p.mass;

  std::vector<AgentModel> agents;
  agents.reserve(static_cast<std::size_t>(p.masses));
  for (Index i = 0; i < p.masses; ++i) {
    IndexList nbrs;
    if (i > 0) nbrs.push_back(i - 1);
    if (i + 1 < p.masses) nbrs.push_back(i + 1);
    const double deg = coupled ? static_cast<double>(nbrs.size()) : 0.0;

    Matrix Ac(2, 2);
    Ac << 0.0, 1.0, -ks * deg, -ds * deg;
    Matrix Bc(2, 1);
    Bc << 0.0, 1.0 / p.mass;

    AgentModel a;
    a.id = i;
    a.A_self = Matrix::Identity(2, 2) + p.dt * Ac;
    a.B = p.dt * Bc;
    if (coupled) {
      Matrix Acij(2, 2);
      Acij << 0.0, 0.0, ks, ds;
      for (Index j : nbrs) a.A_in.emplace(j, p.dt * Acij);
    }
    a.u_lo = Vector::Constant(1, -p.u_max);
    a.u_hi = Vector::Constant(1, p.u_max);
    a.Q = Eigen::Vector2d(p.q_position, p.q_velocity).asDiagonal();
    a.R = Matrix::Constant(1, 1, p.r_input);
    a.P = p.P;
    agents.push_back(std::move(a));
  }
  return NetworkModel(std::move(agents));
}

/// x_i^+ = A_self x_i + B u_i + sum_j A_in[j] x_j for every agent.
inline PlantState plant_step(const NetworkModel& net, const PlantState& x, const std::vector<Vector>& u) {
  const auto M = net.size();
  detail::require_dims(static_cast<Index>(x.x.size()) == M && static_cast<Index>(u.size()) == M,
                       "plant_step: state/input count must equal agent count");
  PlantState next;
  next.time = x.time + 1;
  next.x.resize(x.x.size());
  for (Index i = 0; i < M; ++i) {
    const auto& a = net.agent(i);
    detail::require_dims(x.x[i].size() == a.n() && u[i].size() == a.m(), "plant_step: dimension mismatch at agent " + std::to_string(i));
    Vector xi = a.A_self * x.x[i] + a.B * u[i];
    for (const auto& [j, Aij] : a.A_in) xi += Aij * x.x[j];
    next.x[i] = std::move(xi);
  }
  return next;
}

/// Dense stacked (A, B) of x^+ = A x + B u.
inline std::pair<Matrix, Matrix> assemble_dense_dynamics(const NetworkModel& net) {
  const auto M = net.size();
  IndexList xoff(M + 1, 0), uoff(M + 1, 0);
  for (Index i = 0; i < M; ++i) {
    xoff[i + 1] = xoff[i] + net.agent(i).n();
    uoff[i + 1] = uoff[i] + net.agent(i).m();
  }
  Matrix A = Matrix::Zero(xoff[M], xoff[M]);
  Matrix B = Matrix::Zero(xoff[M], uoff[M]);
  for (Index i = 0; i < M; ++i) {
    const auto& a = net.agent(i);
    A.block(xoff[i], xoff[i], a.n(), a.n()) = a.A_self;
    B.block(xoff[i], uoff[i], a.n(), a.m()) = a.B;
    for (const auto& [j, Aij] : a.A_in) A.block(xoff[i], xoff[j], a.n(), Aij.cols()) = Aij;
  }
  return {A, B};
}

}  // namespace dasm
