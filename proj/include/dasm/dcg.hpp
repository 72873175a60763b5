#pragma once

#include "dasm/condense.hpp"
#include "dasm/fabric.hpp"
#include "dasm/linalg.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dasm {

/// Shared coupling rows between neighboring agents: links[i][j] lists
/// (position in C(i), position in C(j)) pairs in ascending global row order.
class NeighborOverlap {
 public:
  using Pairs = std::vector<std::pair<Index, Index>>;

  NeighborOverlap() = default;

  template <class Agents>
  static NeighborOverlap from_agents(const Agents& agents) {
    NeighborOverlap ov;
    const auto M = static_cast<Index>(std::size(agents));
    ov.links_.resize(static_cast<std::size_t>(M));
    std::map<Index, std::vector<std::pair<Index, Index>>> by_row;  // global row -> (agent, local pos)
    for (Index i = 0; i < M; ++i) {
      const IndexList& rows = agents[i].coupling_rows;
      for (std::size_t a = 0; a < rows.size(); ++a) by_row[rows[a]].emplace_back(i, static_cast<Index>(a));
    }
    for (const auto& [row, touch] : by_row) {
      for (const auto& [i, pi] : touch) {
        for (const auto& [j, pj] : touch) {
          if (i != j) ov.links_[i][j].emplace_back(pi, pj);
        }
      }
    }
    return ov;
  }

  Index agents() const { return static_cast<Index>(links_.size()); }
  const std::map<Index, Pairs>& links(Index i) const { return links_.at(i); }

  /// Total floats in one full exchange of shared entries.
  Index exchange_size() const {
    Index n = 0;
    for (const auto& l : links_)
      for (const auto& [j, pairs] : l) n += static_cast<Index>(pairs.size());
    return n;
  }

  Fabric::LinkSizes link_sizes() const {
    Fabric::LinkSizes sizes;
    for (Index i = 0; i < agents(); ++i)
      for (const auto& [j, pairs] : links_[i]) sizes[{j, i}] = static_cast<Index>(pairs.size());
    return sizes;
  }

  /// Sum_{j in M_i u i} I_ij x_j: every agent sends its neighbors the entries of
  /// its local vector on their shared rows, then adds the received entries in
  /// ascending sender id so both owners of a row produce bit-identical sums.
  std::vector<Vector> accumulate(const std::vector<Vector>& local, Fabric& fabric) const {
    const auto M = agents();
    std::vector<Envelope> outbox;
    for (Index j = 0; j < M; ++j) {
      for (const auto& [i, pairs] : links_[j]) {
        // links_[j][i] holds (pos in j, pos in i); j sends its own entries.
        Envelope e{j, i, {}};
        e.payload.reserve(pairs.size());
        for (const auto& [pj, pi] : pairs) e.payload.push_back(local[j](pj));
        outbox.push_back(std::move(e));
      }
    }
    const auto sizes = link_sizes();
    auto inbox = fabric.neighbor_exchange(std::move(outbox), &sizes);

    std::vector<Vector> out(static_cast<std::size_t>(M));
    for (Index i = 0; i < M; ++i) {
      Vector acc = Vector::Zero(local[i].size());
      bool own_added = false;
      for (const auto& env : inbox[i]) {
        if (!own_added && env.from > i) {
          acc += local[i];
          own_added = true;
        }
        const auto& pairs = links_[i].at(env.from);  // (pos in i, pos in sender)
        for (std::size_t k = 0; k < pairs.size(); ++k) acc(pairs[k].first) += env.payload[k];
      }
      if (!own_added) acc += local[i];
      out[i] = std::move(acc);
    }
    return out;
  }

 private:
  std::vector<std::map<Index, Pairs>> links_;
};

class DcgError : public Error {
 public:
  DcgError(const std::string& what, std::vector<Vector> best_lambda, double residual)
      : Error(what), best_lambda_(std::move(best_lambda)), residual_(residual) {}
  const std::vector<Vector>& best_lambda() const { return best_lambda_; }
  double residual() const { return residual_; }

 private:
  std::vector<Vector> best_lambda_;
  double residual_;
};

/// Agent-local CG variables, all restricted to the agent's coupling rows C(i).
struct DcgLocalState {
  Vector lambda;
  Vector r;
  Vector p;
  double eta = 0.0;    // r' Lambda_i^-1 r
  double sigma = 0.0;  // p' S_hat p
  Index iter = 0;
};

struct DcgState {
  std::vector<DcgLocalState> agents;
  double eta = 0.0;  // global, known to every agent after the reduction
  bool converged = false;
  Index iterations = 0;
};

struct DcgOptions {
  double eps = 1e-7;
  Index max_iter = 0;  // 0 selects n_c + 50
  std::function<void(const DcgState&)> observer;  // called after init and after each iteration
};

namespace detail {

inline bool local_converged(const DcgLocalState& s, double eps) { return inf_norm(s.r) < eps; }

inline std::vector<bool> convergence_flags(const std::vector<DcgLocalState>& states, double eps) {
  std::vector<bool> flags;
  flags.reserve(states.size());
  for (const auto& s : states) flags.push_back(local_converged(s, eps));
  return flags;
}

inline double weighted_sq(const Vector& r, const Vector& multiplicity) {
  return r.size() == 0 ? 0.0 : (r.array().square() / multiplicity.array()).sum();
}

}  // namespace detail

/// r^0 = p^0 = s - S lambda^0, assembled with one neighbor exchange; followed by
/// the eta^0 reduction and the first convergence-flag round. Metered as init.
inline DcgState dcg_init(std::span<const CondensedAgent> cas, const NeighborOverlap& overlap, const std::vector<Vector>& lambda0,
                         double eps, Fabric& fabric) {
  const auto M = static_cast<Index>(cas.size());
  detail::require_dims(static_cast<Index>(lambda0.size()) == M && overlap.agents() == M, "dcg_init: one multiplier vector per agent required");
  for (Index i = 0; i < M; ++i) detail::require_dims(lambda0[i].size() == cas[i].n_local(), "dcg_init: multiplier vector must be indexed by C(i)");
  for (Index i = 0; i < M; ++i) {
    for (const auto& [j, pairs] : overlap.links(i)) {
      for (const auto& [pi, pj] : pairs) {
        if (lambda0[i](pi) != lambda0[j](pj)) {
          throw DcgError("dcg_init: initial multipliers of agents " + std::to_string(i) + " and " + std::to_string(j) +
                             " disagree on a shared coupling row",
                         lambda0, 0.0);
        }
      }
    }
  }

  Fabric::PhaseScope scope(fabric, Phase::Init);
  std::vector<Vector> local_residual(static_cast<std::size_t>(M));
  for (Index i = 0; i < M; ++i) local_residual[i] = cas[i].s_local - cas[i].S_hat * lambda0[i];
  auto r0 = overlap.accumulate(local_residual, fabric);

  DcgState st;
  st.agents.resize(static_cast<std::size_t>(M));
  std::vector<double> etas(static_cast<std::size_t>(M));
  for (Index i = 0; i < M; ++i) {
    auto& a = st.agents[i];
    a.lambda = lambda0[i];
    a.r = std::move(r0[i]);
    a.p = a.r;
    a.eta = detail::weighted_sq(a.r, cas[i].Lambda_local);
    etas[i] = a.eta;
  }
  st.eta = fabric.global_sum(std::span<const double>(etas));
  st.converged = fabric.global_all(detail::convergence_flags(st.agents, eps));
  return st;
}

/// One DCG round: sigma reduction, multiplier step, residual update with a
/// neighbor exchange of S_hat p, eta reduction, convergence flags, direction
/// update. Per call: 4M global floats, 2M global booleans, 2 n_c local floats.
inline void dcg_iterate(std::span<const CondensedAgent> cas, const NeighborOverlap& overlap, DcgState& st, double eps, Fabric& fabric) {
  const auto M = static_cast<Index>(cas.size());
  Fabric::PhaseScope scope(fabric, Phase::Dcg);

  std::vector<double> sigmas(static_cast<std::size_t>(M));
  for (Index i = 0; i < M; ++i) {
    auto& a = st.agents[i];
    a.sigma = a.p.size() == 0 ? 0.0 : a.p.dot(cas[i].S_hat * a.p);
    sigmas[i] = a.sigma;
  }
  const double sigma = fabric.global_sum(std::span<const double>(sigmas));
  if (!(sigma > 0.0)) {
    std::vector<Vector> best;
    for (const auto& a : st.agents) best.push_back(a.lambda);
    throw DcgError("dcg: p'Sp = " + std::to_string(sigma) + " with nonzero residual; Schur matrix is not positive definite on the Krylov space",
                   best, std::sqrt(st.eta));
  }
  const double alpha = st.eta / sigma;

  std::vector<Vector> Sp(static_cast<std::size_t>(M));
  for (Index i = 0; i < M; ++i) {
    st.agents[i].lambda += alpha * st.agents[i].p;
    Sp[i] = cas[i].S_hat * st.agents[i].p;
  }
  const auto Sp_acc = overlap.accumulate(Sp, fabric);

  std::vector<double> etas(static_cast<std::size_t>(M));
  for (Index i = 0; i < M; ++i) {
    auto& a = st.agents[i];
    a.r -= alpha * Sp_acc[i];
    a.eta = detail::weighted_sq(a.r, cas[i].Lambda_local);
    etas[i] = a.eta;
  }
  const double eta_next = fabric.global_sum(std::span<const double>(etas));
  st.converged = fabric.global_all(detail::convergence_flags(st.agents, eps));

  const double beta = st.eta > 0.0 ? eta_next / st.eta : 0.0;
  for (auto& a : st.agents) {
    a.p = a.r + beta * a.p;
    ++a.iter;
  }
  st.eta = eta_next;
  ++st.iterations;
}

struct DcgResult {
  std::vector<Vector> lambda;
  Index iterations = 0;
  double residual = 0.0;  // max_i ||r_i||_inf at exit
  TrafficCount traffic;   // ledger delta of this solve
};

/// Solves (sum_i S_i) lambda = sum_i s_i until ||r_i||_inf < eps for every agent.
inline DcgResult dcg_solve(std::span<const CondensedAgent> cas, const std::vector<Vector>& lambda0, const DcgOptions& opt, Fabric& fabric,
                           const NeighborOverlap* overlap_hint = nullptr) {
  if (!(opt.eps > 0.0)) throw Error("dcg_solve: tolerance must be positive");
  const auto M = static_cast<Index>(cas.size());
  detail::require_dims(M == fabric.agents(), "dcg_solve: fabric agent count mismatch");
  const TrafficCount before = fabric.ledger().total();

  DcgResult res;
  Index n_c = M > 0 ? cas[0].n_c : 0;
  if (n_c == 0) {
    res.lambda.assign(static_cast<std::size_t>(M), Vector::Zero(0));
    return res;
  }
  const NeighborOverlap overlap = overlap_hint != nullptr ? *overlap_hint : NeighborOverlap::from_agents(cas);
  const Index max_iter = opt.max_iter > 0 ? opt.max_iter : n_c + 50;

  DcgState st = dcg_init(cas, overlap, lambda0, opt.eps, fabric);
  if (opt.observer) opt.observer(st);
  while (!st.converged) {
    if (st.iterations >= max_iter) {
      std::vector<Vector> best;
      double r = 0.0;
      for (const auto& a : st.agents) {
        best.push_back(a.lambda);
        r = std::max(r, detail::inf_norm(a.r));
      }
      throw DcgError("dcg: no convergence within " + std::to_string(max_iter) + " iterations (residual " + std::to_string(r) + ")", best, r);
    }
    dcg_iterate(cas, overlap, st, opt.eps, fabric);
    if (opt.observer) opt.observer(st);
  }
  for (const auto& a : st.agents) {
    res.lambda.push_back(a.lambda);
    res.residual = std::max(res.residual, detail::inf_norm(a.r));
  }
  res.iterations = st.iterations;
  res.traffic = fabric.ledger().total() - before;
  return res;
}

}  // namespace dasm
