#pragma once

#include "dasm/condense.hpp"
#include "dasm/dcg.hpp"
#include "dasm/fabric.hpp"
#include "dasm/linalg.hpp"
#include "dasm/qp_builder.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace dasm {

/// Per-agent ordered lists of active inequality rows.
using ActiveSet = std::vector<IndexList>;

struct AsmConfig {
  double eps_step = 1e-6;   // ||dz_i||_inf below which the step counts as zero
  double eps_dcg = 1e-7;    // ||r_i||_inf for the inner DCG solves
  double dual_tol = 1e-8;   // active multipliers >= -dual_tol are accepted
  double feas_tol = 1e-9;   // inequality violation tolerated by the initialization
  double min_step = 1e-12;  // alpha below this is a pure active-set update
  Index max_outer = 0;      // 0 selects 10 x total inequality rows
  Index max_init_rounds = 0;  // 0 selects total inequality rows + 1
  Index dcg_max_iter = 0;   // 0 selects n_c + 50
  bool warm_start_lambda = true;
  bool record_trace = false;
};

/// Global feasibility and objective of one iterate. Computed centrally for
/// diagnostics; never part of the metered protocol.
struct IterateRecord {
  double objective = 0.0;
  double equality_residual = 0.0;
  double inequality_violation = 0.0;
  double coupling_residual = 0.0;
  Index active_count = 0;
};

struct AsmStats {
  Index outer_iterations = 0;
  Index init_rounds = 0;
  Index dcg_iterations_init = 0;    // spent finding the feasible initial guess
  Index dcg_iterations_update = 0;  // spent in active-set updating steps
  Index constraints_added = 0;
  Index constraints_removed = 0;
  TrafficCount traffic;
  std::vector<IterateRecord> trace;  // z^0 and every accepted iterate, when recorded

  Index dcg_iterations() const { return dcg_iterations_init + dcg_iterations_update; }
};

class AsmError : public Error {
 public:
  enum class Kind { InfeasibleStart, InfeasibleIterate, IterationLimit };
  AsmError(Kind kind, const std::string& what, AsmStats stats) : Error(what), kind_(kind), stats_(std::move(stats)) {}
  Kind kind() const { return kind_; }
  const AsmStats& stats() const { return stats_; }

 private:
  Kind kind_;
  AsmStats stats_;
};

enum class AsmPhase { Initializing, Stepping, CheckingDuals, Done };

struct AsmState {
  std::vector<Vector> z;
  ActiveSet active;
  std::vector<Vector> lambda;
  Index outer = 0;
  AsmPhase phase = AsmPhase::Initializing;
};

struct AsmResult {
  std::vector<Vector> z;
  ActiveSet active;
  std::vector<DualEstimate> duals;
  std::vector<Vector> lambda;  // coupling multipliers, indexed by C(i)
  AsmStats stats;

  /// Multipliers of all inequality rows of agent i (zero for inactive rows).
  Vector inequality_multipliers(Index i, Index n_ineq) const {
    Vector mu = Vector::Zero(n_ineq);
    for (std::size_t a = 0; a < active[i].size(); ++a) mu(active[i][a]) = duals[i].active(static_cast<Index>(a));
    return mu;
  }
};

struct StepLength {
  double alpha = 1.0;
  Index blocking_row = -1;
};

/// Largest alpha in (0, 1] keeping C_ineq (z + alpha dz) <= b_ineq over the
/// inactive rows; ties go to the lowest row index.
inline StepLength compute_step_length(const Vector& z, const Vector& dz, const AgentQP& qp, const IndexList& active,
                                      double feas_tol = 1e-9) {
  detail::require_dims(z.size() == qp.nz() && dz.size() == qp.nz(), "compute_step_length: dimension mismatch");
  StepLength out;
  std::vector<bool> is_active(static_cast<std::size_t>(qp.n_ineq()), false);
  for (Index j : active) is_active[j] = true;
  for (Index j = 0; j < qp.n_ineq(); ++j) {
    if (is_active[j]) continue;
    const double cdz = qp.C_ineq.row(j).dot(dz);
    if (cdz <= 1e-12) continue;
    double slack = qp.b_ineq(j) - qp.C_ineq.row(j).dot(z);
    if (slack < -feas_tol) {
      throw AsmError(AsmError::Kind::InfeasibleIterate,
                     "agent " + std::to_string(qp.agent) + ": iterate violates inequality row " + std::to_string(j) + " by " + std::to_string(-slack),
                     {});
    }
    slack = std::max(slack, 0.0);
    const double a = slack / cdz;
    if (a < out.alpha) out = {a, j};
  }
  return out;
}

namespace detail {

inline double objective(const std::vector<AgentQP>& qps, const std::vector<Vector>& z) {
  double f = 0.0;
  for (std::size_t i = 0; i < qps.size(); ++i) f += 0.5 * z[i].dot(qps[i].H * z[i]) + qps[i].q.dot(z[i]);
  return f;
}

inline IterateRecord measure(const std::vector<AgentQP>& qps, const std::vector<Vector>& z, const ActiveSet& active) {
  IterateRecord rec;
  rec.objective = objective(qps, z);
  Vector cpl = Vector::Zero(qps.front().n_c);
  for (std::size_t i = 0; i < qps.size(); ++i) {
    const auto& qp = qps[i];
    rec.equality_residual = std::max(rec.equality_residual, inf_norm(qp.C_eq * z[i] - qp.b_eq));
    if (qp.n_ineq() > 0) rec.inequality_violation = std::max(rec.inequality_violation, (qp.C_ineq * z[i] - qp.b_ineq).maxCoeff());
    const Vector local = qp.C_cpl * z[i];
    for (Index r = 0; r < local.size(); ++r) cpl(qp.coupling_rows[r]) += local(r);
    rec.active_count += static_cast<Index>(active[i].size());
  }
  rec.inequality_violation = std::max(rec.inequality_violation, 0.0);
  rec.coupling_residual = inf_norm(cpl);
  return rec;
}

inline Index total_inequality_rows(const std::vector<AgentQP>& qps) {
  Index n = 0;
  for (const auto& qp : qps) n += qp.n_ineq();
  return n;
}

/// Condenses every agent, solves the Schur system with DCG, backsubstitutes.
struct StepSolution {
  std::vector<CondensedAgent> cas;
  std::vector<Vector> dz;
  std::vector<Vector> lambda;
  Index dcg_iterations = 0;
};

inline StepSolution solve_working_qp(std::vector<CondensedAgent> cas, const std::vector<Vector>& lambda0, const AsmConfig& cfg, Fabric& fabric,
                                     const NeighborOverlap& overlap) {
  StepSolution sol;
  sol.cas = std::move(cas);
  DcgOptions opt;
  opt.eps = cfg.eps_dcg;
  opt.max_iter = cfg.dcg_max_iter;
  auto dcg = dcg_solve(std::span<const CondensedAgent>(sol.cas), lambda0, opt, fabric, &overlap);
  sol.lambda = std::move(dcg.lambda);
  sol.dcg_iterations = dcg.iterations;
  sol.dz.reserve(sol.cas.size());
  for (std::size_t i = 0; i < sol.cas.size(); ++i) sol.dz.push_back(backsubstitute(sol.cas[i], sol.lambda[i]));
  return sol;
}

inline CondensedAgent condense_with(const AgentQP& qp, const IndexList& active, const WorkingConstraints& work, const Vector& g,
                                    CondenseCache* cache) {
  return cache != nullptr ? cache->get(qp, active, work, g) : condense(qp, work, g);
}

inline std::vector<Vector> zero_multipliers(const std::vector<AgentQP>& qps) {
  std::vector<Vector> out;
  for (const auto& qp : qps) out.push_back(Vector::Zero(qp.n_local_coupling()));
  return out;
}

}  // namespace detail

/// Finds a primal feasible z^0: solve the QP with the working set as equalities,
/// add the most violated inequality of every violating agent, repeat.
inline AsmState initialize_feasible(const std::vector<AgentQP>& qps, const ActiveSet& warm_active, const AsmConfig& cfg, Fabric& fabric,
                                    AsmStats& stats, const NeighborOverlap& overlap, CondenseCache* cache = nullptr) {
  const auto M = static_cast<Index>(qps.size());
  AsmState st;
  st.active.assign(qps.size(), {});
  if (!warm_active.empty()) {
    detail::require_dims(static_cast<Index>(warm_active.size()) == M, "initialize_feasible: warm active set must list every agent");
    for (Index i = 0; i < M; ++i) {
      for (Index j : warm_active[i]) {
        if (j < 0 || j >= qps[i].n_ineq()) throw Error("initialize_feasible: active row out of range for agent " + std::to_string(i));
        if (std::find(st.active[i].begin(), st.active[i].end(), j) == st.active[i].end()) st.active[i].push_back(j);
      }
    }
  }

  const Index max_rounds = cfg.max_init_rounds > 0 ? cfg.max_init_rounds : detail::total_inequality_rows(qps) + 1;
  std::vector<Vector> g;
  for (const auto& qp : qps) g.push_back(qp.q);

  for (Index round = 0; round < max_rounds; ++round) {
    std::vector<CondensedAgent> cas;
    for (Index i = 0; i < M; ++i) {
      // Dependent warm-start rows are dropped until the working set has full rank.
      for (;;) {
        try {
          cas.push_back(detail::condense_with(qps[i], st.active[i], make_working_set(qps[i], st.active[i], true), g[i], cache));
          break;
        } catch (const CondenseError& e) {
          if (e.kind() != CondenseError::Kind::RankDeficient || e.dependent_row() < qps[i].n_eq()) throw;
          st.active[i].erase(st.active[i].begin() + (e.dependent_row() - qps[i].n_eq()));
        }
      }
    }
    auto sol = detail::solve_working_qp(std::move(cas), detail::zero_multipliers(qps), cfg, fabric, overlap);
    stats.dcg_iterations_init += sol.dcg_iterations;
    ++stats.init_rounds;

    std::vector<bool> feasible(qps.size(), true);
    std::vector<Index> worst(qps.size(), -1);
    for (Index i = 0; i < M; ++i) {
      const auto& qp = qps[i];
      const Vector viol = qp.C_ineq * sol.dz[i] - qp.b_ineq;
      double worst_v = cfg.feas_tol;
      for (Index j = 0; j < qp.n_ineq(); ++j) {
        if (std::find(st.active[i].begin(), st.active[i].end(), j) != st.active[i].end()) continue;
        if (viol(j) > worst_v) {
          worst_v = viol(j);
          worst[i] = j;
        }
      }
      feasible[i] = worst[i] < 0;
    }
    bool all_feasible = false;
    {
      Fabric::PhaseScope scope(fabric, Phase::Init);
      all_feasible = fabric.global_all(feasible);
    }
    if (all_feasible) {
      st.z = std::move(sol.dz);
      st.lambda = std::move(sol.lambda);
      st.phase = AsmPhase::Stepping;
      return st;
    }
    for (Index i = 0; i < M; ++i) {
      if (worst[i] >= 0) {
        st.active[i].push_back(worst[i]);
        ++stats.constraints_added;
      }
    }
  }
  throw AsmError(AsmError::Kind::InfeasibleStart, "no feasible initial point within " + std::to_string(max_rounds) + " rounds", stats);
}

/// Distributed primal active-set solve of the partially separable QP. A cache
/// may be shared by solves whose QPs differ only in q, b_eq and b_ineq.
inline AsmResult asm_solve(const std::vector<AgentQP>& qps, const ActiveSet& warm_active, const AsmConfig& cfg, Fabric& fabric,
                           CondenseCache* cache = nullptr) {
  if (!(cfg.eps_step > 0.0) || !(cfg.eps_dcg > 0.0)) throw Error("asm_solve: tolerances must be positive");
  const auto M = static_cast<Index>(qps.size());
  detail::require_dims(M > 0 && M == fabric.agents(), "asm_solve: fabric agent count mismatch");
  const TrafficCount before = fabric.ledger().total();
  const NeighborOverlap overlap = NeighborOverlap::from_agents(qps);

  AsmStats stats;
  AsmState st = initialize_feasible(qps, warm_active, cfg, fabric, stats, overlap, cache);
  if (cfg.record_trace) stats.trace.push_back(detail::measure(qps, st.z, st.active));

  const Index max_outer = cfg.max_outer > 0 ? cfg.max_outer : std::max<Index>(10, 10 * detail::total_inequality_rows(qps));
  std::vector<Vector> lambda = cfg.warm_start_lambda ? st.lambda : detail::zero_multipliers(qps);

  while (st.outer < max_outer) {
    std::vector<WorkingConstraints> work;
    std::vector<Vector> g;
    std::vector<CondensedAgent> cas;
    for (Index i = 0; i < M; ++i) {
      work.push_back(make_working_set(qps[i], st.active[i], false));
      g.push_back(qps[i].H * st.z[i] + qps[i].q);
      cas.push_back(detail::condense_with(qps[i], st.active[i], work[i], g[i], cache));
      // Targeting sum_i C_i (z_i + dz_i) = 0 instead of sum_i C_i dz_i = 0 keeps
      // the coupling residual at the DCG tolerance instead of letting it accumulate.
      cas.back().s_local += qps[i].C_cpl * st.z[i];
    }
    auto sol = detail::solve_working_qp(std::move(cas), lambda, cfg, fabric, overlap);
    stats.dcg_iterations_update += sol.dcg_iterations;
    ++st.outer;
    ++stats.outer_iterations;
    if (cfg.warm_start_lambda) lambda = sol.lambda;

    std::vector<bool> small;
    for (Index i = 0; i < M; ++i) small.push_back(detail::inf_norm(sol.dz[i]) < cfg.eps_step);
    Fabric::PhaseScope scope(fabric, Phase::Asm);
    const bool stationary = fabric.global_all(small);

    if (stationary) {
      st.phase = AsmPhase::CheckingDuals;
      std::vector<DualEstimate> duals;
      std::vector<double> local_min(qps.size(), std::numeric_limits<double>::infinity());
      std::vector<Index> local_arg(qps.size(), -1);
      for (Index i = 0; i < M; ++i) {
        duals.push_back(recover_duals(qps[i], work[i], g[i], sol.lambda[i]));
        const Vector& gi = duals.back().active;
        for (Index a = 0; a < gi.size(); ++a) {
          // Ties go to the lowest constraint row index.
          const Index row = st.active[i][a];
          if (gi(a) < local_min[i] || (gi(a) == local_min[i] && row < local_arg[i])) {
            local_min[i] = gi(a);
            local_arg[i] = row;
          }
        }
      }
      const auto mr = fabric.global_min(std::span<const double>(local_min));
      if (mr.value >= -cfg.dual_tol) {
        st.phase = AsmPhase::Done;
        stats.traffic = fabric.ledger().total() - before;
        return AsmResult{std::move(st.z), std::move(st.active), std::move(duals), std::move(sol.lambda), std::move(stats)};
      }
      auto& act = st.active[mr.agent];
      act.erase(std::find(act.begin(), act.end(), local_arg[mr.agent]));
      ++stats.constraints_removed;
    } else {
      st.phase = AsmPhase::Stepping;
      std::vector<double> alphas;
      std::vector<Index> blocking;
      for (Index i = 0; i < M; ++i) {
        StepLength sl;
        try {
          sl = compute_step_length(st.z[i], sol.dz[i], qps[i], st.active[i], cfg.feas_tol);
        } catch (const AsmError& e) {
          throw AsmError(e.kind(), e.what(), stats);
        }
        alphas.push_back(sl.alpha);
        blocking.push_back(sl.blocking_row);
      }
      const auto mr = fabric.global_min(std::span<const double>(alphas));
      const double alpha = mr.value;
      if (alpha >= cfg.min_step) {
        for (Index i = 0; i < M; ++i) st.z[i] += alpha * sol.dz[i];
      }
      if (alpha < 1.0 && blocking[mr.agent] >= 0) {
        st.active[mr.agent].push_back(blocking[mr.agent]);
        ++stats.constraints_added;
      }
    }
    if (cfg.record_trace) stats.trace.push_back(detail::measure(qps, st.z, st.active));
  }
  throw AsmError(AsmError::Kind::IterationLimit, "active-set method exceeded " + std::to_string(max_outer) + " outer iterations", stats);
}

}  // namespace dasm
