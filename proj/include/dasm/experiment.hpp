#pragma once

#include "dasm/admm.hpp"
#include "dasm/asm.hpp"
#include "dasm/fabric.hpp"
#include "dasm/linalg.hpp"
#include "dasm/model.hpp"
#include "dasm/oracle.hpp"
#include "dasm/qp_builder.hpp"
#include "dasm/random.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace dasm {

enum class SolverKind { AsmDcg, Admm1, Admm2, Centralized };

inline const char* solver_name(SolverKind s) {
  switch (s) {
    case SolverKind::AsmDcg: return "asm-dcg";
    case SolverKind::Admm1: return "admm1";
    case SolverKind::Admm2: return "admm2";
    case SolverKind::Centralized: return "centralized";
  }
  return "?";
}

inline SolverKind parse_solver(const std::string& s) {
  for (auto k : {SolverKind::AsmDcg, SolverKind::Admm1, SolverKind::Admm2, SolverKind::Centralized})
    if (s == solver_name(k)) return k;
  throw Error("unknown solver '" + s + "'");
}

struct ExperimentConfig {
  std::string scenario = "chain";  // "chain" or "file"
  std::string network_file;        // JSON network when scenario == "file"
  ChainParams chain;
  Index horizon = 12;
  Index steps = 25;
  Index inits = 30;
  std::uint64_t seed = 1;
  SolverKind solver = SolverKind::AsmDcg;
  double rho = 1.0;
  double eps_dcg = 1e-7;
  double eps_asm = 1e-6;
  double y0_max = 1.0;  // initial positions uniform in [-y0_max, y0_max]
  double v0_max = 0.5;  // initial velocities uniform in [-v0_max, v0_max]
  bool shift_active = true;   // shift the warm-start active set by one sample
  bool deviation = true;      // compare against the centralized closed loop
  bool record_trace = false;  // keep per-iterate feasibility records
  std::string out_dir;

  void validate() const {
    if (scenario != "chain" && scenario != "file") throw Error("scenario must be 'chain' or 'file'");
    if (scenario == "file" && network_file.empty()) throw Error("scenario 'file' needs a network JSON path");
    if (horizon < 1) throw Error("horizon must be positive");
    if (steps < 1) throw Error("steps must be positive");
    if (inits < 1) throw Error("inits must be positive");
    if (!(rho > 0.0)) throw Error("rho must be positive");
    if (!(eps_dcg > 0.0) || !(eps_asm > 0.0)) throw Error("tolerances must be positive");
    if (!(y0_max >= 0.0) || !(v0_max >= 0.0)) throw Error("initial-condition ranges must be non-negative");
  }
};

struct SampleRecord {
  Index init = 0;
  Index sample = 0;
  bool ok = true;
  std::string error;
  Index asm_iterations = 0;
  Index dcg_feasible_guess = 0;
  Index dcg_as_updating = 0;
  Index admm_iterations = 0;
  TrafficCount traffic;
  CommLedger ledger;       // same traffic, split by phase
  double deviation = 0.0;  // max_i ||x_i(t+1) - x_i^central(t+1)||_inf
  std::vector<IterateRecord> trace;

  Index dcg_total() const { return dcg_feasible_guess + dcg_as_updating; }
};

struct InitTrajectory {
  std::vector<std::vector<Vector>> states;  // one entry per reached sample, plus the initial state
  std::vector<std::vector<Vector>> inputs;
};

struct ProblemDims {
  Index nz = 0, eq = 0, ineq = 0, cpl = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  ProblemDims dims;
  double dt = 1.0;
  std::vector<SampleRecord> records;
  std::vector<InitTrajectory> trajectories;

  bool all_ok() const {
    for (const auto& r : records)
      if (!r.ok) return false;
    return true;
  }
};

// ---------------------------------------------------------------- network JSON

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw Error("network file: '" + what + "' must be an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Index>(j[r].size()) != cols) throw Error("network file: '" + what + "' has ragged rows");
    for (Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw Error("network file: '" + what + "' must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (Index k = 0; k < v.size(); ++k) v(k) = j[k].get<double>();
  return v;
}

}  // namespace detail

/// {"dt": T, "agents": [{"id", "A_self", "B", "A_in": [{"from", "A"}], "u_lo", "u_hi", "Q", "R", "P"}]}
inline nlohmann::json network_to_json(const NetworkModel& net, double dt) {
  nlohmann::json j;
  j["dt"] = dt;
  j["agents"] = nlohmann::json::array();
  for (const auto& a : net.agents()) {
    nlohmann::json ja;
    ja["id"] = a.id;
    ja["A_self"] = detail::matrix_to_json(a.A_self);
    ja["B"] = detail::matrix_to_json(a.B);
    ja["A_in"] = nlohmann::json::array();
    for (const auto& [from, A] : a.A_in) ja["A_in"].push_back({{"from", from}, {"A", detail::matrix_to_json(A)}});
    ja["u_lo"] = std::vector<double>(a.u_lo.data(), a.u_lo.data() + a.u_lo.size());
    ja["u_hi"] = std::vector<double>(a.u_hi.data(), a.u_hi.data() + a.u_hi.size());
    ja["Q"] = detail::matrix_to_json(a.Q);
    ja["R"] = detail::matrix_to_json(a.R);
    ja["P"] = detail::matrix_to_json(a.P);
    j["agents"].push_back(ja);
  }
  return j;
}

inline std::pair<NetworkModel, double> network_from_json(const nlohmann::json& j) {
  if (!j.contains("agents") || !j["agents"].is_array()) throw Error("network file: missing 'agents' array");
  std::vector<AgentModel> agents;
  for (const auto& ja : j["agents"]) {
    AgentModel a;
    a.id = ja.at("id").get<Index>();
    a.A_self = detail::matrix_from_json(ja.at("A_self"), "A_self");
    a.B = detail::matrix_from_json(ja.at("B"), "B");
    if (ja.contains("A_in"))
      for (const auto& e : ja["A_in"]) a.A_in.emplace(e.at("from").get<Index>(), detail::matrix_from_json(e.at("A"), "A_in"));
    a.u_lo = detail::vector_from_json(ja.at("u_lo"), "u_lo");
    a.u_hi = detail::vector_from_json(ja.at("u_hi"), "u_hi");
    a.Q = detail::matrix_from_json(ja.at("Q"), "Q");
    a.R = detail::matrix_from_json(ja.at("R"), "R");
    a.P = ja.contains("P") ? detail::matrix_from_json(ja["P"], "P") : Matrix(Matrix::Zero(a.A_self.rows(), a.A_self.rows()));
    agents.push_back(std::move(a));
  }
  const double dt = j.value("dt", 1.0);
  return {NetworkModel(std::move(agents)), dt};
}

inline std::pair<NetworkModel, double> load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open network file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("network file '" + path + "': " + e.what());
  }
  return network_from_json(j);
}

inline void save_network(const std::string& path, const NetworkModel& net, double dt) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write network file '" + path + "'");
  out << network_to_json(net, dt).dump(2) << '\n';
}

// ---------------------------------------------------------------- scenario

inline std::pair<NetworkModel, double> make_network(const ExperimentConfig& cfg) {
  if (cfg.scenario == "file") return load_network(cfg.network_file);
  return {build_chain_of_masses(cfg.chain), cfg.chain.dt};
}

inline ProblemDims problem_dims(const std::vector<AgentQP>& qps) {
  ProblemDims d;
  for (const auto& qp : qps) {
    d.nz += qp.nz();
    d.eq += qp.n_eq();
    d.ineq += qp.n_ineq();
  }
  d.cpl = qps.empty() ? 0 : qps.front().n_c;
  return d;
}

/// Draws every init's state from one stream, in init-major, agent-major order.
/// Component 0 (position) in [-y0_max, y0_max], the rest (velocity) in [-v0_max, v0_max].
inline std::vector<std::vector<Vector>> draw_initial_states(const NetworkModel& net, const ExperimentConfig& cfg) {
  UniformSampler rng(cfg.seed);
  std::vector<std::vector<Vector>> out;
  for (Index k = 0; k < cfg.inits; ++k) {
    std::vector<Vector> x;
    for (const auto& a : net.agents()) {
      Vector xi(a.n());
      for (Index c = 0; c < a.n(); ++c) {
        const double r = c == 0 ? cfg.y0_max : cfg.v0_max;
        xi(c) = rng.uniform(-r, r);
      }
      x.push_back(xi);
    }
    out.push_back(std::move(x));
  }
  return out;
}

namespace detail {

inline ActiveSet shift_active_set(const std::vector<AgentQP>& qps, const ActiveSet& active) {
  ActiveSet out(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) {
    const Index per_step = 2 * qps[i].layout.m;
    for (Index j : active[i])
      if (j >= per_step) out[i].push_back(j - per_step);
  }
  return out;
}

inline std::vector<Vector> first_inputs(const std::vector<AgentQP>& qps, const std::vector<Vector>& z) {
  std::vector<Vector> u;
  for (std::size_t i = 0; i < qps.size(); ++i) u.push_back(z[i].segment(qps[i].layout.u(0, 0), qps[i].layout.m));
  return u;
}

}  // namespace detail

/// Closed-loop DMPC for every initial condition. Failures are recorded on the
/// sample and end that init's loop; the remaining inits still run.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  const auto [net, dt] = make_network(cfg);
  res.dt = dt;
  const Index M = net.size();
  const auto x0s = draw_initial_states(net, cfg);
  res.dims = problem_dims(build_qps(net, cfg.horizon, x0s.front()));

  AsmConfig asm_cfg;
  asm_cfg.eps_dcg = cfg.eps_dcg;
  asm_cfg.eps_step = cfg.eps_asm;
  asm_cfg.record_trace = cfg.record_trace;
  AdmmConfig admm_cfg = cfg.solver == SolverKind::Admm2 ? AdmmConfig::admm2(cfg.rho) : AdmmConfig::admm1(cfg.rho);

  for (Index init = 0; init < cfg.inits; ++init) {
    InitTrajectory traj;
    PlantState x{x0s[init], 0};
    traj.states.push_back(x.x);
    auto qps = build_qps(net, cfg.horizon, x.x);

    std::optional<oracle::Rollout> central;
    if (cfg.deviation && cfg.solver != SolverKind::Centralized) central = oracle::centralized_mpc_rollout(net, x0s[init], cfg.horizon, cfg.steps);

    ActiveSet warm;
    std::optional<AdmmState> admm_warm;
    for (Index t = 0; t < cfg.steps; ++t) {
      SampleRecord rec;
      rec.init = init;
      rec.sample = t;
      for (Index i = 0; i < M; ++i) update_initial_state(qps[i], x.x[i]);
      Fabric fabric(M);
      std::vector<Vector> u;
      try {
        switch (cfg.solver) {
          case SolverKind::AsmDcg: {
            const ActiveSet start = cfg.shift_active && !warm.empty() ? detail::shift_active_set(qps, warm) : warm;
            auto r = asm_solve(qps, start, asm_cfg, fabric);
            rec.asm_iterations = r.stats.outer_iterations;
            rec.dcg_feasible_guess = r.stats.dcg_iterations_init;
            rec.dcg_as_updating = r.stats.dcg_iterations_update;
            rec.trace = std::move(r.stats.trace);
            u = detail::first_inputs(qps, r.z);
            warm = std::move(r.active);
            break;
          }
          case SolverKind::Admm1:
          case SolverKind::Admm2: {
            AdmmState start = admm_cold_start(qps);
            if (admm_warm) {
              for (Index i = 0; i < M; ++i) {
                start.z_bar[i] = shift_trajectory(qps[i], admm_warm->z_bar[i]);
                start.z[i] = start.z_bar[i];
                start.local_active[i] = admm_warm->local_active[i];
              }
            }
            auto r = admm_solve(qps, std::move(start), admm_cfg, fabric);
            if (!r.converged) throw Error("admm: no convergence within " + std::to_string(admm_cfg.max_iter) + " iterations");
            rec.admm_iterations = r.state.iterations;
            u = detail::first_inputs(qps, r.state.z);
            admm_warm = std::move(r.state);
            break;
          }
          case SolverKind::Centralized: {
            const StackedQp s = stack_global(qps);
            const auto sol = oracle::solve_dense_qp(oracle::to_dense_qp(s));
            std::vector<Vector> z;
            for (Index i = 0; i < M; ++i) z.push_back(s.agent_block(sol.z, i));
            u = detail::first_inputs(qps, z);
            break;
          }
        }
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
        rec.traffic = fabric.ledger().total();
        rec.ledger = fabric.ledger();
        res.records.push_back(std::move(rec));
        break;
      }
      rec.traffic = fabric.ledger().total();
      rec.ledger = fabric.ledger();
      x = plant_step(net, x, u);
      traj.inputs.push_back(u);
      traj.states.push_back(x.x);
      if (central) {
        if (!central->ok || static_cast<Index>(central->states.size()) <= t + 1) {
          rec.deviation = std::numeric_limits<double>::quiet_NaN();
        } else {
          for (Index i = 0; i < M; ++i)
            rec.deviation = std::max(rec.deviation, dasm::detail::inf_norm(x.x[i] - central->states[t + 1][i]));
        }
      }
      res.records.push_back(std::move(rec));
    }
    res.trajectories.push_back(std::move(traj));
  }
  return res;
}

// ---------------------------------------------------------------- output

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Aggregate {
  Index count = 0;
  double mean = 0.0;
  double max = 0.0;
};

template <class F>
Aggregate aggregate(const std::vector<SampleRecord>& records, F value) {
  Aggregate a;
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.sample == 0 || !r.ok) continue;
    const double v = value(r);
    a.max = a.count == 0 ? v : std::max(a.max, v);
    sum += v;
    ++a.count;
  }
  a.mean = a.count > 0 ? sum / static_cast<double>(a.count) : 0.0;
  return a;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace detail

struct SummaryRow {
  std::string metric;
  detail::Aggregate agg;
};

/// Mean and max over all successful samples except the first of each init.
inline std::vector<SummaryRow> summarize(const ExperimentResult& res) {
  using R = SampleRecord;
  std::vector<std::pair<std::string, std::function<double(const R&)>>> metrics{
      {"asm_iterations", [](const R& r) { return static_cast<double>(r.asm_iterations); }},
      {"dcg_total", [](const R& r) { return static_cast<double>(r.dcg_total()); }},
      {"dcg_feasible_guess", [](const R& r) { return static_cast<double>(r.dcg_feasible_guess); }},
      {"dcg_as_updating", [](const R& r) { return static_cast<double>(r.dcg_as_updating); }},
      {"admm_iterations", [](const R& r) { return static_cast<double>(r.admm_iterations); }},
      {"global_floats", [](const R& r) { return static_cast<double>(r.traffic.global_floats); }},
      {"global_booleans", [](const R& r) { return static_cast<double>(r.traffic.global_booleans); }},
      {"local_floats", [](const R& r) { return static_cast<double>(r.traffic.local_floats); }},
      {"deviation", [](const R& r) { return r.deviation; }},
  };
  std::vector<SummaryRow> out;
  for (const auto& [name, f] : metrics) out.push_back({name, detail::aggregate(res.records, f)});
  return out;
}

inline std::string iterations_csv(const ExperimentResult& res) {
  std::string s = "init,sample,status,asm_iterations,dcg_feasible_guess,dcg_as_updating,dcg_total,admm_iterations\n";
  for (const auto& r : res.records) {
    s += std::to_string(r.init) + "," + std::to_string(r.sample) + "," + (r.ok ? "ok" : "failed") + "," + std::to_string(r.asm_iterations) + "," +
         std::to_string(r.dcg_feasible_guess) + "," + std::to_string(r.dcg_as_updating) + "," + std::to_string(r.dcg_total()) + "," +
         std::to_string(r.admm_iterations) + "\n";
  }
  return s;
}

inline std::string communication_csv(const ExperimentResult& res) {
  std::string s = "init,sample,global_floats,global_booleans,local_floats\n";
  for (const auto& r : res.records) {
    s += std::to_string(r.init) + "," + std::to_string(r.sample) + "," + std::to_string(r.traffic.global_floats) + "," +
         std::to_string(r.traffic.global_booleans) + "," + std::to_string(r.traffic.local_floats) + "\n";
  }
  return s;
}

inline std::string deviation_csv(const ExperimentResult& res) {
  std::string s = "init,sample,max_state_deviation\n";
  for (const auto& r : res.records) {
    if (!r.ok) continue;
    s += std::to_string(r.init) + "," + std::to_string(r.sample) + "," + detail::fmt(r.deviation) + "\n";
  }
  return s;
}

/// One row per (init, sample, agent): position, velocity and first input. The
/// last sample of each init has no input.
inline std::string trajectories_csv(const ExperimentResult& res) {
  std::string s = "init,sample,time,agent,y,v,u\n";
  for (std::size_t k = 0; k < res.trajectories.size(); ++k) {
    const auto& tr = res.trajectories[k];
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      for (std::size_t i = 0; i < tr.states[t].size(); ++i) {
        const Vector& x = tr.states[t][i];
        s += std::to_string(k) + "," + std::to_string(t) + "," + detail::fmt(static_cast<double>(t) * res.dt) + "," + std::to_string(i) + "," +
             detail::fmt(x(0)) + "," + (x.size() > 1 ? detail::fmt(x(1)) : std::string()) + "," +
             (t < tr.inputs.size() ? detail::fmt(tr.inputs[t][i](0)) : std::string()) + "\n";
      }
    }
  }
  return s;
}

inline std::string summary_csv(const ExperimentResult& res) {
  std::string s = "metric,count,mean,max\n";
  for (const auto& row : summarize(res)) {
    if (row.agg.count == 0) continue;
    s += row.metric + "," + std::to_string(row.agg.count) + "," + detail::fmt(row.agg.mean) + "," + detail::fmt(row.agg.max) + "\n";
  }
  return s;
}

inline nlohmann::json scenario_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["scenario"] = c.scenario;
  if (c.scenario == "file") {
    j["network_file"] = c.network_file;
  } else {
    j["chain"] = {{"masses", c.chain.masses}, {"mass", c.chain.mass},         {"stiffness", c.chain.stiffness},
                  {"damping", c.chain.damping}, {"dt", c.chain.dt},          {"u_max", c.chain.u_max},
                  {"q_position", c.chain.q_position}, {"q_velocity", c.chain.q_velocity}, {"r_input", c.chain.r_input}};
  }
  j["horizon"] = c.horizon;
  j["steps"] = c.steps;
  j["inits"] = c.inits;
  j["seed"] = c.seed;
  j["y0_max"] = c.y0_max;
  j["v0_max"] = c.v0_max;
  return j;
}

inline nlohmann::json meta_json(const ExperimentResult& res) {
  const auto& c = res.config;
  nlohmann::json j;
  j["scenario"] = scenario_json(c);
  j["solver"] = solver_name(c.solver);
  j["rho"] = c.rho;
  j["eps_dcg"] = c.eps_dcg;
  j["eps_asm"] = c.eps_asm;
  j["shift_active"] = c.shift_active;
  j["prng"] = UniformSampler::kAlgorithm;
  j["seed"] = c.seed;
  j["dimensions"] = {{"n_z", res.dims.nz}, {"equality_rows", res.dims.eq}, {"inequality_rows", res.dims.ineq}, {"coupling_rows", res.dims.cpl}};
  j["failures"] = nlohmann::json::array();
  for (const auto& r : res.records)
    if (!r.ok) j["failures"].push_back({{"init", r.init}, {"sample", r.sample}, {"error", r.error}});
  return j;
}

inline void write_outputs(const ExperimentResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  detail::write_file(d / "iterations.csv", iterations_csv(res));
  detail::write_file(d / "communication.csv", communication_csv(res));
  detail::write_file(d / "trajectories.csv", trajectories_csv(res));
  detail::write_file(d / "deviation.csv", deviation_csv(res));
  detail::write_file(d / "summary.csv", summary_csv(res));
  detail::write_file(d / "meta.json", meta_json(res).dump(2) + "\n");
}

// ---------------------------------------------------------------- comparison

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace detail

struct RunComparison {
  std::string solver_a, solver_b;
  std::vector<std::string> metrics;
  std::vector<detail::Aggregate> a, b;
  double max_trajectory_difference = 0.0;
};

/// Side-by-side aggregates of two output directories plus the largest state
/// difference between their closed-loop trajectories.
inline RunComparison compare_runs(const std::string& dir_a, const std::string& dir_b) {
  namespace fs = std::filesystem;
  const auto meta_a = detail::read_json(fs::path(dir_a) / "meta.json");
  const auto meta_b = detail::read_json(fs::path(dir_b) / "meta.json");
  if (meta_a.at("scenario") != meta_b.at("scenario")) throw Error("compare: runs use different scenarios or seeds");

  RunComparison cmp;
  cmp.solver_a = meta_a.at("solver").get<std::string>();
  cmp.solver_b = meta_b.at("solver").get<std::string>();
  auto load = [](const std::string& dir) {
    std::map<std::string, detail::Aggregate> m;
    for (const auto& row : detail::read_csv(fs::path(dir) / "summary.csv")) {
      if (row.size() < 4) throw Error("compare: malformed summary.csv in '" + dir + "'");
      m[row[0]] = {std::stoll(row[1]), std::stod(row[2]), std::stod(row[3])};
    }
    return m;
  };
  const auto sa = load(dir_a);
  const auto sb = load(dir_b);
  std::set<std::string> names;
  for (const auto& [k, v] : sa) names.insert(k);
  for (const auto& [k, v] : sb) names.insert(k);
  for (const auto& n : names) {
    cmp.metrics.push_back(n);
    cmp.a.push_back(sa.count(n) ? sa.at(n) : detail::Aggregate{});
    cmp.b.push_back(sb.count(n) ? sb.at(n) : detail::Aggregate{});
  }

  const auto ta = detail::read_csv(fs::path(dir_a) / "trajectories.csv");
  const auto tb = detail::read_csv(fs::path(dir_b) / "trajectories.csv");
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, double>> pos;
  for (const auto& r : ta)
    if (r.size() >= 6) pos[{r[0], r[1], r[3]}] = {std::stod(r[4]), r[5].empty() ? 0.0 : std::stod(r[5])};
  for (const auto& r : tb) {
    if (r.size() < 6) continue;
    const auto it = pos.find({r[0], r[1], r[3]});
    if (it == pos.end()) continue;
    const double dy = std::abs(it->second.first - std::stod(r[4]));
    const double dv = std::abs(it->second.second - (r[5].empty() ? 0.0 : std::stod(r[5])));
    cmp.max_trajectory_difference = std::max({cmp.max_trajectory_difference, dy, dv});
  }
  return cmp;
}

inline std::string comparison_csv(const RunComparison& c) {
  std::string s = "metric," + c.solver_a + "_mean," + c.solver_a + "_max," + c.solver_b + "_mean," + c.solver_b + "_max\n";
  for (std::size_t k = 0; k < c.metrics.size(); ++k) {
    s += c.metrics[k] + "," + detail::fmt(c.a[k].mean) + "," + detail::fmt(c.a[k].max) + "," + detail::fmt(c.b[k].mean) + "," +
         detail::fmt(c.b[k].max) + "\n";
  }
  s += "max_trajectory_difference," + detail::fmt(c.max_trajectory_difference) + ",,,\n";
  return s;
}

}  // namespace dasm
