#include "dasm/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

void print_summary(const dasm::ExperimentResult& res) {
  std::printf("solver %s, n_z=%lld eq=%lld ineq=%lld cpl=%lld\n", dasm::solver_name(res.config.solver), static_cast<long long>(res.dims.nz),
              static_cast<long long>(res.dims.eq), static_cast<long long>(res.dims.ineq), static_cast<long long>(res.dims.cpl));
  std::printf("%-20s %8s %14s %14s\n", "metric", "count", "mean", "max");
  for (const auto& row : dasm::summarize(res)) {
    if (row.agg.count == 0) continue;
    std::printf("%-20s %8lld %14.6g %14.6g\n", row.metric.c_str(), static_cast<long long>(row.agg.count), row.agg.mean, row.agg.max);
  }
  for (const auto& r : res.records)
    if (!r.ok) std::fprintf(stderr, "init %lld sample %lld failed: %s\n", static_cast<long long>(r.init), static_cast<long long>(r.sample), r.error.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed active-set MPC experiments"};
  app.require_subcommand(1);

  dasm::ExperimentConfig cfg;
  std::string solver = "asm-dcg";
  std::string network_path;
  auto* run = app.add_subcommand("run", "closed-loop experiment");
  run->add_option("--scenario", cfg.scenario, "chain or file")->check(CLI::IsMember({"chain", "file"}));
  run->add_option("--network", network_path, "network JSON for --scenario file");
  run->add_option("--masses", cfg.chain.masses, "number of masses")->check(CLI::PositiveNumber);
  run->add_option("--horizon", cfg.horizon, "prediction horizon N")->check(CLI::PositiveNumber);
  run->add_option("--steps", cfg.steps, "MPC samples per initial condition")->check(CLI::PositiveNumber);
  run->add_option("--inits", cfg.inits, "random initial conditions")->check(CLI::PositiveNumber);
  run->add_option("--seed", cfg.seed, "seed for the initial conditions");
  run->add_option("--solver", solver, "asm-dcg, admm1, admm2 or centralized")
      ->check(CLI::IsMember({"asm-dcg", "admm1", "admm2", "centralized"}));
  run->add_option("--rho", cfg.rho, "ADMM penalty");
  run->add_option("--eps-dcg", cfg.eps_dcg, "DCG residual tolerance");
  run->add_option("--eps-asm", cfg.eps_asm, "ASM step tolerance");
  run->add_option("--y0-max", cfg.y0_max, "initial position range");
  run->add_option("--v0-max", cfg.v0_max, "initial velocity range");
  run->add_flag("!--no-shift-active", cfg.shift_active, "reuse the previous active set without the one-sample shift");
  run->add_flag("!--no-deviation", cfg.deviation, "skip the centralized reference");
  run->add_option("--out", cfg.out_dir, "output directory");

  std::string dir_a, dir_b, compare_out;
  auto* compare = app.add_subcommand("compare", "compare two run directories");
  compare->add_option("run_a", dir_a)->required();
  compare->add_option("run_b", dir_b)->required();
  compare->add_option("--out", compare_out, "write comparison CSV here");

  std::string export_path;
  auto* exporter = app.add_subcommand("export-chain", "write the chain-of-masses network as JSON");
  exporter->add_option("--masses", cfg.chain.masses)->check(CLI::PositiveNumber);
  exporter->add_option("path", export_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      cfg.solver = dasm::parse_solver(solver);
      if (cfg.scenario == "file") cfg.network_file = network_path;
      const auto res = dasm::run_experiment(cfg);
      if (!cfg.out_dir.empty()) dasm::write_outputs(res, cfg.out_dir);
      print_summary(res);
      return res.all_ok() ? 0 : 2;
    }
    if (*compare) {
      const auto cmp = dasm::compare_runs(dir_a, dir_b);
      const std::string table = dasm::comparison_csv(cmp);
      std::cout << table;
      if (!compare_out.empty()) dasm::detail::write_file(compare_out, table);
      return 0;
    }
    if (*exporter) {
      dasm::save_network(export_path, dasm::build_chain_of_masses(cfg.chain), cfg.chain.dt);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
