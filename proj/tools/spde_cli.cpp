// Command line front end: parabolicity / stability checks, single
// simulations and convergence studies for the finite-difference SPDE
// schemes. Outputs are byte-reproducible from (manifest, seed).

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spde/config.hpp"
#include "spde/experiments.hpp"
#include "spde/io.hpp"
#include "spde/solvers.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;
using namespace spde;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitThreshold = 3;

// Frozen acceptance thresholds for fitted convergence orders.
constexpr double kMeshOrderMin = 0.9;
constexpr double kTimeOrderMin = 0.4;

std::string scheme_name(SchemeKind kind) {
  return kind == SchemeKind::implicit_euler ? "implicit" : "explicit";
}

StabilityBudget budget_for(const ProblemSpec& problem, const RunManifest& manifest) {
  int finest_n = 0;
  for (const StudyLevel& level : manifest.levels) finest_n = std::max(finest_n, level.n);
  StabilityBudget budget =
      estimate_stability_budget(problem, GridSpec::make(problem.d, finest_n), 0.0);
  if (manifest.q) {
    if (!(*manifest.q < budget.lambda)) {
      throw std::invalid_argument("--q must be below the parabolicity constant lambda = " +
                                  std::to_string(budget.lambda));
    }
    budget.q = *manifest.q;
  }
  return budget;
}

int cmd_check(const RunManifest& manifest) {
  const ProblemSpec problem = problem_from_file(manifest.problem_path);
  int finest_n = 0, finest_m = 1;
  for (const StudyLevel& level : manifest.levels) {
    finest_n = std::max(finest_n, level.n);
    finest_m = std::max(finest_m, level.m);
  }
  // Parabolicity over the finest scheme lattice in space and time.
  std::vector<double> times;
  const int time_samples = std::min(finest_m, 64);
  for (int i = 0; i <= time_samples; ++i) {
    times.push_back(problem.T * i / time_samples);
  }
  const GridSpec sample = GridSpec::make(problem.d, finest_n);
  ParabolicityWitness witness;
  const double lambda = parabolicity_constant(problem, sample, times, &witness);
  std::cout << "lambda = " << lambda << "\n";

  ordered_json report;
  report["schema_version"] = 1;
  report["problem"] = problem.name;
  report["lambda"] = lambda;

  bool margins_pass = true;
  if (!(lambda > 0.0)) {
    std::cout << "FAIL parabolicity: smallest symbol eigenvalue " << witness.eigenvalue
              << " at t = " << witness.t << ", x = (";
    for (std::size_t i = 0; i < witness.x.size(); ++i) {
      std::cout << (i ? ", " : "") << witness.x[i];
    }
    std::cout << ")\n";
    report["parabolic"] = false;
    report["witness_t"] = witness.t;
    report["witness_x"] = witness.x;
  } else {
    report["parabolic"] = true;
    StabilityBudget budget = budget_for(problem, manifest);
    budget.lambda = lambda;
    if (!manifest.q) budget.q = 0.8 * lambda;
    std::cout << "L1 = " << budget.l1 << ", L2 = " << budget.l2
              << ", kappa = " << budget.kappa << ", q = " << budget.q << "\n";
    report["L1"] = budget.l1;
    report["L2"] = budget.l2;
    report["kappa"] = budget.kappa;
    report["q"] = budget.q;
    report["levels"] = ordered_json::array();
    for (const StudyLevel& level : manifest.levels) {
      const double h = 1.0 / level.n;
      const double tau = problem.T / level.m;
      const double margin = stability_margin(budget, tau, h);
      const bool pass = margin >= 0.0;
      margins_pass = margins_pass && pass;
      std::cout << (pass ? "PASS" : "FAIL") << " N=" << level.n << " m=" << level.m
                << " margin=" << margin << "\n";
      ordered_json entry;
      entry["n"] = level.n;
      entry["m"] = level.m;
      entry["h"] = h;
      entry["tau"] = tau;
      entry["margin"] = margin;
      entry["pass"] = pass;
      report["levels"].push_back(entry);
    }
  }
  if (!manifest.out_dir.empty()) {
    write_text_file(manifest.out_dir / "check.json", report.dump(2) + "\n");
  }
  if (!(lambda > 0.0)) return kExitNumerical;
  return margins_pass ? kExitOk : kExitThreshold;
}

int cmd_simulate(const RunManifest& manifest) {
  const ProblemSpec problem = problem_from_file(manifest.problem_path);
  const StudyLevel level = manifest.levels.front();
  const GridSpec grid = GridSpec::make(problem.d, level.n);
  const WienerPath path =
      sample_wiener_path(manifest.seed, problem.d1, std::max(level.m, 1), problem.T);

  std::ostringstream csv;
  csv << "scheme,n,m,h,tau,seed,norm_h0_T,norm_h1_T,sup_h_error,diverged\n";
  int exit_code = kExitOk;
  for (SchemeKind kind : scheme_kinds(manifest)) {
    SchemeConfig config;
    config.kind = kind;
    config.steps = level.m;
    config.horizon = problem.T;
    config.solver_tol = manifest.solver_tol;
    config.forcing_mode = forcing_mode_of(manifest);
    WienerPath run_path = path;
    if (level.m == 0) {
      config.steps = 0;
      run_path.steps = 0;
      run_path.increments.clear();
    }

    const int stride = std::max(1, config.steps / 64);
    Trajectory traj = run_scheme(problem, grid, config, run_path, stride);

    const GridFn& last = traj.states.back();
    ordered_json summary;
    summary["schema_version"] = 1;
    summary["problem"] = problem.name;
    summary["scheme"] = scheme_name(kind);
    summary["n"] = level.n;
    summary["m"] = level.m;
    summary["seed"] = manifest.seed;
    summary["final_step"] = traj.stored_steps.back();
    summary["norm_h0_T"] = sobolev_norm(last, 0);
    summary["norm_h1_T"] = sobolev_norm(last, 1);
    summary["diverged"] = traj.diverged;
    summary["diverged_at_step"] = traj.diverged_at_step;
    double sup_h_error = std::nan("");
    if (problem.exact_transport_b && !traj.diverged) {
      const ErrorReport report = error_norms(
          single_mode_reference(*problem.exact_transport_b, grid, run_path), traj, 0);
      sup_h_error = report.sup_h_error;
      summary["sup_h_error"] = report.sup_h_error;
      summary["int_v_error_sq"] = report.int_v_error_sq;
    }
    const std::string tag = scheme_name(kind);
    save_trajectory(traj, manifest.out_dir / ("trajectory_" + tag));
    write_text_file(manifest.out_dir / ("summary_" + tag + ".json"),
                    summary.dump(2) + "\n");
    const double tau_out = level.m > 0 ? config.tau() : 0.0;
    csv << tag << ',' << level.n << ',' << level.m << ','
        << format_double(grid.h()) << ',' << format_double(tau_out) << ','
        << manifest.seed << ',' << format_double(sobolev_norm(last, 0)) << ','
        << format_double(sobolev_norm(last, 1)) << ','
        << (std::isnan(sup_h_error) ? "" : format_double(sup_h_error)) << ','
        << (traj.diverged ? 1 : 0) << "\n";
    if (traj.diverged) {
      std::cerr << "divergence at step " << traj.diverged_at_step << " ("
                << tag << ")\n";
      exit_code = kExitNumerical;
    }
    std::cout << tag << ": |u(T)|_{h,0} = " << sobolev_norm(last, 0);
    if (problem.exact_transport_b && !traj.diverged) {
      std::cout << ", sup_h_error = " << sup_h_error;
    }
    std::cout << "\n";
  }
  write_text_file(manifest.out_dir / "summary.csv", csv.str());
  return exit_code;
}

ordered_json fit_to_json(const RateFit& fit) {
  ordered_json j;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["max_residual"] = fit.max_residual;
  j["points"] = ordered_json::array();
  for (const auto& [param, error] : fit.points) {
    j["points"].push_back(ordered_json::array({param, error}));
  }
  return j;
}

int cmd_study(const RunManifest& manifest) {
  const ProblemSpec problem = problem_from_file(manifest.problem_path);
  int exit_code = kExitOk;
  ordered_json summary;
  summary["schema_version"] = 1;
  summary["problem"] = problem.name;
  summary["replicas"] = manifest.replicas;
  summary["seed"] = manifest.seed;
  summary["schemes"] = ordered_json::array();

  std::ostringstream csv;
  csv << "scheme,n,m,h,tau,seed,replica,sup_h_error,int_v_error_sq,diverged\n";
  std::ostringstream plot;

  for (SchemeKind kind : scheme_kinds(manifest)) {
    StudyOptions options;
    options.scheme = kind;
    options.replicas = manifest.replicas;
    options.seed = manifest.seed;
    options.solver_tol = manifest.solver_tol;
    options.threads = manifest.threads;
    options.forcing_mode = forcing_mode_of(manifest);
    options.cache_dir = manifest.out_dir / "cache";
    if (manifest.q) {
      // q_fraction is resolved against lambda inside the study.
      const double lambda = parabolicity_constant(
          problem, GridSpec::make(problem.d, manifest.levels.front().n),
          std::vector<double>{0.0, problem.T});
      if (!(*manifest.q < lambda)) {
        throw std::invalid_argument("--q must be below lambda = " + std::to_string(lambda));
      }
      options.q_fraction = *manifest.q / lambda;
    }

    const StudyResult result = convergence_study(problem, manifest.levels, options);

    ordered_json scheme_json;
    scheme_json["scheme"] = scheme_name(kind);
    scheme_json["axis"] = result.axis == SweepAxis::mesh
                              ? "mesh"
                              : (result.axis == SweepAxis::time_step ? "time_step"
                                                                     : "diagonal");
    if (result.budget) {
      scheme_json["stability"] = {{"L1", result.budget->l1},
                                  {"L2", result.budget->l2},
                                  {"kappa", result.budget->kappa},
                                  {"lambda", result.budget->lambda},
                                  {"q", result.budget->q}};
    }
    scheme_json["levels"] = ordered_json::array();
    for (const LevelSummary& level : result.levels) {
      ordered_json entry;
      entry["n"] = level.level.n;
      entry["m"] = level.level.m;
      entry["h"] = level.h;
      entry["tau"] = level.tau;
      entry["rms_sup_h"] = level.rms_sup_h;
      entry["rms_sup_h_stderr"] = level.rms_sup_h_stderr;
      entry["mean_int_v_sq"] = level.mean_int_v_sq;
      entry["rms_sup_grid"] = level.rms_sup_grid;
      entry["diverged_count"] = level.diverged_count;
      if (kind == SchemeKind::explicit_euler) {
        entry["certified"] = level.certified;
        entry["margin"] = level.margin;
        if (!level.certified) {
          entry["note"] = "uncertified level, excluded from the rate fit";
        }
      }
      scheme_json["levels"].push_back(entry);
      for (std::size_t rep = 0; rep < level.replicas.size(); ++rep) {
        const ErrorReport& r = level.replicas[rep];
        csv << scheme_name(kind) << ',' << level.level.n << ',' << level.level.m
            << ',' << format_double(level.h) << ',' << format_double(level.tau)
            << ',' << r.seed << ',' << rep << ',' << format_double(r.sup_h_error)
            << ',' << format_double(r.int_v_error_sq) << ',' << (r.diverged ? 1 : 0)
            << "\n";
      }
    }
    // Two-column log-log pairs, one comment-headed block per scheme.
    plot << "# " << scheme_name(kind) << ": log10("
         << (result.axis == SweepAxis::time_step ? "tau" : "h")
         << ") log10(rms_sup_error)\n";
    for (const LevelSummary& level : result.levels) {
      plot << format_double(std::log10(result.axis == SweepAxis::time_step
                                           ? level.tau
                                           : level.h))
           << ' ' << format_double(std::log10(level.rms_sup_h)) << "\n";
    }
    plot << "\n";

    bool pass = true;
    if (result.h_fit) {
      scheme_json["h_fit"] = fit_to_json(*result.h_fit);
      const bool ok = result.h_fit->slope >= kMeshOrderMin;
      scheme_json["h_fit"]["pass"] = ok;
      std::cout << scheme_name(kind) << " h-order = " << result.h_fit->slope
                << (ok ? " PASS" : " FAIL") << " (threshold " << kMeshOrderMin << ")\n";
      pass = pass && ok;
    }
    if (result.tau_fit) {
      scheme_json["tau_fit"] = fit_to_json(*result.tau_fit);
      const bool ok = result.tau_fit->slope >= kTimeOrderMin;
      scheme_json["tau_fit"]["pass"] = ok;
      std::cout << scheme_name(kind) << " tau-order = " << result.tau_fit->slope
                << (ok ? " PASS" : " FAIL") << " (threshold " << kTimeOrderMin << ")\n";
      pass = pass && ok;
    }
    if (!result.h_fit && !result.tau_fit) {
      std::cout << scheme_name(kind)
                << ": fewer than 3 usable levels, no rate fit\n";
      pass = false;
    }
    if (!pass) exit_code = std::max(exit_code, kExitThreshold);
    summary["schemes"].push_back(scheme_json);
  }

  write_text_file(manifest.out_dir / "study.csv", csv.str());
  write_text_file(manifest.out_dir / "summary.json", summary.dump(2) + "\n");
  write_text_file(manifest.out_dir / "plot.dat", plot.str());
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-difference schemes for parabolic stochastic PDEs"};
  app.require_subcommand(1);

  RunManifest manifest;
  std::string config_path, levels_text, q_text;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags take precedence)");
    cmd->add_option("--problem", manifest.problem_path, "problem definition file");
    cmd->add_option("--scheme", manifest.scheme, "implicit | explicit | both");
    cmd->add_option("--levels", levels_text, "resolution list \"N:m,N:m,...\"");
    cmd->add_option("--replicas", manifest.replicas, "Monte Carlo replicas");
    cmd->add_option("--seed", manifest.seed, "base seed");
    cmd->add_option("--out", manifest.out_dir, "output directory");
    cmd->add_option("--q", q_text, "explicit stability margin target (< lambda)");
    cmd->add_option("--solver-tol", manifest.solver_tol, "inner solver tolerance");
    cmd->add_option("--threads", manifest.threads, "worker threads (0 = auto)");
    cmd->add_option("--forcing-mode", manifest.forcing_mode, "point | average");
  };

  CLI::App* check = app.add_subcommand("check", "parabolicity and stability certificate");
  CLI::App* simulate = app.add_subcommand("simulate", "single run at the first level");
  CLI::App* study = app.add_subcommand("study", "convergence-order study");
  add_common(check);
  add_common(simulate);
  add_common(study);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      RunManifest from_file;
      apply_manifest_json(from_file, read_text_file(config_path));
      // flags override file values: re-apply every flag the user passed
      const auto merge = [&](CLI::App* cmd) {
        if (!cmd->count("--problem") && !from_file.problem_path.empty()) manifest.problem_path = from_file.problem_path;
        if (!cmd->count("--scheme") && !from_file.scheme.empty()) manifest.scheme = from_file.scheme;
        if (!cmd->count("--levels") && !from_file.levels.empty()) manifest.levels = from_file.levels;
        if (!cmd->count("--replicas")) manifest.replicas = from_file.replicas;
        if (!cmd->count("--seed")) manifest.seed = from_file.seed;
        if (!cmd->count("--out") && !from_file.out_dir.empty()) manifest.out_dir = from_file.out_dir;
        if (!cmd->count("--q") && from_file.q) manifest.q = from_file.q;
        if (!cmd->count("--solver-tol")) manifest.solver_tol = from_file.solver_tol;
        if (!cmd->count("--threads")) manifest.threads = from_file.threads;
        if (!cmd->count("--forcing-mode")) manifest.forcing_mode = from_file.forcing_mode;
      };
      for (CLI::App* cmd : {check, simulate, study}) {
        if (cmd->parsed()) merge(cmd);
      }
    }
    if (!levels_text.empty()) manifest.levels = parse_levels(levels_text);
    if (!q_text.empty()) manifest.q = std::stod(q_text);

    if (check->parsed()) manifest.command = "check";
    if (simulate->parsed()) manifest.command = "simulate";
    if (study->parsed()) manifest.command = "study";
    if (manifest.command == "check" && manifest.levels.empty()) {
      manifest.levels = {{16, 256}};
    }
    manifest.validate();

    if (manifest.command == "check") return cmd_check(manifest);
    if (manifest.command == "simulate") return cmd_simulate(manifest);
    return cmd_study(manifest);
  } catch (const StudyFailure& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const SolverFailure& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNumerical;
  }
}
