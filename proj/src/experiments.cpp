#include "spde/experiments.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "spde/io.hpp"
#include "spde/summation.hpp"

namespace spde {

double exact_single_mode_solution(double b, double t, double w_t, double x) {
  if (std::fabs(b) >= std::sqrt(2.0)) {
    throw std::domain_error("exact_single_mode_solution: |b| >= sqrt(2) is not parabolic");
  }
  const double pi = std::numbers::pi;
  const double decay = std::exp(-4.0 * pi * pi * (1.0 - 0.5 * b * b) * t);
  return decay * std::sin(2.0 * pi * (x + b * w_t));
}

ProblemSpec single_mode_problem(double b, double T) {
  ProblemSpec problem;
  problem.d = 1;
  problem.d1 = b == 0.0 ? 0 : 1;
  problem.T = T;
  problem.a[{1, 1}] = CoefficientField::constant(1.0);
  if (b != 0.0) problem.b[{1, 1}] = CoefficientField::constant(b);
  problem.initial_condition = [](std::span<const double> x) {
    return std::sin(2.0 * std::numbers::pi * x[0]);
  };
  problem.exact_transport_b = b;
  std::ostringstream key;
  key << "single_mode_b=" << b << ",T=" << T;
  problem.cache_key = key.str();
  problem.name = "single_mode";
  problem.validate();
  return problem;
}

ReferenceFn single_mode_reference(double b, GridSpec grid,
                                  const WienerPath& path) {
  if (grid.d != 1) {
    throw std::invalid_argument("single_mode_reference: one-dimensional only");
  }
  // Prefix sums of the driving increments: W at every step boundary.
  std::vector<double> w(static_cast<std::size_t>(path.steps) + 1, 0.0);
  for (int i = 0; i < path.steps; ++i) {
    const double inc = path.d1 > 0 ? path.step(i)[0] : 0.0;
    w[static_cast<std::size_t>(i) + 1] = w[static_cast<std::size_t>(i)] + inc;
  }
  return [b, grid, w = std::move(w)](int step, double t) {
    const double w_t = w.at(static_cast<std::size_t>(step));
    return restrict_to_grid(
        [&](std::span<const double> x) {
          return exact_single_mode_solution(b, t, w_t, x[0]);
        },
        grid);
  };
}

ReferenceFn trajectory_reference(const Trajectory& fine, GridSpec coarse_grid,
                                 int coarse_steps) {
  if (fine.grid.d != coarse_grid.d) {
    throw std::invalid_argument("trajectory_reference: dimension mismatch");
  }
  if (fine.grid.n % coarse_grid.n != 0) {
    throw std::invalid_argument("trajectory_reference: lattices are not nested");
  }
  if (coarse_steps < 1 || fine.config.steps % coarse_steps != 0) {
    throw std::invalid_argument("trajectory_reference: time partitions are not nested");
  }
  const int step_ratio = fine.config.steps / coarse_steps;
  const int point_ratio = fine.grid.n / coarse_grid.n;
  return [&fine, coarse_grid, step_ratio, point_ratio](int step, double) {
    const GridFn& frame = fine.state_at_step(step * step_ratio);
    GridFn out = GridFn::zeros(coarse_grid);
    const std::size_t total = coarse_grid.total_points();
    for (std::size_t i = 0; i < total; ++i) {
      std::size_t fine_index = 0;
      for (int axis = 1; axis <= coarse_grid.d; ++axis) {
        const std::size_t k =
            (i / coarse_grid.axis_stride(axis)) % static_cast<std::size_t>(coarse_grid.n);
        fine_index += k * static_cast<std::size_t>(point_ratio) *
                      fine.grid.axis_stride(axis);
      }
      out.values[i] = frame.values[fine_index];
    }
    return out;
  };
}

ErrorAccumulator::ErrorAccumulator(ReferenceFn reference, int r, double tau)
    : reference_(std::move(reference)) {
  report_.r = r;
  report_.tau = tau;
}

void ErrorAccumulator::update(int step, double t, const GridFn& state) {
  report_.h = state.spec.h();
  GridFn e = reference_(step, t);
  add_scaled(e, -1.0, state);
  report_.sup_h_error = std::max(report_.sup_h_error, sobolev_norm(e, report_.r));
  report_.sup_grid_error = std::max(report_.sup_grid_error, max_abs(e));
  if (step >= 1) {
    const double v_norm = sobolev_norm(e, report_.r + 1);
    report_.int_v_error_sq += report_.tau * v_norm * v_norm;
  }
}

ErrorReport ErrorAccumulator::finalize() const { return report_; }

ErrorReport error_norms(const ReferenceFn& reference, const Trajectory& traj,
                        int r) {
  ErrorAccumulator acc(reference, r, traj.config.tau());
  for (std::size_t i = 0; i < traj.stored_steps.size(); ++i) {
    const int step = traj.stored_steps[i];
    acc.update(step, traj.time_of_step(step), traj.states[i]);
  }
  ErrorReport report = acc.finalize();
  report.seed = traj.path_seed;
  report.diverged = traj.diverged;
  return report;
}

namespace {

std::filesystem::path reference_cache_base(const ProblemSpec& problem,
                                           const std::filesystem::path& cache_dir,
                                           const WienerPath& path,
                                           GridSpec grid,
                                           const SchemeConfig& config,
                                           int store_stride) {
  std::ostringstream key;
  key << problem.cache_key << "|seed=" << path.seed << "|n=" << grid.n
      << "|m=" << config.steps << "|stride=" << store_stride
      << "|tol=" << config.solver_tol;
  std::ostringstream name;
  name << "ref_" << std::hex << fnv1a64(key.str());
  return cache_dir / name.str();
}

bool trajectory_matches(const Trajectory& t, GridSpec grid,
                        const SchemeConfig& config, std::uint64_t seed,
                        int store_stride) {
  return t.grid == grid && t.config.steps == config.steps &&
         t.config.horizon == config.horizon && t.path_seed == seed &&
         t.store_stride == store_stride && !t.states.empty() &&
         t.stored_steps.size() == t.states.size();
}

}  // namespace

Trajectory reference_solution(const ProblemSpec& problem, GridSpec fine_grid,
                              const SchemeConfig& fine_config,
                              const WienerPath& path,
                              const std::filesystem::path& cache_dir,
                              int store_stride) {
  SchemeConfig config = fine_config;
  config.kind = SchemeKind::implicit_euler;
  const bool use_cache = !problem.cache_key.empty() && !cache_dir.empty();
  std::filesystem::path base;
  if (use_cache) {
    base = reference_cache_base(problem, cache_dir, path, fine_grid, config,
                                store_stride);
    if (std::filesystem::exists(base.string() + ".json")) {
      try {
        Trajectory cached = load_trajectory(base);
        if (trajectory_matches(cached, fine_grid, config, path.seed, store_stride)) {
          return cached;
        }
        std::cerr << "[spde] reference cache entry " << base
                  << " does not match its key; recomputing\n";
      } catch (const std::exception& err) {
        std::cerr << "[spde] corrupt reference cache entry " << base << " ("
                  << err.what() << "); recomputing\n";
      }
    }
  }
  Trajectory traj = run_scheme(problem, fine_grid, config, path, store_stride);
  if (use_cache) {
    std::filesystem::create_directories(cache_dir);
    save_trajectory(traj, base);
  }
  return traj;
}

RateFit fit_rate(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) {
    throw std::invalid_argument("fit_rate: need at least three points");
  }
  RateFit fit;
  fit.points.assign(points.begin(), points.end());
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& [param, error] : fit.points) {
    if (!(param > 0.0) || !(error > 0.0)) {
      throw std::invalid_argument("fit_rate: parameters and errors must be positive");
    }
    if (!(param < prev)) {
      throw std::invalid_argument("fit_rate: parameters must be strictly decreasing");
    }
    prev = param;
  }
  const std::size_t n = fit.points.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [param, error] : fit.points) {
    const double x = std::log(param);
    const double y = std::log(error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.max_residual = 0.0;
  for (const auto& [param, error] : fit.points) {
    const double predicted = fit.intercept + fit.slope * std::log(param);
    fit.max_residual =
        std::max(fit.max_residual, std::fabs(std::log(error) - predicted));
  }
  return fit;
}

namespace {

struct StudyTask {
  int level_index = 0;
  int replica = 0;
};

int integer_ratio(int fine, int coarse, const char* what) {
  if (coarse < 1 || fine % coarse != 0) {
    throw std::invalid_argument(std::string("convergence_study: level ") + what +
                                " counts must nest into the finest level");
  }
  return fine / coarse;
}

}  // namespace

StudyResult convergence_study(const ProblemSpec& problem,
                              std::span<const StudyLevel> levels,
                              const StudyOptions& options) {
  problem.validate();
  if (levels.empty()) throw std::invalid_argument("convergence_study: no levels");
  if (options.replicas < 1) {
    throw std::invalid_argument("convergence_study: need at least one replica");
  }
  int finest_n = 0, finest_m = 0;
  for (const StudyLevel& level : levels) {
    finest_n = std::max(finest_n, level.n);
    finest_m = std::max(finest_m, level.m);
  }
  for (const StudyLevel& level : levels) {
    integer_ratio(finest_n, level.n, "lattice");
    integer_ratio(finest_m, level.m, "step");
  }

  const bool has_oracle = problem.exact_transport_b.has_value();
  const int ref_factor = options.reference_refinement;
  const int path_steps = has_oracle ? finest_m : finest_m * ref_factor;
  const GridSpec ref_grid =
      has_oracle ? GridSpec{} : GridSpec::make(problem.d, finest_n * ref_factor);

  StudyResult result;
  // Sweep axis from the level pattern: varying n at fixed m sweeps the mesh,
  // varying m at fixed n sweeps the time step, both varying is a diagonal.
  {
    bool n_varies = false, m_varies = false;
    for (const StudyLevel& level : levels) {
      n_varies = n_varies || level.n != levels[0].n;
      m_varies = m_varies || level.m != levels[0].m;
    }
    result.axis = n_varies && m_varies
                      ? SweepAxis::diagonal
                      : (m_varies ? SweepAxis::time_step : SweepAxis::mesh);
  }

  const bool is_explicit = options.scheme == SchemeKind::explicit_euler;
  if (is_explicit) {
    const double lambda = parabolicity_constant(
        problem, GridSpec::make(problem.d, finest_n),
        std::vector<double>{0.0, 0.5 * problem.T, problem.T});
    if (!(lambda > 0.0)) {
      throw std::invalid_argument(
          "convergence_study: the problem is not stochastically parabolic "
          "(lambda = " + std::to_string(lambda) + "), rates cannot be certified");
    }
    result.budget = estimate_stability_budget(
        problem, GridSpec::make(problem.d, finest_n), 0.0, options.q_fraction);
  }

  result.levels.resize(levels.size());
  for (std::size_t li = 0; li < levels.size(); ++li) {
    LevelSummary& summary = result.levels[li];
    summary.level = levels[li];
    summary.h = 1.0 / levels[li].n;
    summary.tau = problem.T / levels[li].m;
    summary.replicas.resize(static_cast<std::size_t>(options.replicas));
    if (is_explicit) {
      summary.margin = stability_margin(*result.budget, summary.tau, summary.h);
      summary.certified = summary.margin >= 0.0;
    }
  }

  // Replica-level fine paths and (for problems without a closed form) the
  // cached fine references are shared across levels of one replica.
  std::vector<WienerPath> paths(static_cast<std::size_t>(options.replicas));
  std::vector<Trajectory> references;
  for (int rep = 0; rep < options.replicas; ++rep) {
    paths[static_cast<std::size_t>(rep)] = sample_wiener_path(
        replica_seed(options.seed, rep), problem.d1, path_steps, problem.T);
  }
  if (!has_oracle) {
    references.resize(static_cast<std::size_t>(options.replicas));
    SchemeConfig ref_config;
    ref_config.kind = SchemeKind::implicit_euler;
    ref_config.steps = path_steps;
    ref_config.horizon = problem.T;
    ref_config.solver_tol = options.solver_tol;
    const int stride = path_steps / finest_m;
    for (int rep = 0; rep < options.replicas; ++rep) {
      references[static_cast<std::size_t>(rep)] =
          reference_solution(problem, ref_grid, ref_config,
                             paths[static_cast<std::size_t>(rep)],
                             options.cache_dir, stride);
    }
  }

  std::vector<StudyTask> tasks;
  tasks.reserve(levels.size() * static_cast<std::size_t>(options.replicas));
  for (std::size_t li = 0; li < levels.size(); ++li) {
    for (int rep = 0; rep < options.replicas; ++rep) {
      tasks.push_back({static_cast<int>(li), rep});
    }
  }

  std::atomic<std::size_t> next_task{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::string first_error;

  const auto run_task = [&](const StudyTask& task) {
    const StudyLevel level = levels[static_cast<std::size_t>(task.level_index)];
    const GridSpec grid = GridSpec::make(problem.d, level.n);
    const WienerPath& fine_path = paths[static_cast<std::size_t>(task.replica)];
    const WienerPath level_path = coarsen(fine_path, path_steps / level.m);

    SchemeConfig config;
    config.kind = options.scheme;
    config.steps = level.m;
    config.horizon = problem.T;
    config.solver_tol = options.solver_tol;
    config.forcing_mode = options.forcing_mode;

    ReferenceFn reference =
        has_oracle
            ? single_mode_reference(*problem.exact_transport_b, grid, level_path)
            : trajectory_reference(
                  references[static_cast<std::size_t>(task.replica)], grid,
                  level.m);

    ErrorAccumulator acc(std::move(reference), /*r=*/0, config.tau());
    const Trajectory traj = run_scheme(
        problem, grid, config, level_path, /*store_stride=*/level.m,
        [&acc](int step, double t, const GridFn& state) { acc.update(step, t, state); });

    ErrorReport report = acc.finalize();
    report.seed = level_path.seed;
    report.diverged = traj.diverged;
    result.levels[static_cast<std::size_t>(task.level_index)]
        .replicas[static_cast<std::size_t>(task.replica)] = report;
  };

  const auto worker = [&] {
    while (!failed.load()) {
      const std::size_t index = next_task.fetch_add(1);
      if (index >= tasks.size()) return;
      try {
        run_task(tasks[index]);
      } catch (const std::exception& err) {
        std::scoped_lock lock(error_mutex);
        if (first_error.empty()) first_error = err.what();
        failed.store(true);
        return;
      }
    }
  };

  int thread_count = options.threads > 0
                         ? options.threads
                         : static_cast<int>(std::thread::hardware_concurrency());
  thread_count = std::max(1, std::min<int>(thread_count,
                                           static_cast<int>(tasks.size())));
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw StudyFailure(first_error);

  // Deterministic aggregation in replica order.
  for (LevelSummary& summary : result.levels) {
    const std::size_t count = summary.replicas.size();
    const double mean_sq = pairwise_sum(count, [&](std::size_t i) {
                             const double e = summary.replicas[i].sup_h_error;
                             return e * e;
                           }) /
                           static_cast<double>(count);
    summary.rms_sup_h = std::sqrt(mean_sq);
    summary.mean_int_v_sq = pairwise_sum(count, [&](std::size_t i) {
                              return summary.replicas[i].int_v_error_sq;
                            }) /
                            static_cast<double>(count);
    const double mean_sup_grid_sq =
        pairwise_sum(count, [&](std::size_t i) {
          const double e = summary.replicas[i].sup_grid_error;
          return e * e;
        }) /
        static_cast<double>(count);
    summary.rms_sup_grid = std::sqrt(mean_sup_grid_sq);
    if (count > 1) {
      const double var_sq = pairwise_sum(count, [&](std::size_t i) {
                              const double e = summary.replicas[i].sup_h_error;
                              const double dev = e * e - mean_sq;
                              return dev * dev;
                            }) /
                            static_cast<double>(count - 1);
      const double se_mean_sq = std::sqrt(var_sq / static_cast<double>(count));
      summary.rms_sup_h_stderr =
          summary.rms_sup_h > 0.0 ? se_mean_sq / (2.0 * summary.rms_sup_h) : 0.0;
    }
    for (const ErrorReport& report : summary.replicas) {
      if (report.diverged) ++summary.diverged_count;
    }
    if (summary.certified && summary.diverged_count > 0) {
      throw StudyFailure(
          "convergence_study: divergence on a level certified stable (n=" +
          std::to_string(summary.level.n) + ", m=" + std::to_string(summary.level.m) +
          "); the stability certificate is falsified");
    }
  }

  // Fits use certified, non-divergent levels only.
  std::vector<std::pair<double, double>> h_points, tau_points;
  for (const LevelSummary& summary : result.levels) {
    if (!summary.certified || summary.diverged_count > 0) continue;
    if (!(summary.rms_sup_h > 0.0)) continue;
    if (result.axis != SweepAxis::time_step) {
      h_points.emplace_back(summary.h, summary.rms_sup_h);
    }
    if (result.axis != SweepAxis::mesh) {
      tau_points.emplace_back(summary.tau, summary.rms_sup_h);
    }
  }
  if (h_points.size() >= 3) result.h_fit = fit_rate(h_points);
  if (tau_points.size() >= 3) result.tau_fit = fit_rate(tau_points);
  return result;
}

}  // namespace spde
