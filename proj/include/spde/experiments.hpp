#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spde/grid.hpp"
#include "spde/noise.hpp"
#include "spde/problem.hpp"
#include "spde/schemes.hpp"

namespace spde {

/// Discrete-norm strong errors of one trajectory against a reference:
/// sup over steps of |e_i|_{h,r} and the time integral sum tau |e_i|^2_{h,r+1}
/// over completed steps, with e_i = restrict(reference(t_i)) - u_i.
struct ErrorReport {
  double sup_h_error = 0.0;
  double int_v_error_sq = 0.0;
  double sup_grid_error = 0.0;  // max over steps and lattice points of |e_i|
  int r = 0;
  double h = 0.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;
};

/// Least-squares power fit: slope of log(error) against log(parameter).
struct RateFit {
  std::vector<std::pair<double, double>> points;  // (parameter, error)
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
};

/// Pathwise exact solution of du = u_xx dt + b u_x dW with u(0) = sin(2 pi x)
/// on the unit torus: exp(-4 pi^2 (1 - b^2/2) t) sin(2 pi (x + b W_t)).
/// Requires |b| < sqrt(2).
double exact_single_mode_solution(double b, double t, double w_t, double x);

/// Convenience builder for the matching ProblemSpec (a^{11} = 1, first-order
/// noise coefficient b, no forcing).
ProblemSpec single_mode_problem(double b, double T);

/// Produces restrict(reference(t_i)) on a fixed grid for each step of a
/// trajectory with the given step count.
using ReferenceFn = std::function<GridFn(int step, double t)>;

/// Closed-form pathwise reference; `path` must be the same increments that
/// drive the trajectory under comparison (W(t_i) is its prefix sum).
ReferenceFn single_mode_reference(double b, GridSpec grid,
                                  const WienerPath& path);

/// Reference backed by a finer trajectory on nested grids: the fine step and
/// lattice counts must be integer multiples of the coarse ones and every
/// needed frame must be stored; otherwise an argument error is thrown.
ReferenceFn trajectory_reference(const Trajectory& fine, GridSpec coarse_grid,
                                 int coarse_steps);

/// Streaming accumulator behind error_norms, usable as a run_scheme observer
/// so studies never hold whole trajectories in memory.
class ErrorAccumulator {
 public:
  ErrorAccumulator(ReferenceFn reference, int r, double tau);
  void update(int step, double t, const GridFn& state);
  ErrorReport finalize() const;

 private:
  ReferenceFn reference_;
  ErrorReport report_;
};

ErrorReport error_norms(const ReferenceFn& reference, const Trajectory& traj,
                        int r);

/// Fine-level implicit trajectory cached on disk under cache_dir, keyed by
/// (problem cache key, path seed, resolution, stride). A corrupt cache entry
/// is recomputed with a warning. Caching is skipped when the problem has no
/// cache key or cache_dir is empty.
Trajectory reference_solution(const ProblemSpec& problem, GridSpec fine_grid,
                              const SchemeConfig& fine_config,
                              const WienerPath& path,
                              const std::filesystem::path& cache_dir,
                              int store_stride);

/// Ordinary least squares on (log parameter, log error); needs at least
/// three points with positive entries and strictly decreasing parameters.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

struct StudyLevel {
  int n = 0;  // lattice points per axis
  int m = 0;  // time steps
};

enum class SweepAxis { mesh, time_step, diagonal };

struct StudyOptions {
  SchemeKind scheme = SchemeKind::implicit_euler;
  int replicas = 16;
  std::uint64_t seed = 1;
  double solver_tol = 1e-10;
  double q_fraction = 0.8;  // stability margin target as a fraction of lambda
  ForcingTimeMode forcing_mode = ForcingTimeMode::point_value;
  int threads = 0;  // 0 selects the hardware concurrency
  std::filesystem::path cache_dir;  // reference cache location (may be empty)
  int reference_refinement = 4;     // fine/coarse ratio for numerical references
};

struct LevelSummary {
  StudyLevel level;
  double h = 0.0;
  double tau = 0.0;
  double rms_sup_h = 0.0;
  double rms_sup_h_stderr = 0.0;
  double mean_int_v_sq = 0.0;
  double rms_sup_grid = 0.0;
  bool certified = true;  // explicit scheme only; implicit levels are always usable
  double margin = 0.0;    // explicit scheme stability margin
  int diverged_count = 0;
  std::vector<ErrorReport> replicas;  // one report per replica, in order
};

struct StudyResult {
  SweepAxis axis = SweepAxis::mesh;
  std::vector<LevelSummary> levels;
  std::optional<RateFit> h_fit;    // RMS sup error against h
  std::optional<RateFit> tau_fit;  // RMS sup error against tau
  std::optional<StabilityBudget> budget;  // explicit scheme only
};

/// Raised when a replica diverges on a level whose stability certificate
/// claimed it safe.
class StudyFailure : public std::runtime_error {
 public:
  explicit StudyFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Runs the scheme over all (level, replica) pairs on coupled Brownian paths
/// (one fine path per replica, coarsened per level), measures strong errors
/// against the closed-form oracle when the problem declares one and against
/// a cached fine implicit reference otherwise, aggregates RMS sup errors per
/// level, and fits convergence orders along the detected sweep axis.
StudyResult convergence_study(const ProblemSpec& problem,
                              std::span<const StudyLevel> levels,
                              const StudyOptions& options);

}  // namespace spde
