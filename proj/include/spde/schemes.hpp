#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "spde/grid.hpp"
#include "spde/noise.hpp"
#include "spde/problem.hpp"

namespace spde {

enum class SchemeKind { implicit_euler, explicit_euler };

/// Evaluation policy for the additive forcing terms inside a step: point
/// value at the step's evaluation time, or the closed-form average over the
/// step interval (falls back to point evaluation for fields without one).
enum class ForcingTimeMode { point_value, interval_average };

struct SchemeConfig {
  SchemeKind kind = SchemeKind::implicit_euler;
  int steps = 1;          // m; tau = horizon / m
  double horizon = 1.0;   // T
  double solver_tol = 1e-10;  // relative residual tolerance in the h,0 norm
  int solver_max_iter = 0;    // 0 selects 10 * N^d at solve time
  double stability_q = 0.0;   // explicit margin target; 0 selects 0.8*lambda
  ForcingTimeMode forcing_mode = ForcingTimeMode::point_value;

  double tau() const { return steps > 0 ? horizon / steps : 0.0; }
};

struct StepStats {
  int linear_iterations = 0;
  int picard_iterations = 0;
  double residual = 0.0;      // |D(w) - rhs|_{h,0}, recomputed directly
  double picard_ratio = 0.0;  // worst contraction ratio observed in the step
};

/// Time-discrete solution: states stored every `store_stride` steps (step 0
/// always; the final step unless the run diverged). A diverged run keeps no
/// states past the flagged step.
struct Trajectory {
  GridSpec grid;
  SchemeConfig config;
  std::uint64_t path_seed = 0;
  int store_stride = 1;
  std::vector<GridFn> states;
  std::vector<int> stored_steps;
  std::vector<StepStats> step_stats;  // one entry per completed step
  bool diverged = false;
  int diverged_at_step = -1;

  double time_of_step(int step) const { return config.tau() * step; }
  bool has_step(int step) const;
  const GridFn& state_at_step(int step) const;
  double max_picard_ratio() const;
};

/// One forward Euler step: drift and diffusion both evaluated at t_i.
GridFn explicit_euler_step(const ProblemSpec& problem, double t,
                           const GridFn& u, std::span<const double> dW,
                           double tau);

/// One backward Euler step: solves w - tau*(drift(t_next, w) + reaction(t_next, w))
/// = u + sum_k (noise_k(t, u) + g_k(t)) dW_k to the requested relative
/// residual. Throws SolverFailure when the iteration budget is exhausted.
GridFn implicit_euler_step(const ProblemSpec& problem, double t_next, double t,
                           const GridFn& u, std::span<const double> dW,
                           double tau, double solver_tol = 1e-10,
                           int max_iter = 0, StepStats* stats = nullptr);

using StepObserver =
    std::function<void(int step, double t, const GridFn& state)>;

/// Runs the configured scheme over the whole path (which must carry exactly
/// config.steps increments). Divergence (non-finite state or h,0 norm above
/// 1e6*(1+|u_0|)) stops the run and sets the flag; solver failures propagate
/// with the step index.
Trajectory run_scheme(const ProblemSpec& problem, GridSpec grid,
                      const SchemeConfig& config, const WienerPath& path,
                      int store_stride = 1, const StepObserver& observer = {});

}  // namespace spde
