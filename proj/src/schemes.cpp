#include "spde/schemes.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spde/solvers.hpp"

namespace spde {

bool Trajectory::has_step(int step) const {
  for (int s : stored_steps) {
    if (s == step) return true;
  }
  return false;
}

const GridFn& Trajectory::state_at_step(int step) const {
  if (store_stride > 0 && step % store_stride == 0) {
    const std::size_t guess = static_cast<std::size_t>(step / store_stride);
    if (guess < stored_steps.size() && stored_steps[guess] == step) {
      return states[guess];
    }
  }
  for (std::size_t i = 0; i < stored_steps.size(); ++i) {
    if (stored_steps[i] == step) return states[i];
  }
  throw std::out_of_range("Trajectory: step " + std::to_string(step) + " is not stored");
}

double Trajectory::max_picard_ratio() const {
  double r = 0.0;
  for (const StepStats& s : step_stats) r = std::max(r, s.picard_ratio);
  return r;
}

namespace {

// Coefficient grids for one time level; time-independent slots are
// evaluated once and reused across the whole run.
class CoefficientCache {
 public:
  CoefficientCache(const ProblemSpec& problem, GridSpec grid)
      : problem_(problem), grid_(grid) {
    for (const auto& [key, field] : problem.a) {
      (void)key;
      any_time_dependent_ = any_time_dependent_ || field.time_dependent;
    }
    for (const auto& [key, field] : problem.b) {
      (void)key;
      any_time_dependent_ = any_time_dependent_ || field.time_dependent;
    }
    if (problem.forcing) {
      any_time_dependent_ = any_time_dependent_ || problem.forcing->time_dependent;
    }
    for (const auto& [k, field] : problem.g) {
      (void)k;
      any_time_dependent_ = any_time_dependent_ || field.time_dependent;
    }
  }

  const EvaluatedCoefficients& at(double t) {
    if (!table_ || (any_time_dependent_ && t != table_->t)) {
      table_ = evaluate_coefficients(problem_, grid_, t);
      table_->t = t;
    }
    return *table_;
  }

 private:
  const ProblemSpec& problem_;
  GridSpec grid_;
  bool any_time_dependent_ = false;
  std::optional<EvaluatedCoefficients> table_;
};

GridFn averaged_field(const CoefficientField& field, double t0, double t1,
                      GridSpec grid) {
  if (field.interval_average) {
    return restrict_to_grid(
        [&](std::span<const double> x) { return field.interval_average(t0, t1, x); },
        grid);
  }
  return restrict_to_grid(
      [&](std::span<const double> x) { return field.evaluate(t0, x); }, grid);
}

// Additive forcing for noise component k at the configured time policy.
std::optional<GridFn> additive_forcing(const ProblemSpec& problem,
                                       const EvaluatedCoefficients& table,
                                       const SchemeConfig& cfg, int k, double t) {
  const auto it = problem.g.find(k);
  if (it == problem.g.end()) return std::nullopt;
  if (cfg.forcing_mode == ForcingTimeMode::interval_average) {
    return averaged_field(it->second, t, t + cfg.tau(), table.grid);
  }
  const auto& cached = table.g[static_cast<std::size_t>(k - 1)];
  if (cached && (!it->second.time_dependent || table.t == t)) return *cached;
  return restrict_to_grid(
      [&](std::span<const double> x) { return it->second.evaluate(t, x); },
      table.grid);
}

// Reaction term under the forcing time policy. The averaged mode only
// affects the linear forcing; a configured nonlinearity is always evaluated
// pointwise at (t, state).
GridFn reaction_term(const ProblemSpec& problem,
                     const EvaluatedCoefficients& table,
                     const SchemeConfig& cfg, double t, double t_other,
                     const GridFn& v) {
  if (!problem.nonlinearity && problem.forcing &&
      cfg.forcing_mode == ForcingTimeMode::interval_average) {
    const double lo = std::min(t, t_other);
    const double hi = std::max(t, t_other);
    return averaged_field(*problem.forcing, lo, hi, table.grid);
  }
  return apply_reaction_term(problem, table, t, v);
}

bool has_reaction(const ProblemSpec& problem) {
  return problem.nonlinearity.has_value() || problem.forcing.has_value();
}

GridFn explicit_step_core(const ProblemSpec& problem,
                          const EvaluatedCoefficients& table,
                          const SchemeConfig& cfg, double t, const GridFn& u,
                          std::span<const double> dW) {
  const double tau = cfg.tau();
  GridFn next = u;
  add_scaled(next, tau, apply_drift_operator(table, u));
  if (has_reaction(problem)) {
    add_scaled(next, tau, reaction_term(problem, table, cfg, t, t + tau, u));
  }
  for (int k = 1; k <= problem.d1; ++k) {
    GridFn noise = apply_noise_operator(table, k, u);
    if (auto g = additive_forcing(problem, table, cfg, k, t)) {
      add_scaled(noise, 1.0, *g);
    }
    add_scaled(next, dW[static_cast<std::size_t>(k - 1)], noise);
  }
  return next;
}

struct ImplicitOutcome {
  GridFn state;
  StepStats stats;
  bool rhs_finite = true;
};

ImplicitOutcome implicit_step_core(const ProblemSpec& problem,
                                   CoefficientCache& cache,
                                   const SchemeConfig& cfg, double t_next,
                                   double t, const GridFn& u,
                                   std::span<const double> dW) {
  const double tau = cfg.tau();
  ImplicitOutcome out{GridFn::zeros(u.spec), {}, true};

  // Diffusion side at t, consumed into the right-hand side first.
  {
    const EvaluatedCoefficients& table_t = cache.at(t);
    out.state = u;
    for (int k = 1; k <= problem.d1; ++k) {
      GridFn noise = apply_noise_operator(table_t, k, u);
      if (auto g = additive_forcing(problem, table_t, cfg, k, t)) {
        add_scaled(noise, 1.0, *g);
      }
      add_scaled(out.state, dW[static_cast<std::size_t>(k - 1)], noise);
    }
  }
  GridFn rhs = std::move(out.state);
  if (!rhs.all_finite()) {
    out.rhs_finite = false;
    out.state = std::move(rhs);
    return out;
  }

  const EvaluatedCoefficients& table = cache.at(t_next);
  const GridSpec spec = u.spec;
  const ApplyFn system = [&](const std::vector<double>& in, std::vector<double>& result) {
    GridFn v{spec, in};
    GridFn lv = apply_drift_operator(table, v);
    result = in;
    for (std::size_t i = 0; i < result.size(); ++i) result[i] -= tau * lv.values[i];
  };

  const int max_iter = cfg.solver_max_iter > 0
                           ? cfg.solver_max_iter
                           : static_cast<int>(10 * spec.total_points());
  const bool symmetric = drift_is_symmetric(table);
  const double rhs_scale = euclidean_norm(rhs.values);
  const double tol_abs = cfg.solver_tol * std::max(rhs_scale, 1e-300);

  const auto solve_linear = [&](const std::vector<double>& system_rhs,
                                std::vector<double>& x) -> KrylovResult {
    return symmetric ? conjugate_gradient(system, system_rhs, x, tol_abs, max_iter)
                     : bicgstab(system, system_rhs, x, tol_abs, max_iter);
  };

  GridFn w = u;  // warm start from the previous state
  if (!problem.nonlinearity) {
    std::vector<double> system_rhs = rhs.values;
    if (problem.forcing) {
      const GridFn f = reaction_term(problem, table, cfg, t_next, t, w);
      for (std::size_t i = 0; i < system_rhs.size(); ++i) {
        system_rhs[i] += tau * f.values[i];
      }
    }
    const KrylovResult r = solve_linear(system_rhs, w.values);
    out.stats.linear_iterations = r.iterations;
    out.stats.picard_iterations = 0;
    if (!r.converged) {
      std::ostringstream msg;
      msg << "implicit step: linear solve stalled at residual " << r.residual_norm
          << " (target " << tol_abs << ") after " << r.iterations
          << " iterations; history tail:";
      const std::size_t from =
          r.residual_history.size() > 6 ? r.residual_history.size() - 6 : 0;
      for (std::size_t i = from; i < r.residual_history.size(); ++i) {
        msg << ' ' << r.residual_history[i];
      }
      throw SolverFailure(msg.str());
    }
  } else {
    // Picard iteration with the reaction frozen at the previous iterate;
    // strong monotonicity makes this a contraction for admissible tau.
    const int max_picard = 64;
    double prev_update = -1.0;
    bool done = false;
    for (int j = 0; j < max_picard; ++j) {
      std::vector<double> system_rhs = rhs.values;
      const GridFn f = apply_reaction_term(problem, table, t_next, w);
      for (std::size_t i = 0; i < system_rhs.size(); ++i) {
        system_rhs[i] += tau * f.values[i];
      }
      GridFn w_next = w;
      const KrylovResult r = solve_linear(system_rhs, w_next.values);
      out.stats.linear_iterations += r.iterations;
      if (!r.converged) {
        throw SolverFailure("implicit step: inner linear solve stalled at residual " +
                            std::to_string(r.residual_norm));
      }
      GridFn delta = linear_combination(1.0, w_next, -1.0, w);
      const double update = euclidean_norm(delta.values);
      if (prev_update > 0.0) {
        out.stats.picard_ratio =
            std::max(out.stats.picard_ratio, update / prev_update);
      }
      prev_update = update;
      w = std::move(w_next);
      out.stats.picard_iterations = j + 1;
      if (update <= tol_abs) {
        done = true;
        break;
      }
    }
    if (!done) {
      throw SolverFailure("implicit step: Picard iteration did not contract below tolerance " +
                          std::to_string(tol_abs));
    }
  }

  // Residual of the monotone equation, recomputed from scratch.
  {
    GridFn dw = w;
    add_scaled(dw, -tau, apply_drift_operator(table, w));
    if (has_reaction(problem)) {
      add_scaled(dw, -tau, reaction_term(problem, table, cfg, t_next, t, w));
    }
    add_scaled(dw, -1.0, rhs);
    out.stats.residual = sobolev_norm(dw, 0);
    const double rhs_h0 = sobolev_norm(rhs, 0);
    if (out.stats.residual > cfg.solver_tol * std::max(rhs_h0, 1e-300) * 4.0) {
      throw SolverFailure("implicit step: verified residual " +
                          std::to_string(out.stats.residual) +
                          " exceeds tolerance against |rhs| = " + std::to_string(rhs_h0));
    }
  }

  out.state = std::move(w);
  return out;
}

}  // namespace

GridFn explicit_euler_step(const ProblemSpec& problem, double t, const GridFn& u,
                           std::span<const double> dW, double tau) {
  if (static_cast<int>(dW.size()) != problem.d1) {
    throw std::invalid_argument("explicit_euler_step: increment dimension mismatch");
  }
  SchemeConfig cfg;
  cfg.kind = SchemeKind::explicit_euler;
  cfg.steps = 1;
  cfg.horizon = tau;
  const EvaluatedCoefficients table = evaluate_coefficients(problem, u.spec, t);
  return explicit_step_core(problem, table, cfg, t, u, dW);
}

GridFn implicit_euler_step(const ProblemSpec& problem, double t_next, double t,
                           const GridFn& u, std::span<const double> dW,
                           double tau, double solver_tol, int max_iter,
                           StepStats* stats) {
  if (static_cast<int>(dW.size()) != problem.d1) {
    throw std::invalid_argument("implicit_euler_step: increment dimension mismatch");
  }
  SchemeConfig cfg;
  cfg.kind = SchemeKind::implicit_euler;
  cfg.steps = 1;
  cfg.horizon = tau;
  cfg.solver_tol = solver_tol;
  cfg.solver_max_iter = max_iter;
  CoefficientCache cache(problem, u.spec);
  ImplicitOutcome out = implicit_step_core(problem, cache, cfg, t_next, t, u, dW);
  if (!out.rhs_finite) {
    throw std::invalid_argument("implicit_euler_step: non-finite right-hand side");
  }
  if (stats) *stats = out.stats;
  return std::move(out.state);
}

Trajectory run_scheme(const ProblemSpec& problem, GridSpec grid,
                      const SchemeConfig& config, const WienerPath& path,
                      int store_stride, const StepObserver& observer) {
  problem.validate();
  if (grid.d != problem.d) {
    throw std::invalid_argument("run_scheme: grid dimension mismatch");
  }
  if (path.steps != config.steps) {
    throw std::invalid_argument("run_scheme: the path must carry exactly one increment per step");
  }
  if (path.d1 != problem.d1) {
    throw std::invalid_argument("run_scheme: path noise dimension mismatch");
  }
  if (config.steps < 0) throw std::invalid_argument("run_scheme: negative step count");
  if (store_stride < 1) throw std::invalid_argument("run_scheme: store stride must be >= 1");
  if (config.kind == SchemeKind::implicit_euler && config.steps > 0) {
    const double majorant = monotonicity_majorant(problem, grid);
    if (majorant > 0.0 && !(config.tau() < 1.0 / majorant)) {
      throw std::invalid_argument(
          "run_scheme: implicit step size violates tau < 1/L with L = " +
          std::to_string(majorant));
    }
  }

  Trajectory traj;
  traj.grid = grid;
  traj.config = config;
  traj.path_seed = path.seed;
  traj.store_stride = store_stride;

  GridFn u = restrict_to_grid(problem.initial_condition, grid);
  const double divergence_bound = 1e6 * (1.0 + sobolev_norm(u, 0));
  traj.states.push_back(u);
  traj.stored_steps.push_back(0);
  if (observer) observer(0, 0.0, u);

  CoefficientCache cache(problem, grid);
  const double tau = config.tau();
  for (int i = 0; i < config.steps; ++i) {
    const double t = tau * i;
    const double t_next = tau * (i + 1);
    StepStats stats;
    bool step_finite = true;
    if (config.kind == SchemeKind::explicit_euler) {
      const EvaluatedCoefficients& table = cache.at(t);
      u = explicit_step_core(problem, table, config, t, u, path.step(i));
    } else {
      try {
        ImplicitOutcome out =
            implicit_step_core(problem, cache, config, t_next, t, u, path.step(i));
        stats = out.stats;
        step_finite = out.rhs_finite;
        u = std::move(out.state);
      } catch (const SolverFailure& failure) {
        throw SolverFailure("step " + std::to_string(i + 1) + ": " + failure.what());
      }
    }
    traj.step_stats.push_back(stats);
    if (!step_finite || !u.all_finite() ||
        sobolev_norm(u, 0) > divergence_bound) {
      traj.diverged = true;
      traj.diverged_at_step = i + 1;
      break;
    }
    if ((i + 1) % store_stride == 0 || i + 1 == config.steps) {
      traj.states.push_back(u);
      traj.stored_steps.push_back(i + 1);
    }
    if (observer) observer(i + 1, t_next, u);
  }
  return traj;
}

}  // namespace spde
