#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spde/grid.hpp"

namespace spde {

/// Evaluator of a coefficient at (t, x) with x on the unit torus.
using CoefficientFn =
    std::function<double(double t, std::span<const double> x)>;

/// Closed-form average over a time interval: (t0, t1, x) -> mean value.
using IntervalAverageFn =
    std::function<double(double t0, double t1, std::span<const double> x)>;

/// A scalar coefficient of the equation. Time-independent fields are
/// evaluated once per grid and cached by the schemes; `interval_average`
/// backs the optional time-averaged forcing mode and falls back to point
/// evaluation at the interval start when absent.
struct CoefficientField {
  CoefficientFn evaluate;
  bool time_dependent = false;
  IntervalAverageFn interval_average;

  // Declared time regularity (Hoelder exponent and constant); metadata only,
  // there is no procedure here that verifies it.
  std::optional<double> time_hoelder_exponent;
  std::optional<double> time_hoelder_constant;

  static CoefficientField constant(double value);
};

/// Zero-order reaction term F(t, x, p, r) with p the discrete gradient and
/// r the field value, together with its declared Lipschitz bounds.
struct Nonlinearity {
  std::function<double(double t, std::span<const double> x,
                       std::span<const double> p, double r)>
      evaluate;
  double lipschitz_p = 0.0;
  double lipschitz_r = 0.0;
};

/// Coefficient slot index: 0 denotes the zero multi-index (identity),
/// i in 1..d denotes the unit multi-index e_i. Only |alpha| <= 1 appears in
/// the operators.
struct ProblemSpec {
  int d = 1;   // spatial dimension
  int d1 = 0;  // noise dimension
  double T = 1.0;

  /// Second-order coefficient table: key (alpha_slot, beta_slot).
  std::map<std::pair<int, int>, CoefficientField> a;
  /// Noise coefficient table: key (k, alpha_slot), k in 1..d1.
  std::map<std::pair<int, int>, CoefficientField> b;

  /// Linear forcing f(t, x); used as the reaction term when no nonlinearity
  /// is configured.
  std::optional<CoefficientField> forcing;
  /// Additive noise forcings g_k(t, x), k in 1..d1 (missing entries are zero).
  std::map<int, CoefficientField> g;

  std::optional<Nonlinearity> nonlinearity;

  SpatialFn initial_condition;

  /// Set when the problem is the single-mode transport-diffusion equation
  /// with a pathwise closed-form solution (see exact_single_mode_solution).
  std::optional<double> exact_transport_b;

  /// Stable identity used to key the reference-solution cache; empty
  /// disables caching. Loaders set it from the canonical problem file.
  std::string cache_key;

  std::string name;

  void validate() const;  // throws std::invalid_argument on structural errors
};

/// Constants entering the explicit-scheme stability certificate.
struct StabilityBudget {
  double l1 = 0.0;      // squared V->V* operator-norm constant of the drift
  double l2 = 0.0;      // summed squared V->H norm constants of the noise ops
  double kappa = 0.0;   // inverse-inequality constant for the dimension
  double lambda = 0.0;  // parabolicity constant
  double q = 0.0;       // certification margin target, q < lambda
};

/// Sample point realizing the minimum in the parabolicity check.
struct ParabolicityWitness {
  double t = 0.0;
  std::vector<double> x;
  double eigenvalue = 0.0;
};

/// Minimum over sampled (t, x) of the smallest eigenvalue of the first-order
/// symbol matrix sym(a) - (1/2) b b^T. Positive means stochastically
/// parabolic. Samples the lattice of `sample` at the given times plus a
/// deterministic 4x-denser jittered cloud. Throws on non-finite coefficients.
/// A non-null witness receives the minimizing sample point.
double parabolicity_constant(const ProblemSpec& problem, GridSpec sample,
                             std::span<const double> times,
                             ParabolicityWitness* witness = nullptr);

/// Coefficients evaluated on one grid at one time level.
struct EvaluatedCoefficients {
  GridSpec grid;
  double t = 0.0;
  int d1 = 0;
  std::vector<std::optional<GridFn>> a;  // (d+1)*(d+1), index as*(d+1)+bs
  std::vector<std::optional<GridFn>> b;  // d1*(d+1), index (k-1)*(d+1)+as
  std::optional<GridFn> forcing;
  std::vector<std::optional<GridFn>> g;  // d1 entries

  const std::optional<GridFn>& a_slot(int as, int bs) const {
    return a[static_cast<std::size_t>(as) * (grid.d + 1) + bs];
  }
  const std::optional<GridFn>& b_slot(int k, int as) const {
    return b[static_cast<std::size_t>(k - 1) * (grid.d + 1) + as];
  }
};

EvaluatedCoefficients evaluate_coefficients(const ProblemSpec& problem,
                                            GridSpec grid, double t);

/// Discrete drift operator: sum over slots of backward-difference of
/// (coefficient times forward-difference), identity in zero slots.
GridFn apply_drift_operator(const EvaluatedCoefficients& c, const GridFn& v);
GridFn apply_drift_operator(const ProblemSpec& problem, double t,
                            const GridFn& v);

/// Adjoint of the drift operator in the h-weighted inner product.
GridFn apply_drift_adjoint(const EvaluatedCoefficients& c, const GridFn& v);

/// Discrete noise operator k: sum over slots of coefficient times forward
/// difference.
GridFn apply_noise_operator(const EvaluatedCoefficients& c, int k,
                            const GridFn& v);
GridFn apply_noise_operator(const ProblemSpec& problem, int k, double t,
                            const GridFn& v);
GridFn apply_noise_adjoint(const EvaluatedCoefficients& c, int k,
                           const GridFn& v);

/// Reaction term: pointwise F(t, z, grad_h v(z), v(z)) when a nonlinearity is
/// configured, otherwise the restricted linear forcing. Throws when neither
/// is present.
GridFn apply_reaction_term(const ProblemSpec& problem, double t,
                           const GridFn& v);
GridFn apply_reaction_term(const ProblemSpec& problem,
                           const EvaluatedCoefficients& c, double t,
                           const GridFn& v);

/// True when the drift operator is symmetric on this grid (no first-order
/// slots and a pointwise-symmetric second-order table).
bool drift_is_symmetric(const EvaluatedCoefficients& c);

/// Concrete monotonicity majorant gating the implicit scheme's step size
/// (tau < 1/L): sampled sup of |a^{00}| + sum_k (b^0_k)^2 plus the declared
/// Lipschitz-in-r bound of the nonlinearity.
double monotonicity_majorant(const ProblemSpec& problem, GridSpec grid);

/// Operator-norm constants by power iteration on the norm-weighted operators
/// (relative tolerance 1e-6, at most 200 iterations; throws SolverFailure
/// with the iterate history on non-convergence). kappa and lambda are the
/// derived inverse-inequality bound and the sampled parabolicity constant;
/// q defaults to q_fraction * lambda.
StabilityBudget estimate_stability_budget(const ProblemSpec& problem,
                                          GridSpec grid, double t,
                                          double q_fraction = 0.8);

/// q - [L1 kappa^2 tau / h^2 + 2 kappa sqrt(L1 L2 tau) / h]; explicit runs
/// are certified when this is >= 0.
double stability_margin(const StabilityBudget& budget, double tau, double h);

}  // namespace spde
