#include "spde/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spde/solvers.hpp"
#include "spde/summation.hpp"

namespace spde {

CoefficientField CoefficientField::constant(double value) {
  CoefficientField f;
  f.evaluate = [value](double, std::span<const double>) { return value; };
  f.time_dependent = false;
  f.interval_average = [value](double, double, std::span<const double>) {
    return value;
  };
  return f;
}

void ProblemSpec::validate() const {
  if (d < 1) throw std::invalid_argument("ProblemSpec: dimension must be >= 1");
  if (d1 < 0) throw std::invalid_argument("ProblemSpec: negative noise dimension");
  if (!(T > 0.0)) throw std::invalid_argument("ProblemSpec: horizon must be positive");
  for (const auto& [key, field] : a) {
    if (key.first < 0 || key.first > d || key.second < 0 || key.second > d) {
      throw std::invalid_argument("ProblemSpec: drift coefficient slot out of range");
    }
    if (!field.evaluate) throw std::invalid_argument("ProblemSpec: empty drift coefficient");
  }
  for (const auto& [key, field] : b) {
    if (key.first < 1 || key.first > d1 || key.second < 0 || key.second > d) {
      throw std::invalid_argument("ProblemSpec: noise coefficient slot out of range");
    }
    if (!field.evaluate) throw std::invalid_argument("ProblemSpec: empty noise coefficient");
  }
  for (const auto& [k, field] : g) {
    if (k < 1 || k > d1) throw std::invalid_argument("ProblemSpec: additive forcing index out of range");
    if (!field.evaluate) throw std::invalid_argument("ProblemSpec: empty additive forcing");
  }
  if (!initial_condition) {
    throw std::invalid_argument("ProblemSpec: missing initial condition");
  }
  if (exact_transport_b) {
    if (d != 1) throw std::invalid_argument("ProblemSpec: the closed-form mode solution is one-dimensional");
    if (*exact_transport_b != 0.0 && d1 != 1) {
      throw std::invalid_argument("ProblemSpec: the closed-form mode solution needs a single noise component");
    }
    if (std::fabs(*exact_transport_b) >= std::sqrt(2.0)) {
      throw std::invalid_argument("ProblemSpec: |b| >= sqrt(2) is not parabolic");
    }
  }
}

namespace {

GridFn evaluate_field(const CoefficientField& field, double t, GridSpec grid) {
  return restrict_to_grid(
      [&](std::span<const double> x) { return field.evaluate(t, x); }, grid);
}

// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
double symmetric_min_eigenvalue(std::vector<double> m, int n) {
  if (n == 1) return m[0];
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += m[p * n + q] * m[p * n + q];
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double tval = sign / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(tval * tval + 1.0);
        const double s = tval * c;
        for (int i = 0; i < n; ++i) {
          const double mip = m[i * n + p];
          const double miq = m[i * n + q];
          m[i * n + p] = c * mip - s * miq;
          m[i * n + q] = s * mip + c * miq;
        }
        for (int i = 0; i < n; ++i) {
          const double mpi = m[p * n + i];
          const double mqi = m[q * n + i];
          m[p * n + i] = c * mpi - s * mqi;
          m[q * n + i] = s * mpi + c * mqi;
        }
      }
    }
  }
  double lambda = m[0];
  for (int i = 1; i < n; ++i) lambda = std::min(lambda, m[i * n + i]);
  return lambda;
}

double coefficient_at(const ProblemSpec& problem, int as, int bs, double t,
                      std::span<const double> x) {
  const auto it = problem.a.find({as, bs});
  if (it == problem.a.end()) return 0.0;
  const double v = it->second.evaluate(t, x);
  if (!std::isfinite(v)) {
    throw std::invalid_argument("parabolicity check: non-finite drift coefficient");
  }
  return v;
}

double noise_coefficient_at(const ProblemSpec& problem, int k, int as, double t,
                            std::span<const double> x) {
  const auto it = problem.b.find({k, as});
  if (it == problem.b.end()) return 0.0;
  const double v = it->second.evaluate(t, x);
  if (!std::isfinite(v)) {
    throw std::invalid_argument("parabolicity check: non-finite noise coefficient");
  }
  return v;
}

double symbol_min_eigenvalue(const ProblemSpec& problem, double t,
                             std::span<const double> x) {
  const int d = problem.d;
  std::vector<double> m(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 1; i <= d; ++i) {
    for (int j = 1; j <= d; ++j) {
      double value = coefficient_at(problem, i, j, t, x);
      for (int k = 1; k <= problem.d1; ++k) {
        value -= 0.5 * noise_coefficient_at(problem, k, i, t, x) *
                 noise_coefficient_at(problem, k, j, t, x);
      }
      m[(i - 1) * d + (j - 1)] = value;
    }
  }
  // Symmetrize; the quadratic form only sees the symmetric part.
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double s = 0.5 * (m[i * d + j] + m[j * d + i]);
      m[i * d + j] = s;
      m[j * d + i] = s;
    }
  }
  return symmetric_min_eigenvalue(std::move(m), d);
}

std::uint64_t jitter_state(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

double parabolicity_constant(const ProblemSpec& problem, GridSpec sample,
                             std::span<const double> times,
                             ParabolicityWitness* witness) {
  if (sample.d != problem.d) {
    throw std::invalid_argument("parabolicity check: sample grid dimension mismatch");
  }
  if (times.empty()) {
    throw std::invalid_argument("parabolicity check: empty time sample");
  }
  double lambda = std::numeric_limits<double>::infinity();
  std::vector<double> x(problem.d, 0.0);
  const auto consider = [&](double t) {
    const double value = symbol_min_eigenvalue(problem, t, x);
    if (value < lambda) {
      lambda = value;
      if (witness) {
        witness->t = t;
        witness->x = x;
        witness->eigenvalue = value;
      }
    }
  };
  const double h = sample.h();
  const std::size_t total = sample.total_points();
  for (double t : times) {
    for (std::size_t i = 0; i < total; ++i) {
      for (int axis = 1; axis <= sample.d; ++axis) {
        const std::size_t k =
            (i / sample.axis_stride(axis)) % static_cast<std::size_t>(sample.n);
        x[axis - 1] = static_cast<double>(k) * h;
      }
      consider(t);
    }
  }
  // Deterministic jittered cloud at 4x the lattice density, capped so the
  // check stays cheap on fine grids.
  std::size_t cloud = total;
  for (int i = 0; i < problem.d; ++i) cloud *= 4;
  cloud = std::min<std::size_t>(cloud, 65536);
  std::uint64_t state = 0x5bd1e995u ^ (static_cast<std::uint64_t>(sample.n) << 32) ^
                        static_cast<std::uint64_t>(problem.d);
  for (std::size_t s = 0; s < cloud; ++s) {
    for (int axis = 0; axis < problem.d; ++axis) {
      state = jitter_state(state + 0x9E3779B97F4A7C15ull);
      x[axis] = static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    for (double t : times) consider(t);
  }
  return lambda;
}

EvaluatedCoefficients evaluate_coefficients(const ProblemSpec& problem,
                                            GridSpec grid, double t) {
  if (grid.d != problem.d) {
    throw std::invalid_argument("evaluate_coefficients: grid dimension mismatch");
  }
  EvaluatedCoefficients out;
  out.grid = grid;
  out.t = t;
  out.d1 = problem.d1;
  out.a.resize(static_cast<std::size_t>(grid.d + 1) * (grid.d + 1));
  out.b.resize(static_cast<std::size_t>(problem.d1) * (grid.d + 1));
  out.g.resize(static_cast<std::size_t>(problem.d1));
  for (const auto& [key, field] : problem.a) {
    out.a[static_cast<std::size_t>(key.first) * (grid.d + 1) + key.second] =
        evaluate_field(field, t, grid);
  }
  for (const auto& [key, field] : problem.b) {
    out.b[static_cast<std::size_t>(key.first - 1) * (grid.d + 1) + key.second] =
        evaluate_field(field, t, grid);
  }
  if (problem.forcing) out.forcing = evaluate_field(*problem.forcing, t, grid);
  for (const auto& [k, field] : problem.g) {
    out.g[static_cast<std::size_t>(k - 1)] = evaluate_field(field, t, grid);
  }
  return out;
}

GridFn apply_drift_operator(const EvaluatedCoefficients& c, const GridFn& v) {
  if (!(c.grid == v.spec)) {
    throw std::invalid_argument("apply_drift_operator: coefficient grid mismatch");
  }
  GridFn out = GridFn::zeros(v.spec);
  const int d = v.spec.d;
  for (int as = 0; as <= d; ++as) {
    for (int bs = 0; bs <= d; ++bs) {
      const auto& coeff = c.a_slot(as, bs);
      if (!coeff) continue;
      GridFn term = (bs > 0) ? difference(v, bs, DiffSign::forward) : v;
      multiply_pointwise(term, *coeff);
      if (as > 0) term = difference(term, as, DiffSign::backward);
      add_scaled(out, 1.0, term);
    }
  }
  return out;
}

GridFn apply_drift_operator(const ProblemSpec& problem, double t,
                            const GridFn& v) {
  return apply_drift_operator(evaluate_coefficients(problem, v.spec, t), v);
}

GridFn apply_drift_adjoint(const EvaluatedCoefficients& c, const GridFn& v) {
  // Adjoint of backward(a * forward(.)) in slots (as, bs) is
  // (-1)^{order(as)+order(bs)} backward_bs(a * forward_as(.)).
  GridFn out = GridFn::zeros(v.spec);
  const int d = v.spec.d;
  for (int as = 0; as <= d; ++as) {
    for (int bs = 0; bs <= d; ++bs) {
      const auto& coeff = c.a_slot(as, bs);
      if (!coeff) continue;
      GridFn term = (as > 0) ? difference(v, as, DiffSign::forward) : v;
      multiply_pointwise(term, *coeff);
      if (bs > 0) term = difference(term, bs, DiffSign::backward);
      const double sign = ((as > 0 ? 1 : 0) + (bs > 0 ? 1 : 0)) % 2 == 0 ? 1.0 : -1.0;
      add_scaled(out, sign, term);
    }
  }
  return out;
}

GridFn apply_noise_operator(const EvaluatedCoefficients& c, int k,
                            const GridFn& v) {
  if (k < 1 || k > c.d1) {
    throw std::invalid_argument("apply_noise_operator: component out of range");
  }
  GridFn out = GridFn::zeros(v.spec);
  for (int as = 0; as <= v.spec.d; ++as) {
    const auto& coeff = c.b_slot(k, as);
    if (!coeff) continue;
    GridFn term = (as > 0) ? difference(v, as, DiffSign::forward) : v;
    multiply_pointwise(term, *coeff);
    add_scaled(out, 1.0, term);
  }
  return out;
}

GridFn apply_noise_operator(const ProblemSpec& problem, int k, double t,
                            const GridFn& v) {
  if (k < 1 || k > problem.d1) {
    throw std::invalid_argument("apply_noise_operator: component out of range");
  }
  return apply_noise_operator(evaluate_coefficients(problem, v.spec, t), k, v);
}

GridFn apply_noise_adjoint(const EvaluatedCoefficients& c, int k,
                           const GridFn& v) {
  GridFn out = GridFn::zeros(v.spec);
  for (int as = 0; as <= v.spec.d; ++as) {
    const auto& coeff = c.b_slot(k, as);
    if (!coeff) continue;
    GridFn term = v;
    multiply_pointwise(term, *coeff);
    if (as > 0) {
      term = difference(term, as, DiffSign::backward);
      add_scaled(out, -1.0, term);
    } else {
      add_scaled(out, 1.0, term);
    }
  }
  return out;
}

GridFn apply_reaction_term(const ProblemSpec& problem, double t,
                           const GridFn& v) {
  return apply_reaction_term(problem, evaluate_coefficients(problem, v.spec, t), t, v);
}

GridFn apply_reaction_term(const ProblemSpec& problem,
                           const EvaluatedCoefficients& c, double t,
                           const GridFn& v) {
  if (problem.nonlinearity) {
    const auto& f = *problem.nonlinearity;
    const int d = v.spec.d;
    std::vector<GridFn> grad;
    grad.reserve(d);
    for (int axis = 1; axis <= d; ++axis) {
      grad.push_back(difference(v, axis, DiffSign::forward));
    }
    GridFn out = GridFn::zeros(v.spec);
    const double h = v.spec.h();
    std::vector<double> x(d, 0.0), p(d, 0.0);
    const std::size_t total = v.spec.total_points();
    for (std::size_t i = 0; i < total; ++i) {
      for (int axis = 1; axis <= d; ++axis) {
        const std::size_t k =
            (i / v.spec.axis_stride(axis)) % static_cast<std::size_t>(v.spec.n);
        x[axis - 1] = static_cast<double>(k) * h;
        p[axis - 1] = grad[axis - 1].values[i];
      }
      out.values[i] = f.evaluate(t, x, p, v.values[i]);
    }
    return out;
  }
  if (c.forcing) return *c.forcing;
  if (problem.forcing) {
    return restrict_to_grid(
        [&](std::span<const double> x) { return problem.forcing->evaluate(t, x); },
        v.spec);
  }
  throw std::invalid_argument(
      "apply_reaction_term: neither a nonlinearity nor a linear forcing is configured");
}

bool drift_is_symmetric(const EvaluatedCoefficients& c) {
  const int d = c.grid.d;
  for (int as = 1; as <= d; ++as) {
    const auto& row = c.a_slot(as, 0);
    if (row && max_abs(*row) > 0.0) return false;
    const auto& col = c.a_slot(0, as);
    if (col && max_abs(*col) > 0.0) return false;
  }
  for (int i = 1; i <= d; ++i) {
    for (int j = i + 1; j <= d; ++j) {
      const auto& ij = c.a_slot(i, j);
      const auto& ji = c.a_slot(j, i);
      const bool ij_zero = !ij || max_abs(*ij) == 0.0;
      const bool ji_zero = !ji || max_abs(*ji) == 0.0;
      if (ij_zero && ji_zero) continue;
      if (ij_zero != ji_zero) return false;
      for (std::size_t z = 0; z < ij->values.size(); ++z) {
        if (ij->values[z] != ji->values[z]) return false;
      }
    }
  }
  return true;
}

double monotonicity_majorant(const ProblemSpec& problem, GridSpec grid) {
  double bound = 0.0;
  const std::vector<double> times = {0.0, 0.5 * problem.T, problem.T};
  for (double t : times) {
    const auto zero_order = problem.a.find({0, 0});
    if (zero_order != problem.a.end()) {
      const GridFn c = evaluate_field(zero_order->second, t, grid);
      double sup = max_abs(c);
      double noise_sq = 0.0;
      for (int k = 1; k <= problem.d1; ++k) {
        const auto it = problem.b.find({k, 0});
        if (it == problem.b.end()) continue;
        const GridFn bk = evaluate_field(it->second, t, grid);
        noise_sq += max_abs(bk) * max_abs(bk);
      }
      bound = std::max(bound, sup + noise_sq);
    } else {
      double noise_sq = 0.0;
      for (int k = 1; k <= problem.d1; ++k) {
        const auto it = problem.b.find({k, 0});
        if (it == problem.b.end()) continue;
        const GridFn bk = evaluate_field(it->second, t, grid);
        noise_sq += max_abs(bk) * max_abs(bk);
      }
      bound = std::max(bound, noise_sq);
    }
  }
  if (problem.nonlinearity) bound += problem.nonlinearity->lipschitz_r;
  return bound;
}

namespace {

// Applies the V-norm Gram operator G = I - sum_i backward_i(forward_i(.)),
// so (v, G v) equals the squared order-1 norm up to the h^d weight.
void apply_gram(const GridFn& v, GridFn& out) {
  out = v;
  for (int axis = 1; axis <= v.spec.d; ++axis) {
    GridFn second = difference(difference(v, axis, DiffSign::forward), axis,
                               DiffSign::backward);
    add_scaled(out, -1.0, second);
  }
}

std::vector<double> gram_solve(const GridFn& rhs) {
  std::vector<double> x(rhs.values.size(), 0.0);
  const GridSpec spec = rhs.spec;
  const ApplyFn apply = [spec](const std::vector<double>& in, std::vector<double>& out) {
    GridFn v{spec, in};
    GridFn g = GridFn::zeros(spec);
    apply_gram(v, g);
    out = std::move(g.values);
  };
  const double tol = 1e-12 * std::max(1.0, euclidean_norm(rhs.values));
  const int max_iter = static_cast<int>(20 * spec.total_points()) + 100;
  const KrylovResult r = conjugate_gradient(apply, rhs.values, x, tol, max_iter);
  if (!r.converged) {
    throw SolverFailure("estimate_stability_budget: norm-weight solve stalled at residual " +
                        std::to_string(r.residual_norm));
  }
  return x;
}

GridFn deterministic_start_vector(GridSpec spec) {
  GridFn v = GridFn::zeros(spec);
  std::uint64_t state = 0x243F6A8885A308D3ull;
  for (double& x : v.values) {
    state = jitter_state(state + 0x9E3779B97F4A7C15ull);
    x = static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5;
  }
  return v;
}

// Largest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
double tridiagonal_max_eigenvalue(std::span<const double> diag,
                                  std::span<const double> off) {
  const std::size_t n = diag.size();
  double hi = diag[0], lo = diag[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i > 0 ? std::fabs(off[i - 1]) : 0.0;
    const double right = i + 1 < n ? std::fabs(off[i]) : 0.0;
    hi = std::max(hi, diag[i] + left + right);
    lo = std::min(lo, diag[i] - left - right);
  }
  const auto count_below = [&](double x) {
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double off_sq = i > 0 ? off[i - 1] * off[i - 1] : 0.0;
      d = diag[i] - x - off_sq / d;
      if (d == 0.0) d = 1e-300;
      if (d < 0.0) ++count;
    }
    return count;
  };
  const double scale = std::max({1.0, std::fabs(hi), std::fabs(lo)});
  while (hi - lo > 1e-14 * scale) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= static_cast<int>(n)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Largest squared singular value of op against the requested target norm:
// the top eigenvalue of the G-weighted normal operator, computed by Lanczos
// iteration with full reorthogonalization in the G-inner product. (Plain
// power iteration stalls on these operators: the top of the spectrum
// clusters within O(h^2), so successive Rayleigh quotients move by less
// than the tolerance long before they reach the norm.)
double squared_operator_norm(GridSpec spec,
                             const std::function<GridFn(const GridFn&)>& op,
                             const std::function<GridFn(const GridFn&)>& op_adjoint,
                             bool target_v_norm) {
  // T v = G^{-1} op^T G^{-1} op v (or without the inner weight for an
  // H-norm target); self-adjoint in (x, y)_G = (x, G y).
  const auto apply_normal = [&](const GridFn& v) {
    GridFn w = op(v);
    if (target_v_norm) {
      GridFn s = GridFn::zeros(spec);
      s.values = gram_solve(w);
      w = op_adjoint(s);
    } else {
      w = op_adjoint(w);
    }
    GridFn result = GridFn::zeros(spec);
    result.values = gram_solve(w);
    return result;
  };
  const auto g_dot = [&](const GridFn& x, const GridFn& y) {
    GridFn gy = GridFn::zeros(spec);
    apply_gram(y, gy);
    return inner_product(x, gy);
  };

  const int max_steps = 200;
  std::vector<GridFn> basis;
  std::vector<double> diag, off, history;
  GridFn v = deterministic_start_vector(spec);
  scale(v, 1.0 / std::sqrt(g_dot(v, v)));
  basis.push_back(v);
  double estimate = 0.0;
  for (int step = 0; step < max_steps; ++step) {
    GridFn w = apply_normal(basis.back());
    const double alpha = g_dot(w, basis.back());
    add_scaled(w, -alpha, basis.back());
    if (basis.size() > 1) {
      add_scaled(w, -off.back(), basis[basis.size() - 2]);
    }
    // Full reorthogonalization keeps the basis G-orthonormal.
    for (const GridFn& u : basis) {
      add_scaled(w, -g_dot(w, u), u);
    }
    diag.push_back(alpha);
    const double lambda = tridiagonal_max_eigenvalue(diag, off);
    history.push_back(lambda);
    if (lambda < 1e-28) return 0.0;
    if (step > 0 && std::fabs(lambda - estimate) <= 1e-6 * std::fabs(lambda)) {
      return lambda;
    }
    estimate = lambda;
    const double beta = std::sqrt(std::max(0.0, g_dot(w, w)));
    if (beta <= 1e-14 * std::max(1.0, std::fabs(alpha))) {
      return lambda;  // invariant subspace reached, the value is exact
    }
    off.push_back(beta);
    scale(w, 1.0 / beta);
    basis.push_back(std::move(w));
  }
  std::ostringstream msg;
  msg << "estimate_stability_budget: operator-norm iteration did not reach"
         " relative tolerance 1e-6 within 200 steps; history:";
  for (std::size_t i = history.size() > 8 ? history.size() - 8 : 0;
       i < history.size(); ++i) {
    msg << ' ' << history[i];
  }
  throw SolverFailure(msg.str());
}

}  // namespace

StabilityBudget estimate_stability_budget(const ProblemSpec& problem,
                                          GridSpec grid, double t,
                                          double q_fraction) {
  if (!(q_fraction > 0.0) || !(q_fraction < 1.0)) {
    throw std::invalid_argument(
        "estimate_stability_budget: the margin target must satisfy 0 < q < lambda");
  }
  const EvaluatedCoefficients table = evaluate_coefficients(problem, grid, t);
  StabilityBudget budget;
  budget.kappa = inverse_inequality_bound(problem.d);
  budget.lambda = parabolicity_constant(problem, grid, std::vector<double>{t});
  budget.l1 = squared_operator_norm(
      grid, [&](const GridFn& v) { return apply_drift_operator(table, v); },
      [&](const GridFn& v) { return apply_drift_adjoint(table, v); },
      /*target_v_norm=*/true);
  double l2 = 0.0;
  for (int k = 1; k <= problem.d1; ++k) {
    l2 += squared_operator_norm(
        grid, [&](const GridFn& v) { return apply_noise_operator(table, k, v); },
        [&](const GridFn& v) { return apply_noise_adjoint(table, k, v); },
        /*target_v_norm=*/false);
  }
  budget.l2 = l2;
  budget.q = q_fraction * budget.lambda;
  return budget;
}

double stability_margin(const StabilityBudget& budget, double tau, double h) {
  const double first = budget.l1 * budget.kappa * budget.kappa * tau / (h * h);
  const double second =
      2.0 * budget.kappa * std::sqrt(budget.l1 * budget.l2 * tau) / h;
  return budget.q - (first + second);
}

}  // namespace spde
