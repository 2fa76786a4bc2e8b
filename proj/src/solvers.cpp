#include "spde/solvers.hpp"

#include <cmath>
#include <cstddef>

#include "spde/summation.hpp"

namespace spde {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return pairwise_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double true_residual(const ApplyFn& apply, const std::vector<double>& rhs,
                     const std::vector<double>& x, std::vector<double>& work) {
  apply(x, work);
  for (std::size_t i = 0; i < work.size(); ++i) work[i] = rhs[i] - work[i];
  return std::sqrt(dot(work, work));
}

}  // namespace

double euclidean_norm(const std::vector<double>& x) {
  return std::sqrt(dot(x, x));
}

KrylovResult conjugate_gradient(const ApplyFn& apply,
                                const std::vector<double>& rhs,
                                std::vector<double>& x, double tol_abs,
                                int max_iter) {
  const std::size_t n = rhs.size();
  KrylovResult result;
  std::vector<double> r(n), p(n), ap(n);

  // The recursive residual drifts from the true one by rounding; aim below
  // the target so the recomputed residual still clears it.
  const double tol_inner = 0.5 * tol_abs;

  apply(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - ap[i];
  p = r;
  double rr = dot(r, r);
  result.residual_history.push_back(std::sqrt(rr));

  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= tol_inner) break;
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0) || !std::isfinite(pap)) break;  // lost positivity
    const double alpha = rr / pap;
    axpy(x, alpha, p);
    axpy(r, -alpha, ap);
    const double rr_next = dot(r, r);
    result.residual_history.push_back(std::sqrt(rr_next));
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_next;
    result.iterations = it + 1;
  }

  result.residual_norm = true_residual(apply, rhs, x, ap);
  result.converged = result.residual_norm <= tol_abs;
  return result;
}

KrylovResult bicgstab(const ApplyFn& apply, const std::vector<double>& rhs,
                      std::vector<double>& x, double tol_abs, int max_iter) {
  const std::size_t n = rhs.size();
  KrylovResult result;
  std::vector<double> r(n), r0(n), p(n), v(n), s(n), t(n);

  const double tol_inner = 0.5 * tol_abs;

  apply(x, v);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - v[i];
  r0 = r;
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  std::fill(p.begin(), p.end(), 0.0);
  std::fill(v.begin(), v.end(), 0.0);
  result.residual_history.push_back(euclidean_norm(r));

  for (int it = 0; it < max_iter; ++it) {
    if (euclidean_norm(r) <= tol_inner) break;
    const double rho_next = dot(r0, r);
    if (rho_next == 0.0 || !std::isfinite(rho_next)) break;  // breakdown
    const double beta = (rho_next / rho) * (alpha / omega);
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    apply(p, v);
    const double r0v = dot(r0, v);
    if (r0v == 0.0 || !std::isfinite(r0v)) break;
    alpha = rho_next / r0v;
    for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    if (euclidean_norm(s) <= tol_inner) {
      axpy(x, alpha, p);
      result.iterations = it + 1;
      result.residual_history.push_back(euclidean_norm(s));
      break;
    }
    apply(s, t);
    const double tt = dot(t, t);
    if (tt == 0.0 || !std::isfinite(tt)) break;
    omega = dot(t, s) / tt;
    for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i] + omega * s[i];
    for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
    rho = rho_next;
    result.iterations = it + 1;
    result.residual_history.push_back(euclidean_norm(r));
    if (omega == 0.0) break;
  }

  result.residual_norm = true_residual(apply, rhs, x, v);
  result.converged = result.residual_norm <= tol_abs;
  return result;
}

}  // namespace spde
