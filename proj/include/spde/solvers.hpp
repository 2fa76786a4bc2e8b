#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spde {

/// Matrix-free operator application y = A(x).
using ApplyFn =
    std::function<void(const std::vector<double>& x, std::vector<double>& y)>;

struct KrylovResult {
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;  // recomputed directly from A(x) - rhs
  std::vector<double> residual_history;
};

/// Raised when an iterative solve or estimation procedure fails to converge;
/// carries the residual/iterate history in the message.
class SolverFailure : public std::runtime_error {
 public:
  explicit SolverFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Conjugate gradients for symmetric positive definite A. Terminates when the
/// Euclidean residual norm drops to tol_abs.
KrylovResult conjugate_gradient(const ApplyFn& apply,
                                const std::vector<double>& rhs,
                                std::vector<double>& x, double tol_abs,
                                int max_iter);

/// BiCGStab for general (non-symmetric) A.
KrylovResult bicgstab(const ApplyFn& apply, const std::vector<double>& rhs,
                      std::vector<double>& x, double tol_abs, int max_iter);

double euclidean_norm(const std::vector<double>& x);

}  // namespace spde
