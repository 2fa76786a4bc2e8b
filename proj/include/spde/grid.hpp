#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace spde {

/// Evaluator of a function on the unit torus [0,1)^d.
using SpatialFn = std::function<double(std::span<const double> x)>;

/// Uniform periodic lattice on the unit torus [0,1)^d: n points per axis,
/// mesh width h = 1/n. All index arithmetic wraps modulo n on every axis.
struct GridSpec {
  int d = 1;  // spatial dimension
  int n = 2;  // points per axis

  /// Validates d >= 1, n >= 2 and that n^d fits the index range.
  static GridSpec make(int d, int n);

  double h() const { return 1.0 / static_cast<double>(n); }
  std::size_t total_points() const;
  /// Linear-index stride of the given axis (1-based, k_d varies fastest).
  std::size_t axis_stride(int axis) const;

  bool operator==(const GridSpec&) const = default;
};

/// Multi-index alpha = (alpha_1, ..., alpha_d) with |alpha| <= 2.
/// Orders above 2 are not used by any norm or operator here and are
/// rejected at construction.
class MultiIndex {
 public:
  explicit MultiIndex(std::vector<int> components);
  static MultiIndex zero(int d);
  static MultiIndex unit(int d, int axis);  // e_axis, axis 1-based

  int dim() const { return static_cast<int>(components_.size()); }
  int order() const { return order_; }
  int component(int axis) const { return components_.at(axis - 1); }
  std::span<const int> components() const { return components_; }

 private:
  std::vector<int> components_;
  int order_ = 0;
};

/// Real-valued function on a periodic lattice; values in row-major order
/// over (k_1, ..., k_d), entry value at the point z = h * k.
struct GridFn {
  GridSpec spec;
  std::vector<double> values;

  static GridFn zeros(GridSpec spec);
  static GridFn constant(GridSpec spec, double value);

  double& at_index(std::size_t i) { return values[i]; }
  double at_index(std::size_t i) const { return values[i]; }
  bool all_finite() const;
};

enum class DiffSign { forward, backward };

/// One-sided divided difference along `axis` (1-based) with periodic wrap:
/// forward  (w(z) = (v(z + h e_axis) - v(z)) / h),
/// backward (w(z) = (v(z) - v(z - h e_axis)) / h).
GridFn difference(const GridFn& v, int axis, DiffSign sign);

/// Composition of `difference` along each axis, alpha_i times; the zero
/// multi-index is the identity.
GridFn multi_difference(const GridFn& v, const MultiIndex& alpha,
                        DiffSign sign);

/// Discrete Sobolev norm of order m (0 <= m <= 2): square root of
/// sum over |alpha| <= m of sum_z |forward multi-difference|^2 h^d.
double sobolev_norm(const GridFn& v, int m);

/// h^d-weighted inner product sum_z u(z) v(z) h^d.
double inner_product(const GridFn& u, const GridFn& v);

/// Restriction of a continuum function to the lattice (the projection used
/// in all error definitions). Throws if the evaluator returns a non-finite
/// value at any lattice point.
GridFn restrict_to_grid(const SpatialFn& u, GridSpec spec);

/// h * |v|_{h,m} / |v|_{h,m-1} for m >= 1; throws on v identically zero.
double inverse_inequality_ratio(const GridFn& v, int m);

/// Derived admissible bound sqrt(1 + 4d) for inverse_inequality_ratio.
double inverse_inequality_bound(int d);

// Arithmetic on matching grids (mismatched GridSpec throws).
void require_same_spec(const GridFn& a, const GridFn& b);
GridFn& add_scaled(GridFn& y, double a, const GridFn& x);  // y += a*x
GridFn& scale(GridFn& y, double a);
GridFn& multiply_pointwise(GridFn& y, const GridFn& x);  // y *= x
GridFn linear_combination(double a, const GridFn& x, double b,
                          const GridFn& y);

/// Maximum absolute pointwise value.
double max_abs(const GridFn& v);

}  // namespace spde
