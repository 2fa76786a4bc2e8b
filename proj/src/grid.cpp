#include "spde/grid.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "spde/summation.hpp"

namespace spde {

GridSpec GridSpec::make(int d, int n) {
  if (d < 1) throw std::invalid_argument("GridSpec: dimension must be >= 1");
  if (n < 2) throw std::invalid_argument("GridSpec: need at least 2 points per axis");
  // n^d must fit in size_t with headroom for strides.
  long double total = 1.0L;
  for (int i = 0; i < d; ++i) {
    total *= static_cast<long double>(n);
    if (total > 1e15L) {
      throw std::invalid_argument("GridSpec: n^d exceeds the supported index range");
    }
  }
  return GridSpec{d, n};
}

std::size_t GridSpec::total_points() const {
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
  return total;
}

std::size_t GridSpec::axis_stride(int axis) const {
  if (axis < 1 || axis > d) {
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for dimension " + std::to_string(d));
  }
  std::size_t stride = 1;
  for (int i = 0; i < d - axis; ++i) stride *= static_cast<std::size_t>(n);
  return stride;
}

MultiIndex::MultiIndex(std::vector<int> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("MultiIndex: empty component list");
  }
  for (int c : components_) {
    if (c < 0) throw std::invalid_argument("MultiIndex: negative component");
    order_ += c;
  }
  if (order_ > 2) {
    throw std::invalid_argument("MultiIndex: order " + std::to_string(order_) +
                                " exceeds the supported maximum 2");
  }
}

MultiIndex MultiIndex::zero(int d) { return MultiIndex(std::vector<int>(d, 0)); }

MultiIndex MultiIndex::unit(int d, int axis) {
  if (axis < 1 || axis > d) throw std::invalid_argument("MultiIndex::unit: bad axis");
  std::vector<int> c(d, 0);
  c[axis - 1] = 1;
  return MultiIndex(std::move(c));
}

GridFn GridFn::zeros(GridSpec spec) {
  return GridFn{spec, std::vector<double>(spec.total_points(), 0.0)};
}

GridFn GridFn::constant(GridSpec spec, double value) {
  return GridFn{spec, std::vector<double>(spec.total_points(), value)};
}

bool GridFn::all_finite() const {
  for (double x : values) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace {

void difference_into(const GridFn& v, int axis, DiffSign sign, GridFn& out) {
  const int n = v.spec.n;
  const double inv_h = static_cast<double>(n);
  const std::size_t stride = v.spec.axis_stride(axis);
  const std::size_t total = v.spec.total_points();
  const std::size_t wrap = stride * static_cast<std::size_t>(n - 1);
  if (sign == DiffSign::forward) {
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t c = (i / stride) % static_cast<std::size_t>(n);
      const std::size_t j = (c + 1 < static_cast<std::size_t>(n)) ? i + stride : i - wrap;
      out.values[i] = (v.values[j] - v.values[i]) * inv_h;
    }
  } else {
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t c = (i / stride) % static_cast<std::size_t>(n);
      const std::size_t j = (c > 0) ? i - stride : i + wrap;
      out.values[i] = (v.values[i] - v.values[j]) * inv_h;
    }
  }
}

}  // namespace

GridFn difference(const GridFn& v, int axis, DiffSign sign) {
  GridFn out = GridFn::zeros(v.spec);
  difference_into(v, axis, sign, out);
  return out;
}

GridFn multi_difference(const GridFn& v, const MultiIndex& alpha, DiffSign sign) {
  if (alpha.dim() != v.spec.d) {
    throw std::invalid_argument("multi_difference: multi-index dimension mismatch");
  }
  if (alpha.order() == 0) return v;
  GridFn out = v;
  GridFn tmp = GridFn::zeros(v.spec);
  for (int axis = 1; axis <= v.spec.d; ++axis) {
    for (int rep = 0; rep < alpha.component(axis); ++rep) {
      difference_into(out, axis, sign, tmp);
      std::swap(out.values, tmp.values);
    }
  }
  return out;
}

namespace {

// Enumerates all multi-indices with |alpha| <= max_order in a fixed order.
template <class Fn>
void for_each_multi_index(int d, int max_order, const Fn& fn) {
  std::vector<int> c(d, 0);
  const auto recurse = [&](auto&& self, int axis, int remaining) -> void {
    if (axis == d) {
      fn(c);
      return;
    }
    for (int k = 0; k <= remaining; ++k) {
      c[axis] = k;
      self(self, axis + 1, remaining - k);
    }
    c[axis] = 0;
  };
  recurse(recurse, 0, max_order);
}

double sum_of_squares(const GridFn& v) {
  return pairwise_sum(v.values.size(),
                      [&](std::size_t i) { return v.values[i] * v.values[i]; });
}

}  // namespace

double sobolev_norm(const GridFn& v, int m) {
  if (m < 0 || m > 2) {
    throw std::invalid_argument("sobolev_norm: order must be in [0,2]");
  }
  const double cell = std::pow(v.spec.h(), v.spec.d);
  if (m == 0) return std::sqrt(sum_of_squares(v) * cell);
  double total = 0.0;
  for_each_multi_index(v.spec.d, m, [&](const std::vector<int>& c) {
    MultiIndex alpha{std::vector<int>(c)};
    if (alpha.order() == 0) {
      total += sum_of_squares(v) * cell;
    } else {
      total += sum_of_squares(multi_difference(v, alpha, DiffSign::forward)) * cell;
    }
  });
  return std::sqrt(total);
}

double inner_product(const GridFn& u, const GridFn& v) {
  require_same_spec(u, v);
  const double cell = std::pow(u.spec.h(), u.spec.d);
  return pairwise_sum(u.values.size(),
                      [&](std::size_t i) { return u.values[i] * v.values[i]; }) *
         cell;
}

GridFn restrict_to_grid(const SpatialFn& u, GridSpec spec) {
  GridFn out = GridFn::zeros(spec);
  const double h = spec.h();
  std::vector<double> x(spec.d, 0.0);
  const std::size_t total = spec.total_points();
  for (std::size_t i = 0; i < total; ++i) {
    for (int axis = 1; axis <= spec.d; ++axis) {
      const std::size_t k = (i / spec.axis_stride(axis)) % static_cast<std::size_t>(spec.n);
      x[axis - 1] = static_cast<double>(k) * h;
    }
    const double value = u(x);
    if (!std::isfinite(value)) {
      throw std::invalid_argument("restrict_to_grid: evaluator returned a non-finite value");
    }
    out.values[i] = value;
  }
  return out;
}

double inverse_inequality_ratio(const GridFn& v, int m) {
  if (m < 1 || m > 2) {
    throw std::invalid_argument("inverse_inequality_ratio: order must be 1 or 2");
  }
  const double lower = sobolev_norm(v, m - 1);
  if (lower == 0.0) {
    throw std::domain_error("inverse_inequality_ratio: undefined for the zero function");
  }
  return v.spec.h() * sobolev_norm(v, m) / lower;
}

double inverse_inequality_bound(int d) {
  if (d < 1) throw std::invalid_argument("inverse_inequality_bound: bad dimension");
  return std::sqrt(1.0 + 4.0 * static_cast<double>(d));
}

void require_same_spec(const GridFn& a, const GridFn& b) {
  if (!(a.spec == b.spec)) {
    throw std::invalid_argument("grid functions live on different grids");
  }
}

GridFn& add_scaled(GridFn& y, double a, const GridFn& x) {
  require_same_spec(y, x);
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += a * x.values[i];
  return y;
}

GridFn& scale(GridFn& y, double a) {
  for (double& v : y.values) v *= a;
  return y;
}

GridFn& multiply_pointwise(GridFn& y, const GridFn& x) {
  require_same_spec(y, x);
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] *= x.values[i];
  return y;
}

GridFn linear_combination(double a, const GridFn& x, double b, const GridFn& y) {
  require_same_spec(x, y);
  GridFn out = GridFn::zeros(x.spec);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = a * x.values[i] + b * y.values[i];
  }
  return out;
}

double max_abs(const GridFn& v) {
  double m = 0.0;
  for (double x : v.values) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace spde
