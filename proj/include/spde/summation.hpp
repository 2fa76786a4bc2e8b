#pragma once

#include <cstddef>
#include <span>

namespace spde {

namespace detail {

// Fixed binary association: split each range at the largest power of two
// below its length. Sums over aligned sub-ranges compose exactly, so block
// aggregates at different coarsening levels are bit-identical (relied on by
// WienerPath coarsening and by the replica RMS reduction).
template <class F>
double pairwise_sum_impl(std::size_t lo, std::size_t hi, const F& term) {
  const std::size_t n = hi - lo;
  if (n == 1) return term(lo);
  if (n == 2) return term(lo) + term(lo + 1);
  std::size_t half = 1;
  while (half * 2 < n) half *= 2;
  return pairwise_sum_impl(lo, lo + half, term) +
         pairwise_sum_impl(lo + half, hi, term);
}

}  // namespace detail

/// Deterministic pairwise sum of term(0..n-1).
template <class F>
double pairwise_sum(std::size_t n, const F& term) {
  if (n == 0) return 0.0;
  return detail::pairwise_sum_impl(0, n, term);
}

inline double pairwise_sum(std::span<const double> xs) {
  return pairwise_sum(xs.size(), [&](std::size_t i) { return xs[i]; });
}

}  // namespace spde
