#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace spde {

/// Brownian increments of a d1-dimensional Wiener process on a uniform
/// partition of [0,T]: entry (i,k) = W^k(t_{i+1}) - W^k(t_i). Increments are
/// a pure function of (seed, i, k); coarsening sums existing increments and
/// never resamples, so every resolution in a study is driven by one path.
struct WienerPath {
  std::uint64_t seed = 0;
  int d1 = 0;
  int steps = 0;  // number of increments
  double horizon = 0.0;

  /// Row-major [steps][d1].
  std::vector<double> increments;

  double tau() const { return horizon / steps; }
  std::span<const double> step(int i) const {
    return {increments.data() + static_cast<std::size_t>(i) * d1,
            static_cast<std::size_t>(d1)};
  }
  /// W^k(T): pairwise sum of column k (bit-identical at every coarsening
  /// level for power-of-two factors).
  double total(int k) const;
};

/// Samples i.i.d. Normal(0, T/steps) increments from a splittable
/// counter-based generator keyed by (seed, step, component); the result is
/// independent of evaluation order and bitwise reproducible.
WienerPath sample_wiener_path(std::uint64_t seed, int d1, int steps, double T);

/// Exact coarsening: each coarse increment is the pairwise sum of its
/// `factor` constituent fine increments. `factor` must divide `steps`.
WienerPath coarsen(const WienerPath& path, int factor);

/// Derived seed for Monte Carlo replica `index` (documented mixing of the
/// base seed, so replicas never share generator state).
std::uint64_t replica_seed(std::uint64_t base_seed, int index);

}  // namespace spde
