#include "spde/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "spde/summation.hpp"

namespace spde {

namespace {

// splitmix64 finalizer; the statistical quality is adequate for Gaussian
// sampling and the function is trivially splittable per (seed, i, k).
std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

std::uint64_t next64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  return mix64(state);
}

// Uniform in (0,1): top 53 bits plus half an ulp so log() never sees zero.
double to_unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Standard normal keyed by (seed, step, component) via Box-Muller.
double gaussian_at(std::uint64_t seed, std::uint64_t step, std::uint64_t component) {
  std::uint64_t state = mix64(seed ^ (0xD1B54A32D192ED03ull * (step + 1)));
  state = mix64(state ^ (0x2545F4914F6CDD1Dull * (component + 1)));
  const double u1 = to_unit_interval(next64(state));
  const double u2 = to_unit_interval(next64(state));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

double WienerPath::total(int k) const {
  if (k < 0 || k >= d1) throw std::invalid_argument("WienerPath::total: bad component");
  return pairwise_sum(static_cast<std::size_t>(steps), [&](std::size_t i) {
    return increments[i * static_cast<std::size_t>(d1) + static_cast<std::size_t>(k)];
  });
}

WienerPath sample_wiener_path(std::uint64_t seed, int d1, int steps, double T) {
  if (steps < 1) throw std::invalid_argument("sample_wiener_path: need at least one step");
  if (d1 < 0) throw std::invalid_argument("sample_wiener_path: negative noise dimension");
  if (!(T > 0.0)) throw std::invalid_argument("sample_wiener_path: horizon must be positive");
  WienerPath path;
  path.seed = seed;
  path.d1 = d1;
  path.steps = steps;
  path.horizon = T;
  path.increments.resize(static_cast<std::size_t>(steps) * static_cast<std::size_t>(d1));
  const double sd = std::sqrt(T / steps);
  for (int i = 0; i < steps; ++i) {
    for (int k = 0; k < d1; ++k) {
      path.increments[static_cast<std::size_t>(i) * d1 + k] =
          sd * gaussian_at(seed, static_cast<std::uint64_t>(i),
                           static_cast<std::uint64_t>(k));
    }
  }
  return path;
}

WienerPath coarsen(const WienerPath& path, int factor) {
  if (factor < 1) throw std::invalid_argument("coarsen: factor must be >= 1");
  if (path.steps % factor != 0) {
    throw std::invalid_argument("coarsen: factor does not divide the step count");
  }
  if (factor == 1) return path;
  WienerPath out;
  out.seed = path.seed;
  out.d1 = path.d1;
  out.steps = path.steps / factor;
  out.horizon = path.horizon;
  out.increments.resize(static_cast<std::size_t>(out.steps) *
                        static_cast<std::size_t>(path.d1));
  const std::size_t d1 = static_cast<std::size_t>(path.d1);
  for (int j = 0; j < out.steps; ++j) {
    const std::size_t base = static_cast<std::size_t>(j) * factor;
    for (std::size_t k = 0; k < d1; ++k) {
      out.increments[static_cast<std::size_t>(j) * d1 + k] =
          pairwise_sum(static_cast<std::size_t>(factor), [&](std::size_t i) {
            return path.increments[(base + i) * d1 + k];
          });
    }
  }
  return out;
}

std::uint64_t replica_seed(std::uint64_t base_seed, int index) {
  return mix64(base_seed ^ (0xA0761D6478BD642Full * (static_cast<std::uint64_t>(index) + 1)));
}

}  // namespace spde
