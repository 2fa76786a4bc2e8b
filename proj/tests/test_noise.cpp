#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "spde/io.hpp"
#include "spde/noise.hpp"
#include "spde/summation.hpp"

using namespace spde;

TEST_CASE("sampling is bitwise reproducible") {
  const WienerPath a = sample_wiener_path(42, 2, 128, 1.0);
  const WienerPath b = sample_wiener_path(42, 2, 128, 1.0);
  REQUIRE(a.increments.size() == b.increments.size());
  for (std::size_t i = 0; i < a.increments.size(); ++i) {
    CHECK(a.increments[i] == b.increments[i]);
  }
  const WienerPath c = sample_wiener_path(43, 2, 128, 1.0);
  bool any_different = false;
  for (std::size_t i = 0; i < a.increments.size(); ++i) {
    any_different = any_different || a.increments[i] != c.increments[i];
  }
  CHECK(any_different);
}

TEST_CASE("increment variance matches tau") {
  const int steps = 1000000;
  const double T = 1000.0;  // tau = 1e-3
  const WienerPath path = sample_wiener_path(7, 1, steps, T);
  const double tau = path.tau();
  const double mean = pairwise_sum(path.increments) / steps;
  const double var = pairwise_sum(static_cast<std::size_t>(steps), [&](std::size_t i) {
                       const double d = path.increments[i] - mean;
                       return d * d;
                     }) /
                     (steps - 1);
  // Standard error of the sample variance of a Gaussian: var * sqrt(2/(n-1)).
  const double se = tau * std::sqrt(2.0 / (steps - 1));
  CHECK(std::fabs(var - tau) <= 3.0 * se);
}

TEST_CASE("components are uncorrelated") {
  const int steps = 100000;
  const WienerPath path = sample_wiener_path(11, 2, steps, 1.0);
  double sum0 = 0.0, sum1 = 0.0, s00 = 0.0, s11 = 0.0, s01 = 0.0;
  for (int i = 0; i < steps; ++i) {
    const auto inc = path.step(i);
    sum0 += inc[0];
    sum1 += inc[1];
  }
  const double m0 = sum0 / steps, m1 = sum1 / steps;
  for (int i = 0; i < steps; ++i) {
    const auto inc = path.step(i);
    s00 += (inc[0] - m0) * (inc[0] - m0);
    s11 += (inc[1] - m1) * (inc[1] - m1);
    s01 += (inc[0] - m0) * (inc[1] - m1);
  }
  const double corr = s01 / std::sqrt(s00 * s11);
  CHECK(std::fabs(corr) < 4.0 / std::sqrt(static_cast<double>(steps)));
}

TEST_CASE("coarsening sums exact blocks") {
  WienerPath path;
  path.seed = 1;
  path.d1 = 1;
  path.steps = 4;
  path.horizon = 4.0;
  path.increments = {1.0, 2.0, 3.0, 4.0};

  const WienerPath same = coarsen(path, 1);
  CHECK(same.increments == path.increments);

  const WienerPath half = coarsen(path, 2);
  REQUIRE(half.steps == 2);
  CHECK(half.increments[0] == 3.0);
  CHECK(half.increments[1] == 7.0);
  CHECK(half.seed == path.seed);

  CHECK_THROWS_AS(coarsen(path, 3), std::invalid_argument);
}

TEST_CASE("nested coarsening is bitwise idempotent") {
  const WienerPath path = sample_wiener_path(5, 2, 64, 0.5);
  const WienerPath twice = coarsen(coarsen(path, 2), 2);
  const WienerPath once = coarsen(path, 4);
  REQUIRE(twice.increments.size() == once.increments.size());
  for (std::size_t i = 0; i < once.increments.size(); ++i) {
    CHECK(twice.increments[i] == once.increments[i]);
  }
}

TEST_CASE("totals telescope exactly across levels") {
  const WienerPath path = sample_wiener_path(9, 3, 1024, 2.0);
  for (int k = 0; k < 3; ++k) {
    const double fine_total = path.total(k);
    for (int factor : {2, 4, 8, 64, 1024}) {
      CHECK(coarsen(path, factor).total(k) == fine_total);
    }
  }
}

TEST_CASE("normalized increments pass a Kolmogorov-Smirnov check") {
  const int steps = 10000;
  const WienerPath path = sample_wiener_path(2024, 1, steps, 1.0);
  std::vector<double> z = path.increments;
  const double sd = std::sqrt(path.tau());
  for (double& x : z) x /= sd;
  std::sort(z.begin(), z.end());
  double d_stat = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double cdf = 0.5 * std::erfc(-z[static_cast<std::size_t>(i)] / std::sqrt(2.0));
    const double lo = static_cast<double>(i) / steps;
    const double hi = static_cast<double>(i + 1) / steps;
    d_stat = std::max({d_stat, std::fabs(cdf - lo), std::fabs(cdf - hi)});
  }
  // 1% critical value 1.628 / sqrt(n).
  CHECK(d_stat < 1.628 / std::sqrt(static_cast<double>(steps)));
}

TEST_CASE("replica seeds differ from the base seed and each other") {
  const std::uint64_t base = 77;
  CHECK(replica_seed(base, 0) != base);
  CHECK(replica_seed(base, 0) != replica_seed(base, 1));
  CHECK(replica_seed(base, 1) != replica_seed(base, 2));
}

TEST_CASE("path dump round-trips") {
  const auto dir = std::filesystem::temp_directory_path() / "spde_noise_io_test";
  std::filesystem::create_directories(dir);
  const WienerPath path = sample_wiener_path(31, 2, 16, 0.25);
  save_wiener_path(path, dir / "path");
  const WienerPath copy = load_wiener_path(dir / "path");
  CHECK(copy.seed == path.seed);
  CHECK(copy.d1 == path.d1);
  CHECK(copy.steps == path.steps);
  CHECK(copy.horizon == path.horizon);
  CHECK(copy.increments == path.increments);
  std::filesystem::remove_all(dir);
}
