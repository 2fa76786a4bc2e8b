#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "spde/config.hpp"

using namespace spde;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("oracle problem file parses into the expected structure") {
  const char* text = R"json({
    "schema_version": 1,
    "name": "oracle_b1",
    "d": 1, "d1": 1, "T": 0.1,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "b": [{"k": 1, "alpha": [1], "field": {"type": "constant", "value": 1.0}}],
    "u0": {"type": "trig", "amplitude": 1.0, "wave": [1]},
    "exact_solution": {"type": "transport_mode", "b": 1.0}
  })json";
  const ProblemSpec p = problem_from_json_text(text);
  CHECK(p.d == 1);
  CHECK(p.d1 == 1);
  CHECK(p.T == 0.1);
  CHECK(p.name == "oracle_b1");
  REQUIRE(p.exact_transport_b.has_value());
  CHECK(*p.exact_transport_b == 1.0);
  CHECK(p.a.count({1, 1}) == 1);
  CHECK(p.b.count({1, 1}) == 1);
  CHECK_FALSE(p.nonlinearity.has_value());
  CHECK_FALSE(p.cache_key.empty());

  const std::vector<double> x{0.25};
  CHECK(p.initial_condition(x) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("trig coefficient registry evaluates as documented") {
  const char* text = R"json({
    "d": 2, "d1": 0, "T": 1.0,
    "a": [{"alpha": [1, 0], "beta": [0, 1],
           "field": {"type": "trig", "offset": 2.0, "amplitude": 0.5,
                      "wave": [1, 2], "phase": 0.25}}],
    "u0": {"type": "constant", "value": 1.0}
  })json";
  const ProblemSpec p = problem_from_json_text(text);
  const auto& field = p.a.at({1, 2});
  const std::vector<double> x{0.3, 0.4};
  const double expected =
      2.0 + 0.5 * std::sin(2.0 * kPi * (0.3 + 2.0 * 0.4) + 0.25);
  CHECK(field.evaluate(0.0, x) == doctest::Approx(expected).epsilon(1e-14));
  CHECK_FALSE(field.time_dependent);
  // The closed-form interval average of a steady field is the field itself.
  CHECK(field.interval_average(0.0, 0.5, x) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("time-modulated trig field has a closed-form average") {
  const char* text = R"json({
    "d": 1, "d1": 0, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "f": {"type": "trig", "amplitude": 1.0, "wave": [1], "time_frequency": 2.0},
    "u0": {"type": "constant", "value": 0.0}
  })json";
  const ProblemSpec p = problem_from_json_text(text);
  REQUIRE(p.forcing.has_value());
  CHECK(p.forcing->time_dependent);
  const std::vector<double> x{0.15};
  const double t0 = 0.1, t1 = 0.3;
  const double omega = 2.0 * kPi * 2.0;
  const double expected = std::sin(2.0 * kPi * 0.15) *
                          (std::sin(omega * t1) - std::sin(omega * t0)) /
                          (omega * (t1 - t0));
  CHECK(p.forcing->interval_average(t0, t1, x) ==
        doctest::Approx(expected).epsilon(1e-13));
  CHECK(p.forcing->time_hoelder_exponent.has_value());
}

TEST_CASE("nonlinearity registry") {
  const char* sine = R"json({
    "d": 1, "d1": 0, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "nonlinearity": {"type": "sine", "amplitude": 2.0},
    "u0": {"type": "constant", "value": 0.0}
  })json";
  const ProblemSpec p = problem_from_json_text(sine);
  REQUIRE(p.nonlinearity.has_value());
  CHECK(p.nonlinearity->lipschitz_r == 2.0);
  const std::vector<double> x{0.0};
  const std::vector<double> grad{0.0};
  CHECK(p.nonlinearity->evaluate(0.0, x, grad, 0.5) ==
        doctest::Approx(2.0 * std::sin(0.5)).epsilon(1e-14));

  const char* clip = R"json({
    "d": 1, "d1": 0, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "nonlinearity": {"type": "smooth_clip", "scale": 0.5},
    "u0": {"type": "constant", "value": 0.0}
  })json";
  const ProblemSpec q = problem_from_json_text(clip);
  REQUIRE(q.nonlinearity.has_value());
  CHECK(q.nonlinearity->evaluate(0.0, x, grad, 10.0) ==
        doctest::Approx(0.5 * std::tanh(20.0)).epsilon(1e-12));

  const char* none = R"json({
    "d": 1, "d1": 0, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "nonlinearity": {"type": "none"},
    "u0": {"type": "constant", "value": 0.0}
  })json";
  CHECK_FALSE(problem_from_json_text(none).nonlinearity.has_value());
}

TEST_CASE("malformed problem files are rejected") {
  CHECK_THROWS_AS(problem_from_json_text("not json"), std::invalid_argument);
  // multi-index too long
  CHECK_THROWS_AS(problem_from_json_text(R"json({
    "d": 1, "d1": 0, "T": 1.0,
    "a": [{"alpha": [2], "beta": [0], "field": {"type": "constant", "value": 1.0}}],
    "u0": {"type": "constant", "value": 0.0}
  })json"),
                  std::invalid_argument);
  // unknown coefficient type
  CHECK_THROWS_AS(problem_from_json_text(R"json({
    "d": 1, "d1": 0, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "polynomial"}}],
    "u0": {"type": "constant", "value": 0.0}
  })json"),
                  std::invalid_argument);
  // noise index out of range
  CHECK_THROWS_AS(problem_from_json_text(R"json({
    "d": 1, "d1": 1, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "b": [{"k": 2, "alpha": [1], "field": {"type": "constant", "value": 1.0}}],
    "u0": {"type": "constant", "value": 0.0}
  })json"),
                  std::invalid_argument);
  // degenerate exact-solution transport coefficient
  CHECK_THROWS_AS(problem_from_json_text(R"json({
    "d": 1, "d1": 1, "T": 1.0,
    "a": [{"alpha": [1], "beta": [1], "field": {"type": "constant", "value": 1.0}}],
    "b": [{"k": 1, "alpha": [1], "field": {"type": "constant", "value": 1.5}}],
    "u0": {"type": "trig"},
    "exact_solution": {"type": "transport_mode", "b": 1.5}
  })json"),
                  std::invalid_argument);
}

TEST_CASE("level list parsing") {
  const auto levels = parse_levels("8:1024,16:4096,32:16384");
  REQUIRE(levels.size() == 3);
  CHECK(levels[0].n == 8);
  CHECK(levels[0].m == 1024);
  CHECK(levels[2].n == 32);
  CHECK(levels[2].m == 16384);
  CHECK(parse_levels("64:0").front().m == 0);  // a zero-step simulate is valid
  CHECK_THROWS_AS(parse_levels(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_levels("8"), std::invalid_argument);
  CHECK_THROWS_AS(parse_levels("8:x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_levels("1:4"), std::invalid_argument);
}

TEST_CASE("study manifests reject zero-step levels") {
  RunManifest manifest;
  manifest.command = "study";
  manifest.problem_path = std::filesystem::path(TEST_PROBLEMS_DIR) / "heat.json";
  manifest.out_dir = "somewhere";
  manifest.levels = parse_levels("8:0,16:64,32:64");
  CHECK_THROWS_AS(manifest.validate(), std::invalid_argument);
}

TEST_CASE("manifest JSON fills unset keys") {
  RunManifest manifest;
  manifest.command = "study";
  apply_manifest_json(manifest, R"json({
    "problem": "problems/oracle_b1.json",
    "scheme": "explicit",
    "levels": "8:64,16:128,32:256",
    "replicas": 4,
    "seed": 11,
    "out": "out_dir",
    "q": 0.4
  })json");
  CHECK(manifest.problem_path == "problems/oracle_b1.json");
  CHECK(manifest.scheme == "explicit");
  CHECK(manifest.levels.size() == 3);
  CHECK(manifest.replicas == 4);
  CHECK(manifest.seed == 11);
  CHECK(manifest.out_dir == "out_dir");
  REQUIRE(manifest.q.has_value());
  CHECK(*manifest.q == 0.4);
}

TEST_CASE("manifest validation") {
  RunManifest manifest;
  manifest.command = "study";
  manifest.scheme = "implicit";
  manifest.levels = parse_levels("8:64,16:128");
  manifest.out_dir = "somewhere";
  manifest.problem_path = "does_not_exist.json";
  CHECK_THROWS_AS(manifest.validate(), std::invalid_argument);  // missing file

  manifest.problem_path = std::filesystem::path(TEST_PROBLEMS_DIR) / "oracle_b1.json";
  CHECK_THROWS_AS(manifest.validate(), std::invalid_argument);  // < 3 levels

  manifest.levels = parse_levels("8:64,16:128,32:256");
  CHECK_NOTHROW(manifest.validate());

  manifest.scheme = "midpoint";
  CHECK_THROWS_AS(manifest.validate(), std::invalid_argument);
}

TEST_CASE("shipped problem files load") {
  const std::filesystem::path dir(TEST_PROBLEMS_DIR);
  for (const char* name :
       {"oracle_b1.json", "heat.json", "quasilinear_sine.json", "degenerate_b.json"}) {
    const ProblemSpec p = problem_from_file(dir / name);
    CHECK(p.d == 1);
    CHECK_FALSE(p.cache_key.empty());
  }
  const ProblemSpec quasi = problem_from_file(dir / "quasilinear_sine.json");
  CHECK(quasi.nonlinearity.has_value());
  const ProblemSpec heat = problem_from_file(dir / "heat.json");
  CHECK(heat.d1 == 0);
  REQUIRE(heat.exact_transport_b.has_value());
  CHECK(*heat.exact_transport_b == 0.0);
}
