#include "spde/config.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "spde/io.hpp"

namespace spde {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& what) {
  throw std::invalid_argument("problem file: " + what);
}

// "constant": {value}
// "trig":     offset + amplitude * sin(2 pi wave.x + phase) * cos(2 pi time_frequency t)
CoefficientField field_from_json(const json& j, int d) {
  if (!j.is_object() || !j.contains("type")) fail("coefficient must be an object with a type");
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") {
    return CoefficientField::constant(j.at("value").get<double>());
  }
  if (type == "trig") {
    const double offset = j.value("offset", 0.0);
    const double amplitude = j.value("amplitude", 1.0);
    const double phase = j.value("phase", 0.0);
    const double time_frequency = j.value("time_frequency", 0.0);
    std::vector<double> wave(static_cast<std::size_t>(d), 0.0);
    if (j.contains("wave")) {
      const auto w = j.at("wave").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != d) fail("trig wave vector has wrong dimension");
      wave = w;
    } else {
      wave[0] = 1.0;
    }
    const double two_pi = 2.0 * std::numbers::pi;
    CoefficientField field;
    field.time_dependent = time_frequency != 0.0;
    field.evaluate = [=](double t, std::span<const double> x) {
      double angle = phase;
      for (std::size_t i = 0; i < wave.size(); ++i) angle += two_pi * wave[i] * x[i];
      return offset + amplitude * std::sin(angle) * std::cos(two_pi * time_frequency * t);
    };
    field.interval_average = [=](double t0, double t1, std::span<const double> x) {
      double angle = phase;
      for (std::size_t i = 0; i < wave.size(); ++i) angle += two_pi * wave[i] * x[i];
      double modulation;
      if (time_frequency == 0.0 || t1 == t0) {
        modulation = std::cos(two_pi * time_frequency * t0);
      } else {
        const double omega = two_pi * time_frequency;
        modulation = (std::sin(omega * t1) - std::sin(omega * t0)) / (omega * (t1 - t0));
      }
      return offset + amplitude * std::sin(angle) * modulation;
    };
    if (field.time_dependent) {
      // cos(omega t) is Lipschitz in t, hence 1/2-Hoelder on [0,T].
      field.time_hoelder_exponent = 0.5;
    }
    return field;
  }
  fail("unknown coefficient type '" + type + "'");
}

int slot_from_multi_index(const json& j, int d, const char* name) {
  const auto idx = j.get<std::vector<int>>();
  if (static_cast<int>(idx.size()) != d) fail(std::string(name) + " has wrong dimension");
  int slot = 0, order = 0;
  for (int axis = 0; axis < d; ++axis) {
    if (idx[static_cast<std::size_t>(axis)] < 0) fail(std::string(name) + " has a negative entry");
    if (idx[static_cast<std::size_t>(axis)] > 0) {
      order += idx[static_cast<std::size_t>(axis)];
      slot = axis + 1;
    }
  }
  if (order > 1) fail(std::string(name) + " must have length <= 1");
  return order == 0 ? 0 : slot;
}

std::optional<Nonlinearity> nonlinearity_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "none") return std::nullopt;
  Nonlinearity f;
  if (type == "sine") {
    const double amplitude = j.value("amplitude", 1.0);
    f.evaluate = [amplitude](double, std::span<const double>, std::span<const double>,
                             double r) { return amplitude * std::sin(r); };
    f.lipschitz_r = std::fabs(amplitude);
    f.lipschitz_p = 0.0;
    return f;
  }
  if (type == "smooth_clip") {
    const double scale = j.value("scale", 1.0);
    if (!(scale > 0.0)) fail("smooth_clip scale must be positive");
    f.evaluate = [scale](double, std::span<const double>, std::span<const double>,
                         double r) { return scale * std::tanh(r / scale); };
    f.lipschitz_r = 1.0;
    f.lipschitz_p = 0.0;
    return f;
  }
  fail("unknown nonlinearity '" + type + "'");
}

}  // namespace

ProblemSpec problem_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    fail(std::string("invalid JSON: ") + err.what());
  }
  if (j.value("schema_version", 1) != 1) fail("unsupported schema_version");

  ProblemSpec problem;
  problem.d = j.at("d").get<int>();
  problem.d1 = j.value("d1", 0);
  problem.T = j.at("T").get<double>();
  problem.name = j.value("name", "");

  if (j.contains("a")) {
    for (const json& entry : j.at("a")) {
      const int as = slot_from_multi_index(entry.at("alpha"), problem.d, "alpha");
      const int bs = slot_from_multi_index(entry.at("beta"), problem.d, "beta");
      problem.a[{as, bs}] = field_from_json(entry.at("field"), problem.d);
    }
  }
  if (j.contains("b")) {
    for (const json& entry : j.at("b")) {
      const int k = entry.at("k").get<int>();
      if (k < 1 || k > problem.d1) fail("noise coefficient index k out of range");
      const int as = slot_from_multi_index(entry.at("alpha"), problem.d, "alpha");
      problem.b[{k, as}] = field_from_json(entry.at("field"), problem.d);
    }
  }
  if (j.contains("f")) problem.forcing = field_from_json(j.at("f"), problem.d);
  if (j.contains("g")) {
    for (const json& entry : j.at("g")) {
      const int k = entry.at("k").get<int>();
      if (k < 1 || k > problem.d1) fail("additive forcing index k out of range");
      problem.g[k] = field_from_json(entry.at("field"), problem.d);
    }
  }
  if (j.contains("nonlinearity")) {
    problem.nonlinearity = nonlinearity_from_json(j.at("nonlinearity"));
  }

  const CoefficientField u0 = field_from_json(j.at("u0"), problem.d);
  problem.initial_condition = [u0](std::span<const double> x) {
    return u0.evaluate(0.0, x);
  };

  if (j.contains("exact_solution")) {
    const json& exact = j.at("exact_solution");
    const std::string type = exact.at("type").get<std::string>();
    if (type != "transport_mode") fail("unknown exact_solution type '" + type + "'");
    problem.exact_transport_b = exact.at("b").get<double>();
  }

  // Canonical (key-sorted, whitespace-free) dump keys the reference cache.
  problem.cache_key = json::parse(text).dump();
  problem.validate();
  return problem;
}

ProblemSpec problem_from_file(const std::filesystem::path& path) {
  return problem_from_json_text(read_text_file(path));
}

std::vector<StudyLevel> parse_levels(const std::string& text) {
  std::vector<StudyLevel> levels;
  std::istringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const std::size_t colon = item.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("levels: expected N:m entries, got '" + item + "'");
    }
    StudyLevel level;
    try {
      level.n = std::stoi(item.substr(0, colon));
      level.m = std::stoi(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("levels: cannot parse '" + item + "'");
    }
    if (level.n < 2 || level.m < 0) {
      throw std::invalid_argument("levels: need N >= 2 and m >= 0 in '" + item + "'");
    }
    levels.push_back(level);
  }
  if (levels.empty()) throw std::invalid_argument("levels: empty list");
  return levels;
}

void RunManifest::validate() const {
  if (command != "check" && command != "simulate" && command != "study") {
    throw std::invalid_argument("manifest: unknown command '" + command + "'");
  }
  if (problem_path.empty()) throw std::invalid_argument("manifest: missing problem file");
  if (!std::filesystem::exists(problem_path)) {
    throw std::invalid_argument("manifest: problem file does not exist: " +
                                problem_path.string());
  }
  if (scheme != "implicit" && scheme != "explicit" && scheme != "both") {
    throw std::invalid_argument("manifest: scheme must be implicit, explicit or both");
  }
  if (levels.empty()) throw std::invalid_argument("manifest: no levels given");
  if (command == "study") {
    if (levels.size() < 3) {
      throw std::invalid_argument("manifest: a study needs at least 3 levels");
    }
    for (const StudyLevel& level : levels) {
      if (level.m < 1) throw std::invalid_argument("manifest: study levels need m >= 1");
    }
  }
  if (replicas < 1) throw std::invalid_argument("manifest: replicas must be >= 1");
  if (command != "check" && out_dir.empty()) {
    throw std::invalid_argument("manifest: missing output directory");
  }
  if (forcing_mode != "point" && forcing_mode != "average") {
    throw std::invalid_argument("manifest: forcing_mode must be point or average");
  }
}

void apply_manifest_json(RunManifest& manifest, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw std::invalid_argument(std::string("manifest file: invalid JSON: ") + err.what());
  }
  if (j.contains("problem")) manifest.problem_path = j.at("problem").get<std::string>();
  if (j.contains("scheme")) manifest.scheme = j.at("scheme").get<std::string>();
  if (j.contains("levels")) manifest.levels = parse_levels(j.at("levels").get<std::string>());
  if (j.contains("replicas")) manifest.replicas = j.at("replicas").get<int>();
  if (j.contains("seed")) manifest.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out")) manifest.out_dir = j.at("out").get<std::string>();
  if (j.contains("q")) manifest.q = j.at("q").get<double>();
  if (j.contains("solver_tol")) manifest.solver_tol = j.at("solver_tol").get<double>();
  if (j.contains("threads")) manifest.threads = j.at("threads").get<int>();
  if (j.contains("forcing_mode")) {
    manifest.forcing_mode = j.at("forcing_mode").get<std::string>();
  }
}

std::vector<SchemeKind> scheme_kinds(const RunManifest& manifest) {
  if (manifest.scheme == "implicit") return {SchemeKind::implicit_euler};
  if (manifest.scheme == "explicit") return {SchemeKind::explicit_euler};
  return {SchemeKind::implicit_euler, SchemeKind::explicit_euler};
}

ForcingTimeMode forcing_mode_of(const RunManifest& manifest) {
  return manifest.forcing_mode == "average" ? ForcingTimeMode::interval_average
                                            : ForcingTimeMode::point_value;
}

}  // namespace spde
