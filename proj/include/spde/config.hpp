#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spde/experiments.hpp"
#include "spde/problem.hpp"
#include "spde/schemes.hpp"

namespace spde {

/// Builds a ProblemSpec from the versioned JSON problem format. Coefficients,
/// the nonlinearity and the initial condition come from the built-in registry
/// ("constant" / "trig" fields; "none" / "sine" / "smooth_clip"
/// nonlinearities); arbitrary user code is out of scope. Throws
/// std::invalid_argument on malformed input.
ProblemSpec problem_from_json_text(const std::string& text);
ProblemSpec problem_from_file(const std::filesystem::path& path);

/// Parses a level list of the form "N:m,N:m,...".
std::vector<StudyLevel> parse_levels(const std::string& text);

/// Everything a CLI command needs to run; assembled from flags and an
/// optional JSON config file (flags take precedence).
struct RunManifest {
  std::string command;  // "check", "simulate" or "study"
  std::filesystem::path problem_path;
  std::string scheme = "implicit";  // "implicit", "explicit" or "both"
  std::vector<StudyLevel> levels;
  int replicas = 16;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  std::optional<double> q;  // absolute explicit-margin target
  double solver_tol = 1e-10;
  int threads = 0;
  std::string forcing_mode = "point";  // "point" or "average"

  void validate() const;
};

/// Applies the keys of a JSON config file onto a manifest (only keys present
/// in the file are touched).
void apply_manifest_json(RunManifest& manifest, const std::string& text);

std::vector<SchemeKind> scheme_kinds(const RunManifest& manifest);
ForcingTimeMode forcing_mode_of(const RunManifest& manifest);

}  // namespace spde
