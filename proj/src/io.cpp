#include "spde/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spde {

namespace {

using ordered_json = nlohmann::ordered_json;

void write_binary_doubles(const std::filesystem::path& path,
                          const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<double> read_binary_doubles(const std::filesystem::path& path,
                                        std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values(expected_count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(expected_count * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(expected_count * sizeof(double))) {
    throw std::runtime_error("truncated payload in " + path.string());
  }
  char probe = 0;
  if (in.read(&probe, 1)) {
    throw std::runtime_error("trailing bytes in " + path.string());
  }
  return values;
}

ordered_json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  ordered_json j;
  in >> j;
  return j;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

void save_grid_fn(const GridFn& fn, const std::filesystem::path& base) {
  ordered_json header;
  header["schema_version"] = 1;
  header["d"] = fn.spec.d;
  header["n"] = fn.spec.n;
  write_text_file(base.string() + ".json", header.dump(2) + "\n");
  write_binary_doubles(base.string() + ".bin", fn.values);
}

GridFn load_grid_fn(const std::filesystem::path& base) {
  const ordered_json header = parse_json_file(base.string() + ".json");
  const GridSpec spec = GridSpec::make(header.at("d").get<int>(),
                                       header.at("n").get<int>());
  GridFn fn = GridFn::zeros(spec);
  fn.values = read_binary_doubles(base.string() + ".bin", spec.total_points());
  return fn;
}

void save_wiener_path(const WienerPath& path, const std::filesystem::path& base) {
  ordered_json header;
  header["schema_version"] = 1;
  header["seed"] = path.seed;
  header["d1"] = path.d1;
  header["steps"] = path.steps;
  header["horizon"] = path.horizon;
  write_text_file(base.string() + ".json", header.dump(2) + "\n");
  write_binary_doubles(base.string() + ".bin", path.increments);
}

WienerPath load_wiener_path(const std::filesystem::path& base) {
  const ordered_json header = parse_json_file(base.string() + ".json");
  WienerPath path;
  path.seed = header.at("seed").get<std::uint64_t>();
  path.d1 = header.at("d1").get<int>();
  path.steps = header.at("steps").get<int>();
  path.horizon = header.at("horizon").get<double>();
  path.increments = read_binary_doubles(
      base.string() + ".bin",
      static_cast<std::size_t>(path.steps) * static_cast<std::size_t>(path.d1));
  return path;
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& base) {
  ordered_json manifest;
  manifest["schema_version"] = 1;
  manifest["d"] = traj.grid.d;
  manifest["n"] = traj.grid.n;
  manifest["scheme"] =
      traj.config.kind == SchemeKind::implicit_euler ? "implicit" : "explicit";
  manifest["steps"] = traj.config.steps;
  manifest["horizon"] = traj.config.horizon;
  manifest["solver_tol"] = traj.config.solver_tol;
  manifest["seed"] = traj.path_seed;
  manifest["store_stride"] = traj.store_stride;
  manifest["stored_steps"] = traj.stored_steps;
  manifest["diverged"] = traj.diverged;
  manifest["diverged_at_step"] = traj.diverged_at_step;
  write_text_file(base.string() + ".json", manifest.dump(2) + "\n");

  std::vector<double> frames;
  frames.reserve(traj.states.size() * traj.grid.total_points());
  for (const GridFn& state : traj.states) {
    frames.insert(frames.end(), state.values.begin(), state.values.end());
  }
  write_binary_doubles(base.string() + ".bin", frames);
}

Trajectory load_trajectory(const std::filesystem::path& base) {
  const ordered_json manifest = parse_json_file(base.string() + ".json");
  if (manifest.at("schema_version").get<int>() != 1) {
    throw std::runtime_error("unsupported trajectory schema in " + base.string());
  }
  Trajectory traj;
  traj.grid = GridSpec::make(manifest.at("d").get<int>(), manifest.at("n").get<int>());
  traj.config.kind = manifest.at("scheme").get<std::string>() == "implicit"
                         ? SchemeKind::implicit_euler
                         : SchemeKind::explicit_euler;
  traj.config.steps = manifest.at("steps").get<int>();
  traj.config.horizon = manifest.at("horizon").get<double>();
  traj.config.solver_tol = manifest.at("solver_tol").get<double>();
  traj.path_seed = manifest.at("seed").get<std::uint64_t>();
  traj.store_stride = manifest.at("store_stride").get<int>();
  traj.stored_steps = manifest.at("stored_steps").get<std::vector<int>>();
  traj.diverged = manifest.at("diverged").get<bool>();
  traj.diverged_at_step = manifest.at("diverged_at_step").get<int>();

  const std::size_t points = traj.grid.total_points();
  const std::vector<double> frames = read_binary_doubles(
      base.string() + ".bin", points * traj.stored_steps.size());
  traj.states.reserve(traj.stored_steps.size());
  for (std::size_t f = 0; f < traj.stored_steps.size(); ++f) {
    GridFn state = GridFn::zeros(traj.grid);
    std::copy(frames.begin() + static_cast<std::ptrdiff_t>(f * points),
              frames.begin() + static_cast<std::ptrdiff_t>((f + 1) * points),
              state.values.begin());
    traj.states.push_back(std::move(state));
  }
  return traj;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

}  // namespace spde
