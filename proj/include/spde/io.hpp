#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "spde/grid.hpp"
#include "spde/noise.hpp"
#include "spde/schemes.hpp"

namespace spde {

/// Stable 64-bit content hash (FNV-1a) used for cache keys.
std::uint64_t fnv1a64(std::string_view data);

/// Grid function as flat binary doubles plus a JSON header {d, n}: writes
/// base.bin and base.json.
void save_grid_fn(const GridFn& fn, const std::filesystem::path& base);
GridFn load_grid_fn(const std::filesystem::path& base);

/// Wiener path dump for failure reproduction: base.bin + base.json header.
void save_wiener_path(const WienerPath& path, const std::filesystem::path& base);
WienerPath load_wiener_path(const std::filesystem::path& base);

/// Trajectory frames (concatenated stored states) plus a JSON manifest.
void save_trajectory(const Trajectory& traj, const std::filesystem::path& base);
/// Throws std::runtime_error on a structurally corrupt entry.
Trajectory load_trajectory(const std::filesystem::path& base);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Doubles formatted with round-trip precision for CSV output.
std::string format_double(double value);

}  // namespace spde
