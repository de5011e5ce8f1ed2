#pragma once

#include "hal/types.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace hal::io {

/// JSON Lines dataset: one object per trajectory with "id", "times",
/// "states" (row per timestamp), optional "modes" and "event_times".
void write_dataset(std::ostream& os, const std::vector<Trajectory>& dataset);
void write_dataset(const std::filesystem::path& path, const std::vector<Trajectory>& dataset);

/// Validates the schema line by line; errors carry the 1-based line number.
[[nodiscard]] std::vector<Trajectory> read_dataset(std::istream& is);
[[nodiscard]] std::vector<Trajectory> read_dataset(const std::filesystem::path& path);

[[nodiscard]] std::string to_json_line(const Trajectory& traj);
[[nodiscard]] Trajectory trajectory_from_json_line(const std::string& line, std::size_t line_no = 1);

/// Segment index file: JSON Lines, {"id": ..., "segments": [[begin, end], ...]}
/// with end exclusive, plus an optional "recovered_modes" array.
void write_segments(const std::filesystem::path& path, const std::vector<Subtrajectory>& segments);
[[nodiscard]] std::vector<Subtrajectory> read_segments(const std::filesystem::path& path,
                                                       const std::vector<Trajectory>& dataset);

}  // namespace hal::io
