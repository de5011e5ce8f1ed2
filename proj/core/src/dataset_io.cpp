#include "hal/dataset_io.hpp"

#include "hal/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <unordered_map>

namespace hal::io {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::Schema, "line " + std::to_string(line_no) + ": " + msg);
}

std::vector<double> number_array(const json& j, const char* key, std::size_t line_no) {
  if (!j.is_array()) schema_error(line_no, std::string("\"") + key + "\" must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) schema_error(line_no, std::string("\"") + key + "\" must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  return is;
}

}  // namespace

std::string to_json_line(const Trajectory& traj) {
  json j;
  j["id"] = traj.id;
  j["times"] = traj.times;
  json states = json::array();
  for (const auto& x : traj.states) states.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  j["states"] = std::move(states);
  if (traj.modes) {
    std::vector<int> modes;
    modes.reserve(traj.modes->size());
    for (auto m : *traj.modes) modes.push_back(m.index);
    j["modes"] = modes;
  }
  if (traj.event_times) j["event_times"] = *traj.event_times;
  return j.dump();
}

Trajectory trajectory_from_json_line(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    schema_error(line_no, std::string("invalid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) schema_error(line_no, "expected a JSON object");
  Trajectory t;
  if (!j.contains("id")) schema_error(line_no, "missing \"id\"");
  if (j["id"].is_string()) {
    t.id = j["id"].get<std::string>();
  } else if (j["id"].is_number_integer()) {
    t.id = std::to_string(j["id"].get<long long>());
  } else {
    schema_error(line_no, "\"id\" must be a string or integer");
  }
  if (!j.contains("times")) schema_error(line_no, "missing \"times\"");
  if (!j.contains("states")) schema_error(line_no, "missing \"states\"");
  t.times = number_array(j["times"], "times", line_no);
  const auto& states = j["states"];
  if (!states.is_array()) schema_error(line_no, "\"states\" must be an array of arrays");
  if (states.size() != t.times.size()) schema_error(line_no, "\"states\" and \"times\" differ in length");
  std::size_t dim = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto row = number_array(states[i], "states", line_no);
    if (i == 0) dim = row.size();
    if (row.size() != dim || dim == 0) schema_error(line_no, "inconsistent state dimension at row " + std::to_string(i));
    t.states.emplace_back(Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  for (std::size_t i = 1; i < t.times.size(); ++i) {
    if (t.times[i] < t.times[i - 1]) schema_error(line_no, "\"times\" must be non-decreasing");
  }
  if (j.contains("modes") && !j["modes"].is_null()) {
    const auto& m = j["modes"];
    if (!m.is_array() || m.size() != t.times.size()) schema_error(line_no, "\"modes\" must match \"times\" in length");
    std::vector<ModeId> modes;
    for (const auto& v : m) {
      if (!v.is_number_integer() || v.get<long long>() < 0) schema_error(line_no, "\"modes\" must be non-negative integers");
      modes.emplace_back(v.get<int>());
    }
    t.modes = std::move(modes);
  }
  if (j.contains("event_times") && !j["event_times"].is_null()) {
    t.event_times = number_array(j["event_times"], "event_times", line_no);
  }
  return t;
}

void write_dataset(std::ostream& os, const std::vector<Trajectory>& dataset) {
  for (const auto& t : dataset) os << to_json_line(t) << '\n';
}

void write_dataset(const std::filesystem::path& path, const std::vector<Trajectory>& dataset) {
  auto os = open_out(path);
  write_dataset(os, dataset);
}

std::vector<Trajectory> read_dataset(std::istream& is) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(trajectory_from_json_line(line, line_no));
  }
  return out;
}

std::vector<Trajectory> read_dataset(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_dataset(is);
}

void write_segments(const std::filesystem::path& path, const std::vector<Subtrajectory>& segments) {
  auto os = open_out(path);
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const Subtrajectory*>> groups;
  for (const auto& s : segments) {
    auto [it, inserted] = groups.try_emplace(s.parent_id);
    if (inserted) order.push_back(s.parent_id);
    it->second.push_back(&s);
  }
  for (const auto& id : order) {
    json j;
    j["id"] = id;
    json ranges = json::array();
    json modes = json::array();
    bool any_mode = false;
    for (const auto* s : groups[id]) {
      ranges.push_back({s->start_idx, s->end_idx});
      if (s->recovered_mode) {
        any_mode = true;
        modes.push_back(s->recovered_mode->index);
      } else {
        modes.push_back(nullptr);
      }
    }
    j["segments"] = std::move(ranges);
    if (any_mode) j["recovered_modes"] = std::move(modes);
    os << j.dump() << '\n';
  }
}

std::vector<Subtrajectory> read_segments(const std::filesystem::path& path, const std::vector<Trajectory>& dataset) {
  std::unordered_map<std::string, const Trajectory*> by_id;
  for (const auto& t : dataset) by_id.emplace(t.id, &t);
  auto is = open_in(path);
  std::vector<Subtrajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      schema_error(line_no, std::string("invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("segments") || !j["segments"].is_array()) {
      schema_error(line_no, "expected {\"id\": ..., \"segments\": [[begin, end], ...]}");
    }
    const std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    const auto it = by_id.find(id);
    if (it == by_id.end()) schema_error(line_no, "segment file references unknown trajectory '" + id + "'");
    const auto& ranges = j["segments"];
    const json* modes = j.contains("recovered_modes") ? &j["recovered_modes"] : nullptr;
    std::size_t expected_begin = 0;
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const auto& r = ranges[k];
      if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned()) {
        schema_error(line_no, "segment ranges must be pairs of non-negative integers");
      }
      const auto b = r[0].get<std::size_t>();
      const auto e = r[1].get<std::size_t>();
      if (b != expected_begin || e <= b || e > it->second->size()) {
        schema_error(line_no, "segments must form an ordered disjoint cover of the trajectory");
      }
      expected_begin = e;
      auto s = make_subtrajectory(*it->second, b, e);
      if (modes && k < modes->size() && (*modes)[k].is_number_integer()) s.recovered_mode = ModeId{(*modes)[k].get<int>()};
      out.push_back(std::move(s));
    }
    if (expected_begin != it->second->size()) schema_error(line_no, "segments do not cover the whole trajectory");
  }
  return out;
}

}  // namespace hal::io
