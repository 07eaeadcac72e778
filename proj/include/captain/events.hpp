#ifndef CAPTAIN_EVENTS_HPP
#define CAPTAIN_EVENTS_HPP

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "captain/error.hpp"
#include "captain/grid.hpp"
#include "captain/io.hpp"
#include "captain/plan.hpp"

namespace captain {

/// One voxel taken out by the drill.
struct RemovalEvent {
  std::int64_t t_ms = 0;
  Index3 voxel;
  Zone zone = Zone::Green;

  friend bool operator==(const RemovalEvent&, const RemovalEvent&) = default;
};

using RemovalLog = std::vector<RemovalEvent>;

inline std::string encode_event(const RemovalEvent& e) {
  // key order t_ms, v, zone is fixed; logs are compared byte-for-byte
  ordered_json j;
  j["t_ms"] = e.t_ms;
  j["v"] = {e.voxel.i, e.voxel.j, e.voxel.k};
  j["zone"] = zone_name(e.zone);
  return j.dump();
}

inline std::string encode_log(const RemovalLog& log) {
  std::string out;
  for (const auto& e : log) {
    out += encode_event(e);
    out += '\n';
  }
  return out;
}

inline RemovalEvent decode_event(std::string_view line) {
  const json j = json::parse(line, nullptr, false);
  auto bad = [&](const char* why) { return Error(Errc::MalformedMessage, std::string(why) + ": " + std::string(line)); };
  if (j.is_discarded() || !j.is_object()) throw bad("event is not a JSON object");
  RemovalEvent e;
  const auto t = j.find("t_ms");
  if (t == j.end() || !t->is_number_integer()) throw bad("event needs integer t_ms");
  e.t_ms = t->get<std::int64_t>();
  const auto v = j.find("v");
  if (v == j.end() || !v->is_array() || v->size() != 3) throw bad("event needs v=[i,j,k]");
  for (const auto& c : *v)
    if (!c.is_number_integer()) throw bad("voxel indices must be integers");
  e.voxel = {(*v)[0].get<std::int64_t>(), (*v)[1].get<std::int64_t>(), (*v)[2].get<std::int64_t>()};
  const auto z = j.find("zone");
  if (z == j.end() || !z->is_string()) throw bad("event needs a zone");
  const auto zone = zone_from_name(z->get<std::string>());
  if (!zone || *zone == Zone::Empty) throw bad("zone must be GREEN, YELLOW, RED or ANATOMY");
  e.zone = *zone;
  return e;
}

inline RemovalLog decode_log(std::string_view text) {
  RemovalLog log;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) log.push_back(decode_event(line));
    pos = nl + 1;
  }
  return log;
}

inline void save_log(const RemovalLog& log, const std::filesystem::path& path) {
  io::write_file(path, encode_log(log));
}

inline RemovalLog load_log(const std::filesystem::path& path) { return decode_log(io::read_file(path)); }

}  // namespace captain

#endif  // CAPTAIN_EVENTS_HPP
