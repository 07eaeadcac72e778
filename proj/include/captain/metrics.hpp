#ifndef CAPTAIN_METRICS_HPP
#define CAPTAIN_METRICS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "captain/error.hpp"
#include "captain/events.hpp"
#include "captain/plan.hpp"

namespace captain {

/// A breach: one or more runs of consecutive forbidden removals, each at
/// least min_voxels long, merged when they follow each other closely.
struct BreachEvent {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::size_t voxel_count = 0;

  friend bool operator==(const BreachEvent&, const BreachEvent&) = default;
};

struct BreachRules {
  std::size_t min_voxels = 5;
  std::int64_t merge_window_ms = 2000;
};

constexpr bool is_forbidden(Zone z) { return z == Zone::Red || z == Zone::Anatomy; }

inline void require_ordered(const RemovalLog& log) {
  for (std::size_t n = 1; n < log.size(); ++n)
    if (log[n].t_ms < log[n - 1].t_ms)
      throw Error(Errc::UnorderedLog, "event " + std::to_string(n) + " goes back in time");
}

inline std::vector<BreachEvent> detect_breaches(const RemovalLog& log, BreachRules rules = {}) {
  require_ordered(log);
  std::vector<BreachEvent> out;
  std::size_t last_event = 0;  // log index of the current breach's last removal
  std::size_t n = 0;
  while (n < log.size()) {
    if (!is_forbidden(log[n].zone)) {
      ++n;
      continue;
    }
    std::size_t end = n;
    while (end + 1 < log.size() && is_forbidden(log[end + 1].zone)) ++end;
    const std::size_t len = end - n + 1;
    if (len >= rules.min_voxels) {
      if (!out.empty() && log[n].t_ms - out.back().end_ms <= rules.merge_window_ms) {
        // forbidden removals between the merged runs belong to the breach
        for (std::size_t m = last_event + 1; m < n; ++m)
          if (is_forbidden(log[m].zone)) ++out.back().voxel_count;
        out.back().voxel_count += len;
        out.back().end_ms = log[end].t_ms;
      } else {
        out.push_back({log[n].t_ms, log[end].t_ms, len});
      }
      last_event = end;
    }
    n = end + 1;
  }
  return out;
}

using ZonePercent = std::array<std::optional<double>, kZoneCount>;

/// Percentage of each zone's planned voxels removed. Zones with nothing
/// planned (and EMPTY) are not applicable and stay unset.
inline ZonePercent completion_rates(const RemovalLog& log, const ZonePlan& plan) {
  ZoneCounts removed{};
  for (const auto& e : log) {
    if (!plan.spec.contains(e.voxel))
      throw Error(Errc::VoxelOutOfPlan, "voxel outside the plan grid");
    ++removed[zone_index(e.zone)];
  }
  ZonePercent out{};
  for (Zone z : kDrillableZones) {
    const auto planned = plan.planned(z);
    if (planned == 0) continue;
    out[zone_index(z)] = 100.0 * static_cast<double>(removed[zone_index(z)]) / static_cast<double>(planned);
  }
  return out;
}

inline double completion_rate(const RemovalLog& log, const ZonePlan& plan, Zone z) {
  const auto all = completion_rates(log, plan);
  if (!all[zone_index(z)]) throw Error(Errc::ZeroPlanned, std::string(zone_name(z)) + " has no planned voxels");
  return *all[zone_index(z)];
}

/// Seconds from the first removal to the last.
inline double drill_time(const RemovalLog& log) {
  if (log.size() < 2) return 0.0;
  return static_cast<double>(log.back().t_ms - log.front().t_ms) / 1000.0;
}

struct SessionMetrics {
  std::string session_id;
  std::string condition;
  ZonePercent completion_pct{};
  double drill_time_s = 0.0;
  std::size_t breach_count = 0;
  std::size_t removed_total = 0;
};

inline SessionMetrics compute_metrics(const RemovalLog& log, const ZonePlan& plan, std::string session_id = {},
                                      std::string condition = {}, BreachRules rules = {}) {
  SessionMetrics m;
  m.session_id = std::move(session_id);
  m.condition = std::move(condition);
  m.completion_pct = completion_rates(log, plan);
  m.drill_time_s = drill_time(log);
  m.breach_count = detect_breaches(log, rules).size();
  m.removed_total = log.size();
  return m;
}

inline ordered_json metrics_to_json(const SessionMetrics& m) {
  ordered_json j;
  j["id"] = m.session_id;
  j["condition"] = m.condition;
  ordered_json pct;
  for (Zone z : kDrillableZones) {
    const auto& v = m.completion_pct[zone_index(z)];
    pct[std::string(zone_name(z))] = v ? ordered_json(*v) : ordered_json(nullptr);
  }
  j["completion_pct"] = std::move(pct);
  j["drill_time_s"] = m.drill_time_s;
  j["breach_count"] = m.breach_count;
  j["removed_total"] = m.removed_total;
  return j;
}

}  // namespace captain

#endif  // CAPTAIN_METRICS_HPP
