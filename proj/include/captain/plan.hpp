#ifndef CAPTAIN_PLAN_HPP
#define CAPTAIN_PLAN_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "captain/distance_field.hpp"
#include "captain/error.hpp"
#include "captain/grid.hpp"
#include "captain/io.hpp"
#include "captain/volume.hpp"

namespace captain {

inline constexpr std::string_view kPlanVersion = "CAPP1";

enum class Zone : std::uint8_t { Empty = 0, Anatomy = 1, Green = 2, Yellow = 3, Red = 4 };

inline constexpr std::size_t kZoneCount = 5;
inline constexpr std::array<Zone, 4> kDrillableZones{Zone::Green, Zone::Yellow, Zone::Red, Zone::Anatomy};

constexpr std::string_view zone_name(Zone z) {
  switch (z) {
    case Zone::Empty: return "EMPTY";
    case Zone::Anatomy: return "ANATOMY";
    case Zone::Green: return "GREEN";
    case Zone::Yellow: return "YELLOW";
    case Zone::Red: return "RED";
  }
  return "EMPTY";
}

inline std::optional<Zone> zone_from_name(std::string_view s) {
  for (std::uint8_t z = 0; z < kZoneCount; ++z)
    if (zone_name(static_cast<Zone>(z)) == s) return static_cast<Zone>(z);
  return std::nullopt;
}

constexpr std::size_t zone_index(Zone z) { return static_cast<std::size_t>(z); }

using ZoneCounts = std::array<std::size_t, kZoneCount>;

/// Shell thicknesses in mm. Red thickness is per protected structure.
struct ShellParams {
  std::map<std::string, double> red_thickness_per_structure{{"VF-posterior", 1.0}, {"VF-lateral", 0.1}};
  double yellow_thickness = 1.0;
  double cortical_shell = 1.5;

  void validate() const {
    for (const auto& [name, mm] : red_thickness_per_structure)
      if (!(mm >= 0.0)) throw Error(Errc::InvalidArgument, "red thickness for " + name + " must be >= 0");
    if (!(yellow_thickness >= 0.0)) throw Error(Errc::InvalidArgument, "yellow thickness must be >= 0");
    if (!(cortical_shell >= 0.0)) throw Error(Errc::InvalidArgument, "cortical shell must be >= 0");
  }

  friend bool operator==(const ShellParams&, const ShellParams&) = default;
};

struct ZonePlan {
  GridSpec spec;
  std::vector<Zone> zones;
  ZoneCounts planned_counts{};
  ShellParams params;

  Zone at(const Index3& v) const { return zones[spec.linear(v)]; }
  std::size_t planned(Zone z) const { return planned_counts[zone_index(z)]; }

  friend bool operator==(const ZonePlan&, const ZonePlan&) = default;
};

inline ZoneCounts plan_counts(const ZonePlan& plan) {
  ZoneCounts c{};
  for (auto z : plan.zones) ++c[zone_index(z)];
  return c;
}

/// A protected structure's signed field and the red shell drawn around it.
struct ProtectShell {
  const DistanceField* field = nullptr;
  double red_mm = 0.0;
};

/// Zones every voxel of `volume`. Target voxels become RED within any
/// protect shell, else YELLOW within red + yellow of any protect structure,
/// else GREEN. Remaining labelled voxels are ANATOMY.
inline ZonePlan build_plan(const LabelVolume& volume, const CodeSet& target_codes,
                           const std::vector<ProtectShell>& protect, double yellow_mm) {
  const GridSpec& g = volume.spec();
  ShellParams params;
  params.red_thickness_per_structure.clear();
  params.yellow_thickness = yellow_mm;
  for (const auto& p : protect) {
    if (p.field == nullptr) throw Error(Errc::InvalidArgument, "null protect field");
    if (!(p.field->spec == g) || p.field->values.size() != g.voxel_count())
      throw Error(Errc::SpecMismatch, "protect field '" + p.field->structure_name + "' has a different grid");
    auto& slot = params.red_thickness_per_structure[p.field->structure_name];
    slot = std::max(slot, p.red_mm);
  }
  params.validate();
  for (const auto& p : protect)
    if (!(p.red_mm >= 0.0)) throw Error(Errc::InvalidArgument, "red thickness must be >= 0");

  std::array<bool, 256> target{};
  for (auto c : target_codes) target[c] = true;

  ZonePlan plan{g, std::vector<Zone>(g.voxel_count(), Zone::Empty), {}, params};
  bool any_target = false;
  const auto& labels = volume.labels();
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const LabelCode c = labels[n];
    if (c == kEmptyCode) continue;
    if (!target[c]) {
      plan.zones[n] = Zone::Anatomy;
      continue;
    }
    any_target = true;
    bool red = false, yellow = false;
    for (const auto& p : protect) {
      const double d = p.field->values[n];
      if (d <= p.red_mm) {
        red = true;
        break;
      }
      if (d <= p.red_mm + yellow_mm) yellow = true;
    }
    plan.zones[n] = red ? Zone::Red : yellow ? Zone::Yellow : Zone::Green;
  }
  if (!any_target) throw Error(Errc::EmptyTarget, "target codes select no voxels");
  plan.planned_counts = plan_counts(plan);
  return plan;
}

// ---- colour blending ------------------------------------------------------

using Rgb = std::array<double, 3>;

struct ColorStops {
  Rgb red_anchor{1.0, 0.0, 0.0};
  Rgb yellow_anchor{1.0, 1.0, 0.0};
  Rgb green_anchor{0.0, 1.0, 0.0};
  double t_red = 1.0;
  double t_yellow = 2.0;

  void validate() const {
    if (!(t_red < t_yellow)) throw Error(Errc::InvalidArgument, "t_red must be below t_yellow");
  }
};

/// Piecewise-linear red -> yellow -> green ramp over distance `d` (mm). The
/// yellow->green band has the same width as the red->yellow band.
inline Rgb blend_color(double d, const ColorStops& stops) {
  const double width = stops.t_yellow - stops.t_red;
  auto lerp = [](const Rgb& a, const Rgb& b, double t) {
    return Rgb{a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
  };
  if (d <= stops.t_red) return stops.red_anchor;
  if (d <= stops.t_yellow) return lerp(stops.red_anchor, stops.yellow_anchor, (d - stops.t_red) / width);
  if (d < stops.t_yellow + width)
    return lerp(stops.yellow_anchor, stops.green_anchor, (d - stops.t_yellow) / width);
  return stops.green_anchor;
}

// ---- CAPP1 ----------------------------------------------------------------

inline ordered_json params_to_json(const ShellParams& p) {
  ordered_json j;
  ordered_json red = ordered_json::object();
  for (const auto& [name, mm] : p.red_thickness_per_structure) red[name] = mm;
  j["red_thickness_per_structure"] = std::move(red);
  j["yellow_thickness"] = p.yellow_thickness;
  j["cortical_shell"] = p.cortical_shell;
  return j;
}

inline ShellParams params_from_json(const json& j) {
  ShellParams p;
  if (!j.is_object()) throw Error(Errc::MalformedHeader, "params must be an object");
  if (auto it = j.find("red_thickness_per_structure"); it != j.end()) {
    if (!it->is_object()) throw Error(Errc::MalformedHeader, "red_thickness_per_structure must be an object");
    p.red_thickness_per_structure.clear();
    for (const auto& [name, mm] : it->items()) {
      if (!mm.is_number()) throw Error(Errc::MalformedHeader, "red thickness must be a number");
      p.red_thickness_per_structure[name] = mm.get<double>();
    }
  }
  if (auto it = j.find("yellow_thickness"); it != j.end()) {
    if (!it->is_number()) throw Error(Errc::MalformedHeader, "yellow_thickness must be a number");
    p.yellow_thickness = it->get<double>();
  }
  if (auto it = j.find("cortical_shell"); it != j.end()) {
    if (!it->is_number()) throw Error(Errc::MalformedHeader, "cortical_shell must be a number");
    p.cortical_shell = it->get<double>();
  }
  return p;
}

inline std::string encode_plan(const ZonePlan& plan) {
  ordered_json header;
  header["version"] = kPlanVersion;
  io::write_grid(header, plan.spec);
  header["params"] = params_to_json(plan.params);
  ordered_json counts;
  for (std::size_t z = 0; z < kZoneCount; ++z) counts[std::string(zone_name(static_cast<Zone>(z)))] = plan.planned_counts[z];
  header["counts"] = std::move(counts);
  return io::join(header, std::string_view(reinterpret_cast<const char*>(plan.zones.data()), plan.zones.size()));
}

inline ZonePlan decode_plan(std::string_view bytes) {
  auto [header, payload] = io::split(bytes, kPlanVersion);
  ZonePlan plan;
  plan.spec = io::read_grid(header);
  const auto params = header.find("params");
  if (params == header.end()) throw Error(Errc::MalformedHeader, "missing params");
  plan.params = params_from_json(*params);
  io::expect_payload(payload, plan.spec.voxel_count());
  plan.zones.resize(payload.size());
  for (std::size_t n = 0; n < payload.size(); ++n) {
    const auto code = static_cast<std::uint8_t>(payload[n]);
    if (code >= kZoneCount) throw Error(Errc::MalformedHeader, "zone code out of range");
    plan.zones[n] = static_cast<Zone>(code);
  }
  plan.planned_counts = plan_counts(plan);
  const auto counts = header.find("counts");
  if (counts == header.end() || !counts->is_object()) throw Error(Errc::MalformedHeader, "missing counts");
  for (std::size_t z = 0; z < kZoneCount; ++z) {
    const auto it = counts->find(std::string(zone_name(static_cast<Zone>(z))));
    if (it == counts->end() || !it->is_number_unsigned() || it->get<std::size_t>() != plan.planned_counts[z])
      throw Error(Errc::MalformedHeader, "counts do not match zone payload");
  }
  return plan;
}

inline void save_plan(const ZonePlan& plan, const std::filesystem::path& path) {
  io::write_file(path, encode_plan(plan));
}

inline ZonePlan load_plan(const std::filesystem::path& path) { return decode_plan(io::read_file(path)); }

}  // namespace captain

#endif  // CAPTAIN_PLAN_HPP
