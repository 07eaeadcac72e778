#ifndef CAPTAIN_DRILL_HPP
#define CAPTAIN_DRILL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "captain/distance_field.hpp"
#include "captain/error.hpp"
#include "captain/events.hpp"
#include "captain/grid.hpp"
#include "captain/io.hpp"
#include "captain/plan.hpp"

namespace captain {

struct DrillConfig {
  double tip_diameter = 4.0;      // mm, spherical burr
  std::int64_t tick = 5;          // ms per engine step
  std::int64_t rate_cancellous = 10;  // voxels per tick
  std::int64_t rate_cortical = 1;
  double f_max = 3.2;             // N
  double f_base = 220.0;          // Hz
  double delta_f = 220.0;         // Hz
  double cortical_shell = 1.5;    // mm

  void validate() const {
    if (!(tip_diameter > 0.0) || !std::isfinite(tip_diameter))
      throw Error(Errc::InvalidArgument, "tip_diameter must be > 0");
    if (tick <= 0) throw Error(Errc::InvalidArgument, "tick must be > 0");
    if (rate_cancellous < 1 || rate_cortical < 1) throw Error(Errc::InvalidArgument, "rates must be >= 1");
    if (!(f_max >= 0.0)) throw Error(Errc::InvalidArgument, "f_max must be >= 0");
    if (!std::isfinite(f_base) || !std::isfinite(delta_f))
      throw Error(Errc::InvalidArgument, "audio parameters must be finite");
    if (!(cortical_shell >= 0.0)) throw Error(Errc::InvalidArgument, "cortical_shell must be >= 0");
  }

  friend bool operator==(const DrillConfig&, const DrillConfig&) = default;
};

inline ordered_json config_to_json(const DrillConfig& c) {
  ordered_json j;
  j["tip_diameter"] = c.tip_diameter;
  j["tick"] = c.tick;
  j["rate_cancellous"] = c.rate_cancellous;
  j["rate_cortical"] = c.rate_cortical;
  j["f_max"] = c.f_max;
  j["f_base"] = c.f_base;
  j["delta_f"] = c.delta_f;
  j["cortical_shell"] = c.cortical_shell;
  return j;
}

/// Overrides fields of `base` present in `j`; other keys are ignored.
inline DrillConfig config_from_json(const json& j, DrillConfig base = {}) {
  if (!j.is_object()) throw Error(Errc::InvalidArgument, "drill config must be a JSON object");
  auto num = [&](const char* key, double& slot) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw Error(Errc::InvalidArgument, std::string(key) + " must be a number");
      slot = it->get<double>();
    }
  };
  auto integer = [&](const char* key, std::int64_t& slot) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number_integer()) throw Error(Errc::InvalidArgument, std::string(key) + " must be an integer");
      slot = it->get<std::int64_t>();
    }
  };
  num("tip_diameter", base.tip_diameter);
  integer("tick", base.tick);
  integer("rate_cancellous", base.rate_cancellous);
  integer("rate_cortical", base.rate_cortical);
  num("f_max", base.f_max);
  num("f_base", base.f_base);
  num("delta_f", base.delta_f);
  num("cortical_shell", base.cortical_shell);
  base.validate();
  return base;
}

enum class Warning : std::uint8_t { None, Yellow, Red };

constexpr std::string_view warning_name(Warning w) {
  switch (w) {
    case Warning::None: return "NONE";
    case Warning::Yellow: return "YELLOW";
    case Warning::Red: return "RED";
  }
  return "NONE";
}

struct RemovedVoxel {
  std::size_t index = 0;  // linear index into the plan grid
  Zone zone = Zone::Green;
  friend bool operator==(const RemovedVoxel&, const RemovedVoxel&) = default;
};

struct TickOutput {
  std::int64_t t_ms = 0;
  std::vector<RemovedVoxel> removed;
  double force = 0.0;     // N
  double audio_hz = 0.0;
  Warning warning = Warning::None;
  bool cortical = false;  // tick ran at the cortical rate
  std::int64_t cap = 0;
};

/// Mutable drilling state. `remaining` marks voxels still present; EMPTY
/// voxels are never present.
struct DrillState {
  Vec3 tip_position{0.0, 0.0, 0.0};
  bool powered = false;
  std::int64_t sim_time = 0;
  std::vector<std::uint8_t> remaining;
  std::size_t remaining_count = 0;
};

inline DrillState make_state(const ZonePlan& plan, const Vec3& home = {0.0, 0.0, 0.0}) {
  DrillState s;
  s.tip_position = home;
  s.remaining.resize(plan.zones.size());
  for (std::size_t n = 0; n < plan.zones.size(); ++n) {
    s.remaining[n] = plan.zones[n] != Zone::Empty;
    s.remaining_count += s.remaining[n];
  }
  return s;
}

/// Pitch shift weight: 1 at the bone surface falling linearly to 0 at the
/// inner edge of the cortical shell; 0 outside bone.
inline double audio_alpha(double bone_sdf, double cortical_shell) {
  if (!(bone_sdf <= 0.0) || !(cortical_shell > 0.0)) return 0.0;
  return std::clamp(1.0 - std::abs(bone_sdf) / cortical_shell, 0.0, 1.0);
}

inline bool in_cortical_shell(double bone_sdf, double cortical_shell) {
  return bone_sdf >= -cortical_shell && bone_sdf <= 0.0;
}

/// Advances the drill by one fixed step starting at state.sim_time.
inline TickOutput tick(DrillState& state, const Vec3& pose, bool powered, const DrillConfig& cfg,
                       const ZonePlan& plan, const DistanceField& bone) {
  if (!(plan.spec == bone.spec) || state.remaining.size() != plan.zones.size())
    throw Error(Errc::SpecMismatch, "plan, bone field and state disagree on the grid");
  if (!std::isfinite(pose[0]) || !std::isfinite(pose[1]) || !std::isfinite(pose[2]))
    throw Error(Errc::NonFinitePose, "pose must be finite");

  TickOutput out;
  out.t_ms = state.sim_time;
  state.tip_position = pose;
  state.powered = powered;
  state.sim_time += cfg.tick;
  if (!powered) return out;

  const double bone_sdf = bone.sample(pose);
  out.cortical = in_cortical_shell(bone_sdf, cfg.cortical_shell);
  out.cap = out.cortical ? cfg.rate_cortical : cfg.rate_cancellous;
  out.audio_hz = cfg.f_base + cfg.delta_f * audio_alpha(bone_sdf, cfg.cortical_shell);

  const GridSpec& g = plan.spec;
  const double r = 0.5 * cfg.tip_diameter;
  const double r2 = r * r;
  std::array<std::int64_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    const double l = std::ceil((pose[a] - r - g.origin[a]) / g.spacing[a] - 0.5) - 1.0;
    const double h = std::floor((pose[a] + r - g.origin[a]) / g.spacing[a] - 0.5) + 1.0;
    lo[a] = static_cast<std::int64_t>(std::clamp(l, 0.0, static_cast<double>(g.dims[a])));
    hi[a] = static_cast<std::int64_t>(std::clamp(h, -1.0, static_cast<double>(g.dims[a] - 1)));
  }

  struct Candidate {
    double d2;
    std::size_t index;
  };
  std::vector<Candidate> candidates;
  for (std::int64_t k = lo[2]; k <= hi[2]; ++k)
    for (std::int64_t j = lo[1]; j <= hi[1]; ++j)
      for (std::int64_t i = lo[0]; i <= hi[0]; ++i) {
        const Index3 v{i, j, k};
        const std::size_t n = g.linear(v);
        if (!state.remaining[n]) continue;
        const double d2 = distance_squared(g.center(v), pose);
        if (d2 <= r2) candidates.push_back({d2, n});
      }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(out.cap), candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                    [](const Candidate& a, const Candidate& b) {
                      return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
                    });

  for (std::size_t c = 0; c < take; ++c) {
    const std::size_t n = candidates[c].index;
    state.remaining[n] = 0;
    --state.remaining_count;
    const Zone z = plan.zones[n];
    out.removed.push_back({n, z});
    if (z == Zone::Red || z == Zone::Anatomy)
      out.warning = Warning::Red;
    else if (z == Zone::Yellow && out.warning == Warning::None)
      out.warning = Warning::Yellow;
  }
  if (!out.removed.empty()) out.force = cfg.f_max * static_cast<double>(cfg.rate_cortical) / static_cast<double>(out.cap);
  return out;
}

inline void append_events(RemovalLog& log, const TickOutput& out, const GridSpec& g) {
  for (const auto& r : out.removed) log.push_back({out.t_ms, g.unlinear(r.index), r.zone});
}

// ---- trajectories ---------------------------------------------------------

struct TrajectorySample {
  std::int64_t t_ms = 0;
  Vec3 pos{0.0, 0.0, 0.0};
  bool on = false;
  friend bool operator==(const TrajectorySample&, const TrajectorySample&) = default;
};

using Trajectory = std::vector<TrajectorySample>;

inline void validate_trajectory(const Trajectory& traj, const DrillConfig& cfg) {
  for (std::size_t s = 0; s < traj.size(); ++s) {
    if (traj[s].t_ms < 0 || traj[s].t_ms % cfg.tick != 0)
      throw Error(Errc::MalformedTrajectory,
                  "t_ms " + std::to_string(traj[s].t_ms) + " is not a non-negative multiple of the tick");
    if (s > 0 && traj[s].t_ms <= traj[s - 1].t_ms)
      throw Error(Errc::NonMonotoneTimestamps, "t_ms " + std::to_string(traj[s].t_ms) + " does not increase");
  }
}

/// Replays a trajectory; sim_time jumps forward over gaps in the samples,
/// with the drill idle for the skipped steps.
inline RemovalLog run_trajectory(const ZonePlan& plan, const DistanceField& bone, const DrillConfig& cfg,
                                 const Trajectory& traj, std::vector<TickOutput>* outputs = nullptr) {
  cfg.validate();
  validate_trajectory(traj, cfg);
  DrillState state = make_state(plan);
  RemovalLog log;
  for (const auto& sample : traj) {
    state.sim_time = std::max(state.sim_time, sample.t_ms);
    auto out = tick(state, sample.pos, sample.on, cfg, plan, bone);
    append_events(log, out, plan.spec);
    if (outputs) outputs->push_back(std::move(out));
  }
  return log;
}

inline std::string encode_sample(const TrajectorySample& s) {
  ordered_json j;
  j["t_ms"] = s.t_ms;
  j["pos_mm"] = s.pos;
  j["on"] = s.on;
  return j.dump();
}

inline std::string encode_trajectory(const Trajectory& traj) {
  std::string out;
  for (const auto& s : traj) {
    out += encode_sample(s);
    out += '\n';
  }
  return out;
}

inline TrajectorySample decode_sample(std::string_view line) {
  const json j = json::parse(line, nullptr, false);
  auto bad = [&](const char* why) {
    return Error(Errc::MalformedTrajectory, std::string(why) + ": " + std::string(line));
  };
  if (j.is_discarded() || !j.is_object()) throw bad("record is not a JSON object");
  TrajectorySample s;
  const auto t = j.find("t_ms");
  if (t == j.end() || !t->is_number_integer()) throw bad("record needs integer t_ms");
  s.t_ms = t->get<std::int64_t>();
  const auto p = j.find("pos_mm");
  if (p == j.end() || !p->is_array() || p->size() != 3) throw bad("record needs pos_mm=[x,y,z]");
  for (int a = 0; a < 3; ++a) {
    if (!(*p)[a].is_number()) throw bad("pos_mm entries must be numbers");
    s.pos[a] = (*p)[a].get<double>();
  }
  const auto on = j.find("on");
  if (on == j.end() || !on->is_boolean()) throw bad("record needs boolean on");
  s.on = on->get<bool>();
  return s;
}

inline Trajectory decode_trajectory(std::string_view text) {
  Trajectory traj;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) traj.push_back(decode_sample(line));
    pos = nl + 1;
  }
  return traj;
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  return decode_trajectory(io::read_file(path));
}

inline void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  io::write_file(path, encode_trajectory(traj));
}

}  // namespace captain

#endif  // CAPTAIN_DRILL_HPP
