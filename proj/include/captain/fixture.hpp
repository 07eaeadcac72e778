#ifndef CAPTAIN_FIXTURE_HPP
#define CAPTAIN_FIXTURE_HPP

// Synthetic laminectomy-like case used by the demo, the tests and the
// `fixture` CLI subcommand.
//
// Layout along z (x-fastest grid, 0.48 mm voxels by default):
//   [0, plane_top]             VF-posterior   protected canal floor
//   (plane_top, slab_top]      A              target bone slab
//   (slab_top, nz)             EMPTY          air above the lamina
// and along x inside the slab height:
//   [0, wall_x)                VF-lateral     protected side wall
//   [anatomy_x, nx)            SVB            non-target bone

#include <filesystem>
#include <string>

#include "captain/distance_field.hpp"
#include "captain/drill.hpp"
#include "captain/plan.hpp"
#include "captain/volume.hpp"

namespace captain {

struct SlabLayout {
  std::int64_t n = 24;          // cube edge in voxels
  double spacing = 0.48;
  std::int64_t plane_top = 7;   // last z of VF-posterior
  std::int64_t slab_top = 17;   // last z of the target slab
  std::int64_t wall_x = 4;      // VF-lateral occupies x < wall_x
  std::int64_t anatomy_x = 20;  // SVB occupies x >= anatomy_x
  double red_posterior_mm = 1.0;
  double red_lateral_mm = 0.1;
  double yellow_mm = 1.0;
};

inline constexpr LabelCode kCodePosterior = 1;
inline constexpr LabelCode kCodeLateral = 2;
inline constexpr LabelCode kCodeBody = 5;
inline constexpr LabelCode kCodeSegmentA = 10;

struct FixtureCase {
  SlabLayout layout;
  LabelVolume volume;
  CodeSet target_codes;
  CodeSet bone_codes;
  DistanceField posterior;
  DistanceField lateral;
  DistanceField bone;
  ZonePlan plan;
  Vec3 home{0.0, 0.0, 0.0};
};

inline LabelVolume make_slab_volume(const SlabLayout& l) {
  GridSpec g;
  g.dims = {l.n, l.n, l.n};
  g.spacing = {l.spacing, l.spacing, l.spacing};
  LabelVolume v(g, {{kCodePosterior, "VF-posterior"},
                    {kCodeLateral, "VF-lateral"},
                    {kCodeBody, "SVB"},
                    {kCodeSegmentA, "A"}});
  for (std::int64_t k = 0; k < l.n; ++k)
    for (std::int64_t j = 0; j < l.n; ++j)
      for (std::int64_t i = 0; i < l.n; ++i) {
        LabelCode c = kEmptyCode;
        if (k <= l.plane_top)
          c = kCodePosterior;
        else if (k <= l.slab_top)
          c = i < l.wall_x ? kCodeLateral : i >= l.anatomy_x ? kCodeBody : kCodeSegmentA;
        v.set({i, j, k}, c);
      }
  return v;
}

inline FixtureCase make_slab_case(const SlabLayout& l = {}) {
  FixtureCase c;
  c.layout = l;
  c.volume = make_slab_volume(l);
  c.target_codes = {kCodeSegmentA};
  c.bone_codes = {kCodeSegmentA, kCodeBody};
  c.posterior = signed_edt(c.volume, {kCodePosterior}, "VF-posterior");
  c.lateral = signed_edt(c.volume, {kCodeLateral}, "VF-lateral");
  c.bone = signed_edt(c.volume, c.bone_codes, "bone");
  c.plan = build_plan(c.volume, c.target_codes, {{&c.posterior, l.red_posterior_mm}, {&c.lateral, l.red_lateral_mm}},
                      l.yellow_mm);
  // home: centred above the slab, clear of the tip radius
  const auto& g = c.volume.spec();
  c.home = g.center({l.n / 2, l.n / 2, l.n - 1});
  return c;
}

/// Powered raster over the target from `home`, descending one voxel layer per
/// pass, one sample per tick. Used for demos and end-to-end checks.
inline Trajectory sample_trajectory(const FixtureCase& c, std::int64_t tick = 5, int passes = 6) {
  const auto& l = c.layout;
  const auto& g = c.volume.spec();
  Trajectory traj;
  std::int64_t t = 0;
  auto push = [&](const Vec3& p, bool on) {
    traj.push_back({t, p, on});
    t += tick;
  };
  push(c.home, false);
  for (int pass = 0; pass < passes; ++pass) {
    const std::int64_t k = l.slab_top - pass;
    for (std::int64_t j = l.wall_x + 1; j < l.anatomy_x; j += 2) {
      const bool forward = ((j - l.wall_x) / 2) % 2 == 0;
      for (std::int64_t s = 0; s < l.anatomy_x - l.wall_x; ++s) {
        const std::int64_t i = forward ? l.wall_x + s : l.anatomy_x - 1 - s;
        push(g.center({i, j, k}), true);
      }
    }
  }
  push(c.home, false);
  return traj;
}

/// Writes a case directory understood by CaseCatalog.
inline void write_case_dir(const FixtureCase& c, const std::filesystem::path& dir,
                           const DrillConfig& cfg = {}) {
  std::filesystem::create_directories(dir);
  save_volume(c.volume, dir / "volume.capv");
  save_field(c.posterior, dir / "vf_posterior.capf");
  save_field(c.lateral, dir / "vf_lateral.capf");
  save_field(c.bone, dir / "bone.capf");
  save_plan(c.plan, dir / "plan.capp");
  ordered_json meta;
  meta["home_mm"] = c.home;
  meta["drill"] = config_to_json(cfg);
  io::write_file(dir / "case.json", meta.dump(2) + "\n");
}

}  // namespace captain

#endif  // CAPTAIN_FIXTURE_HPP
