#ifndef CAPTAIN_GRID_HPP
#define CAPTAIN_GRID_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "captain/error.hpp"

namespace captain {

using Vec3 = std::array<double, 3>;

struct Index3 {
  std::int64_t i = 0, j = 0, k = 0;
  friend bool operator==(const Index3&, const Index3&) = default;
};

/// Voxel lattice with physical spacing. Voxel (i,j,k) has its center at
/// origin + (index + 0.5) * spacing, in millimetres.
struct GridSpec {
  std::array<std::int64_t, 3> dims{1, 1, 1};
  Vec3 spacing{0.48, 0.48, 0.48};
  Vec3 origin{0.0, 0.0, 0.0};

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) throw Error(Errc::MalformedHeader, "dims must be >= 1");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw Error(Errc::MalformedHeader, "spacing must be > 0");
      if (!std::isfinite(origin[a]))
        throw Error(Errc::MalformedHeader, "origin must be finite");
    }
  }

  bool contains(const Index3& v) const {
    return v.i >= 0 && v.j >= 0 && v.k >= 0 && v.i < dims[0] && v.j < dims[1] &&
           v.k < dims[2];
  }

  // x-fastest, then y, then z
  std::size_t linear(const Index3& v) const {
    return static_cast<std::size_t>(v.i + dims[0] * (v.j + dims[1] * v.k));
  }

  Index3 unlinear(std::size_t n) const {
    const auto idx = static_cast<std::int64_t>(n);
    return {idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])};
  }

  Vec3 center(const Index3& v) const {
    return {origin[0] + (static_cast<double>(v.i) + 0.5) * spacing[0],
            origin[1] + (static_cast<double>(v.j) + 0.5) * spacing[1],
            origin[2] + (static_cast<double>(v.k) + 0.5) * spacing[2]};
  }

  /// The voxel whose cell contains the world point, if it is in the grid.
  std::optional<Index3> voxel_at(const Vec3& p) const {
    Index3 v{static_cast<std::int64_t>(std::floor((p[0] - origin[0]) / spacing[0])),
             static_cast<std::int64_t>(std::floor((p[1] - origin[1]) / spacing[1])),
             static_cast<std::int64_t>(std::floor((p[2] - origin[2]) / spacing[2]))};
    if (!contains(v)) return std::nullopt;
    return v;
  }
};

inline double distance_squared(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace captain

#endif  // CAPTAIN_GRID_HPP
