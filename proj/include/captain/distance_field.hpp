#ifndef CAPTAIN_DISTANCE_FIELD_HPP
#define CAPTAIN_DISTANCE_FIELD_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "captain/error.hpp"
#include "captain/grid.hpp"
#include "captain/io.hpp"
#include "captain/volume.hpp"

namespace captain {

inline constexpr std::string_view kFieldVersion = "CAPF1";

/// Per-voxel distance in millimetres, same linear order as LabelVolume.
/// Signed fields are negative inside the structure and zero on its surface.
/// A composite field records the structures it was minimised over in
/// `sources`; a plain field lists only itself.
struct DistanceField {
  GridSpec spec;
  std::vector<float> values;
  std::string structure_name;
  std::vector<std::string> sources;

  float at(const Index3& v) const { return values[spec.linear(v)]; }

  /// Value of the voxel containing `p`, +inf outside the grid.
  double sample(const Vec3& p) const {
    const auto v = spec.voxel_at(p);
    if (!v) return std::numeric_limits<double>::infinity();
    return values[spec.linear(*v)];
  }

  friend bool operator==(const DistanceField&, const DistanceField&) = default;
};

using CompositeField = DistanceField;

namespace edt_detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas w*(q - p)^2 + f[p] over the finite samples of
// one scanline, evaluated at every integer q. Scratch buffers are reused
// across lines.
inline void envelope_pass(std::span<double> f, double w, std::vector<std::int64_t>& apex,
                          std::vector<double>& bound, std::vector<double>& out) {
  const auto n = static_cast<std::int64_t>(f.size());
  apex.resize(f.size());
  bound.resize(f.size() + 1);
  out.resize(f.size());
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const double fq = f[q] + w * static_cast<double>(q * q);
    double s = -kInf;
    while (k >= 0) {
      const std::int64_t p = apex[k];
      s = (fq - (f[p] + w * static_cast<double>(p * p))) / (2.0 * w * static_cast<double>(q - p));
      if (s <= bound[k]) {
        --k;
        s = -kInf;
      } else {
        break;
      }
    }
    ++k;
    apex[k] = q;
    bound[k] = s;
    bound[k + 1] = kInf;
  }
  if (k < 0) return;  // no seeds on this line, leave it at +inf
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (bound[j + 1] < static_cast<double>(q)) ++j;
    const double d = static_cast<double>(q - apex[j]);
    out[q] = w * d * d + f[apex[j]];
  }
  std::copy(out.begin(), out.end(), f.begin());
}

}  // namespace edt_detail

/// Exact squared Euclidean distance from every voxel to the nearest set
/// voxel of `mask`, with per-axis weights applied to squared index steps.
/// Unit weights give integer lattice distances exactly. Voxels are +inf
/// only when the mask is empty.
inline std::vector<double> squared_edt(const BinaryMask& mask, const Vec3& axis_weights) {
  const GridSpec& g = mask.spec();
  const auto [nx, ny, nz] = g.dims;
  std::vector<double> d(g.voxel_count(), edt_detail::kInf);
  for (std::size_t n = 0; n < d.size(); ++n)
    if (mask.test(n)) d[n] = 0.0;

  std::vector<std::int64_t> apex;
  std::vector<double> bound, out, line;
  const std::array<std::int64_t, 3> stride{1, nx, nx * ny};

  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t len = g.dims[axis];
    if (len == 1) continue;
    line.resize(static_cast<std::size_t>(len));
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (std::int64_t u = 0; u < g.dims[a2]; ++u)
      for (std::int64_t t = 0; t < g.dims[a1]; ++t) {
        const std::int64_t base = t * stride[a1] + u * stride[a2];
        for (std::int64_t q = 0; q < len; ++q) line[q] = d[base + q * stride[axis]];
        edt_detail::envelope_pass(line, axis_weights[axis], apex, bound, out);
        for (std::int64_t q = 0; q < len; ++q) d[base + q * stride[axis]] = line[q];
      }
  }
  return d;
}

/// Squared distances on the unit lattice, as integers.
inline std::vector<std::int64_t> lattice_squared_edt(const BinaryMask& mask) {
  if (mask.empty()) throw Error(Errc::EmptyStructure, "mask has no set voxels");
  const auto d = squared_edt(mask, {1.0, 1.0, 1.0});
  std::vector<std::int64_t> out(d.size());
  std::transform(d.begin(), d.end(), out.begin(),
                 [](double v) { return static_cast<std::int64_t>(v); });
  return out;
}

/// Unsigned distance in mm from each voxel center to the nearest set voxel
/// center, honouring anisotropic spacing.
inline DistanceField exact_edt(const BinaryMask& mask, std::string name = {}) {
  if (mask.empty()) throw Error(Errc::EmptyStructure, "mask has no set voxels");
  const GridSpec& g = mask.spec();
  const auto sq = squared_edt(
      mask, {g.spacing[0] * g.spacing[0], g.spacing[1] * g.spacing[1], g.spacing[2] * g.spacing[2]});
  DistanceField field{g, std::vector<float>(sq.size()), name, {}};
  if (!name.empty()) field.sources = {name};
  for (std::size_t n = 0; n < sq.size(); ++n) field.values[n] = static_cast<float>(std::sqrt(sq[n]));
  return field;
}

/// Signed distance to the surface of the structure selected by `codes`:
/// distances are measured to surface voxel centers and negated strictly
/// inside the structure, so surface voxels hold exactly 0.
inline DistanceField signed_edt(const LabelVolume& volume, const CodeSet& codes, std::string name = {}) {
  if (codes.empty()) throw Error(Errc::EmptyStructure, "no label codes selected");
  const BinaryMask omega = mask_of(volume, codes);
  if (omega.empty()) throw Error(Errc::EmptyStructure, "selected codes have no voxels");
  const BinaryMask surface = boundary_of(omega);
  if (name.empty()) {
    for (auto c : codes) {
      if (!name.empty()) name += '+';
      name += volume.palette().at(c);
    }
  }
  DistanceField field = exact_edt(surface, name);
  for (std::size_t n = 0; n < field.values.size(); ++n)
    if (omega.test(n) && !surface.test(n)) field.values[n] = -field.values[n];
  return field;
}

/// Voxelwise minimum of fields sharing one grid.
inline CompositeField compose_min(std::span<const DistanceField> fields) {
  if (fields.empty()) throw Error(Errc::EmptyList, "no fields to compose");
  CompositeField out{fields.front().spec, fields.front().values, "composite", {}};
  for (const auto& f : fields) {
    if (!(f.spec == out.spec) || f.values.size() != out.values.size())
      throw Error(Errc::SpecMismatch, "field '" + f.structure_name + "' has a different grid");
    out.sources.push_back(f.structure_name);
  }
  for (std::size_t i = 1; i < fields.size(); ++i) {
    const auto& v = fields[i].values;
    for (std::size_t n = 0; n < v.size(); ++n) out.values[n] = std::min(out.values[n], v[n]);
  }
  return out;
}

// ---- CAPF1 ----------------------------------------------------------------

inline std::string encode_field(const DistanceField& field) {
  ordered_json header;
  header["version"] = kFieldVersion;
  io::write_grid(header, field.spec);
  header["structure_name"] = field.structure_name;
  header["sources"] = field.sources;
  return io::join(header, io::encode_f32(field.values));
}

inline DistanceField decode_field(std::string_view bytes) {
  auto [header, payload] = io::split(bytes, kFieldVersion);
  DistanceField f;
  f.spec = io::read_grid(header);
  const auto name = header.find("structure_name");
  if (name == header.end() || !name->is_string()) throw Error(Errc::MalformedHeader, "missing structure_name");
  f.structure_name = name->get<std::string>();
  const auto sources = header.find("sources");
  if (sources == header.end() || !sources->is_array()) throw Error(Errc::MalformedHeader, "missing sources");
  for (const auto& s : *sources) {
    if (!s.is_string()) throw Error(Errc::MalformedHeader, "sources must be strings");
    f.sources.push_back(s.get<std::string>());
  }
  io::expect_payload(payload, f.spec.voxel_count() * sizeof(float));
  f.values = io::decode_f32(payload);
  return f;
}

inline void save_field(const DistanceField& field, const std::filesystem::path& path) {
  io::write_file(path, encode_field(field));
}

inline DistanceField load_field(const std::filesystem::path& path) {
  return decode_field(io::read_file(path));
}

}  // namespace captain

#endif  // CAPTAIN_DISTANCE_FIELD_HPP
