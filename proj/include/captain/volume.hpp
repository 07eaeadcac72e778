#ifndef CAPTAIN_VOLUME_HPP
#define CAPTAIN_VOLUME_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "captain/error.hpp"
#include "captain/grid.hpp"
#include "captain/io.hpp"

namespace captain {

using LabelCode = std::uint8_t;
using CodeSet = std::set<LabelCode>;

inline constexpr LabelCode kEmptyCode = 0;
inline constexpr std::string_view kVolumeVersion = "CAPV1";

/// Dense label grid, x-fastest. Code 0 is always EMPTY.
class LabelVolume {
 public:
  LabelVolume() : LabelVolume(GridSpec{}) {}

  explicit LabelVolume(GridSpec spec, std::map<LabelCode, std::string> palette = {})
      : spec_(spec), labels_(spec.voxel_count(), kEmptyCode), palette_(std::move(palette)) {
    spec_.validate();
    palette_[kEmptyCode] = "EMPTY";
  }

  LabelVolume(GridSpec spec, std::vector<LabelCode> labels, std::map<LabelCode, std::string> palette)
      : spec_(spec), labels_(std::move(labels)), palette_(std::move(palette)) {
    spec_.validate();
    if (labels_.size() != spec_.voxel_count())
      throw Error(Errc::DimensionMismatch, "label count does not match dims");
    auto it = palette_.find(kEmptyCode);
    if (it != palette_.end() && it->second != "EMPTY")
      throw Error(Errc::MalformedHeader, "code 0 is reserved for EMPTY");
    palette_[kEmptyCode] = "EMPTY";
    std::array<bool, 256> seen{};
    for (auto c : labels_) seen[c] = true;
    for (int c = 0; c < 256; ++c)
      if (seen[c] && !palette_.count(static_cast<LabelCode>(c)))
        throw Error(Errc::MalformedHeader, "label code " + std::to_string(c) + " has no palette entry");
  }

  const GridSpec& spec() const { return spec_; }
  const std::vector<LabelCode>& labels() const { return labels_; }
  const std::map<LabelCode, std::string>& palette() const { return palette_; }

  LabelCode at(const Index3& v) const { return labels_[spec_.linear(v)]; }
  LabelCode operator[](std::size_t n) const { return labels_[n]; }

  /// Writes a label; the code must already be in the palette.
  void set(const Index3& v, LabelCode code) {
    if (!palette_.count(code))
      throw Error(Errc::InvalidArgument, "label code " + std::to_string(code) + " has no palette entry");
    labels_[spec_.linear(v)] = code;
  }

  void name_code(LabelCode code, std::string name) {
    if (code == kEmptyCode) throw Error(Errc::InvalidArgument, "code 0 is reserved for EMPTY");
    palette_[code] = std::move(name);
  }

  /// Codes whose palette name matches one of `names`.
  CodeSet codes_named(const std::vector<std::string>& names) const {
    CodeSet out;
    for (const auto& [code, name] : palette_)
      if (std::find(names.begin(), names.end(), name) != names.end()) out.insert(code);
    return out;
  }

  std::array<std::size_t, 256> histogram() const {
    std::array<std::size_t, 256> h{};
    for (auto c : labels_) ++h[c];
    return h;
  }

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  GridSpec spec_;
  std::vector<LabelCode> labels_;
  std::map<LabelCode, std::string> palette_;
};

/// Membership grid over a GridSpec (the structure Omega).
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(GridSpec spec) : spec_(spec), bits_(spec.voxel_count(), false) {}

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return bits_.size(); }

  bool test(std::size_t n) const { return bits_[n]; }
  bool test(const Index3& v) const { return bits_[spec_.linear(v)]; }
  void set(std::size_t n, bool on = true) { bits_[n] = on; }
  void set(const Index3& v, bool on = true) { bits_[spec_.linear(v)] = on; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true));
  }
  bool empty() const { return std::find(bits_.begin(), bits_.end(), true) == bits_.end(); }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  GridSpec spec_;
  std::vector<bool> bits_;
};

inline BinaryMask mask_of(const LabelVolume& volume, const CodeSet& codes) {
  if (codes.empty()) throw Error(Errc::InvalidArgument, "code set is empty");
  std::array<bool, 256> member{};
  for (auto c : codes) member[c] = true;
  BinaryMask m(volume.spec());
  const auto& labels = volume.labels();
  for (std::size_t n = 0; n < labels.size(); ++n)
    if (member[labels[n]]) m.set(n);
  return m;
}

/// Voxels of the mask with at least one face neighbour outside it. The
/// region beyond the grid counts as outside.
inline BinaryMask boundary_of(const BinaryMask& mask) {
  const GridSpec& g = mask.spec();
  BinaryMask out(g);
  const auto [nx, ny, nz] = g.dims;
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i) {
        const std::size_t n = g.linear({i, j, k});
        if (!mask.test(n)) continue;
        const bool surface =
            i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 ||
            !mask.test(n - 1) || !mask.test(n + 1) ||
            !mask.test(n - static_cast<std::size_t>(nx)) ||
            !mask.test(n + static_cast<std::size_t>(nx)) ||
            !mask.test(n - static_cast<std::size_t>(nx * ny)) ||
            !mask.test(n + static_cast<std::size_t>(nx * ny));
        if (surface) out.set(n);
      }
  return out;
}

// ---- CAPV1 ----------------------------------------------------------------

inline std::string encode_volume(const LabelVolume& volume) {
  ordered_json header;
  header["version"] = kVolumeVersion;
  io::write_grid(header, volume.spec());
  ordered_json palette = ordered_json::object();
  for (const auto& [code, name] : volume.palette()) palette[std::to_string(code)] = name;
  header["palette"] = std::move(palette);
  const auto& labels = volume.labels();
  return io::join(header, std::string_view(reinterpret_cast<const char*>(labels.data()), labels.size()));
}

inline LabelVolume decode_volume(std::string_view bytes) {
  auto [header, payload] = io::split(bytes, kVolumeVersion);
  const GridSpec spec = io::read_grid(header);
  std::map<LabelCode, std::string> palette;
  const auto pit = header.find("palette");
  if (pit == header.end() || !pit->is_object()) throw Error(Errc::MalformedHeader, "missing palette");
  for (const auto& [key, value] : pit->items()) {
    if (!value.is_string()) throw Error(Errc::MalformedHeader, "palette names must be strings");
    std::size_t used = 0;
    int code = -1;
    try {
      code = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size() || code < 0 || code > 255)
      throw Error(Errc::MalformedHeader, "palette key '" + key + "' is not a label code");
    palette[static_cast<LabelCode>(code)] = value.get<std::string>();
  }
  io::expect_payload(payload, spec.voxel_count());
  std::vector<LabelCode> labels(payload.begin(), payload.end());
  return LabelVolume(spec, std::move(labels), std::move(palette));
}

inline void save_volume(const LabelVolume& volume, const std::filesystem::path& path) {
  io::write_file(path, encode_volume(volume));
}

inline LabelVolume load_volume(const std::filesystem::path& path) {
  return decode_volume(io::read_file(path));
}

}  // namespace captain

#endif  // CAPTAIN_VOLUME_HPP
