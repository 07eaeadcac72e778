#ifndef CAPTAIN_IO_HPP
#define CAPTAIN_IO_HPP

// Shared plumbing for the CAPV1/CAPF1/CAPP1 containers: one compact JSON
// header line terminated by '\n', followed by a raw payload.

#include <array>
#include <cstdint>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "captain/error.hpp"
#include "captain/grid.hpp"
#include "json.hpp"

namespace captain {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

struct Container {
  json header;
  std::string_view payload;
};

/// Splits a container into its parsed header and a view of the payload.
/// The view aliases `bytes`.
inline Container split(std::string_view bytes, std::string_view expected_version) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error(Errc::MalformedHeader, "missing header line");
  json header = json::parse(bytes.substr(0, nl), nullptr, false);
  if (header.is_discarded() || !header.is_object())
    throw Error(Errc::MalformedHeader, "header is not a JSON object");
  if (!header.contains("version") || !header["version"].is_string())
    throw Error(Errc::MalformedHeader, "missing version");
  if (header["version"].get<std::string>() != expected_version)
    throw Error(Errc::UnknownVersion, header["version"].get<std::string>());
  return {std::move(header), bytes.substr(nl + 1)};
}

template <typename T, std::size_t N>
std::array<T, N> read_array(const json& header, const char* key) {
  const auto it = header.find(key);
  if (it == header.end() || !it->is_array() || it->size() != N)
    throw Error(Errc::MalformedHeader, std::string("bad field ") + key);
  std::array<T, N> out{};
  for (std::size_t a = 0; a < N; ++a) {
    const auto& e = (*it)[a];
    if (!e.is_number()) throw Error(Errc::MalformedHeader, std::string("bad field ") + key);
    if constexpr (std::is_integral_v<T>) {
      if (!e.is_number_integer()) throw Error(Errc::MalformedHeader, std::string("bad field ") + key);
    }
    out[a] = e.get<T>();
  }
  return out;
}

inline GridSpec read_grid(const json& header) {
  GridSpec g;
  g.dims = read_array<std::int64_t, 3>(header, "dims");
  g.spacing = read_array<double, 3>(header, "spacing_mm");
  g.origin = read_array<double, 3>(header, "origin_mm");
  g.validate();
  return g;
}

inline void write_grid(ordered_json& header, const GridSpec& g) {
  header["dims"] = g.dims;
  header["spacing_mm"] = g.spacing;
  header["origin_mm"] = g.origin;
}

inline std::string join(const ordered_json& header, std::string_view payload) {
  std::string out = header.dump();
  out.reserve(out.size() + 1 + payload.size());
  out += '\n';
  out.append(payload);
  return out;
}

inline void expect_payload(std::string_view payload, std::size_t expected) {
  if (payload.size() != expected)
    throw Error(Errc::DimensionMismatch, "payload " + std::to_string(payload.size()) +
                                             " bytes, expected " + std::to_string(expected));
}

// Little-endian float32 codec; the host order is checked at compile time.
static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

inline std::string encode_f32(const std::vector<float>& values) {
  std::string out(values.size() * sizeof(float), '\0');
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

inline std::vector<float> decode_f32(std::string_view payload) {
  std::vector<float> out(payload.size() / sizeof(float));
  if (!out.empty()) std::memcpy(out.data(), payload.data(), out.size() * sizeof(float));
  return out;
}

}  // namespace io
}  // namespace captain

#endif  // CAPTAIN_IO_HPP
