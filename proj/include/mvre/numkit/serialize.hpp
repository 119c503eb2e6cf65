#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "mvre/error.hpp"
#include "mvre/numkit/tensor.hpp"

// Parameter snapshot layout (all integers and reals little-endian):
//   "MVRE"            4 bytes magic
//   version           u32 (currently 1)
//   then, repeated until end of stream, one record per tensor:
//     rank            u32
//     dims            u32 x rank
//     data            f64 x product(dims)

namespace mvre::numkit {

inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
bool get_le(std::istream& is, T& value) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  std::memcpy(&value, buf, sizeof(T));
  return true;
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, std::span<const Tensor> tensors) {
  os.write("MVRE", 4);
  detail::put_le<std::uint32_t>(os, kSnapshotVersion);
  for (const auto& t : tensors) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_le<double>(os, v);
  }
  if (!os) throw DataError("failed to write parameter snapshot");
}

inline std::vector<Tensor> read_snapshot(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MVRE", 4) != 0) throw DataError("snapshot: bad magic");
  std::uint32_t version = 0;
  if (!detail::get_le(is, version) || version != kSnapshotVersion)
    throw DataError("snapshot: unsupported version " + std::to_string(version));
  std::vector<Tensor> out;
  std::uint32_t rank = 0;
  while (detail::get_le(is, rank)) {
    if (rank == 0 || rank > 8) throw DataError("snapshot: invalid rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint32_t v = 0;
      if (!detail::get_le(is, v) || v == 0) throw DataError("snapshot: truncated or invalid dims");
      d = v;
    }
    std::vector<double> data(shape_size(shape));
    for (auto& v : data)
      if (!detail::get_le(is, v)) throw DataError("snapshot: truncated tensor data");
    out.emplace_back(std::move(shape), std::move(data));
  }
  return out;
}

inline void save_snapshot(const std::filesystem::path& path, std::span<const Tensor> tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_snapshot(os, tensors);
}

inline std::vector<Tensor> load_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_snapshot(is);
}

}  // namespace mvre::numkit
