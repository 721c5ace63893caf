// Portable tensor file format.
//
// Layout: magic "IDPT", one version byte (currently 1), u32 rank, rank u32
// dimensions, then the raw f32 payload. All integers and floats are
// little-endian.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "idveil/common.hpp"
#include "idveil/tensor.hpp"

namespace idveil {

inline constexpr char kTensorMagic[4] = {'I', 'D', 'P', 'T'};
inline constexpr unsigned char kTensorVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "tensor i/o assumes a little-endian host");

inline void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

inline std::string tensor_to_bytes(const Tensor<float>& t) {
  std::string out;
  out.reserve(9 + 4 * t.rank() + 4 * t.size());
  out.append(kTensorMagic, 4);
  out.push_back(static_cast<char>(kTensorVersion));
  append_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    append_u32(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t payload = 4 * t.size();
  const std::size_t head = out.size();
  out.resize(head + payload);
  if (payload > 0) std::memcpy(out.data() + head, t.raw().data(), payload);
  return out;
}

inline Tensor<float> tensor_from_bytes(const std::string& bytes,
                                       const std::string& origin) {
  auto fail = [&](const std::string& why) -> Tensor<float> {
    throw state_error("tensor file " + origin + ": " + why);
  };
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    return fail("bad magic");
  }
  if (static_cast<unsigned char>(bytes[4]) != kTensorVersion) {
    return fail("unsupported version");
  }
  std::uint32_t rank = 0;
  std::memcpy(&rank, bytes.data() + 5, 4);
  if (rank > 8) return fail("implausible rank");
  if (bytes.size() < 9 + 4 * static_cast<std::size_t>(rank)) {
    return fail("truncated header");
  }
  std::vector<std::size_t> shape(rank);
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    std::memcpy(&d, bytes.data() + 9 + 4 * i, 4);
    shape[i] = d;
    total *= d;
  }
  const std::size_t head = 9 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() != head + 4 * total) return fail("payload size mismatch");
  std::vector<float> data(total);
  if (total > 0) std::memcpy(data.data(), bytes.data() + head, 4 * total);
  Tensor<float> t(std::move(shape), std::move(data));
  if (!t.all_finite()) return fail("non-finite payload");
  return t;
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw state_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw state_error("short write to " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw state_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void save_tensor(const std::filesystem::path& path,
                        const Tensor<float>& t) {
  write_file(path, tensor_to_bytes(t));
}

inline Tensor<float> load_tensor(const std::filesystem::path& path) {
  return tensor_from_bytes(read_file(path), path.string());
}

}  // namespace idveil
