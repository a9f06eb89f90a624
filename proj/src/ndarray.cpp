// SPDX-License-Identifier: Apache-2.0

#include "som/ndarray.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "som/common.hpp"

namespace som {
namespace {

constexpr char kMagic[4] = {'N', 'D', 'A', 'R'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::size_t element_count(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string header(std::span<const std::uint32_t> dims, DType dtype, std::size_t count) {
  if (dims.size() > 255) throw ShapeError("ndar: too many dimensions");
  if (element_count(dims) != count) throw ShapeError("ndar: dims do not match payload size");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(dims.size()));
  for (auto d : dims) put_u32(out, d);
  return out;
}

}  // namespace

std::size_t NdArray::size() const { return element_count(dims); }

std::string encode_ndar(std::span<const std::uint32_t> dims, std::span<const float> values) {
  std::string out = header(dims, DType::kFloat32, values.size());
  out.reserve(out.size() + 4 * values.size());
  for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::string encode_ndar(std::span<const std::uint32_t> dims, std::span<const double> values) {
  std::string out = header(dims, DType::kFloat64, values.size());
  out.reserve(out.size() + 8 * values.size());
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

NdArray decode_ndar(const std::string& bytes) {
  if (bytes.size() < 7 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("ndar: bad magic");
  if (static_cast<std::uint8_t>(bytes[4]) != kVersion) throw IoError("ndar: unsupported version");
  NdArray arr;
  const auto code = static_cast<std::uint8_t>(bytes[5]);
  if (code > 1) throw IoError("ndar: unsupported dtype code " + std::to_string(code));
  arr.dtype = static_cast<DType>(code);
  const std::size_t ndim = static_cast<std::uint8_t>(bytes[6]);
  std::size_t at = 7;
  if (bytes.size() < at + 4 * ndim) throw IoError("ndar: truncated header");
  for (std::size_t i = 0; i < ndim; ++i, at += 4) arr.dims.push_back(get_u32(bytes, at));
  const std::size_t n = arr.size();
  const std::size_t width = arr.dtype == DType::kFloat32 ? 4 : 8;
  if (bytes.size() != at + width * n) throw IoError("ndar: payload size mismatch");
  arr.values.resize(n);
  for (std::size_t i = 0; i < n; ++i, at += width) {
    arr.values[i] = arr.dtype == DType::kFloat32 ? static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)))
                                                 : std::bit_cast<double>(get_u64(bytes, at));
  }
  return arr;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_ndar(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                std::span<const float> values) {
  write_file(path, encode_ndar(dims, values));
}

void write_ndar(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                std::span<const double> values) {
  write_file(path, encode_ndar(dims, values));
}

NdArray read_ndar(const std::filesystem::path& path) { return decode_ndar(read_file(path)); }

}  // namespace som
