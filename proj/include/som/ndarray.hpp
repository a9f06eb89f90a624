// SPDX-License-Identifier: Apache-2.0
//
// "NDAR" binary arrays: magic "NDAR", u8 version (1), u8 dtype, u8 ndim,
// ndim x u32 LE dims, row-major LE payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace som {

enum class DType : std::uint8_t {
  kFloat32 = 0,
  kFloat64 = 1,
};

struct NdArray {
  DType dtype = DType::kFloat32;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // widened on read

  std::size_t size() const;
};

std::string encode_ndar(std::span<const std::uint32_t> dims, std::span<const float> values);
std::string encode_ndar(std::span<const std::uint32_t> dims, std::span<const double> values);
NdArray decode_ndar(const std::string& bytes);

void write_ndar(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                std::span<const float> values);
void write_ndar(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                std::span<const double> values);
NdArray read_ndar(const std::filesystem::path& path);

// Whole-file helpers shared by the dataset and checkpoint writers.
void write_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace som
