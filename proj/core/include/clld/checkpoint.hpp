#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "clld/encoder.hpp"

namespace clld {

inline constexpr std::uint32_t kArchiveFormatVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

// Binary container shared by pretraining checkpoints and fine-tuned models:
//
//   "CLLD" | u32 format_version | u64 config_digest | u32 meta_len | meta
//   | u32 array_count | per array: u32 name_len | name | u32 ndim
//   | u32 dims[ndim] | f32 values[prod(dims)]
//
// Integers and floats are little-endian; meta is a JSON document.
struct Archive {
  std::uint32_t format_version = kArchiveFormatVersion;
  std::uint64_t config_digest = 0;
  std::string meta;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

std::string encode_archive(const Archive& archive);
// Throws LoadError on bad magic, version mismatch or truncation.
Archive decode_archive(std::string_view bytes, std::uint32_t expected_version = kArchiveFormatVersion);

void write_archive(const Archive& archive, const std::filesystem::path& path);
Archive read_archive(const std::filesystem::path& path, std::uint32_t expected_version = kArchiveFormatVersion);

template <typename T>
void store_params(Archive& archive, const std::string& prefix, const ParamSet<T>& params);

// Overwrites every parameter named prefix + name; shapes must match.
template <typename T>
void restore_params(const Archive& archive, const std::string& prefix, ParamSet<T>& params);

}  // namespace clld
