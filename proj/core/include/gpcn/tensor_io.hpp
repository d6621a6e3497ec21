// SPDX-License-Identifier: Apache-2.0
//
// Portable tensor file:
//   "GPCN" | u8 version=1 | u8 dtype (0 = f64) | u8 ndim | ndim x u64 LE extents
//   | row-major f64 LE payload
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "gpcn/tensor.hpp"

namespace gpcn::io {

inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 0;

/// Raised on malformed or truncated tensor streams.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_tensor(const Tensor& t);
void write_tensor(std::ostream& os, const Tensor& t);
/// Reads one record; the result is a fresh leaf without requires_grad.
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Adler-32 (zlib) of a byte range, rendered as 8 lowercase hex digits by `checksum_hex`.
std::uint32_t adler32(std::string_view bytes);
std::string checksum_hex(std::uint32_t value);
std::uint32_t adler32_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gpcn::io
