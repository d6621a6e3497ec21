// SPDX-License-Identifier: Apache-2.0
#include "gpcn/tensor_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gpcn::io {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError(std::string("truncated tensor stream: ") + what);
}

}  // namespace

std::string encode_tensor(const Tensor& t) {
  if (t.ndim() > 255) throw FormatError("tensor rank exceeds 255");
  std::string out = "GPCN";
  out.push_back(static_cast<char>(kFormatVersion));
  out.push_back(static_cast<char>(kDtypeF64));
  out.push_back(static_cast<char>(t.ndim()));
  for (auto e : t.shape()) put_u64(out, static_cast<std::uint64_t>(e));
  out.reserve(out.size() + 8 * t.data().size());
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  const std::string bytes = encode_tensor(t);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing tensor stream");
}

Tensor read_tensor(std::istream& is) {
  std::array<unsigned char, 7> header{};
  read_exact(is, header.data(), header.size(), "header");
  if (std::memcmp(header.data(), "GPCN", 4) != 0) throw FormatError("bad magic, expected GPCN");
  if (header[4] != kFormatVersion) throw FormatError("unsupported tensor format version " + std::to_string(header[4]));
  if (header[5] != kDtypeF64) throw FormatError("unsupported dtype " + std::to_string(header[5]));
  const int ndim = header[6];
  Shape shape(static_cast<std::size_t>(ndim));
  for (int i = 0; i < ndim; ++i) {
    unsigned char buf[8];
    read_exact(is, buf, 8, "extents");
    const std::uint64_t e = get_u64(buf);
    if (e > (1ULL << 40)) throw FormatError("implausible extent " + std::to_string(e));
    shape[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(e);
  }
  const auto n = static_cast<std::size_t>(numel(shape));
  std::vector<unsigned char> raw(n * 8);
  read_exact(is, raw.data(), raw.size(), "payload");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(raw.data() + 8 * i));
  return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_file_atomic(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tensor file " + path.string());
  return read_tensor(in);
}

std::uint32_t adler32(std::string_view bytes) {
  uLong a = ::adler32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    a = ::adler32(a, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(a);
}

std::string checksum_hex(std::uint32_t value) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", value);
  return buf;
}

std::uint32_t adler32_file(const std::filesystem::path& path) { return adler32(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gpcn::io
