// Copyright 2026 The ebmflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tensor_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "errors.hpp"

namespace ebmflow {

namespace {

constexpr unsigned char kMagic[4] = {'E', 'B', 'M', 'F'};

}  // namespace

std::uint32_t crc32(std::span<const unsigned char> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

std::vector<unsigned char> encode_tensor(const Tensor& t) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_u32(out, kTensorFileVersion);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  out.reserve(out.size() + 8 * t.size() + 4);
  for (double v : t.values()) put_f64(out, v);
  put_u32(out, crc32(out));
  return out;
}

Tensor decode_tensor(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("tensor file: bad magic (expected \"EBMF\")");
  }
  auto need = [&](std::size_t n) {
    if (bytes.size() < n) throw FormatError("tensor file: truncated");
  };
  need(12);
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kTensorFileVersion) {
    throw FormatError("tensor file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t rank = get_u32(bytes.data() + 8);
  if (rank > 16) throw FormatError("tensor file: implausible rank " + std::to_string(rank));
  need(12 + 8 * static_cast<std::size_t>(rank));
  Tensor::Shape shape(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u64(bytes.data() + 12 + 8 * i);
    if (shape[i] != 0 && count > (std::size_t{1} << 40) / shape[i]) {
      throw FormatError("tensor file: implausible dimensions");
    }
    count *= shape[i];
  }
  const std::size_t payload = 12 + 8 * static_cast<std::size_t>(rank);
  const std::size_t total = payload + 8 * count + 4;
  need(total);
  if (bytes.size() > total) throw FormatError("tensor file: trailing bytes after CRC");
  const std::uint32_t stored = get_u32(bytes.data() + total - 4);
  if (stored != crc32(bytes.first(total - 4))) throw FormatError("tensor file: CRC mismatch");
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = get_f64(bytes.data() + payload + 8 * i);
  return Tensor(std::move(shape), std::move(data));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on '" + path + "'");
}

void write_tensor(const std::string& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const std::string& path) {
  try {
    return decode_tensor(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace ebmflow
