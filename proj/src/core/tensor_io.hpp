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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ebmflow {

// Tensor file:
//   "EBMF" | u32 version | u32 rank | u64 dims[rank] | f64 payload | u32 crc32
// All integers and floats little-endian; the CRC covers every preceding byte.
constexpr std::uint32_t kTensorFileVersion = 1;

std::vector<unsigned char> encode_tensor(const Tensor& t);
// Throws FormatError with distinct messages for bad magic, unsupported
// version, truncation and CRC mismatch.
Tensor decode_tensor(std::span<const unsigned char> bytes);

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

std::uint32_t crc32(std::span<const unsigned char> bytes);

// Little-endian byte helpers shared with the checkpoint format.
void put_u32(std::vector<unsigned char>& out, std::uint32_t v);
void put_u64(std::vector<unsigned char>& out, std::uint64_t v);
void put_f64(std::vector<unsigned char>& out, double v);
std::uint32_t get_u32(const unsigned char* p);
std::uint64_t get_u64(const unsigned char* p);
double get_f64(const unsigned char* p);

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const unsigned char> bytes);

}  // namespace ebmflow
