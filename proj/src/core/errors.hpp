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

#include <stdexcept>
#include <string>

namespace ebmflow {

// Root of the library's exception hierarchy. The C API maps each subclass to
// a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an operation, or a non-finite training loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Cholesky of J + delta*I hit a non-positive pivot.
class PdFailure : public Error {
 public:
  using Error::Error;
};

// Invalid arguments or configuration supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, CRC, truncation, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace ebmflow
