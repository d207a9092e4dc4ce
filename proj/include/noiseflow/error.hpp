// Copyright 2026 The NoiseFlow-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NOISEFLOW_ERROR_HPP_
#define NOISEFLOW_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed architecture strings, invalid specs, unknown
/// ISO levels or cameras. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Architecture string that failed to parse; `position()` is the 0-based
/// character offset of the offending token.
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : InputError(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// File format problems: bad magic, version mismatch, truncation.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

/// Non-finite values or singular matrices met during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace nflow

#endif  // NOISEFLOW_ERROR_HPP_
