// Copyright 2026 The previvor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace previvor {

// Root of every error raised by the library. The CLI maps ConfigError and
// UsageError to exit code 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class EmptyInputError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

// Silk colour estimation found no usable candidate pixels.
class NoSilkFoundError : public Error { using Error::Error; };

class ManifestError : public Error { using Error::Error; };
class PairingError : public ManifestError { using ManifestError::ManifestError; };

// Wraps a failure inside one pipeline stage so callers can tell which stage
// broke.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace previvor
