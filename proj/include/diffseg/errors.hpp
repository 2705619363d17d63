// Copyright 2026 The diffseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace diffseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad value, shape mismatch, out-of-range timestep.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Operation applied to a mask set in the wrong encoding state.
class InvalidState : public Error {
 public:
  using Error::Error;
};

// More ground-truth objects than prediction slots.
class TooManyObjects : public Error {
 public:
  using Error::Error;
};

// File / parse / serialization failures. Message names the file and record.
class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace diffseg
