// Copyright 2026 The hhft-desk Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace hhft {

// Base of every error thrown by the library. `user_facing()` errors map to
// CLI exit code 2, the rest to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool user_facing() const noexcept { return false; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
  bool user_facing() const noexcept override { return true; }
};

// Violated calling contract (non-scalar loss, mismatched optimizer state, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
  bool user_facing() const noexcept override { return true; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  bool user_facing() const noexcept override { return true; }
};

class DataError : public Error {
 public:
  using Error::Error;
  bool user_facing() const noexcept override { return true; }
};

class LoadError : public Error {
 public:
  using Error::Error;
  bool user_facing() const noexcept override { return true; }
};

// Another error with added context (which run, which rung). Keeps the exit
// code class of the original.
class ContextError : public Error {
 public:
  ContextError(const std::string& what, bool user_facing) : Error(what), user_(user_facing) {}
  bool user_facing() const noexcept override { return user_; }

 private:
  bool user_;
};

}  // namespace hhft
