// Copyright 2026 The pemfc-online Authors
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

namespace pemfc {

// Bad arguments, domain violations (ln of a non-positive current, E_oc
// dominance) and malformed inputs. Maps to CLI exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejected configuration file or override.
class ConfigError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Regressor does not carry enough excitation for the requested operation.
class ExcitationError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Estimator state left the finite range. Maps to CLI exit code 2.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::string snapshot)
      : std::runtime_error(what), snapshot_(std::move(snapshot)) {}
  const std::string& snapshot() const { return snapshot_; }

 private:
  std::string snapshot_;
};

}  // namespace pemfc
