// Copyright 2026 The ChaosLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace chaoslab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration / validation failure. `path` names the offending field in
// document notation, e.g. "services[2].capacity_per_instance".
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Raised when routing has no live region left, or when an evacuation would
// create that state.
class AllRegionsDownError : public Error {
 public:
  AllRegionsDownError() : Error("all regions are down or evacuated") {}
};

// The control group itself produced no steady-state signal; the experiment
// cannot be interpreted.
class IndeterminateControlError : public Error {
 public:
  IndeterminateControlError()
      : Error("control group mean is zero; experiment is indeterminate") {}
};

// Querying a metric window that has not been sealed yet.
class OpenWindowError : public Error {
 public:
  explicit OpenWindowError(const std::string& what) : Error(what) {}
};

// Guardrail or query referencing a metric id the sink does not know.
class UnknownMetricError : public Error {
 public:
  explicit UnknownMetricError(const std::string& id)
      : Error("unknown metric id: " + id) {}
};

}  // namespace chaoslab
