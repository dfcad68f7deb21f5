// Copyright 2026 The ntkscale Authors
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

#include "ntkscale/common.hpp"
#include "ntkscale/distributions.hpp"
#include "ntkscale/kernels.hpp"
#include "ntkscale/targets.hpp"

#include "json.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace ntkscale {

constexpr int kArtifactVersion = 1;
constexpr const char* kOutputRootEnv = "NTKSCALE_OUTPUT_ROOT";

struct ValidationIssue {
  enum class Severity { kError, kWarning };
  Severity severity = Severity::kError;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const;
};

// Raised by run_experiment for failures after validation.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

const std::vector<std::string>& experiment_kinds();

DistributionSpec parse_distribution(const nlohmann::json& j, std::uint64_t seed);
KernelSpec parse_kernel(const nlohmann::json& j);
TargetSpec parse_target(const nlohmann::json& j, const KernelSpec& kernel, std::uint64_t seed);

ValidationReport validate_config(const nlohmann::json& config);

std::filesystem::path default_output_root();

struct RunResult {
  std::filesystem::path output_dir;
  nlohmann::json summary;
};

// Validates, runs every stage and writes the CSV files and summary.json.
RunResult run_experiment(const nlohmann::json& config, std::ostream* log = nullptr);

}  // namespace ntkscale
