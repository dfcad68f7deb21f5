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

#include "ntkscale/distributions.hpp"
#include "ntkscale/kernels.hpp"
#include "ntkscale/spectral.hpp"

#include <cstdint>
#include <variant>

namespace ntkscale {

enum class GpSampler { kCholesky, kWideNetwork };

struct GpDraw {
  KernelSpec covariance{ShallowReluCov{}};
  std::uint64_t seed = 0;
  GpSampler sampler = GpSampler::kCholesky;
  Eigen::Index width = 100000;  // wide-network sampler only
};

struct BallIndicator {
  double radius = 0.5;
  double jump = 1.0;
};

using TargetSpec = std::variant<GpDraw, BallIndicator>;

struct TargetRealization {
  Eigen::VectorXd g;
  double jitter = 0.0;  // diagonal shift used by the Cholesky sampler
  int escalations = 0;
};

void validate(const TargetSpec& spec);

Eigen::VectorXd realize_target(const TargetSpec& spec, const Dataset& dataset);
TargetRealization realize_target_detailed(const TargetSpec& spec, const Dataset& dataset);

// Lower Cholesky factor of gram + jitter I with jitter escalation.
Eigen::MatrixXd jittered_cholesky(const Eigen::MatrixXd& gram, double& jitter, int& escalations);

struct CoefficientProfile {
  Eigen::VectorXd c;
  Eigen::VectorXd s;  // s_n = sum_{k >= n} c_k^2
};

CoefficientProfile expansion_coefficients(const Eigen::VectorXd& g,
                                          const SpectralDecomposition& decomp);
Eigen::VectorXd tail_sums(const Eigen::VectorXd& c);

}  // namespace ntkscale
