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

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace ntkscale {

struct GaussianMixture {
  std::vector<Eigen::VectorXd> centers;
  double sigma = 0.5;
};

struct UniformCube {
  double half_width = 1.0;
};

struct IsotropicGaussian {
  double sigma = 1.0;
};

struct DistributionSpec {
  int dim = 0;
  std::variant<GaussianMixture, UniformCube, IsotropicGaussian> shape;
};

struct Dataset {
  PointMatrix points;
  std::uint64_t seed = 0;
  DistributionSpec spec;

  Eigen::Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
  ConstPoint point(Eigen::Index i) const { return row_span(points, i); }
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double relative_error() const;
};

DistributionSpec make_mixture(int d, int n_g, double sigma, std::uint64_t seed);
DistributionSpec make_mixture(std::vector<Eigen::VectorXd> centers, double sigma);
DistributionSpec make_uniform_cube(int d, double half_width);
DistributionSpec make_isotropic_gaussian(int d, double sigma);

void validate(const DistributionSpec& spec);
std::string kind_name(const DistributionSpec& spec);

double density(const DistributionSpec& spec, ConstPoint x);
// Upper bound on the density used for the importance-sampling floor.
double max_density(const DistributionSpec& spec);

// Invariant under coordinate permutations and the global sign flip.
bool is_symmetric(const DistributionSpec& spec);

Dataset sample(const DistributionSpec& spec, std::size_t m, std::uint64_t seed);

// Orbits of i.i.d. base points under coordinate permutations times {+1,-1}.
// Only for symmetric specs; the last orbit is truncated when m is not a
// multiple of the group order.
Dataset sample_symmetrized(const DistributionSpec& spec, std::size_t m, std::uint64_t seed);
std::size_t symmetry_group_order(int d);

using PointFunction = std::function<double(ConstPoint)>;

double mc_average(const Dataset& dataset, const PointFunction& u);
McEstimate mc_estimate(const Dataset& dataset, const PointFunction& u);

}  // namespace ntkscale
