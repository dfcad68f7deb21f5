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

#include <functional>
#include <memory>
#include <string>
#include <variant>

namespace ntkscale {

// Extended-input geometry of a point pair.
struct Geometry {
  double r = 0.0;
  double r_prime = 0.0;
  double phi = 0.0;
  double cos_phi = 1.0;
};

double extended_norm(ConstPoint x, double sigma_w, double sigma_b);
Geometry geometry(ConstPoint x, ConstPoint x_prime, double sigma_w, double sigma_b);

struct ReluKernelValue {
  double theta = 0.0;
  double sigma_cov = 0.0;
};

ReluKernelValue ntk_shallow_relu(const Geometry& g, double sigma_w);

// I_s(phi) = int_0^{pi/2} cos^s psi / (1 - cos phi cos psi)^{s+1} dpsi, s > -1.
double angular_integral(double s, double phi);

// Gaussian moment <(z)+^s (z')+^s> for the pair covariance described by g.
double relu_moment(double s, const Geometry& g);

double cov_relu_q(const Geometry& g, double q, double sigma_w);
double ntk_relu_q(const Geometry& g, double q, double sigma_w);

double ntk_deep_relu(ConstPoint x, ConstPoint x_prime, int depth, double sigma_w, double sigma_b);
double deep_relu_diagonal(ConstPoint x, int depth, double sigma_w, double sigma_b);
// Coefficient of the first-layer angle in the leading singular term.
double deep_relu_singular_amplitude(ConstPoint x, int depth, double sigma_w, double sigma_b);

// Mean-field neuron parameters (c_i, w_i, b_i), one neuron per row of w.
struct MfParams {
  Eigen::VectorXd c;
  PointMatrix w;
  Eigen::VectorXd b;

  Eigen::Index size() const { return c.size(); }
  int dim() const { return static_cast<int>(w.cols()); }
};

double ntk_mf_empirical(const MfParams& params, ConstPoint x, ConstPoint x_prime);

struct ShallowReluNtk {};
struct ShallowReluCov {};
struct ReluPowerQ {
  double q = 1.0;
};
struct DeepRelu {
  int depth = 2;
};
struct MfEmpirical {
  std::shared_ptr<const MfParams> params;
};

struct KernelSpec {
  std::variant<ShallowReluNtk, ShallowReluCov, ReluPowerQ, DeepRelu, MfEmpirical> family;
  double sigma_w = 1.0;
  double sigma_b = 1.0;
};

void validate(const KernelSpec& spec);
std::string kind_name(const KernelSpec& spec);
bool is_covariance(const KernelSpec& spec);
bool is_half_integer(double q);

double evaluate(const KernelSpec& spec, ConstPoint x, ConstPoint x_prime);

struct SingularityInfo {
  double degree = 1.0;
  // A(x) in the singular term A(x) phi^degree; empty when empirical_only.
  std::function<double(ConstPoint)> amplitude;
  bool empirical_only = false;
  std::string note;
};

// a_q = Gamma(q)^2 Gamma(1/2 - q) / (sqrt(pi) 2^q).
double relu_q_amplitude_coefficient(double q);

SingularityInfo singularity_info(const KernelSpec& spec);

}  // namespace ntkscale
