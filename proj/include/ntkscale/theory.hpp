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

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace ntkscale {

enum class Scenario { kIndicator, kGp };

double c_fourier(int d, double alpha);
double gamma_const(int d, double alpha);
// Surface area of the unit sphere in R^d.
double sphere_area(int d);

double gamma_x(ConstPoint x, double alpha, double amplitude, double sigma_w, double sigma_b);

// Q(x) with theta~_x(n) = Q(x) |n'|^{-d-alpha}.
double fourier_prefactor(ConstPoint x, double alpha, double amplitude, double sigma_w,
                         double sigma_b);
// n with its component along x rescaled by r/sigma_b.
Eigen::VectorXd stretched_direction(ConstPoint x, ConstPoint n, double sigma_w, double sigma_b);
double fourier_singularity_value(ConstPoint x, double alpha, double amplitude, ConstPoint n,
                                 double sigma_w, double sigma_b);

// S_{d-1} <|n'|^{-d}> over uniform unit directions n.
McEstimate sphere_integral_mc(ConstPoint x, double sigma_w, double sigma_b, std::size_t samples,
                              std::uint64_t seed);
double sphere_integral_closed_form(ConstPoint x, double sigma_w, double sigma_b);

double eigen_exponent(int d, double alpha);
double tail_exponent(Scenario scenario, int d, double beta);
double loss_exponent(Scenario scenario, int d, double alpha, double beta);

struct EigenvalueAsymptote {
  double nu = 0.0;
  double lambda = 0.0;
  McEstimate lambda_integral;  // <gamma_x mu^{-alpha/(d+alpha)}>_mu
  std::optional<double> closed_form;
  double closed_form_deviation = 0.0;
  std::map<std::string, std::string> provenance;
};

// mc is a sample of mu used for all averages.
EigenvalueAsymptote eigenvalue_asymptote(const KernelSpec& kernel, const Dataset& mc);

double loss_asymptote(double lambda, double nu, double k, double kappa, double t);

struct LossCoefficient {
  Scenario scenario = Scenario::kIndicator;
  double xi = 0.0;
  double c = 0.0;
  McEstimate integral;           // surface or x-integral estimate
  double truncated_fraction = 0.0;  // samples below the density floor
  std::map<std::string, std::string> provenance;
};

LossCoefficient loss_coefficient_indicator(const KernelSpec& kernel, const DistributionSpec& mu,
                                           double radius, double jump, std::size_t n_surface,
                                           std::uint64_t seed);

LossCoefficient loss_coefficient_gp(const KernelSpec& ntk, const KernelSpec& covariance,
                                    const Dataset& mc, double density_floor = 1e-6);

struct CoefficientAsymptote {
  double kappa = 0.0;
  double k = 0.0;
  double tail_prefactor = 0.0;  // Q(lambda) = tail_prefactor * lambda^xi
  double xi = 0.0;

  double tail_mass(double lambda) const;
};

CoefficientAsymptote coefficient_asymptote(const LossCoefficient& loss, int d, double alpha,
                                           double beta, double lambda_integral);

struct AsymptoticPrediction {
  double nu = 0.0;
  double lambda = 0.0;
  double kappa = 0.0;
  double k = 0.0;
  double xi = 0.0;
  double c = 0.0;
  std::map<std::string, std::string> provenance;
};

AsymptoticPrediction assemble_prediction(const EigenvalueAsymptote& eig,
                                         const CoefficientAsymptote& coef,
                                         const LossCoefficient& loss);

}  // namespace ntkscale
