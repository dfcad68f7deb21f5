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

#include <cstddef>
#include <span>
#include <vector>

namespace ntkscale {

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns aligned with eigenvalues
  std::size_t clamped_negative = 0;
  double most_negative = 0.0;    // before clamping

  Eigen::Index size() const { return eigenvalues.size(); }
};

struct PowerLawFit {
  double coefficient = 0.0;
  double exponent = 0.0;
  std::size_t n_min = 0;
  std::size_t n_max = 0;
  double residual = 0.0;
};

struct FitWindow {
  std::size_t n_min = 0;
  std::size_t n_max = 0;
};

Eigen::MatrixXd build_operator_matrix(const Dataset& dataset, const KernelSpec& kernel);

// Negative eigenvalues within 1e-8 of the largest magnitude are rounding and
// are clamped to zero; larger negatives are kept.
SpectralDecomposition eigendecompose(const Eigen::MatrixXd& matrix);

std::size_t counting_function(const SpectralDecomposition& decomp, double lambda);

std::vector<double> loss_trajectory(const SpectralDecomposition& decomp,
                                    const Eigen::VectorXd& coefficients,
                                    std::span<const double> times);

// Gradient-descent map: 1/2 sum (1 - eta lambda)^{2k} c^2.
std::vector<double> loss_trajectory_discrete(const SpectralDecomposition& decomp,
                                             const Eigen::VectorXd& coefficients, double eta,
                                             std::span<const std::size_t> steps);

// Least squares of log value against log n for n in [n_min, n_max).
PowerLawFit fit_power_law(std::span<const double> sequence, std::size_t n_min,
                          std::size_t n_max);
PowerLawFit fit_power_law_xy(std::span<const double> x, std::span<const double> y);

FitWindow default_window(std::size_t m, int d);

// Eigenvalue fit, with the window cut where lambda_n < 1e-14 lambda_0.
PowerLawFit fit_eigenvalues(const SpectralDecomposition& decomp, FitWindow window);

// Fit on band differences s_n - s_{2n}; the coefficient is rescaled to the
// tail sum s_n ~ K n^{-kappa}.
PowerLawFit fit_tail_band(std::span<const double> tail_sums, FitWindow window);

std::vector<double> log_space(double lo, double hi, std::size_t count);

}  // namespace ntkscale
