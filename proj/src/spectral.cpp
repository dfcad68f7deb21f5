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

#include "ntkscale/spectral.hpp"

#include "ntkscale/gram.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ntkscale {

Eigen::MatrixXd build_operator_matrix(const Dataset& dataset, const KernelSpec& kernel) {
  require(dataset.size() >= 1, "operator: dataset is empty");
  Eigen::MatrixXd k = gram_matrix(kernel, dataset.points);
  k /= static_cast<double>(dataset.size());
  return k;
}

SpectralDecomposition eigendecompose(const Eigen::MatrixXd& matrix) {
  require(matrix.rows() == matrix.cols(), "eigendecompose: matrix must be square");
  const Eigen::Index m = matrix.rows();
  require(m >= 1, "eigendecompose: empty matrix");
  const double norm = matrix.norm();
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-12 * std::max(norm, 1e-300), "eigendecompose: matrix is not symmetric");

  Eigen::MatrixXd a = matrix;
  Eigen::VectorXd w(m);
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', static_cast<lapack_int>(m),
                                         a.data(), static_cast<lapack_int>(m), w.data());
  if (info != 0) {
    std::ostringstream os;
    os << "eigendecompose: LAPACK dsyevd failed with info = " << info << " (size " << m
       << ", Frobenius norm " << norm << ", finite " << std::boolalpha << matrix.allFinite()
       << ")";
    throw NumericalError(os.str());
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return w[i] > w[j]; });

  SpectralDecomposition out;
  out.eigenvalues.resize(m);
  out.eigenvectors.resize(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out.eigenvalues[k] = w[order[static_cast<std::size_t>(k)]];
    out.eigenvectors.col(k) = a.col(order[static_cast<std::size_t>(k)]);
  }
  const double scale = out.eigenvalues.cwiseAbs().maxCoeff();
  out.most_negative = std::min(0.0, out.eigenvalues.minCoeff());
  for (Eigen::Index k = 0; k < m; ++k) {
    if (out.eigenvalues[k] < 0.0 && out.eigenvalues[k] >= -1e-8 * scale) {
      out.eigenvalues[k] = 0.0;
      ++out.clamped_negative;
    }
  }
  return out;
}

std::size_t counting_function(const SpectralDecomposition& decomp, double lambda) {
  std::size_t n = 0;
  for (Eigen::Index k = 0; k < decomp.size(); ++k)
    if (decomp.eigenvalues[k] > lambda) ++n;
  return n;
}

namespace {

void check_coefficients(const SpectralDecomposition& decomp, const Eigen::VectorXd& c) {
  require(c.size() == decomp.size(), "loss trajectory: coefficient length mismatch");
}

}  // namespace

std::vector<double> loss_trajectory(const SpectralDecomposition& decomp,
                                    const Eigen::VectorXd& coefficients,
                                    std::span<const double> times) {
  check_coefficients(decomp, coefficients);
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    require(t >= 0.0, "loss trajectory: negative time");
    double acc = 0.0;
    for (Eigen::Index k = 0; k < decomp.size(); ++k) {
      const double c2 = coefficients[k] * coefficients[k];
      if (c2 == 0.0) continue;
      acc += std::exp(std::log(c2) - 2.0 * decomp.eigenvalues[k] * t);
    }
    out.push_back(0.5 * acc);
  }
  return out;
}

std::vector<double> loss_trajectory_discrete(const SpectralDecomposition& decomp,
                                             const Eigen::VectorXd& coefficients, double eta,
                                             std::span<const std::size_t> steps) {
  check_coefficients(decomp, coefficients);
  require(eta > 0.0, "loss trajectory: eta must be positive");
  std::vector<double> out;
  out.reserve(steps.size());
  for (std::size_t step : steps) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < decomp.size(); ++k) {
      const double c2 = coefficients[k] * coefficients[k];
      const double f = std::abs(1.0 - eta * decomp.eigenvalues[k]);
      if (c2 == 0.0) continue;
      if (f == 0.0) {
        if (step == 0) acc += c2;
        continue;
      }
      acc += std::exp(std::log(c2) + 2.0 * static_cast<double>(step) * std::log(f));
    }
    out.push_back(0.5 * acc);
  }
  return out;
}

PowerLawFit fit_power_law_xy(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "fit: x and y lengths differ");
  require(x.size() >= 10, "fit: window shorter than 10 points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(x[i] > 0.0, "fit: non-positive abscissa");
    if (!(y[i] > 0.0)) {
      std::ostringstream os;
      os << "fit: non-positive value " << y[i] << " at position " << i;
      throw InvalidParameter(os.str());
    }
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  require(sxx > 0.0, "fit: degenerate abscissa");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ly[i] - (intercept + slope * lx[i]);
    ss += e * e;
  }
  PowerLawFit fit;
  fit.coefficient = std::exp(intercept);
  fit.exponent = -slope;
  fit.residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

PowerLawFit fit_power_law(std::span<const double> sequence, std::size_t n_min,
                          std::size_t n_max) {
  require(n_min >= 1, "fit: n_min must be >= 1");
  require(n_min < n_max && n_max <= sequence.size(), "fit: invalid window");
  std::vector<double> x;
  for (std::size_t n = n_min; n < n_max; ++n) x.push_back(static_cast<double>(n));
  PowerLawFit fit = fit_power_law_xy(x, sequence.subspan(n_min, n_max - n_min));
  fit.n_min = n_min;
  fit.n_max = n_max;
  return fit;
}

FitWindow default_window(std::size_t m, int d) {
  return {20 * static_cast<std::size_t>(std::max(1, d - 1)), m / 4};
}

PowerLawFit fit_eigenvalues(const SpectralDecomposition& decomp, FitWindow window) {
  const double floor = 1e-14 * decomp.eigenvalues[0];
  std::size_t n_max = std::min<std::size_t>(window.n_max, static_cast<std::size_t>(decomp.size()));
  for (std::size_t n = window.n_min; n < n_max; ++n) {
    if (decomp.eigenvalues[static_cast<Eigen::Index>(n)] < floor) {
      n_max = n;
      break;
    }
  }
  return fit_power_law({decomp.eigenvalues.data(), static_cast<std::size_t>(decomp.size())},
                       window.n_min, n_max);
}

PowerLawFit fit_tail_band(std::span<const double> tail_sums, FitWindow window) {
  const std::size_t limit = tail_sums.size() / 2;
  const std::size_t n_max = std::min(window.n_max, limit);
  std::vector<double> band(n_max, 0.0);
  for (std::size_t n = window.n_min; n < n_max; ++n)
    band[n] = tail_sums[n] - tail_sums[2 * n];
  PowerLawFit fit = fit_power_law(band, window.n_min, n_max);
  fit.coefficient /= 1.0 - std::pow(2.0, -fit.exponent);
  return fit;
}

std::vector<double> log_space(double lo, double hi, std::size_t count) {
  require(lo > 0.0 && hi > lo, "log_space: need 0 < lo < hi");
  require(count >= 2, "log_space: need at least 2 points");
  std::vector<double> out(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace ntkscale
