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

#include "ntkscale/distributions.hpp"

#include "ntkscale/parallel.hpp"
#include "ntkscale/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ntkscale {

namespace {

double gaussian_log_norm(int d, double sigma) {
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

void fill_point(const DistributionSpec& spec, Rng& rng, double* out) {
  const int d = spec.dim;
  if (const auto* mix = std::get_if<GaussianMixture>(&spec.shape)) {
    const auto& c = mix->centers[rng.below(mix->centers.size())];
    for (int k = 0; k < d; ++k) out[k] = c[k] + mix->sigma * rng.normal();
  } else if (const auto* cube = std::get_if<UniformCube>(&spec.shape)) {
    for (int k = 0; k < d; ++k) out[k] = rng.uniform(-cube->half_width, cube->half_width);
  } else {
    const auto& iso = std::get<IsotropicGaussian>(spec.shape);
    for (int k = 0; k < d; ++k) out[k] = iso.sigma * rng.normal();
  }
}

}  // namespace

double McEstimate::relative_error() const {
  return mean != 0.0 ? std::abs(std_error / mean) : std::numeric_limits<double>::infinity();
}

DistributionSpec make_mixture(int d, int n_g, double sigma, std::uint64_t seed) {
  require(d >= 1, "make_mixture: dimension must be >= 1");
  require(n_g >= 1, "make_mixture: n_g must be >= 1");
  require(sigma > 0.0, "make_mixture: sigma must be positive");
  Rng rng(seed, Stream::kCenters);
  std::vector<Eigen::VectorXd> centers(n_g, Eigen::VectorXd(d));
  for (auto& c : centers)
    for (int k = 0; k < d; ++k) c[k] = rng.uniform(-1.0, 1.0);
  return make_mixture(std::move(centers), sigma);
}

DistributionSpec make_mixture(std::vector<Eigen::VectorXd> centers, double sigma) {
  require(!centers.empty(), "make_mixture: need at least one center");
  require(sigma > 0.0, "make_mixture: sigma must be positive");
  const int d = static_cast<int>(centers.front().size());
  DistributionSpec spec{d, GaussianMixture{std::move(centers), sigma}};
  validate(spec);
  return spec;
}

DistributionSpec make_uniform_cube(int d, double half_width) {
  DistributionSpec spec{d, UniformCube{half_width}};
  validate(spec);
  return spec;
}

DistributionSpec make_isotropic_gaussian(int d, double sigma) {
  DistributionSpec spec{d, IsotropicGaussian{sigma}};
  validate(spec);
  return spec;
}

void validate(const DistributionSpec& spec) {
  require(spec.dim >= 1, "distribution: dimension must be >= 1");
  if (const auto* mix = std::get_if<GaussianMixture>(&spec.shape)) {
    require(!mix->centers.empty(), "distribution: mixture needs n_g >= 1 centers");
    require(mix->sigma > 0.0, "distribution: mixture sigma must be positive");
    for (const auto& c : mix->centers)
      require(c.size() == spec.dim, "distribution: center dimension mismatch");
  } else if (const auto* cube = std::get_if<UniformCube>(&spec.shape)) {
    require(cube->half_width > 0.0, "distribution: cube half-width must be positive");
  } else {
    require(std::get<IsotropicGaussian>(spec.shape).sigma > 0.0,
            "distribution: isotropic sigma must be positive");
  }
}

std::string kind_name(const DistributionSpec& spec) {
  if (std::holds_alternative<GaussianMixture>(spec.shape)) return "gaussian_mixture";
  if (std::holds_alternative<UniformCube>(spec.shape)) return "uniform_cube";
  return "isotropic_gaussian";
}

double density(const DistributionSpec& spec, ConstPoint x) {
  if (static_cast<int>(x.size()) != spec.dim) {
    std::ostringstream os;
    os << "density: point has dimension " << x.size() << ", expected " << spec.dim;
    throw InvalidParameter(os.str());
  }
  const int d = spec.dim;
  if (const auto* mix = std::get_if<GaussianMixture>(&spec.shape)) {
    const double inv2s2 = 0.5 / (mix->sigma * mix->sigma);
    const double norm = std::exp(gaussian_log_norm(d, mix->sigma));
    double acc = 0.0;
    for (const auto& c : mix->centers) {
      double r2 = 0.0;
      for (int k = 0; k < d; ++k) r2 += (x[k] - c[k]) * (x[k] - c[k]);
      acc += std::exp(-r2 * inv2s2);
    }
    return norm * acc / static_cast<double>(mix->centers.size());
  }
  if (const auto* cube = std::get_if<UniformCube>(&spec.shape)) {
    for (int k = 0; k < d; ++k)
      if (std::abs(x[k]) > cube->half_width) return 0.0;
    return std::pow(2.0 * cube->half_width, -d);
  }
  const double sigma = std::get<IsotropicGaussian>(spec.shape).sigma;
  double r2 = 0.0;
  for (int k = 0; k < d; ++k) r2 += x[k] * x[k];
  return std::exp(gaussian_log_norm(d, sigma) - 0.5 * r2 / (sigma * sigma));
}

double max_density(const DistributionSpec& spec) {
  if (const auto* mix = std::get_if<GaussianMixture>(&spec.shape)) {
    double best = 0.0;
    for (const auto& c : mix->centers)
      best = std::max(best, density(spec, {c.data(), static_cast<std::size_t>(c.size())}));
    return best;
  }
  std::vector<double> origin(spec.dim, 0.0);
  return density(spec, origin);
}

bool is_symmetric(const DistributionSpec& spec) {
  return !std::holds_alternative<GaussianMixture>(spec.shape);
}

Dataset sample(const DistributionSpec& spec, std::size_t m, std::uint64_t seed) {
  validate(spec);
  require(m >= 1, "sample: M must be >= 1");
  Dataset out{PointMatrix(static_cast<Eigen::Index>(m), spec.dim), seed, spec};
  const std::size_t chunks = (m + kChunkSize - 1) / kChunkSize;
  NTKSCALE_OMP_PRAGMA("omp parallel for schedule(static)")
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    Rng rng(seed, Stream::kSamples, static_cast<std::uint64_t>(c));
    const std::size_t lo = static_cast<std::size_t>(c) * kChunkSize;
    const std::size_t hi = std::min(m, lo + kChunkSize);
    for (std::size_t i = lo; i < hi; ++i)
      fill_point(spec, rng, out.points.data() + i * spec.dim);
  }
  return out;
}

std::size_t symmetry_group_order(int d) {
  std::size_t f = 2;
  for (int k = 2; k <= d; ++k) f *= static_cast<std::size_t>(k);
  return f;
}

Dataset sample_symmetrized(const DistributionSpec& spec, std::size_t m, std::uint64_t seed) {
  validate(spec);
  require(is_symmetric(spec), "sample_symmetrized: distribution is not permutation/sign invariant");
  require(m >= 1, "sample_symmetrized: M must be >= 1");
  const int d = spec.dim;
  const std::size_t g = symmetry_group_order(d);
  const std::size_t n_base = (m + g - 1) / g;
  const Dataset base = sample(spec, n_base, seed);

  std::vector<std::vector<int>> perms;
  std::vector<int> p(d);
  std::iota(p.begin(), p.end(), 0);
  do {
    perms.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));

  Dataset out{PointMatrix(static_cast<Eigen::Index>(m), d), seed, spec};
  std::size_t row = 0;
  for (std::size_t b = 0; b < n_base && row < m; ++b) {
    for (double sign : {1.0, -1.0}) {
      for (const auto& perm : perms) {
        if (row == m) break;
        for (int k = 0; k < d; ++k)
          out.points(static_cast<Eigen::Index>(row), k) =
              sign * base.points(static_cast<Eigen::Index>(b), perm[k]);
        ++row;
      }
    }
  }
  return out;
}

namespace {

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
};

Moments chunked_moments(const Dataset& dataset, const PointFunction& u) {
  const Eigen::Index m = dataset.size();
  require(m >= 1, "mc_average: dataset is empty");
  const std::size_t chunks = (static_cast<std::size_t>(m) + kChunkSize - 1) / kChunkSize;
  std::vector<Moments> partial(chunks);
  std::vector<Eigen::Index> bad(chunks, -1);
  NTKSCALE_OMP_PRAGMA("omp parallel for schedule(static)")
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const Eigen::Index lo = static_cast<Eigen::Index>(c) * kChunkSize;
    const Eigen::Index hi = std::min<Eigen::Index>(m, lo + kChunkSize);
    Moments acc;
    for (Eigen::Index i = lo; i < hi; ++i) {
      const double v = u(dataset.point(i));
      if (!std::isfinite(v)) {
        bad[c] = i;
        break;
      }
      acc.sum += v;
      acc.sum_sq += v * v;
    }
    partial[c] = acc;
  }
  Moments total;
  for (std::size_t c = 0; c < chunks; ++c) {
    if (bad[c] >= 0) {
      std::ostringstream os;
      os << "mc_average: non-finite integrand at point " << bad[c] << " (";
      const auto x = dataset.point(bad[c]);
      for (std::size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
      os << ")";
      throw NumericalError(os.str());
    }
    total.sum += partial[c].sum;
    total.sum_sq += partial[c].sum_sq;
  }
  return total;
}

}  // namespace

double mc_average(const Dataset& dataset, const PointFunction& u) {
  return chunked_moments(dataset, u).sum / static_cast<double>(dataset.size());
}

McEstimate mc_estimate(const Dataset& dataset, const PointFunction& u) {
  const Moments mom = chunked_moments(dataset, u);
  const double n = static_cast<double>(dataset.size());
  const double mean = mom.sum / n;
  double var = n > 1 ? (mom.sum_sq - n * mean * mean) / (n - 1.0) : 0.0;
  var = std::max(var, 0.0);
  return {mean, std::sqrt(var / n)};
}

}  // namespace ntkscale
