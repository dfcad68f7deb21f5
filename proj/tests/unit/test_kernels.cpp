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

#include "doctest.h"
#include "ntkscale/distributions.hpp"
#include "ntkscale/gram.hpp"
#include "ntkscale/kernels.hpp"
#include "ntkscale/rng.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_pFq.hpp>

#include <cmath>
#include <numbers>

using namespace ntkscale;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> pt(std::initializer_list<double> v) { return v; }

std::vector<double> random_point(Rng& rng, int d, double scale = 1.0) {
  std::vector<double> x(static_cast<std::size_t>(d));
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

// Series in cos(phi) of the angular integral, summed term by term.
double angular_integral_series(double s, double phi) {
  const long double c = std::cos(static_cast<long double>(phi));
  long double sum = 0.0L;
  long double coef = 1.0L;  // (s+1)_k / k!
  for (int k = 0; k < 4000; ++k) {
    const long double a = 0.5L * (s + k + 1);
    const long double moment =
        0.5L * std::sqrt(static_cast<long double>(kPi)) * std::exp(std::lgamma(a) - std::lgamma(a + 0.5L));
    const long double term = coef * std::pow(c, k) * moment;
    sum += term;
    if (k > 20 && std::abs(term) < 1e-18L * std::abs(sum)) break;
    coef *= (s + 1 + k) / static_cast<long double>(k + 1);
  }
  return static_cast<double>(sum);
}

// Same series regrouped as two Gauss hypergeometric functions in cos^2(phi).
double angular_integral_hypergeometric(double s, double phi) {
  using boost::math::hypergeometric_pFq;
  const double c = std::cos(phi);
  const double z = c * c;
  const double h = 0.5 * std::sqrt(kPi);
  const double even = h * std::tgamma(0.5 * (s + 1)) / std::tgamma(0.5 * s + 1) *
                      hypergeometric_pFq({0.5 * (s + 1), 0.5 * (s + 2), 0.5 * (s + 1)},
                                         {0.5, 0.5 * s + 1}, z);
  const double odd = h * (s + 1) * c * std::tgamma(0.5 * s + 1) / std::tgamma(0.5 * (s + 3)) *
                     hypergeometric_pFq({0.5 * (s + 2), 0.5 * (s + 3), 0.5 * s + 1},
                                        {1.5, 0.5 * (s + 3)}, z);
  return even + odd;
}

// Arc-cosine closed forms for <(z)+^q (z')+^q> at unit variances.
double arccos_moment(int q, double phi) {
  const double s = std::sin(phi), c = std::cos(phi);
  if (q == 1) return (s + (kPi - phi) * c) / (2.0 * kPi);
  if (q == 2) return (3.0 * s * c + (kPi - phi) * (1.0 + 2.0 * c * c)) / (2.0 * kPi);
  throw std::logic_error("unsupported q");
}

double min_eigenvalue_ratio(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() / k.trace();
}

}  // namespace

TEST_CASE("geometry examples") {
  const Geometry g0 = geometry(pt({0.0, 0.0}), pt({0.0, 0.0}), 1.0, 1.0);
  CHECK(g0.r == 1.0);
  CHECK(g0.r_prime == 1.0);
  CHECK(g0.phi == 0.0);

  const Geometry g1 = geometry(pt({1.0, 0.0}), pt({0.0, 1.0}), 1.0, 1.0);
  CHECK(g1.r == doctest::Approx(std::sqrt(2.0)));
  CHECK(g1.r_prime == doctest::Approx(std::sqrt(2.0)));
  CHECK(g1.phi == doctest::Approx(kPi / 3.0).epsilon(1e-14));

  const Geometry g2 = geometry(pt({1.0}), pt({-1.0}), 1.0, 1.0);
  CHECK(g2.phi == doctest::Approx(kPi / 2.0).epsilon(1e-14));

  Rng rng(1, Stream::kMonteCarlo);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_point(rng, 3, 3.0);
    CHECK(geometry(x, x, 1.7, 0.3).phi == 0.0);
    const auto y = random_point(rng, 3, 3.0);
    const Geometry g = geometry(x, y, 1.7, 0.3);
    CHECK(g.phi < kPi);
    CHECK(g.r >= 0.3);
  }
  CHECK_THROWS_AS(geometry(pt({1.0}), pt({1.0}), 1.0, 0.0), InvalidParameter);
}

TEST_CASE("shallow ReLU NTK examples") {
  const ReluKernelValue v0 = ntk_shallow_relu(geometry(pt({0.0}), pt({0.0}), 1.0, 1.0), 1.0);
  CHECK(v0.theta == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(v0.sigma_cov == doctest::Approx(0.5).epsilon(1e-15));

  const ReluKernelValue v1 = ntk_shallow_relu(geometry(pt({1.0}), pt({-1.0}), 1.0, 1.0), 1.0);
  CHECK(v1.sigma_cov == doctest::Approx(1.0 / kPi).epsilon(1e-12));
  CHECK(v1.theta == doctest::Approx(1.0 / kPi).epsilon(1e-12));
  CHECK(v1.sigma_cov == doctest::Approx(0.318310).epsilon(1e-6));

  Rng rng(2, Stream::kMonteCarlo);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_point(rng, 2, 2.0);
    const auto y = random_point(rng, 2, 2.0);
    const auto a = ntk_shallow_relu(geometry(x, y, 1.3, 0.6), 1.3);
    const auto b = ntk_shallow_relu(geometry(y, x, 1.3, 0.6), 1.3);
    CHECK(a.theta == b.theta);
    CHECK(a.sigma_cov == b.sigma_cov);
    const auto diag = ntk_shallow_relu(geometry(x, x, 1.3, 0.6), 1.3);
    const double r = extended_norm(x, 1.3, 0.6);
    CHECK(diag.theta == doctest::Approx(1.69 * r * r).epsilon(1e-13));
  }
}

TEST_CASE("angular integral matches series and hypergeometric oracles") {
  for (double s : {-0.25, 0.25, 0.75, 1.0, 1.3, 2.0}) {
    for (double phi : {0.6, 1.0, 1.5, 2.2, 2.8}) {
      const double q = angular_integral(s, phi);
      CHECK(q == doctest::Approx(angular_integral_series(s, phi)).epsilon(1e-8));
      CHECK(q == doctest::Approx(angular_integral_hypergeometric(s, phi)).epsilon(1e-8));
    }
  }
}

TEST_CASE("integer-q moments match arc-cosine closed forms") {
  for (int q : {1, 2}) {
    for (double phi : {1e-3, 0.05, 0.4, 1.2, 2.0, 2.6}) {
      Geometry g;
      g.r = g.r_prime = 1.0;
      g.phi = phi;
      g.cos_phi = std::cos(phi);
      CHECK(relu_moment(q, g) == doctest::Approx(arccos_moment(q, phi)).epsilon(1e-8));
    }
  }
}

TEST_CASE("ReLU^q at q = 1 reproduces the shallow NTK") {
  Rng rng(3, Stream::kMonteCarlo);
  for (int i = 0; i < 40; ++i) {
    const auto x = random_point(rng, 3);
    const auto y = random_point(rng, 3);
    const Geometry g = geometry(x, y, 1.2, 0.8);
    const auto ref = ntk_shallow_relu(g, 1.2);
    CHECK(ntk_relu_q(g, 1.0, 1.2) == doctest::Approx(ref.theta).epsilon(1e-8));
    CHECK(cov_relu_q(g, 1.0, 1.2) == doctest::Approx(ref.sigma_cov).epsilon(1e-8));
  }
  const Geometry d = geometry(pt({0.4, -0.2, 1.0}), pt({0.4, -0.2, 1.0}), 1.2, 0.8);
  CHECK(cov_relu_q(d, 1.0, 1.2) == doctest::Approx(1.44 * d.r * d.r / 2.0).epsilon(1e-14));
}

TEST_CASE("ReLU^q moment agrees with a bivariate Gaussian Monte Carlo estimate") {
  const std::size_t n = 1000000;
  for (double q : {0.75, 1.25, 2.0}) {
    const auto x = pt({0.3, -0.7, 0.2});
    const auto y = pt({-0.5, 0.1, 0.9});
    const Geometry g = geometry(x, y, 1.0, 1.0);
    const double rho = g.cos_phi;
    Rng rng(static_cast<std::uint64_t>(q * 100), Stream::kMonteCarlo);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = rng.normal(), v = rng.normal();
      const double z = g.r * u;
      const double zp = g.r_prime * (rho * u + std::sqrt(1.0 - rho * rho) * v);
      const double f = std::pow(std::max(z, 0.0), q) * std::pow(std::max(zp, 0.0), q);
      sum += f;
      sum2 += f * f;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(relu_moment(q, g) - mean) < 3.0 * se);
  }
}

TEST_CASE("ReLU^q diagonal uses the closed-form moment") {
  const auto x = pt({0.5, 0.5});
  const Geometry g = geometry(x, x, 1.0, 1.0);
  const double r = g.r;
  for (double q : {0.75, 1.5, 2.0}) {
    const double expected = std::pow(r, 2 * q) * std::pow(2.0, q - 1) * std::tgamma(q + 0.5) /
                            std::sqrt(kPi);
    CHECK(relu_moment(q, g) == doctest::Approx(expected).epsilon(1e-14));
    // The off-diagonal quadrature approaches the diagonal value.
    const Geometry near = geometry(x, pt({0.5, 0.5 + 1e-6}), 1.0, 1.0);
    CHECK(relu_moment(q, near) == doctest::Approx(expected).epsilon(1e-4));
  }
}

TEST_CASE("deep ReLU at depth 2 equals the shallow kernel") {
  Rng rng(4, Stream::kMonteCarlo);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_point(rng, 3);
    const auto y = random_point(rng, 3);
    for (double sw : {1.0, 1.4}) {
      const double deep = ntk_deep_relu(x, y, 2, sw, 0.7);
      const double shallow = ntk_shallow_relu(geometry(x, y, sw, 0.7), sw).theta;
      CHECK(std::abs(deep / shallow - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("deep ReLU diagonal recursion") {
  const auto x = pt({0.3, 1.1, -0.4});
  const double sw = 1.3, sb = 0.6;
  double r2 = sw * sw * 1.46 + sb * sb;
  double theta = r2;
  for (int depth = 2; depth <= 5; ++depth) {
    // Hidden layers add the bias; the output layer has none.
    const double out = 0.5 * sw * sw * r2 + 0.5 * sw * sw * theta;
    CHECK(ntk_deep_relu(x, x, depth, sw, sb) == doctest::Approx(out).epsilon(1e-13));
    CHECK(deep_relu_diagonal(x, depth, sw, sb) == doctest::Approx(out).epsilon(1e-13));
    r2 = 0.5 * sw * sw * r2 + sb * sb;
    theta = r2 + 0.5 * sw * sw * theta;
  }
}

TEST_CASE("deep ReLU Gram matrix is symmetric PSD") {
  const Dataset ds = sample(make_mixture(3, 8, 0.5, 0), 200, 1);
  const KernelSpec spec{DeepRelu{4}, 1.0, 1.0};
  const Eigen::MatrixXd k = gram_matrix(spec, ds.points);
  CHECK((k - k.transpose()).norm() == 0.0);
  CHECK(min_eigenvalue_ratio(k) >= -1e-8);
}

TEST_CASE("singular amplitudes match a second difference across the diagonal") {
  // K(x,x+h) + K(x,x-h) - 2 K(x,x) = A (phi_+ + phi_-) + O(h^2).
  const auto x = pt({0.4, -0.3});
  const std::vector<double> dir = {0.6, 0.8};
  auto probe = [&](const KernelSpec& spec, double h) {
    std::vector<double> xp = x, xm = x;
    for (int k = 0; k < 2; ++k) {
      xp[k] += h * dir[k];
      xm[k] -= h * dir[k];
    }
    const double phis = geometry(x, xp, spec.sigma_w, spec.sigma_b).phi +
                        geometry(x, xm, spec.sigma_w, spec.sigma_b).phi;
    return (evaluate(spec, x, xp) + evaluate(spec, x, xm) - 2.0 * evaluate(spec, x, x)) / phis;
  };
  for (const KernelSpec& spec :
       {KernelSpec{ShallowReluNtk{}, 1.3, 0.7}, KernelSpec{DeepRelu{2}, 1.3, 0.7},
        KernelSpec{DeepRelu{3}, 1.3, 0.7}, KernelSpec{DeepRelu{4}, 0.8, 1.2}}) {
    const double a = singularity_info(spec).amplitude(x);
    CHECK(probe(spec, 1e-6) == doctest::Approx(a).epsilon(1e-3));
  }
}

TEST_CASE("mean-field empirical kernel") {
  MfParams one;
  one.c = Eigen::VectorXd::Ones(1);
  one.w = PointMatrix::Ones(1, 1);
  one.b = Eigen::VectorXd::Zero(1);
  CHECK(ntk_mf_empirical(one, pt({2.0}), pt({3.0})) == doctest::Approx(13.0));

  MfParams empty;
  empty.w = PointMatrix(0, 1);
  CHECK_THROWS(ntk_mf_empirical(empty, pt({1.0}), pt({1.0})));

  const Eigen::Index n = 100000;
  MfParams p;
  p.c.resize(n);
  p.w.resize(n, 2);
  p.b.resize(n);
  Rng rng(5, Stream::kNetwork);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.c[i] = rng.normal();
    p.w(i, 0) = rng.normal();
    p.w(i, 1) = rng.normal();
    p.b[i] = rng.normal();
  }
  Rng prng(6, Stream::kMonteCarlo);
  for (int t = 0; t < 5; ++t) {
    const auto x = random_point(prng, 2);
    const auto y = random_point(prng, 2);
    CHECK(ntk_mf_empirical(p, x, y) == ntk_mf_empirical(p, y, x));
    double sum = 0.0, sum2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double zx = p.w(i, 0) * x[0] + p.w(i, 1) * x[1] + p.b[i];
      const double zy = p.w(i, 0) * y[0] + p.w(i, 1) * y[1] + p.b[i];
      const double f = std::max(zx, 0.0) * std::max(zy, 0.0) +
                       p.c[i] * p.c[i] * (1.0 + x[0] * y[0] + x[1] * y[1]) * (zx > 0) * (zy > 0);
      sum += f;
      sum2 += f * f;
    }
    const double mean = sum / static_cast<double>(n);
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(ntk_mf_empirical(p, x, y) == doctest::Approx(mean).epsilon(1e-12));
    const double analytic = ntk_shallow_relu(geometry(x, y, 1.0, 1.0), 1.0).theta;
    CHECK(std::abs(mean - analytic) < 3.0 * se);
  }
}

TEST_CASE("singularity metadata") {
  CHECK(relu_q_amplitude_coefficient(1.0) == doctest::Approx(-1.0).epsilon(1e-14));
  const auto x0 = pt({0.0, 0.0});
  const auto relu = singularity_info({ShallowReluNtk{}, 1.0, 1.0});
  CHECK(relu.degree == 1.0);
  CHECK(relu.amplitude(x0) == doctest::Approx(-1.0 / (2.0 * kPi)));
  const auto q1 = singularity_info({ReluPowerQ{1.0}, 1.3, 0.5});
  const auto x = pt({0.2, 0.9});
  CHECK(q1.amplitude(x) ==
        doctest::Approx(singularity_info({ShallowReluNtk{}, 1.3, 0.5}).amplitude(x)).epsilon(1e-13));
  const auto cov = singularity_info({ShallowReluCov{}, 1.0, 1.0});
  CHECK(cov.degree == 3.0);
  CHECK(cov.amplitude(x0) == doctest::Approx(1.0 / (6.0 * kPi)));
  CHECK(cov.amplitude(x0) > 0.0);
  CHECK(singularity_info({ReluPowerQ{2.0}, 1.0, 1.0}).degree == 3.0);
  CHECK(singularity_info({ReluPowerQ{0.75}, 1.0, 1.0}).degree == doctest::Approx(0.5));
  CHECK_THROWS(singularity_info({ReluPowerQ{1.5}, 1.0, 1.0}));
  CHECK_THROWS(relu_q_amplitude_coefficient(2.5));
  CHECK(singularity_info({DeepRelu{3}, 1.0, 1.0}).degree == 1.0);
  auto params = std::make_shared<MfParams>();
  params->c = Eigen::VectorXd::Ones(1);
  params->w = PointMatrix::Ones(1, 1);
  params->b = Eigen::VectorXd::Zero(1);
  const auto mf = singularity_info({MfEmpirical{params}, 1.0, 1.0});
  CHECK(mf.empirical_only);
  CHECK(mf.degree == 1.0);
}

TEST_CASE("ReLU^q covariance singular term matches a second difference") {
  // For q in (1/2, 3/2) the leading non-smooth term of Theta_q is A phi^{2q-1}.
  const auto x = pt({0.3, 0.2});
  const KernelSpec spec{ReluPowerQ{0.75}, 1.0, 1.0};
  const double a = singularity_info(spec).amplitude(x);
  auto diff = [&](double h) {
    const auto xp = pt({0.3 + h, 0.2});
    const auto xm = pt({0.3 - h, 0.2});
    const double phis = std::pow(geometry(x, xp, 1.0, 1.0).phi, 0.5) +
                        std::pow(geometry(x, xm, 1.0, 1.0).phi, 0.5);
    return (evaluate(spec, x, xp) + evaluate(spec, x, xm) - 2.0 * evaluate(spec, x, x)) / phis;
  };
  CHECK(diff(1e-6) == doctest::Approx(a).epsilon(2e-3));
}

TEST_CASE("every family is symmetric and PSD on random points") {
  const Dataset ds = sample(make_mixture(2, 4, 0.5, 3), 150, 2);
  auto mf = std::make_shared<MfParams>();
  const Eigen::Index n = 300;
  mf->c.resize(n);
  mf->w.resize(n, 2);
  mf->b.resize(n);
  Rng rng(7, Stream::kNetwork);
  for (Eigen::Index i = 0; i < n; ++i) {
    mf->c[i] = rng.normal();
    mf->w(i, 0) = rng.normal();
    mf->w(i, 1) = rng.normal();
    mf->b[i] = rng.normal();
  }
  const std::vector<KernelSpec> specs = {
      {ShallowReluNtk{}, 1.2, 0.8}, {ShallowReluCov{}, 1.2, 0.8}, {ReluPowerQ{0.75}, 1.0, 1.0},
      {ReluPowerQ{2.0}, 1.0, 1.0},  {DeepRelu{3}, 1.1, 0.9},      {MfEmpirical{mf}, 1.0, 1.0}};
  for (const auto& spec : specs) {
    CAPTURE(kind_name(spec));
    const Eigen::MatrixXd k = gram_matrix(spec, ds.points);
    const Eigen::MatrixXd ref = gram_matrix_serial(spec, ds.points);
    CHECK((k - k.transpose()).norm() == 0.0);
    CHECK((k - ref).norm() <= 1e-12 * ref.norm());
    CHECK(min_eigenvalue_ratio(k) >= -1e-8);
    CHECK(evaluate(spec, ds.point(0), ds.point(1)) == evaluate(spec, ds.point(1), ds.point(0)));
  }
}

TEST_CASE("joint scale homogeneity of the shallow NTK") {
  Rng rng(8, Stream::kMonteCarlo);
  const double c = 1.7;
  for (int i = 0; i < 50; ++i) {
    const auto x = random_point(rng, 3);
    const auto y = random_point(rng, 3);
    const double base = ntk_shallow_relu(geometry(x, y, 0.9, 0.4), 0.9).theta;
    const double scaled = ntk_shallow_relu(geometry(x, y, c * 0.9, c * 0.4), c * 0.9).theta;
    CHECK(scaled == doctest::Approx(std::pow(c, 4) * base).epsilon(1e-13));
  }
}
