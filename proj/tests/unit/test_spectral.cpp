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
#include "ntkscale/spectral.hpp"
#include "ntkscale/targets.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

using namespace ntkscale;

namespace {

// Cyclic Jacobi rotations; returns eigenvalues in descending order.
std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> w(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(w.rbegin(), w.rend());
  return w;
}

Eigen::MatrixXd random_symmetric(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed, Stream::kMonteCarlo);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

SpectralDecomposition from_values(std::vector<double> values) {
  SpectralDecomposition d;
  d.eigenvalues = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  d.eigenvectors = Eigen::MatrixXd::Identity(d.size(), d.size());
  return d;
}

}  // namespace

TEST_CASE("operator matrix of a single point") {
  Dataset ds{PointMatrix::Zero(1, 2), 0, make_isotropic_gaussian(2, 1.0)};
  const Eigen::MatrixXd a = build_operator_matrix(ds, {ShallowReluNtk{}, 1.0, 1.0});
  CHECK(a.rows() == 1);
  CHECK(a(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("duplicating points keeps the nonzero spectrum and adds zeros") {
  const Dataset ds = sample(make_mixture(2, 3, 0.5, 1), 5, 2);
  Dataset twice{PointMatrix(10, 2), 0, ds.spec};
  twice.points << ds.points, ds.points;
  const KernelSpec k{ShallowReluNtk{}, 1.0, 1.0};
  const auto a = eigendecompose(build_operator_matrix(ds, k));
  const auto b = eigendecompose(build_operator_matrix(twice, k));
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK(b.eigenvalues[i] == doctest::Approx(a.eigenvalues[i]).epsilon(1e-10));
  for (Eigen::Index i = 5; i < 10; ++i) CHECK(std::abs(b.eigenvalues[i]) < 1e-12);
}

TEST_CASE("operator matrix is exactly symmetric and names bad entries") {
  const Dataset ds = sample(make_mixture(3, 4, 0.5, 1), 60, 3);
  const Eigen::MatrixXd a = build_operator_matrix(ds, {DeepRelu{3}, 1.0, 1.0});
  CHECK((a - a.transpose()).norm() == 0.0);
  Dataset bad = ds;
  bad.points(7, 1) = NAN;
  try {
    build_operator_matrix(bad, {ShallowReluNtk{}, 1.0, 1.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
}

TEST_CASE("eigendecompose small cases") {
  Eigen::MatrixXd d = Eigen::Vector2d(1.0, 2.0).asDiagonal();
  const auto s = eigendecompose(d);
  CHECK(s.eigenvalues[0] == 2.0);
  CHECK(s.eigenvalues[1] == 1.0);

  const Eigen::MatrixXd a = random_symmetric(5, 9);
  const auto dec = eigendecompose(a);
  const auto ref = jacobi_eigenvalues(a);
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK(std::abs(dec.eigenvalues[i] - ref[static_cast<std::size_t>(i)]) < 1e-10);
  const Eigen::MatrixXd& v = dec.eigenvectors;
  CHECK((v.transpose() * v - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-8);
  CHECK((v * dec.eigenvalues.asDiagonal() * v.transpose() - a).norm() <= 1e-8 * a.norm());
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(eigendecompose(asym), InvalidParameter);
}

TEST_CASE("eigendecompose invariants on a kernel matrix") {
  const Dataset ds = sample(make_mixture(2, 8, 0.5, 0), 300, 1);
  const Eigen::MatrixXd a = build_operator_matrix(ds, {ShallowReluNtk{}, 1.0, 1.0});
  const auto dec = eigendecompose(a);
  for (Eigen::Index i = 1; i < dec.size(); ++i) CHECK(dec.eigenvalues[i - 1] >= dec.eigenvalues[i]);
  CHECK(dec.eigenvalues.minCoeff() >= -1e-8 * dec.eigenvalues[0]);
  const Eigen::MatrixXd& v = dec.eigenvectors;
  CHECK((v.transpose() * v - Eigen::MatrixXd::Identity(300, 300)).norm() < 1e-8);
  CHECK((v * dec.eigenvalues.asDiagonal() * v.transpose() - a).norm() <= 1e-8 * a.norm());
  CHECK(dec.eigenvalues.sum() == doctest::Approx(a.trace()).epsilon(1e-8));
}

TEST_CASE("eigendecompose keeps ties in index order") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  const auto dec = eigendecompose(a);
  CHECK(dec.eigenvalues == Eigen::Vector3d(1.0, 1.0, 1.0));
}

TEST_CASE("counting function") {
  const auto d = from_values({3.0, 2.0, 1.0});
  CHECK(counting_function(d, 1.5) == 2);
  CHECK(counting_function(d, 3.0) == 0);
  CHECK(counting_function(d, 10.0) == 0);
  CHECK(counting_function(d, -1.0) == 3);
}

TEST_CASE("loss trajectory basics") {
  const auto single = from_values({1.0});
  const std::vector<double> t = {0.0, 0.5, 2.0, 800.0};
  const auto l = loss_trajectory(single, Eigen::VectorXd::Ones(1), t);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(l[i] == doctest::Approx(0.5 * std::exp(-2.0 * t[i])).epsilon(1e-14));
  CHECK_THROWS(loss_trajectory(single, Eigen::VectorXd::Ones(1), std::vector<double>{-1.0}));

  const Dataset ds = sample(make_mixture(2, 8, 0.5, 0), 200, 1);
  const auto dec = eigendecompose(build_operator_matrix(ds, {ShallowReluNtk{}, 1.0, 1.0}));
  const Eigen::VectorXd g = realize_target(BallIndicator{0.5, 1.0}, ds);
  const auto prof = expansion_coefficients(g, dec);
  const auto l0 = loss_trajectory(dec, prof.c, std::vector<double>{0.0});
  CHECK(l0[0] == doctest::Approx(g.squaredNorm() / (2.0 * 200)).epsilon(1e-12));
  CHECK(l0[0] == doctest::Approx(0.5 * prof.s[0]).epsilon(1e-12));
  const auto times = log_space(1e-2, 1e6, 50);
  const auto curve = loss_trajectory(dec, prof.c, times);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] <= curve[i - 1]);
}

TEST_CASE("loss trajectory equals matrix-exponential evolution") {
  const Dataset ds = sample(make_mixture(2, 4, 0.5, 5), 40, 6);
  const Eigen::MatrixXd a = build_operator_matrix(ds, {ShallowReluNtk{}, 1.0, 1.0});
  const auto dec = eigendecompose(a);
  const Eigen::VectorXd g = realize_target(GpDraw{}, ds);
  const auto prof = expansion_coefficients(g, dec);
  for (double t : {0.1, 1.0, 10.0, 100.0}) {
    const Eigen::MatrixXd e = (-t * a).exp();
    const double direct = (e * g).squaredNorm() / (2.0 * 40);
    const double spectral = loss_trajectory(dec, prof.c, std::vector<double>{t})[0];
    CHECK(spectral == doctest::Approx(direct).epsilon(1e-8));
  }
}

TEST_CASE("discrete gradient-descent loss") {
  const auto d = from_values({2.0, 0.5});
  const Eigen::Vector2d c(1.0, 2.0);
  const std::vector<std::size_t> steps = {0, 1, 3};
  const auto l = loss_trajectory_discrete(d, c, 0.3, steps);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double k = static_cast<double>(steps[i]);
    CHECK(l[i] == doctest::Approx(0.5 * (std::pow(0.4, 2 * k) + 4.0 * std::pow(0.85, 2 * k))));
  }
}

TEST_CASE("power-law fits") {
  std::vector<double> exact(400), wobble(400), constant(400, 3.0);
  for (std::size_t n = 1; n < 400; ++n) {
    exact[n] = 2.0 * std::pow(n, -1.5);
    wobble[n] = exact[n] * (1.0 + 0.01 * std::sin(static_cast<double>(n)));
  }
  const auto f = fit_power_law(exact, 1, 400);
  CHECK(std::abs(f.coefficient - 2.0) < 1e-10);
  CHECK(std::abs(f.exponent - 1.5) < 1e-10);
  CHECK(f.residual < 1e-10);
  CHECK(std::abs(fit_power_law(wobble, 1, 400).exponent - 1.5) < 0.01);
  CHECK(std::abs(fit_power_law(constant, 1, 400).exponent) < 1e-10);
  CHECK_THROWS(fit_power_law(exact, 1, 10));
  std::vector<double> bad = exact;
  bad[50] = -1.0;
  CHECK_THROWS(fit_power_law(bad, 1, 400));
}

TEST_CASE("tail band fit recovers a pure power law") {
  std::vector<double> s(2000);
  for (std::size_t n = 1; n < s.size(); ++n) s[n] = 0.7 * std::pow(n, -0.8) + 1e-3;
  const auto f = fit_tail_band(s, {20, 500});
  CHECK(f.exponent == doctest::Approx(0.8).epsilon(1e-10));
  CHECK(f.coefficient == doctest::Approx(0.7).epsilon(1e-10));
}

TEST_CASE("default window and eigenvalue floor") {
  CHECK(default_window(2000, 2).n_min == 20);
  CHECK(default_window(2000, 4).n_min == 60);
  CHECK(default_window(2000, 1).n_max == 500);
  std::vector<double> v(100);
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = n < 60 ? std::pow(n + 1.0, -2.0) : 1e-20;
  const auto f = fit_eigenvalues(from_values(v), {5, 100});
  CHECK(f.n_max == 60);
}
