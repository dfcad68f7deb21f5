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

#include "ntkscale/gram.hpp"

#include "ntkscale/parallel.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace ntkscale {

namespace {

[[noreturn]] void non_finite(Eigen::Index i, Eigen::Index j) {
  std::ostringstream os;
  os << "gram: non-finite kernel value at (" << i << ", " << j << ")";
  throw NumericalError(os.str());
}

void check_finite(const Eigen::MatrixXd& k) {
  for (Eigen::Index j = 0; j < k.cols(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i)
      if (!std::isfinite(k(i, j))) non_finite(i, j);
}

Eigen::MatrixXd mf_gram(const MfParams& p, const PointMatrix& x) {
  require(x.cols() == p.dim(), "gram: point dimension mismatch");
  const Eigen::MatrixXd z = (x * p.w.transpose()).rowwise() + p.b.transpose();
  const Eigen::MatrixXd a = z.cwiseMax(0.0);
  const Eigen::MatrixXd h = (z.array() > 0.0).cast<double>();
  const Eigen::MatrixXd hc = h * p.c.cwiseAbs2().asDiagonal();
  Eigen::MatrixXd xx = x * x.transpose();
  xx.array() += 1.0;
  Eigen::MatrixXd k = a * a.transpose();
  k.noalias() += ((hc * h.transpose()).array() * xx.array()).matrix();
  k /= static_cast<double>(p.size());
  return k.selfadjointView<Eigen::Upper>();
}

}  // namespace

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const PointMatrix& x) {
  validate(spec);
  if (const auto* mf = std::get_if<MfEmpirical>(&spec.family)) {
    Eigen::MatrixXd k = mf_gram(*mf->params, x);
    check_finite(k);
    return k;
  }
  const Eigen::Index m = x.rows();
  Eigen::MatrixXd k(m, m);
  std::vector<char> bad(static_cast<std::size_t>(m), 0);
  std::string failure;
  NTKSCALE_OMP_PRAGMA("omp parallel for schedule(dynamic, 16)")
  for (Eigen::Index j = 0; j < m; ++j) {
    try {
      for (Eigen::Index i = 0; i <= j; ++i) {
        const double v = evaluate(spec, row_span(x, i), row_span(x, j));
        k(i, j) = v;
        k(j, i) = v;
      }
    } catch (const std::exception& e) {
      bad[static_cast<std::size_t>(j)] = 1;
      NTKSCALE_OMP_PRAGMA("omp critical(ntkscale_gram)")
      if (failure.empty()) failure = e.what();
    }
  }
  for (char b : bad)
    if (b) throw NumericalError("gram: " + failure);
  check_finite(k);
  return k;
}

Eigen::MatrixXd gram_matrix_serial(const KernelSpec& spec, const PointMatrix& x) {
  validate(spec);
  const Eigen::Index m = x.rows();
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = evaluate(spec, row_span(x, i), row_span(x, j));
      if (!std::isfinite(v)) non_finite(i, j);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

}  // namespace ntkscale
