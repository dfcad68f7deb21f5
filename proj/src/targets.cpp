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

#include "ntkscale/targets.hpp"

#include "ntkscale/gram.hpp"
#include "ntkscale/rng.hpp"
#include "ntkscale/trainer.hpp"

#include <cmath>
#include <sstream>

namespace ntkscale {

void validate(const TargetSpec& spec) {
  if (const auto* ball = std::get_if<BallIndicator>(&spec)) {
    require(ball->radius > 0.0, "target: ball radius must be positive");
    require(ball->jump != 0.0, "target: ball jump must be nonzero");
    return;
  }
  const auto& gp = std::get<GpDraw>(spec);
  validate(gp.covariance);
  if (gp.sampler == GpSampler::kWideNetwork) {
    require(std::holds_alternative<ShallowReluCov>(gp.covariance.family),
            "target: wide-network sampler realizes the shallow ReLU covariance only");
    require(gp.width >= 1, "target: wide-network width must be >= 1");
  }
}

Eigen::MatrixXd jittered_cholesky(const Eigen::MatrixXd& gram, double& jitter, int& escalations) {
  const Eigen::Index m = gram.rows();
  jitter = 1e-10 * gram.trace() / static_cast<double>(m);
  escalations = 0;
  for (;;) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    if (escalations == 3) {
      std::ostringstream os;
      os << "target: Cholesky failed after 3 jitter escalations (jitter " << jitter << ")";
      throw NumericalError(os.str());
    }
    jitter *= 10.0;
    ++escalations;
  }
}

TargetRealization realize_target_detailed(const TargetSpec& spec, const Dataset& dataset) {
  validate(spec);
  const Eigen::Index m = dataset.size();
  TargetRealization out;
  if (const auto* ball = std::get_if<BallIndicator>(&spec)) {
    out.g.resize(m);
    const double r2 = ball->radius * ball->radius;
    for (Eigen::Index i = 0; i < m; ++i)
      out.g[i] = dataset.points.row(i).squaredNorm() < r2 ? ball->jump : 0.0;
    return out;
  }
  const auto& gp = std::get<GpDraw>(spec);
  if (gp.sampler == GpSampler::kWideNetwork) {
    const ShallowNet net = init(Parametrization::kNtk, gp.width, dataset.dim(),
                                gp.covariance.sigma_w, gp.covariance.sigma_b,
                                derive_seed(gp.seed, Stream::kTarget));
    out.g = forward_batch(net, dataset.points);
    return out;
  }
  const Eigen::MatrixXd gram = gram_matrix(gp.covariance, dataset.points);
  const Eigen::MatrixXd l = jittered_cholesky(gram, out.jitter, out.escalations);
  Rng rng(gp.seed, Stream::kTarget);
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
  out.g = l.triangularView<Eigen::Lower>() * z;
  return out;
}

Eigen::VectorXd realize_target(const TargetSpec& spec, const Dataset& dataset) {
  return realize_target_detailed(spec, dataset).g;
}

Eigen::VectorXd tail_sums(const Eigen::VectorXd& c) {
  const Eigen::Index m = c.size();
  Eigen::VectorXd s(m);
  double acc = 0.0;
  for (Eigen::Index n = m - 1; n >= 0; --n) {
    acc += c[n] * c[n];
    s[n] = acc;
  }
  return s;
}

CoefficientProfile expansion_coefficients(const Eigen::VectorXd& g,
                                          const SpectralDecomposition& decomp) {
  require(g.size() == decomp.size(), "expansion: length mismatch between g and eigenbasis");
  CoefficientProfile out;
  out.c = decomp.eigenvectors.transpose() * g / std::sqrt(static_cast<double>(g.size()));
  out.s = tail_sums(out.c);
  return out;
}

}  // namespace ntkscale
