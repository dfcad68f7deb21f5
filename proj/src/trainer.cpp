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

#include "ntkscale/trainer.hpp"

#include "ntkscale/parallel.hpp"
#include "ntkscale/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ntkscale {

namespace {

// f = scale * relu(a_w X W1^T + a_b b1) . w2
struct Scaling {
  double scale;
  double a_w;
  double a_b;
};

Scaling scaling(const ShallowNet& net) {
  const double n = static_cast<double>(net.width());
  if (net.parametrization == Parametrization::kNtk)
    return {net.sigma_w / std::sqrt(n), net.sigma_w, net.sigma_b};
  return {1.0 / n, 1.0, 1.0};
}

Eigen::MatrixXd preactivations(const ShallowNet& net, const PointMatrix& x) {
  require(x.cols() == net.dim(), "network: input dimension mismatch");
  const Scaling s = scaling(net);
  Eigen::MatrixXd z = s.a_w * (x * net.w1.transpose());
  z.rowwise() += s.a_b * net.b1.transpose();
  return z;
}

// Per-step work matrices reused across gradient steps.
struct StepBuffers {
  Eigen::MatrixXd z;
  Eigen::MatrixXd dz;
  Eigen::VectorXd e;
};

// Returns the training loss and writes its gradient, sharing one forward pass.
double loss_and_gradient(const ShallowNet& net, const PointMatrix& x,
                         const Eigen::VectorXd& targets, ShallowNet& gradient, StepBuffers& buf) {
  require(x.cols() == net.dim(), "network: input dimension mismatch");
  require(targets.size() == x.rows(), "train: target length mismatch");
  const Scaling s = scaling(net);
  const double inv_m = 1.0 / static_cast<double>(x.rows());
  buf.z.noalias() = x * net.w1.transpose();
  buf.z *= s.a_w;
  buf.z.rowwise() += s.a_b * net.b1.transpose();
  buf.dz = buf.z.cwiseMax(0.0);
  buf.e.noalias() = buf.dz * net.w2;
  buf.e = s.scale * buf.e - targets;
  gradient.w2.noalias() = buf.dz.transpose() * buf.e;
  gradient.w2 *= s.scale * inv_m;
  // d loss / d z, scaled by 1/M.
  buf.dz.noalias() = buf.e * net.w2.transpose();
  buf.dz.array() *= (buf.z.array() > 0.0).cast<double>();
  buf.dz *= s.scale * inv_m;
  gradient.w1.noalias() = buf.dz.transpose() * x;
  gradient.w1 *= s.a_w;
  gradient.b1.noalias() = buf.dz.colwise().sum().transpose();
  gradient.b1 *= s.a_b;
  return 0.5 * buf.e.squaredNorm() * inv_m;
}

}  // namespace

ShallowNet init(Parametrization parametrization, Eigen::Index n, int d, double sigma_w,
                double sigma_b, std::uint64_t seed) {
  require(n >= 1, "init: width must be >= 1");
  require(d >= 1, "init: dimension must be >= 1");
  if (parametrization == Parametrization::kNtk)
    require(sigma_w > 0.0 && sigma_b > 0.0, "init: sigma_w and sigma_b must be positive");
  ShallowNet net;
  net.parametrization = parametrization;
  net.sigma_w = sigma_w;
  net.sigma_b = sigma_b;
  net.w1.resize(n, d);
  net.b1.resize(n);
  net.w2.resize(n);
  Rng rng(seed, Stream::kNetwork);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int k = 0; k < d; ++k) net.w1(j, k) = rng.normal();
  for (Eigen::Index j = 0; j < n; ++j) net.b1[j] = rng.normal();
  for (Eigen::Index j = 0; j < n; ++j) net.w2[j] = rng.normal();
  return net;
}

double forward(const ShallowNet& net, ConstPoint x) {
  require(static_cast<int>(x.size()) == net.dim(), "network: input dimension mismatch");
  const Scaling s = scaling(net);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < net.width(); ++j) {
    double z = s.a_b * net.b1[j];
    for (int k = 0; k < net.dim(); ++k) z += s.a_w * net.w1(j, k) * x[k];
    if (z > 0.0) acc += net.w2[j] * z;
  }
  return s.scale * acc;
}

Eigen::VectorXd forward_batch(const ShallowNet& net, const PointMatrix& x) {
  const Scaling s = scaling(net);
  return s.scale * (preactivations(net, x).cwiseMax(0.0) * net.w2);
}

Eigen::VectorXd grad(const ShallowNet& net, ConstPoint x) {
  require(static_cast<int>(x.size()) == net.dim(), "network: input dimension mismatch");
  const Scaling s = scaling(net);
  const Eigen::Index n = net.width();
  const int d = net.dim();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(net.parameter_count());
  for (Eigen::Index j = 0; j < n; ++j) {
    double z = s.a_b * net.b1[j];
    for (int k = 0; k < d; ++k) z += s.a_w * net.w1(j, k) * x[k];
    if (z <= 0.0) continue;  // subgradient 0 at the kink
    const double back = s.scale * net.w2[j];
    for (int k = 0; k < d; ++k) g[j * d + k] = back * s.a_w * x[k];
    g[n * d + j] = back * s.a_b;
    g[n * d + n + j] = s.scale * z;
  }
  return g;
}

Eigen::MatrixXd empirical_ntk(const ShallowNet& net, const PointMatrix& x) {
  const Scaling s = scaling(net);
  const Eigen::MatrixXd z = preactivations(net, x);
  const Eigen::MatrixXd a = z.cwiseMax(0.0);
  const Eigen::MatrixXd h = (z.array() > 0.0).cast<double>();
  const Eigen::MatrixXd hw = h * net.w2.cwiseAbs2().asDiagonal();
  Eigen::MatrixXd inner = (s.a_w * s.a_w) * (x * x.transpose());
  inner.array() += s.a_b * s.a_b;
  Eigen::MatrixXd k = a * a.transpose();
  k.noalias() += ((hw * h.transpose()).array() * inner.array()).matrix();
  k *= s.scale * s.scale;
  return k.selfadjointView<Eigen::Upper>();
}

Eigen::MatrixXd empirical_ntk_serial(const ShallowNet& net, const PointMatrix& x) {
  const Eigen::Index m = x.rows();
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) grads.push_back(grad(net, row_span(x, i)));
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) k(i, j) = k(j, i) = grads[i].dot(grads[j]);
  return k;
}

MfParams to_mf_params(const ShallowNet& net) {
  require(net.parametrization == Parametrization::kMeanField,
          "to_mf_params: network is not in mean-field parametrization");
  MfParams p;
  p.c = net.w2;
  p.w = net.w1;
  p.b = net.b1;
  return p;
}

double critical_lr(const SpectralDecomposition& decomp) {
  require(decomp.size() >= 1 && decomp.eigenvalues[0] > 0.0,
          "critical_lr: spectrum has no positive eigenvalue");
  return 2.0 / decomp.eigenvalues[0];
}

double training_loss(const ShallowNet& net, const PointMatrix& x, const Eigen::VectorXd& targets) {
  require(targets.size() == x.rows(), "train: target length mismatch");
  return 0.5 * (forward_batch(net, x) - targets).squaredNorm() / static_cast<double>(x.rows());
}

void full_batch_gradient(const ShallowNet& net, const PointMatrix& x,
                         const Eigen::VectorXd& targets, ShallowNet& gradient) {
  StepBuffers buf;
  loss_and_gradient(net, x, targets, gradient, buf);
}

TrainLog train(ShallowNet& net, const Dataset& dataset, const Eigen::VectorXd& targets,
               double eta, std::size_t steps, std::span<const std::size_t> snapshot_steps) {
  require(eta > 0.0, "train: eta must be positive");
  require(targets.size() == dataset.size(), "train: target length mismatch");
  TrainLog log;
  log.eta = eta;
  log.loss.reserve(steps + 1);
  ShallowNet g = net;
  StepBuffers buf;
  std::size_t next_snapshot = 0;
  for (std::size_t k = 0;; ++k) {
    const double loss = loss_and_gradient(net, dataset.points, targets, g, buf);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "train: non-finite loss at step " << k;
      throw NumericalError(os.str());
    }
    log.loss.push_back(loss);
    while (next_snapshot < snapshot_steps.size() && snapshot_steps[next_snapshot] <= k) {
      if (snapshot_steps[next_snapshot] == k) {
        log.snapshot_steps.push_back(k);
        log.snapshots.push_back(net);
      }
      ++next_snapshot;
    }
    if (k == steps) break;
    net.w1 -= eta * g.w1;
    net.b1 -= eta * g.b1;
    net.w2 -= eta * g.w2;
  }
  return log;
}

void write_checkpoint(const ShallowNet& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("checkpoint: cannot open " + path + " for writing");
  const MfParams p = to_mf_params(net);
  out << "ntkscale-mf 1 " << p.size() << ' ' << p.dim() << '\n';
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    out << p.c[j];
    for (int k = 0; k < p.dim(); ++k) out << ' ' << p.w(j, k);
    out << ' ' << p.b[j] << '\n';
  }
}

MfParams read_mf_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  Eigen::Index n = 0;
  int d = 0;
  in >> magic >> version >> n >> d;
  if (magic != "ntkscale-mf" || version != 1 || n < 1 || d < 1)
    throw Error("checkpoint: bad header in " + path);
  MfParams p;
  p.c.resize(n);
  p.w.resize(n, d);
  p.b.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    in >> p.c[j];
    for (int k = 0; k < d; ++k) in >> p.w(j, k);
    in >> p.b[j];
  }
  if (!in) throw Error("checkpoint: truncated file " + path);
  return p;
}

}  // namespace ntkscale
