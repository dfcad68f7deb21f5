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
#include "ntkscale/spectral.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ntkscale {

enum class Parametrization { kNtk, kMeanField };

// Shallow ReLU network. In mean-field mode w2 holds c, w1 holds w and b1
// holds b; sigma_w and sigma_b are unused there.
struct ShallowNet {
  Parametrization parametrization = Parametrization::kNtk;
  PointMatrix w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double sigma_w = 1.0;
  double sigma_b = 1.0;

  Eigen::Index width() const { return w2.size(); }
  int dim() const { return static_cast<int>(w1.cols()); }
  Eigen::Index parameter_count() const { return width() * (dim() + 2); }
};

ShallowNet init(Parametrization parametrization, Eigen::Index n, int d, double sigma_w,
                double sigma_b, std::uint64_t seed);

double forward(const ShallowNet& net, ConstPoint x);
Eigen::VectorXd forward_batch(const ShallowNet& net, const PointMatrix& x);

// Gradient layout: w1 row-major (N*d), then b1 (N), then w2 (N).
Eigen::VectorXd grad(const ShallowNet& net, ConstPoint x);

Eigen::MatrixXd empirical_ntk(const ShallowNet& net, const PointMatrix& x);
Eigen::MatrixXd empirical_ntk_serial(const ShallowNet& net, const PointMatrix& x);

// Mean-field nets only.
MfParams to_mf_params(const ShallowNet& net);

double critical_lr(const SpectralDecomposition& decomp);

struct TrainLog {
  std::vector<double> loss;  // loss[k] is the loss before step k
  std::vector<std::size_t> snapshot_steps;
  std::vector<ShallowNet> snapshots;
  double eta = 0.0;
};

double training_loss(const ShallowNet& net, const PointMatrix& x, const Eigen::VectorXd& targets);
void full_batch_gradient(const ShallowNet& net, const PointMatrix& x,
                         const Eigen::VectorXd& targets, ShallowNet& gradient);

TrainLog train(ShallowNet& net, const Dataset& dataset, const Eigen::VectorXd& targets,
               double eta, std::size_t steps, std::span<const std::size_t> snapshot_steps);

// Text checkpoint: header line "ntkscale-mf 1 <N> <d>", then one row per
// neuron "c w_1 ... w_d b". Mean-field nets only.
void write_checkpoint(const ShallowNet& net, const std::string& path);
MfParams read_mf_checkpoint(const std::string& path);

}  // namespace ntkscale
