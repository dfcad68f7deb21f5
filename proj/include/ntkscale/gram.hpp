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

#include "ntkscale/kernels.hpp"

namespace ntkscale {

// Symmetric Gram matrix K_ij = k(x_i, x_j), assembled over i <= j.
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const PointMatrix& x);

// Single-threaded pairwise reference.
Eigen::MatrixXd gram_matrix_serial(const KernelSpec& spec, const PointMatrix& x);

}  // namespace ntkscale
