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

#include <cstdint>
#include <random>

namespace ntkscale {

// Stream identifiers. Chunked streams add the chunk index to the low bits.
enum class Stream : std::uint64_t {
  kCenters = 1,
  kSamples = 2,
  kTarget = 3,
  kNetwork = 4,
  kSphere = 5,
  kMonteCarlo = 6,
};

constexpr std::size_t kChunkSize = 1024;

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t chunk = 0);

// Mersenne twister keyed by (seed, stream, chunk); uniforms and normals are
// computed from raw 64-bit words so results do not depend on the standard
// library's distribution code.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t chunk = 0);

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ntkscale
