// Copyright 2026 The gradleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef GRADLEAK_METRICS_HPP_
#define GRADLEAK_METRICS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "gradleak/nn.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

inline constexpr double kPsnrCapDb = 100.0;

// Both images are clipped to [0, 1]; MAX is 1.
double Psnr(const Tensor& reference, const Tensor& candidate);

// 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, averaged over
// valid window positions and then over channels. Images smaller than the
// window are scored from global statistics.
double Ssim(const Tensor& reference, const Tensor& candidate, const ImageShape& shape);

double MeanSquaredError(const Tensor& a, const Tensor& b);

struct MatchResult {
  // assignment[t] is the reconstruction scored against target t.
  std::vector<std::size_t> assignment;
  std::vector<double> psnr;
  std::vector<double> ssim;
  double total_mse = 0.0;
  bool greedy = false;  // batch too large for exhaustive search
};

inline constexpr std::size_t kExhaustiveMatchLimit = 8;

MatchResult BatchMatch(std::span<const Tensor> reconstructions, std::span<const Tensor> targets,
                       const ImageShape& shape);

// Rows of an [N, D] batch as separate tensors.
std::vector<Tensor> SplitRows(const Tensor& batch);

}  // namespace gradleak

#endif  // GRADLEAK_METRICS_HPP_
