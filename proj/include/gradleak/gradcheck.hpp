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


#ifndef GRADLEAK_GRADCHECK_HPP_
#define GRADLEAK_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace gradleak {

struct CheckResult {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;  // first failure, if any
};

// Every differentiable op against central differences on `instances` random
// shapes. Inputs are resampled away from relu/abs/pool kinks by 1e-3.
std::vector<CheckResult> RunFirstOrderChecks(std::uint64_t seed, std::size_t instances = 10,
                                             double tolerance = 1e-5);

// Differentiates each smooth op's input gradient a second time.
std::vector<CheckResult> RunHigherOrderOpChecks(std::uint64_t seed, std::size_t instances = 10,
                                                double tolerance = 1e-5);

// g(x) = ||grad_theta L(f(x), y) - v||^2 on a two-layer sigmoid MLP.
CheckResult RunGradientMatchingCheck(std::uint64_t seed, std::size_t instances = 3,
                                     double tolerance = 1e-4);

// Mean-loss batch gradient against the mean of per-sample gradients.
CheckResult RunBatchLinearityCheck(std::uint64_t seed, double tolerance = 1e-9);

std::vector<CheckResult> RunAllChecks(std::uint64_t seed);

}  // namespace gradleak

#endif  // GRADLEAK_GRADCHECK_HPP_
