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

#ifndef GRADLEAK_OPTIM_HPP_
#define GRADLEAK_OPTIM_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are created on the first step and
// must keep matching the parameter shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamOptions options);

  void Step(std::span<Tensor> params, std::span<const Tensor> grads);

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_ = 0;
};

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
// coordinate. Raises kOracleFailure when f returns NaN.
Tensor FiniteDifferenceGradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                double h = 1e-6);

// ||a - b|| / max(||b||, floor), the comparison used by the gradient checks.
double RelativeError(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace gradleak

#endif  // GRADLEAK_OPTIM_HPP_
