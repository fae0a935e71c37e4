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

#include "gradleak/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gradleak/error.hpp"

namespace gradleak {

Adam::Adam(AdamOptions options) : options_(options) {
  if (!(options_.lr > 0.0)) {
    Fail(ErrorCode::kConfig, "adam: learning rate must be positive, got " +
                                 std::to_string(options_.lr));
  }
}

void Adam::Step(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    Fail(ErrorCode::kShape, "adam: parameter and gradient counts differ");
  }
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != params.size()) Fail(ErrorCode::kShape, "adam: parameter count changed");
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != m_[i].shape()) {
      Fail(ErrorCode::kShape, "adam: shape mismatch " + ShapeString(params[i].shape()) +
                                  " vs " + ShapeString(grads[i].shape()));
    }
    auto p = params[i].data();
    const auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

Tensor FiniteDifferenceGradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                double h) {
  if (!(h > 0.0)) Fail(ErrorCode::kDomain, "finite differences: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (std::isnan(up) || std::isnan(down)) {
      Fail(ErrorCode::kOracleFailure,
           "finite differences: objective returned NaN at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double RelativeError(const Tensor& a, const Tensor& b, double floor) {
  if (a.size() != b.size()) {
    Fail(ErrorCode::kShape, "relative error: " + ShapeString(a.shape()) + " vs " +
                                ShapeString(b.shape()));
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

}  // namespace gradleak
