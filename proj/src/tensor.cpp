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

#include "gradleak/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradleak/error.hpp"

namespace gradleak {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kUnsupportedHigherOrder: return "unsupported higher-order derivative";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kData: return "data error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kProtocol: return "protocol error";
    case ErrorCode::kOracleFailure: return "oracle failure";
    case ErrorCode::kAttackDiverged: return "attack diverged";
    case ErrorCode::kCraftingDiverged: return "crafting diverged";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end()) {
    Fail(ErrorCode::kShape, "tensor extents must be positive, got " + ShapeString(shape_));
  }
  data_.assign(NumElements(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end()) {
    Fail(ErrorCode::kShape, "tensor extents must be positive, got " + ShapeString(shape_));
  }
  if (NumElements(shape_) != data_.size()) {
    Fail(ErrorCode::kShape, "shape " + ShapeString(shape_) + " does not hold " +
                                std::to_string(data_.size()) + " values");
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    Fail(ErrorCode::kContract, "item() on tensor of shape " + ShapeString(shape_));
  }
  return data_[0];
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != data_.size()) {
    Fail(ErrorCode::kShape,
         "cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    Fail(ErrorCode::kShape, "MaxAbsDiff: " + ShapeString(a.shape()) + " vs " +
                                ShapeString(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gradleak
