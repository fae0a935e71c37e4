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

#ifndef GRADLEAK_OPS_HPP_
#define GRADLEAK_OPS_HPP_

#include <span>

#include "gradleak/graph.hpp"

// Differentiable op library. Every function records a node in the graph its
// inputs belong to; all derivatives are themselves expressed with these ops,
// so backward passes can be differentiated again (max pooling excepted).
//
// Image tensors are NHWC: [batch, height, width, channels]. Convolution
// weights are [out_channels, kernel_h, kernel_w, in_channels].
namespace gradleak::ops {

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var x, double factor);
Var AddScalar(Var x, double offset);
// scale * x + offset, elementwise.
Var Affine(Var x, double scale, double offset);
Var Pow(Var x, double exponent);
Var Exp(Var x);
Var Sigmoid(Var x);
// Subgradient at 0 is 0.
Var Relu(Var x);
// Subgradient at 0 is 0.
Var Abs(Var x);
// 1/x, with 0 mapped to 0.
Var SafeReciprocal(Var x);

// op(a) * op(b) for rank-2 tensors, op = transpose when the flag is set.
Var MatMul(Var a, Var b, bool transpose_a = false, bool transpose_b = false);

Var Reshape(Var x, Shape shape);
// [N, ...] -> [N, prod(...)].
Var Flatten(Var x);

// x: [N, M], bias: [M].
Var AddBias(Var x, Var bias);
// [N, M] -> [M].
Var ReduceRows(Var x);
// [M] -> [rows, M].
Var ExpandRows(Var x, std::size_t rows);
// [N, K] -> [N].
Var ReduceCols(Var x);
// [N] -> [N, cols].
Var ExpandCols(Var x, std::size_t cols);

// Sum of all elements, shape [1].
Var Sum(Var x);
Var Mean(Var x);
// One-element x broadcast to `shape`.
Var ExpandScalar(Var x, Shape shape);
Var Dot(Var a, Var b);
Var SquaredNorm(Var x);
// Euclidean norm; its derivative at the origin is taken as 0.
Var L2Norm(Var x);

// Row-wise over [N, K] logits.
Var LogSoftmax(Var logits);
Var Softmax(Var logits);
// Mean over rows of -sum_k t_nk log softmax(z)_nk. `targets` is [N, K].
Var SoftmaxCrossEntropy(Var logits, Var targets);
// Hard labels; throws kData on labels outside [0, K).
Var SoftmaxCrossEntropy(Var logits, std::span<const int> labels);

// Concatenation along `axis` (0 or 1 for rank-2, 0 otherwise).
Var Concat(std::span<const Var> parts, std::size_t axis = 0);
// Rows [begin, end) along axis 0.
Var Slice(Var x, std::size_t begin, std::size_t end);

Var ApplyLinear(Var x, std::shared_ptr<const LinearOperator> op, bool adjoint = false);

struct Conv2dGeometry {
  std::size_t kernel = 5;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x: [N, H, W, C], weight: [O, k, k, C], bias: [O] -> [N, OH, OW, O].
Var Conv2d(Var x, Var weight, Var bias, Conv2dGeometry geometry);
Var AvgPool2d(Var x, std::size_t kernel, std::size_t stride);
// First-order only: differentiating its backward raises kUnsupportedHigherOrder.
Var MaxPool2d(Var x, std::size_t kernel, std::size_t stride);

// Anisotropic total variation of an NHWC batch: mean absolute difference
// between vertical neighbours plus the same for horizontal neighbours.
Var TotalVariation(Var x);

}  // namespace gradleak::ops

#endif  // GRADLEAK_OPS_HPP_
