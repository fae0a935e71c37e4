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

#include "gradleak/ops.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "gradleak/error.hpp"

namespace gradleak::ops {
namespace {

using Attrs = Graph::Attrs;

Var Unary(OpKind kind, Var x, Attrs attrs = {}) {
  if (!x.valid()) Fail(ErrorCode::kContract, std::string(OpKindName(kind)) + ": invalid input");
  const Var in[] = {x};
  return x.graph()->Record(kind, in, std::move(attrs));
}

Var Binary(OpKind kind, Var a, Var b, Attrs attrs = {}) {
  if (!a.valid()) Fail(ErrorCode::kContract, std::string(OpKindName(kind)) + ": invalid input");
  const Var in[] = {a, b};
  return a.graph()->Record(kind, in, std::move(attrs));
}

void RequireImage(const char* op, const Var& x) {
  if (x.shape().size() != 4) {
    Fail(ErrorCode::kShape, std::string(op) + ": expected NHWC input, got " +
                                ShapeString(x.shape()));
  }
}

// Operators depend only on geometry, so they are shared across graphs.
template <typename Key, typename Build>
std::shared_ptr<const LinearOperator> Cached(const char* family, const Key& key, Build build) {
  static std::mutex mu;
  static std::map<std::pair<std::string, Key>, std::shared_ptr<const LinearOperator>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto k = std::make_pair(std::string(family), key);
  auto it = cache.find(k);
  if (it != cache.end()) return it->second;
  if (cache.size() > 256) cache.clear();
  auto op = build();
  cache.emplace(std::move(k), op);
  return op;
}

std::size_t OutExtent(std::size_t in, std::size_t kernel, std::size_t stride,
                      std::size_t padding, const char* op) {
  if (stride == 0 || kernel == 0 || in + 2 * padding < kernel) {
    Fail(ErrorCode::kShape, std::string(op) + ": window " + std::to_string(kernel) +
                                " does not fit extent " + std::to_string(in));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace

Var Add(Var a, Var b) { return Binary(OpKind::kAdd, a, b); }
Var Sub(Var a, Var b) { return Binary(OpKind::kSub, a, b); }
Var Mul(Var a, Var b) { return Binary(OpKind::kMul, a, b); }

Var Affine(Var x, double scale, double offset) {
  Attrs at;
  at.a = scale;
  at.b = offset;
  return Unary(OpKind::kAffine, x, std::move(at));
}

Var Scale(Var x, double factor) { return Affine(x, factor, 0.0); }
Var AddScalar(Var x, double offset) { return Affine(x, 1.0, offset); }

Var Pow(Var x, double exponent) {
  Attrs at;
  at.a = exponent;
  return Unary(OpKind::kPow, x, std::move(at));
}

Var Exp(Var x) { return Unary(OpKind::kExp, x); }
Var Sigmoid(Var x) { return Unary(OpKind::kSigmoid, x); }

Var Relu(Var x) {
  auto mask = std::make_shared<std::vector<double>>(x.size());
  const auto v = x.value().data();
  for (std::size_t i = 0; i < v.size(); ++i) (*mask)[i] = v[i] > 0.0 ? 1.0 : 0.0;
  Attrs at;
  at.mask = std::move(mask);
  return Unary(OpKind::kRelu, x, std::move(at));
}

Var Abs(Var x) {
  auto mask = std::make_shared<std::vector<double>>(x.size());
  const auto v = x.value().data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    (*mask)[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  }
  Attrs at;
  at.mask = std::move(mask);
  return Unary(OpKind::kAbs, x, std::move(at));
}

Var SafeReciprocal(Var x) { return Unary(OpKind::kSafeReciprocal, x); }

Var MatMul(Var a, Var b, bool transpose_a, bool transpose_b) {
  Attrs at;
  at.flag_a = transpose_a;
  at.flag_b = transpose_b;
  return Binary(OpKind::kMatMul, a, b, std::move(at));
}

Var Reshape(Var x, Shape shape) {
  if (x.valid() && x.shape() == shape) return x;
  Attrs at;
  at.shape = std::move(shape);
  return Unary(OpKind::kReshape, x, std::move(at));
}

Var Flatten(Var x) {
  const Shape s = x.shape();
  return Reshape(x, {s[0], x.size() / s[0]});
}

Var AddBias(Var x, Var bias) { return Binary(OpKind::kAddBias, x, bias); }
Var ReduceRows(Var x) { return Unary(OpKind::kReduceRows, x); }

Var ExpandRows(Var x, std::size_t rows) {
  Attrs at;
  at.count = rows;
  return Unary(OpKind::kExpandRows, x, std::move(at));
}

Var ReduceCols(Var x) { return Unary(OpKind::kReduceCols, x); }

Var ExpandCols(Var x, std::size_t cols) {
  Attrs at;
  at.count = cols;
  return Unary(OpKind::kExpandCols, x, std::move(at));
}

Var Sum(Var x) { return Unary(OpKind::kSum, x); }

Var Mean(Var x) { return Scale(Sum(x), 1.0 / static_cast<double>(x.size())); }

Var ExpandScalar(Var x, Shape shape) {
  Attrs at;
  at.shape = std::move(shape);
  return Unary(OpKind::kExpandScalar, x, std::move(at));
}

Var Dot(Var a, Var b) { return Sum(Mul(a, b)); }
Var SquaredNorm(Var x) { return Dot(x, x); }

Var L2Norm(Var x) {
  // flag_a makes the pow derivative p * out / s, which is 0 at s = 0.
  Attrs at;
  at.a = 0.5;
  at.flag_a = true;
  return Unary(OpKind::kPow, SquaredNorm(x), std::move(at));
}

Var LogSoftmax(Var logits) { return Unary(OpKind::kLogSoftmax, logits); }
Var Softmax(Var logits) { return Exp(LogSoftmax(logits)); }

Var SoftmaxCrossEntropy(Var logits, Var targets) {
  if (logits.shape().size() != 2 || logits.shape() != targets.shape()) {
    Fail(ErrorCode::kShape, "softmax-cross-entropy: logits " + ShapeString(logits.shape()) +
                                " vs targets " + ShapeString(targets.shape()));
  }
  const double rows = static_cast<double>(logits.shape()[0]);
  return Scale(Sum(Mul(targets, LogSoftmax(logits))), -1.0 / rows);
}

Var SoftmaxCrossEntropy(Var logits, std::span<const int> labels) {
  const Shape s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    Fail(ErrorCode::kShape, "softmax-cross-entropy: logits " + ShapeString(s) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  Tensor onehot(s);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= s[1]) {
      Fail(ErrorCode::kData, "label " + std::to_string(labels[r]) + " outside [0, " +
                                 std::to_string(s[1]) + ")");
    }
    onehot[r * s[1] + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  return SoftmaxCrossEntropy(logits, logits.graph()->Constant(std::move(onehot)));
}

Var ApplyLinear(Var x, std::shared_ptr<const LinearOperator> op, bool adjoint) {
  Attrs at;
  at.linear = std::move(op);
  at.flag_a = adjoint;
  return Unary(OpKind::kLinearMap, x, std::move(at));
}

Var Concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) Fail(ErrorCode::kDomain, "concat: no inputs");
  const Shape first = parts[0].shape();
  if (axis >= first.size() || (axis == 1 && first.size() != 2) || axis > 1) {
    Fail(ErrorCode::kShape, "concat: unsupported axis " + std::to_string(axis) + " for " +
                                ShapeString(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    Shape s = p.shape();
    Shape expect = first;
    expect[axis] = s[axis];
    if (s != expect) {
      Fail(ErrorCode::kShape,
           "concat: incompatible shapes " + ShapeString(first) + " and " + ShapeString(s));
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t rows = out_shape[0];
  const std::size_t out_row = NumElements(out_shape) / rows;
  Var total;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Shape s = p.shape();
    std::vector<LinearOperator::Entry> entries;
    entries.reserve(p.size());
    if (axis == 0) {
      const std::size_t base = offset * out_row;
      for (std::size_t i = 0; i < p.size(); ++i) entries.push_back({base + i, i, 1.0});
    } else {
      for (std::size_t r = 0; r < s[0]; ++r)
        for (std::size_t c = 0; c < s[1]; ++c)
          entries.push_back({r * out_shape[1] + offset + c, r * s[1] + c, 1.0});
    }
    offset += s[axis];
    auto op = std::make_shared<LinearOperator>(s, out_shape, std::move(entries));
    Var placed = ApplyLinear(p, std::move(op));
    total = total.valid() ? Add(total, placed) : placed;
  }
  return total;
}

Var Slice(Var x, std::size_t begin, std::size_t end) {
  const Shape s = x.shape();
  if (begin >= end || end > s[0]) {
    Fail(ErrorCode::kShape, "slice: rows [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") of " + ShapeString(s));
  }
  const std::size_t row = x.size() / s[0];
  Shape out_shape = s;
  out_shape[0] = end - begin;
  std::vector<LinearOperator::Entry> entries;
  entries.reserve((end - begin) * row);
  for (std::size_t i = 0; i < (end - begin) * row; ++i) {
    entries.push_back({i, begin * row + i, 1.0});
  }
  return ApplyLinear(x, std::make_shared<LinearOperator>(s, out_shape, std::move(entries)));
}

Var Conv2d(Var x, Var weight, Var bias, Conv2dGeometry g) {
  RequireImage("conv2d", x);
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const std::size_t n = xs[0], h = xs[1], w = xs[2], c = xs[3];
  if (ws.size() != 4 || ws[1] != g.kernel || ws[2] != g.kernel || ws[3] != c) {
    Fail(ErrorCode::kShape, "conv2d: incompatible shapes " + ShapeString(xs) + " and " +
                                ShapeString(ws));
  }
  if (bias.shape() != Shape{ws[0]}) {
    Fail(ErrorCode::kShape, "conv2d: incompatible shapes " + ShapeString(ws) + " and " +
                                ShapeString(bias.shape()));
  }
  const std::size_t oh = OutExtent(h, g.kernel, g.stride, g.padding, "conv2d");
  const std::size_t ow = OutExtent(w, g.kernel, g.stride, g.padding, "conv2d");
  const std::size_t k = g.kernel;
  const std::size_t patch = k * k * c;
  auto im2col = Cached("im2col", std::make_tuple(n, h, w, c, k, g.stride, g.padding), [&] {
    std::vector<LinearOperator::Entry> entries;
    entries.reserve(n * oh * ow * patch);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xq = 0; xq < ow; ++xq) {
          const std::size_t row = (b * oh + y) * ow + xq;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.padding);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix =
                  static_cast<long>(xq * g.stride + kx) - static_cast<long>(g.padding);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              for (std::size_t ch = 0; ch < c; ++ch) {
                entries.push_back({row * patch + (ky * k + kx) * c + ch,
                                   ((b * h + static_cast<std::size_t>(iy)) * w +
                                    static_cast<std::size_t>(ix)) * c + ch,
                                   1.0});
              }
            }
          }
        }
    return std::make_shared<const LinearOperator>(Shape{n, h, w, c}, Shape{n * oh * ow, patch},
                                                  std::move(entries));
  });
  const Var cols = ApplyLinear(x, im2col);
  const Var wf = Reshape(weight, {ws[0], patch});
  const Var y = AddBias(MatMul(cols, wf, false, true), bias);
  return Reshape(y, {n, oh, ow, ws[0]});
}

Var AvgPool2d(Var x, std::size_t kernel, std::size_t stride) {
  RequireImage("avgpool2d", x);
  const Shape s = x.shape();
  const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
  const std::size_t oh = OutExtent(h, kernel, stride, 0, "avgpool2d");
  const std::size_t ow = OutExtent(w, kernel, stride, 0, "avgpool2d");
  auto op = Cached("avgpool", std::make_tuple(n, h, w, c, kernel, stride, std::size_t{0}), [&] {
    const double wgt = 1.0 / static_cast<double>(kernel * kernel);
    std::vector<LinearOperator::Entry> entries;
    entries.reserve(n * oh * ow * c * kernel * kernel);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xq = 0; xq < ow; ++xq)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t out = ((b * oh + y) * ow + xq) * c + ch;
            for (std::size_t ky = 0; ky < kernel; ++ky)
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const std::size_t iy = y * stride + ky, ix = xq * stride + kx;
                entries.push_back({out, ((b * h + iy) * w + ix) * c + ch, wgt});
              }
          }
    return std::make_shared<const LinearOperator>(s, Shape{n, oh, ow, c}, std::move(entries));
  });
  return ApplyLinear(x, op);
}

Var MaxPool2d(Var x, std::size_t kernel, std::size_t stride) {
  RequireImage("maxpool2d", x);
  const Shape s = x.shape();
  const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
  const std::size_t oh = OutExtent(h, kernel, stride, 0, "maxpool2d");
  const std::size_t ow = OutExtent(w, kernel, stride, 0, "maxpool2d");
  const auto v = x.value().data();
  std::vector<LinearOperator::Entry> entries;
  entries.reserve(n * oh * ow * c);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xq = 0; xq < ow; ++xq)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((b * h + y * stride) * w + xq * stride) * c + ch;
          for (std::size_t ky = 0; ky < kernel; ++ky)
            for (std::size_t kx = 0; kx < kernel; ++kx) {
              const std::size_t idx =
                  ((b * h + y * stride + ky) * w + xq * stride + kx) * c + ch;
              if (v[idx] > v[best]) best = idx;
            }
          entries.push_back({((b * oh + y) * ow + xq) * c + ch, best, 1.0});
        }
  Attrs at;
  at.linear = std::make_shared<const LinearOperator>(s, Shape{n, oh, ow, c}, std::move(entries));
  return Unary(OpKind::kMaxPool, x, std::move(at));
}

Var TotalVariation(Var x) {
  RequireImage("total-variation", x);
  const Shape s = x.shape();
  const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
  auto diff = [&](bool vertical) {
    const std::size_t dh = vertical ? h - 1 : h;
    const std::size_t dw = vertical ? w : w - 1;
    return Cached(vertical ? "tv-v" : "tv-h", std::make_tuple(n, h, w, c), [&] {
      std::vector<LinearOperator::Entry> entries;
      entries.reserve(2 * n * dh * dw * c);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t y = 0; y < dh; ++y)
          for (std::size_t xq = 0; xq < dw; ++xq)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t out = ((b * dh + y) * dw + xq) * c + ch;
              const std::size_t here = ((b * h + y) * w + xq) * c + ch;
              const std::size_t there =
                  vertical ? here + w * c : here + c;
              entries.push_back({out, there, 1.0});
              entries.push_back({out, here, -1.0});
            }
      return std::make_shared<const LinearOperator>(s, Shape{n, dh, dw, c}, std::move(entries));
    });
  };
  Var total;
  if (h > 1) total = Mean(Abs(ApplyLinear(x, diff(true))));
  if (w > 1) {
    Var horiz = Mean(Abs(ApplyLinear(x, diff(false))));
    total = total.valid() ? Add(total, horiz) : horiz;
  }
  if (!total.valid()) total = Scale(Sum(x), 0.0);
  return total;
}

}  // namespace gradleak::ops
