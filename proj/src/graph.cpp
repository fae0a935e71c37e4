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

#include "gradleak/graph.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gradleak/error.hpp"
#include "gradleak/ops.hpp"

namespace gradleak {

const char* OpKindName(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kAffine: return "affine";
    case OpKind::kPow: return "pow";
    case OpKind::kExp: return "exp";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kAbs: return "abs";
    case OpKind::kMaskMul: return "mask-mul";
    case OpKind::kSafeReciprocal: return "safe-reciprocal";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kLinearMap: return "linear-map";
    case OpKind::kReshape: return "reshape";
    case OpKind::kAddBias: return "add-bias";
    case OpKind::kReduceRows: return "reduce-rows";
    case OpKind::kExpandRows: return "expand-rows";
    case OpKind::kReduceCols: return "reduce-cols";
    case OpKind::kExpandCols: return "expand-cols";
    case OpKind::kSum: return "sum";
    case OpKind::kExpandScalar: return "expand-scalar";
    case OpKind::kLogSoftmax: return "log-softmax";
    case OpKind::kMaxPool: return "maxpool2d";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Var

bool Var::valid() const {
  return graph_ != nullptr && generation_ == graph_->generation_ &&
         id_ < graph_->nodes_.size();
}

const Tensor& Var::value() const {
  if (!valid()) Fail(ErrorCode::kContract, "use of a stale or empty graph handle");
  return graph_->nodes_[id_].value;
}

// ---------------------------------------------------------------------------
// LinearOperator

LinearOperator::LinearOperator(Shape in_shape, Shape out_shape, std::vector<Entry> entries)
    : in_shape_(std::move(in_shape)), out_shape_(std::move(out_shape)) {
  const std::size_t n_in = NumElements(in_shape_);
  const std::size_t n_out = NumElements(out_shape_);
  auto build = [&](bool transpose, Csr& csr) {
    const std::size_t rows = transpose ? n_in : n_out;
    csr.row_begin.assign(rows + 1, 0);
    for (const Entry& e : entries) {
      const std::size_t r = transpose ? e.in : e.out;
      const std::size_t c = transpose ? e.out : e.in;
      if (r >= rows || c >= (transpose ? n_out : n_in)) {
        Fail(ErrorCode::kShape, "linear operator entry out of range");
      }
      ++csr.row_begin[r + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) csr.row_begin[r + 1] += csr.row_begin[r];
    csr.cols.resize(entries.size());
    csr.weights.resize(entries.size());
    std::vector<std::uint32_t> cursor(csr.row_begin.begin(), csr.row_begin.end() - 1);
    for (const Entry& e : entries) {
      const std::size_t r = transpose ? e.in : e.out;
      const std::uint32_t slot = cursor[r]++;
      csr.cols[slot] = static_cast<std::uint32_t>(transpose ? e.out : e.in);
      csr.weights[slot] = e.weight;
    }
  };
  build(false, forward_);
  build(true, adjoint_);
}

void LinearOperator::Apply(std::span<const double> in, std::span<double> out,
                           bool adjoint) const {
  const Csr& csr = adjoint ? adjoint_ : forward_;
  const std::size_t rows = csr.row_begin.size() - 1;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::uint32_t k = csr.row_begin[r]; k < csr.row_begin[r + 1]; ++k) {
      acc += csr.weights[k] * in[csr.cols[k]];
    }
    out[r] = acc;
  }
}

// ---------------------------------------------------------------------------
// Forward evaluation

namespace {

[[noreturn]] void ShapeFail(OpKind kind, const Shape& a, const Shape& b) {
  Fail(ErrorCode::kShape, std::string(OpKindName(kind)) + ": incompatible shapes " +
                              ShapeString(a) + " and " + ShapeString(b));
}

void RequireRank(OpKind kind, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    Fail(ErrorCode::kShape, std::string(OpKindName(kind)) + ": expected rank " +
                                std::to_string(rank) + ", got " + ShapeString(t.shape()));
  }
}

// C = op(A) * op(B), C is m x n.
void MatMulKernel(const Tensor& a, const Tensor& b, bool ta, bool tb, Tensor& c) {
  const std::size_t m = c.dim(0);
  const std::size_t n = c.dim(1);
  const std::size_t k = ta ? a.dim(0) : a.dim(1);
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = c.data().data();
  std::vector<double> a_t;
  if (ta && tb) {
    // Materialize A^T so the inner loop below runs over contiguous memory.
    a_t.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) a_t[i * k + p] = A[p * m + i];
    A = a_t.data();
    ta = false;
  }
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        if (av == 0.0) continue;
        const double* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = A[p * m + i];
        if (av == 0.0) continue;
        double* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = A + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = B + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        C[i * n + j] = acc;
      }
    }
  }
}

double StableSigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor Graph::Evaluate(const Node& node, std::span<const Tensor* const> in) const {
  const OpKind kind = node.kind;
  const Attrs& at = node.attrs;
  auto unary = [&](auto fn) {
    Tensor out(in[0]->shape());
    const auto x = in[0]->data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i], i);
    return out;
  };
  auto binary = [&](auto fn) {
    if (in[0]->shape() != in[1]->shape()) ShapeFail(kind, in[0]->shape(), in[1]->shape());
    Tensor out(in[0]->shape());
    const auto x = in[0]->data();
    const auto z = in[1]->data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i], z[i]);
    return out;
  };

  switch (kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return node.value;
    case OpKind::kAdd:
      return binary([](double a, double b) { return a + b; });
    case OpKind::kSub:
      return binary([](double a, double b) { return a - b; });
    case OpKind::kMul:
      return binary([](double a, double b) { return a * b; });
    case OpKind::kAffine:
      return unary([&](double x, std::size_t) { return at.a * x + at.b; });
    case OpKind::kPow: {
      const double p = at.a;
      for (double x : in[0]->data()) {
        if ((x < 0 && p != std::floor(p)) || (x == 0 && p < 0)) {
          Fail(ErrorCode::kDomain, "pow: base " + std::to_string(x) +
                                       " outside the domain of exponent " + std::to_string(p));
        }
      }
      return unary([&](double x, std::size_t) { return std::pow(x, p); });
    }
    case OpKind::kExp:
      return unary([](double x, std::size_t) { return std::exp(x); });
    case OpKind::kSigmoid:
      return unary([](double x, std::size_t) { return StableSigmoid(x); });
    case OpKind::kRelu:
    case OpKind::kAbs:
    case OpKind::kMaskMul: {
      const std::vector<double>& mask = *at.mask;
      if (mask.size() != in[0]->size()) {
        Fail(ErrorCode::kShape, std::string(OpKindName(kind)) + ": mask size mismatch");
      }
      return unary([&](double x, std::size_t i) { return x * mask[i]; });
    }
    case OpKind::kSafeReciprocal:
      return unary([](double x, std::size_t) { return x == 0.0 ? 0.0 : 1.0 / x; });
    case OpKind::kMatMul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      RequireRank(kind, a, 2);
      RequireRank(kind, b, 2);
      const bool ta = at.flag_a;
      const bool tb = at.flag_b;
      const std::size_t m = ta ? a.dim(1) : a.dim(0);
      const std::size_t ka = ta ? a.dim(0) : a.dim(1);
      const std::size_t kb = tb ? b.dim(1) : b.dim(0);
      const std::size_t n = tb ? b.dim(0) : b.dim(1);
      if (ka != kb) ShapeFail(kind, a.shape(), b.shape());
      Tensor c({m, n});
      MatMulKernel(a, b, ta, tb, c);
      return c;
    }
    case OpKind::kLinearMap:
    case OpKind::kMaxPool: {
      const bool adj = at.flag_a;
      const LinearOperator& op = *at.linear;
      if (NumElements(op.in_shape(adj)) != in[0]->size()) {
        ShapeFail(kind, in[0]->shape(), op.in_shape(adj));
      }
      Tensor out(op.out_shape(adj));
      op.Apply(in[0]->data(), out.data(), adj);
      return out;
    }
    case OpKind::kReshape:
      if (NumElements(at.shape) != in[0]->size()) ShapeFail(kind, in[0]->shape(), at.shape);
      return in[0]->Reshaped(at.shape);
    case OpKind::kAddBias: {
      const Tensor& x = *in[0];
      const Tensor& b = *in[1];
      RequireRank(kind, x, 2);
      if (b.rank() != 1 || b.dim(0) != x.dim(1)) ShapeFail(kind, x.shape(), b.shape());
      Tensor out(x.shape());
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + b[c];
      return out;
    }
    case OpKind::kReduceRows: {
      const Tensor& x = *in[0];
      RequireRank(kind, x, 2);
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      Tensor out({cols});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += x[r * cols + c];
      return out;
    }
    case OpKind::kExpandRows: {
      const Tensor& x = *in[0];
      RequireRank(kind, x, 1);
      const std::size_t cols = x.dim(0);
      Tensor out({at.count, cols});
      for (std::size_t r = 0; r < at.count; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c];
      return out;
    }
    case OpKind::kReduceCols: {
      const Tensor& x = *in[0];
      RequireRank(kind, x, 2);
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      Tensor out({rows});
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += x[r * cols + c];
        out[r] = acc;
      }
      return out;
    }
    case OpKind::kExpandCols: {
      const Tensor& x = *in[0];
      RequireRank(kind, x, 1);
      const std::size_t rows = x.dim(0);
      Tensor out({rows, at.count});
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < at.count; ++c) out[r * at.count + c] = x[r];
      return out;
    }
    case OpKind::kSum: {
      double acc = 0.0;
      for (double v : in[0]->data()) acc += v;
      return Tensor::Scalar(acc);
    }
    case OpKind::kExpandScalar:
      if (in[0]->size() != 1) ShapeFail(kind, in[0]->shape(), at.shape);
      return Tensor(at.shape, (*in[0])[0]);
    case OpKind::kLogSoftmax: {
      const Tensor& z = *in[0];
      RequireRank(kind, z, 2);
      const std::size_t rows = z.dim(0), cols = z.dim(1);
      Tensor out(z.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = z.data().data() + r * cols;
        const double mx = *std::max_element(zr, zr + cols);
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += std::exp(zr[c] - mx);
        const double lse = mx + std::log(acc);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = zr[c] - lse;
      }
      return out;
    }
  }
  Fail(ErrorCode::kContract, "unknown op kind");
}

// ---------------------------------------------------------------------------
// Recording

Graph::Graph() {
#if defined(__GLIBC__)
  // Node values are freed and reallocated every optimization step. Keeping
  // them on the heap instead of fresh mmap pages avoids a page fault per
  // element of every large tensor.
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

Var Graph::Leaf(Tensor value) {
  if (value.empty()) Fail(ErrorCode::kDomain, "leaf: empty tensor");
  Node node;
  node.kind = OpKind::kLeaf;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Handle(static_cast<NodeId>(nodes_.size() - 1));
}

Var Graph::Constant(Tensor value) {
  if (value.empty()) Fail(ErrorCode::kDomain, "constant: empty tensor");
  Node node;
  node.kind = OpKind::kConstant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Handle(static_cast<NodeId>(nodes_.size() - 1));
}

Var Graph::Record(OpKind kind, std::span<const Var> inputs, Attrs attrs) {
  if (inputs.empty() || inputs.size() > 2) {
    Fail(ErrorCode::kContract, std::string(OpKindName(kind)) + ": bad arity");
  }
  Node node;
  node.kind = kind;
  node.arity = static_cast<std::uint8_t>(inputs.size());
  node.attrs = std::move(attrs);
  std::array<const Tensor*, 2> values{};
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Var& v = inputs[i];
    if (v.graph_ != this || !v.valid()) {
      Fail(ErrorCode::kContract,
           std::string(OpKindName(kind)) + ": input belongs to another or a cleared graph");
    }
    if (nodes_[v.id_].value.empty()) {
      Fail(ErrorCode::kDomain, std::string(OpKindName(kind)) + ": empty input tensor");
    }
    node.inputs[i] = v.id_;
    values[i] = &nodes_[v.id_].value;
  }
  node.value = Evaluate(node, std::span<const Tensor* const>(values.data(), inputs.size()));
  for (double v : node.value.data()) {
    if (std::isnan(v)) {
      Fail(ErrorCode::kDomain, std::string(OpKindName(kind)) + " produced NaN");
    }
  }
  nodes_.push_back(std::move(node));
  return Handle(static_cast<NodeId>(nodes_.size() - 1));
}

void Graph::Clear() {
  nodes_.clear();
  ++generation_;
}

std::vector<Tensor> Graph::Replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const Node& node : nodes_) {
    if (node.kind == OpKind::kLeaf || node.kind == OpKind::kConstant) {
      values.push_back(node.value);
      continue;
    }
    std::array<const Tensor*, 2> in{};
    for (std::size_t i = 0; i < node.arity; ++i) in[i] = &values[node.inputs[i]];
    values.push_back(Evaluate(node, std::span<const Tensor* const>(in.data(), node.arity)));
  }
  return values;
}

// ---------------------------------------------------------------------------
// Reverse mode

void Graph::AccumulateVjp(NodeId id, Var g, std::span<const char> wanted,
                          std::vector<Var>& adjoints, bool create_graph) {
  // Copy what we need: recording new nodes may reallocate nodes_.
  const OpKind kind = nodes_[id].kind;
  const std::uint8_t arity = nodes_[id].arity;
  const std::array<NodeId, 2> in_ids = nodes_[id].inputs;
  const Attrs at = nodes_[id].attrs;
  const Var out = Handle(id);
  const Var a = Handle(in_ids[0]);
  const Var b = arity > 1 ? Handle(in_ids[1]) : Var();

  auto add = [&](std::size_t slot, Var contribution) {
    const NodeId target = in_ids[slot];
    Var& acc = adjoints[target];
    acc = acc.valid() ? ops::Add(acc, contribution) : contribution;
  };
  auto want = [&](std::size_t slot) { return slot < arity && wanted[in_ids[slot]]; };
  auto masked = [&](Var x, std::shared_ptr<const std::vector<double>> mask) {
    Attrs m;
    m.mask = std::move(mask);
    const Var inputs[] = {x};
    return Record(OpKind::kMaskMul, inputs, std::move(m));
  };

  switch (kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return;
    case OpKind::kAdd:
      if (want(0)) add(0, g);
      if (want(1)) add(1, g);
      return;
    case OpKind::kSub:
      if (want(0)) add(0, g);
      if (want(1)) add(1, ops::Scale(g, -1.0));
      return;
    case OpKind::kMul:
      if (want(0)) add(0, ops::Mul(g, b));
      if (want(1)) add(1, ops::Mul(g, a));
      return;
    case OpKind::kAffine:
      if (want(0)) add(0, ops::Scale(g, at.a));
      return;
    case OpKind::kPow:
      if (want(0)) {
        const Var slope = at.flag_a ? ops::Mul(out, ops::SafeReciprocal(a))
                                    : ops::Pow(a, at.a - 1.0);
        add(0, ops::Mul(g, ops::Scale(slope, at.a)));
      }
      return;
    case OpKind::kExp:
      if (want(0)) add(0, ops::Mul(g, out));
      return;
    case OpKind::kSigmoid:
      if (want(0)) add(0, ops::Mul(g, ops::Mul(out, ops::Affine(out, -1.0, 1.0))));
      return;
    case OpKind::kRelu:
    case OpKind::kAbs:
    case OpKind::kMaskMul:
      if (want(0)) add(0, masked(g, at.mask));
      return;
    case OpKind::kSafeReciprocal:
      if (want(0)) add(0, ops::Mul(g, ops::Scale(ops::Mul(out, out), -1.0)));
      return;
    case OpKind::kMatMul: {
      const bool ta = at.flag_a;
      const bool tb = at.flag_b;
      if (want(0)) {
        add(0, ta ? ops::MatMul(b, g, tb, true) : ops::MatMul(g, b, false, !tb));
      }
      if (want(1)) {
        add(1, tb ? ops::MatMul(g, a, true, ta) : ops::MatMul(a, g, !ta, false));
      }
      return;
    }
    case OpKind::kLinearMap:
      if (want(0)) add(0, ops::ApplyLinear(g, at.linear, !at.flag_a));
      return;
    case OpKind::kMaxPool:
      if (want(0)) {
        if (create_graph) {
          Fail(ErrorCode::kUnsupportedHigherOrder,
               "maxpool2d has no registered second derivative; use avgpool2d on "
               "create_graph paths");
        }
        add(0, ops::ApplyLinear(g, at.linear, !at.flag_a));
      }
      return;
    case OpKind::kReshape:
      if (want(0)) add(0, ops::Reshape(g, a.shape()));
      return;
    case OpKind::kAddBias:
      if (want(0)) add(0, g);
      if (want(1)) add(1, ops::ReduceRows(g));
      return;
    case OpKind::kReduceRows:
      if (want(0)) add(0, ops::ExpandRows(g, a.shape()[0]));
      return;
    case OpKind::kExpandRows:
      if (want(0)) add(0, ops::ReduceRows(g));
      return;
    case OpKind::kReduceCols:
      if (want(0)) add(0, ops::ExpandCols(g, a.shape()[1]));
      return;
    case OpKind::kExpandCols:
      if (want(0)) add(0, ops::ReduceCols(g));
      return;
    case OpKind::kSum:
      if (want(0)) add(0, ops::ExpandScalar(g, a.shape()));
      return;
    case OpKind::kExpandScalar:
      if (want(0)) add(0, ops::Reshape(ops::Sum(g), a.shape()));
      return;
    case OpKind::kLogSoftmax:
      if (want(0)) {
        const std::size_t cols = out.shape()[1];
        add(0, ops::Sub(g, ops::Mul(ops::Exp(out), ops::ExpandCols(ops::ReduceCols(g), cols))));
      }
      return;
  }
}

std::vector<Var> Graph::Backward(Var loss, std::span<const Var> wrt, bool create_graph) {
  if (loss.graph_ != this || !loss.valid()) {
    Fail(ErrorCode::kContract, "backward: loss does not belong to this graph");
  }
  if (loss.size() != 1) {
    Fail(ErrorCode::kContract,
         "backward: loss must be scalar, got shape " + ShapeString(loss.shape()));
  }
  for (const Var& w : wrt) {
    if (w.graph_ != this || !w.valid()) {
      Fail(ErrorCode::kContract, "backward: wrt node does not belong to this graph");
    }
  }
  const std::size_t end = loss.id_ + 1;
  const std::size_t mark = nodes_.size();

  // Only nodes downstream of some wrt node can carry a useful adjoint.
  std::vector<char> wanted(end, 0);
  for (const Var& w : wrt) {
    if (w.id_ < end) wanted[w.id_] = 1;
  }
  for (std::size_t n = 0; n < end; ++n) {
    if (wanted[n]) continue;
    const Node& node = nodes_[n];
    for (std::size_t i = 0; i < node.arity; ++i) {
      if (wanted[node.inputs[i]]) {
        wanted[n] = 1;
        break;
      }
    }
  }

  std::vector<Var> adjoints(end);
  if (wanted[loss.id_]) adjoints[loss.id_] = Constant(Tensor(loss.shape(), 1.0));
  for (std::size_t n = end; n-- > 0;) {
    if (!wanted[n] || !adjoints[n].valid()) continue;
    AccumulateVjp(static_cast<NodeId>(n), adjoints[n], wanted, adjoints, create_graph);
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  if (create_graph) {
    for (const Var& w : wrt) {
      const bool reached = w.id_ < end && adjoints[w.id_].valid();
      result.push_back(reached ? adjoints[w.id_] : Constant(Tensor(w.shape(), 0.0)));
    }
    return result;
  }
  std::vector<Tensor> values;
  values.reserve(wrt.size());
  for (const Var& w : wrt) {
    const bool reached = w.id_ < end && adjoints[w.id_].valid();
    values.push_back(reached ? adjoints[w.id_].value() : Tensor(w.shape(), 0.0));
  }
  nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(mark), nodes_.end());
  for (Tensor& v : values) result.push_back(Constant(std::move(v)));
  return result;
}

}  // namespace gradleak
