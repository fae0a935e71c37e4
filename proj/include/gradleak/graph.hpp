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

#ifndef GRADLEAK_GRAPH_HPP_
#define GRADLEAK_GRAPH_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

class Graph;

using NodeId = std::uint32_t;

// Handle to a node of a live Graph. Cheap to copy; invalid once the graph is
// cleared or destroyed.
class Var {
 public:
  Var() = default;

  Graph* graph() const { return graph_; }
  NodeId id() const { return id_; }
  bool valid() const;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  friend class Graph;
  Var(Graph* graph, NodeId id, std::uint64_t generation)
      : graph_(graph), id_(id), generation_(generation) {}

  Graph* graph_ = nullptr;
  NodeId id_ = 0;
  std::uint64_t generation_ = 0;
};

// Sparse linear map out = M * in over flattened tensors, stored together with
// its adjoint. Gathers, scatters, slicing, concatenation, im2col and average
// pooling are all instances; since the adjoint of the adjoint is the map
// itself, every such op is differentiable to any order.
class LinearOperator {
 public:
  struct Entry {
    std::size_t out;
    std::size_t in;
    double weight;
  };

  LinearOperator(Shape in_shape, Shape out_shape, std::vector<Entry> entries);

  const Shape& in_shape(bool adjoint) const { return adjoint ? out_shape_ : in_shape_; }
  const Shape& out_shape(bool adjoint) const { return adjoint ? in_shape_ : out_shape_; }

  void Apply(std::span<const double> in, std::span<double> out, bool adjoint) const;

 private:
  struct Csr {
    std::vector<std::uint32_t> row_begin;
    std::vector<std::uint32_t> cols;
    std::vector<double> weights;
  };

  Shape in_shape_;
  Shape out_shape_;
  Csr forward_;
  Csr adjoint_;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kAffine,
  kPow,
  kExp,
  kSigmoid,
  kRelu,
  kAbs,
  kMaskMul,
  kSafeReciprocal,
  kMatMul,
  kLinearMap,
  kReshape,
  kAddBias,
  kReduceRows,
  kExpandRows,
  kReduceCols,
  kExpandCols,
  kSum,
  kExpandScalar,
  kLogSoftmax,
  kMaxPool,
};

const char* OpKindName(OpKind kind);

// Append-only arena of op records. Nodes only reference earlier nodes, so the
// node order is a topological order. Confined to one thread.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var Leaf(Tensor value);
  Var Constant(Tensor value);

  // Reverse-mode gradients of a one-element `loss` with respect to `wrt`.
  // Nodes that `loss` does not depend on get zero gradients. With
  // `create_graph` the returned gradients are themselves differentiable
  // nodes; otherwise they are detached constants and the intermediate
  // backward nodes are discarded.
  std::vector<Var> Backward(Var loss, std::span<const Var> wrt, bool create_graph = false);

  // Drops every node. Outstanding Vars become invalid.
  void Clear();

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

  // Recomputes every node from the recorded leaves and constants.
  std::vector<Tensor> Replay() const;

  struct Attrs {
    double a = 0.0;
    double b = 0.0;
    bool flag_a = false;
    bool flag_b = false;
    std::size_t count = 0;
    Shape shape;
    std::shared_ptr<const LinearOperator> linear;
    std::shared_ptr<const std::vector<double>> mask;
  };

  // Low-level node constructor used by the op library.
  Var Record(OpKind kind, std::span<const Var> inputs, Attrs attrs);

 private:
  friend class Var;

  struct Node {
    OpKind kind = OpKind::kConstant;
    std::uint8_t arity = 0;
    std::array<NodeId, 2> inputs{};
    Attrs attrs;
    Tensor value;
  };

  Var Handle(NodeId id) { return Var(this, id, generation_); }
  Tensor Evaluate(const Node& node, std::span<const Tensor* const> inputs) const;
  void AccumulateVjp(NodeId node, Var upstream, std::span<const char> wanted,
                     std::vector<Var>& adjoints, bool create_graph);

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

}  // namespace gradleak

#endif  // GRADLEAK_GRAPH_HPP_
