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


#include "gradleak/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "gradleak/error.hpp"
#include "gradleak/graph.hpp"
#include "gradleak/nn.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/optim.hpp"

namespace gradleak {
namespace {

using Rng = std::mt19937_64;

struct Instance {
  std::vector<Tensor> inputs;
  std::function<Var(Graph&, std::span<const Var>)> apply;
  // Rejects samples that sit within the kink margin.
  std::function<bool(const std::vector<Tensor>&)> valid;
};

struct OpCase {
  const char* name;
  bool smooth;  // eligible for the higher-order check
  std::function<Instance(Rng&)> make;
};

constexpr double kKinkMargin = 1e-3;

std::size_t Dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor Uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Magnitudes in [lo, hi] with random signs.
Tensor AwayFromZero(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t = Uniform(rng, std::move(shape), lo, hi);
  std::bernoulli_distribution coin(0.5);
  for (double& v : t.data()) {
    if (coin(rng)) v = -v;
  }
  return t;
}

Instance Unary(Tensor x, std::function<Var(Var)> f) {
  Instance in;
  in.inputs = {std::move(x)};
  in.apply = [f](Graph&, std::span<const Var> v) { return f(v[0]); };
  return in;
}

Instance Binary(Tensor a, Tensor b, std::function<Var(Var, Var)> f) {
  Instance in;
  in.inputs = {std::move(a), std::move(b)};
  in.apply = [f](Graph&, std::span<const Var> v) { return f(v[0], v[1]); };
  return in;
}

Shape Matrix(Rng& rng) { return {Dim(rng, 1, 4), Dim(rng, 1, 5)}; }

Shape Image(Rng& rng, std::size_t min_side = 1) {
  return {Dim(rng, 1, 2), Dim(rng, min_side, min_side + 3), Dim(rng, min_side, min_side + 3),
          Dim(rng, 1, 2)};
}

Instance ConvInstance(Rng& rng) {
  ops::Conv2dGeometry g;
  g.kernel = Dim(rng, 1, 3);
  g.stride = Dim(rng, 1, 2);
  g.padding = Dim(rng, 0, 1);
  const Shape xs = Image(rng, g.kernel);
  const std::size_t out = Dim(rng, 1, 3);
  Instance in;
  in.inputs = {Uniform(rng, xs), Uniform(rng, {out, g.kernel, g.kernel, xs[3]}),
               Uniform(rng, {out})};
  in.apply = [g](Graph&, std::span<const Var> v) { return ops::Conv2d(v[0], v[1], v[2], g); };
  return in;
}

Instance PoolInstance(Rng& rng, bool max) {
  const std::size_t k = Dim(rng, 1, 2);
  const std::size_t s = Dim(rng, 1, 2);
  Shape xs = Image(rng, k);
  Tensor x(xs);
  if (max) {
    // Distinct values 0.01 apart keep every window's argmax stable.
    std::vector<double> levels(x.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.01 * static_cast<double>(i);
    std::shuffle(levels.begin(), levels.end(), rng);
    std::copy(levels.begin(), levels.end(), x.data().begin());
  } else {
    x = Uniform(rng, xs);
  }
  return Unary(std::move(x), [k, s, max](Var v) {
    return max ? ops::MaxPool2d(v, k, s) : ops::AvgPool2d(v, k, s);
  });
}

bool TvAwayFromKinks(const std::vector<Tensor>& in) {
  const Tensor& x = in[0];
  const std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t q = 0; q < w; ++q)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t i = ((b * h + y) * w + q) * c + ch;
          if (y + 1 < h && std::abs(x[i + w * c] - x[i]) < kKinkMargin) return false;
          if (q + 1 < w && std::abs(x[i + c] - x[i]) < kKinkMargin) return false;
        }
  return true;
}

std::vector<OpCase> Registry() {
  std::vector<OpCase> r;
  auto same2 = [](Rng& rng, std::function<Var(Var, Var)> f) {
    const Shape s = Matrix(rng);
    return Binary(Uniform(rng, s), Uniform(rng, s), std::move(f));
  };
  r.push_back({"add", true, [=](Rng& g) { return same2(g, ops::Add); }});
  r.push_back({"sub", true, [=](Rng& g) { return same2(g, ops::Sub); }});
  r.push_back({"mul", true, [=](Rng& g) { return same2(g, ops::Mul); }});
  r.push_back({"scalar-mul", true, [](Rng& g) {
                 const double f = std::uniform_real_distribution<double>(-2, 2)(g);
                 return Unary(Uniform(g, Matrix(g)), [f](Var x) { return ops::Scale(x, f); });
               }});
  r.push_back({"affine", true, [](Rng& g) {
                 const double a = std::uniform_real_distribution<double>(-2, 2)(g);
                 const double b = std::uniform_real_distribution<double>(-2, 2)(g);
                 return Unary(Uniform(g, Matrix(g)), [a, b](Var x) { return ops::Affine(x, a, b); });
               }});
  r.push_back({"pow", true, [](Rng& g) {
                 static constexpr double kExponents[] = {2.0, 3.0, 0.5, -1.0, 1.5};
                 const double p = kExponents[Dim(g, 0, 4)];
                 return Unary(Uniform(g, Matrix(g), 0.5, 2.0), [p](Var x) { return ops::Pow(x, p); });
               }});
  r.push_back({"exp", true, [](Rng& g) { return Unary(Uniform(g, Matrix(g), -2, 2), ops::Exp); }});
  r.push_back({"sigmoid", true,
               [](Rng& g) { return Unary(Uniform(g, Matrix(g), -3, 3), ops::Sigmoid); }});
  r.push_back({"relu", true,
               [](Rng& g) { return Unary(AwayFromZero(g, Matrix(g), 0.05, 1.0), ops::Relu); }});
  r.push_back({"abs", true,
               [](Rng& g) { return Unary(AwayFromZero(g, Matrix(g), 0.05, 1.0), ops::Abs); }});
  r.push_back({"safe-reciprocal", true, [](Rng& g) {
                 return Unary(AwayFromZero(g, Matrix(g), 0.5, 2.0), ops::SafeReciprocal);
               }});
  for (int t = 0; t < 4; ++t) {
    static const char* kNames[] = {"matmul", "matmul-tb", "matmul-ta", "matmul-ta-tb"};
    const bool ta = t & 2, tb = t & 1;
    r.push_back({kNames[t], true, [ta, tb](Rng& g) {
                   const std::size_t m = Dim(g, 1, 4), k = Dim(g, 1, 4), n = Dim(g, 1, 4);
                   Shape as = ta ? Shape{k, m} : Shape{m, k};
                   Shape bs = tb ? Shape{n, k} : Shape{k, n};
                   return Binary(Uniform(g, as), Uniform(g, bs),
                                 [ta, tb](Var a, Var b) { return ops::MatMul(a, b, ta, tb); });
                 }});
  }
  r.push_back({"reshape", true, [](Rng& g) {
                 const Shape s = Matrix(g);
                 return Unary(Uniform(g, s), [s](Var x) { return ops::Reshape(x, {s[1], s[0]}); });
               }});
  r.push_back({"flatten", true, [](Rng& g) { return Unary(Uniform(g, Image(g)), ops::Flatten); }});
  r.push_back({"add-bias-broadcast", true, [](Rng& g) {
                 const Shape s = Matrix(g);
                 return Binary(Uniform(g, s), Uniform(g, {s[1]}), ops::AddBias);
               }});
  r.push_back({"reduce-rows", true,
               [](Rng& g) { return Unary(Uniform(g, Matrix(g)), ops::ReduceRows); }});
  r.push_back({"reduce-cols", true,
               [](Rng& g) { return Unary(Uniform(g, Matrix(g)), ops::ReduceCols); }});
  r.push_back({"expand-rows", true, [](Rng& g) {
                 const std::size_t rows = Dim(g, 1, 4);
                 return Unary(Uniform(g, {Dim(g, 1, 5)}),
                              [rows](Var x) { return ops::ExpandRows(x, rows); });
               }});
  r.push_back({"expand-cols", true, [](Rng& g) {
                 const std::size_t cols = Dim(g, 1, 4);
                 return Unary(Uniform(g, {Dim(g, 1, 5)}),
                              [cols](Var x) { return ops::ExpandCols(x, cols); });
               }});
  r.push_back({"expand-scalar", true, [](Rng& g) {
                 const Shape s = Matrix(g);
                 return Unary(Uniform(g, {1}), [s](Var x) { return ops::ExpandScalar(x, s); });
               }});
  r.push_back({"sum", true, [](Rng& g) { return Unary(Uniform(g, Image(g)), ops::Sum); }});
  r.push_back({"mean", true, [](Rng& g) { return Unary(Uniform(g, Image(g)), ops::Mean); }});
  r.push_back({"dot", true, [=](Rng& g) { return same2(g, ops::Dot); }});
  r.push_back({"squared-norm", true,
               [](Rng& g) { return Unary(Uniform(g, Matrix(g)), ops::SquaredNorm); }});
  r.push_back({"l2-norm", true, [](Rng& g) {
                 return Unary(AwayFromZero(g, Matrix(g), 0.2, 1.0), ops::L2Norm);
               }});
  r.push_back({"log-softmax", true,
               [](Rng& g) { return Unary(Uniform(g, Matrix(g), -3, 3), ops::LogSoftmax); }});
  r.push_back({"softmax", true,
               [](Rng& g) { return Unary(Uniform(g, Matrix(g), -3, 3), ops::Softmax); }});
  r.push_back({"softmax-cross-entropy", true, [](Rng& g) {
                 const Shape s = {Dim(g, 1, 4), Dim(g, 2, 5)};
                 std::vector<int> labels(s[0]);
                 for (int& l : labels) l = static_cast<int>(Dim(g, 0, s[1] - 1));
                 return Unary(Uniform(g, s, -3, 3), [labels](Var z) {
                   return ops::SoftmaxCrossEntropy(z, labels);
                 });
               }});
  r.push_back({"softmax-cross-entropy-soft", true, [](Rng& g) {
                 const Shape s = {Dim(g, 1, 4), Dim(g, 2, 5)};
                 return Binary(Uniform(g, s, -3, 3), Uniform(g, s, 0, 1), [](Var z, Var t) {
                   return ops::SoftmaxCrossEntropy(z, t);
                 });
               }});
  for (std::size_t axis = 0; axis < 2; ++axis) {
    r.push_back({axis == 0 ? "concat-rows" : "concat-cols", true, [axis](Rng& g) {
                   Shape a = Matrix(g), b = a;
                   b[axis] = Dim(g, 1, 4);
                   return Binary(Uniform(g, a), Uniform(g, b), [axis](Var x, Var y) {
                     const Var parts[] = {x, y};
                     return ops::Concat(parts, axis);
                   });
                 }});
  }
  r.push_back({"slice", true, [](Rng& g) {
                 const Shape s = {Dim(g, 1, 5), Dim(g, 1, 4)};
                 const std::size_t begin = Dim(g, 0, s[0] - 1);
                 const std::size_t end = Dim(g, begin + 1, s[0]);
                 return Unary(Uniform(g, s),
                              [begin, end](Var x) { return ops::Slice(x, begin, end); });
               }});
  r.push_back({"conv2d", true, ConvInstance});
  r.push_back({"avgpool2d", true, [](Rng& g) { return PoolInstance(g, false); }});
  r.push_back({"maxpool2d", false, [](Rng& g) { return PoolInstance(g, true); }});
  r.push_back({"total-variation", true, [](Rng& g) {
                 Instance in = Unary(Uniform(g, Image(g, 2)), ops::TotalVariation);
                 in.valid = TvAwayFromKinks;
                 return in;
               }});
  return r;
}

Instance Sample(const OpCase& op, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Instance in = op.make(rng);
    if (!in.valid || in.valid(in.inputs)) return in;
  }
  Fail(ErrorCode::kOracleFailure, std::string(op.name) + ": no sample away from kinks");
}

using Builder = std::function<Var(Graph&, std::span<const Var>)>;

// Scalar evaluation of `build` with input `which` replaced by `x`.
double EvalWith(const Builder& build, const std::vector<Tensor>& inputs, std::size_t which,
                const Tensor& x) {
  Graph graph;
  std::vector<Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(graph.Leaf(i == which ? x : inputs[i]));
  }
  return build(graph, leaves).value().item();
}

// Worst relative error over all inputs of a scalar builder.
double CompareAllInputs(const Builder& build, const std::vector<Tensor>& inputs, double floor) {
  Graph graph;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(graph.Leaf(t));
  const std::vector<Var> grads = graph.Backward(build(graph, leaves), leaves);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor fd = FiniteDifferenceGradient(
        [&](const Tensor& x) { return EvalWith(build, inputs, i, x); }, inputs[i]);
    worst = std::max(worst, RelativeError(grads[i].value(), fd, floor));
  }
  return worst;
}

Builder Projected(const Instance& in, Rng& rng) {
  // A fixed random cotangent turns any output into a scalar.
  Graph probe;
  std::vector<Var> leaves;
  for (const Tensor& t : in.inputs) leaves.push_back(probe.Constant(t));
  const Tensor weights = Uniform(rng, in.apply(probe, leaves).shape());
  auto apply = in.apply;
  return [apply, weights](Graph& g, std::span<const Var> v) {
    return ops::Dot(apply(g, v), g.Constant(weights));
  };
}

CheckResult Summarize(std::string name, std::size_t n, double worst, double tol) {
  CheckResult r;
  r.name = std::move(name);
  r.instances = n;
  r.max_error = worst;
  r.tolerance = tol;
  r.passed = worst <= tol;
  if (!r.passed) {
    std::ostringstream os;
    os << "relative error " << worst << " exceeds " << tol;
    r.detail = os.str();
  }
  return r;
}

template <typename Body>
CheckResult Guarded(const std::string& name, std::size_t n, double tol, Body body) {
  try {
    return Summarize(name, n, body(), tol);
  } catch (const Error& e) {
    CheckResult r;
    r.name = name;
    r.instances = n;
    r.tolerance = tol;
    r.max_error = INFINITY;
    r.detail = std::string(ErrorCodeName(e.code())) + ": " + e.what();
    return r;
  }
}

}  // namespace

std::vector<CheckResult> RunFirstOrderChecks(std::uint64_t seed, std::size_t instances,
                                             double tolerance) {
  std::vector<CheckResult> out;
  std::uint64_t salt = 0;
  for (const OpCase& op : Registry()) {
    Rng rng(seed * 1000003 + salt++);
    out.push_back(Guarded(op.name, instances, tolerance, [&] {
      double worst = 0.0;
      for (std::size_t i = 0; i < instances; ++i) {
        const Instance in = Sample(op, rng);
        worst = std::max(worst, CompareAllInputs(Projected(in, rng), in.inputs, 1e-8));
      }
      return worst;
    }));
  }
  return out;
}

std::vector<CheckResult> RunHigherOrderOpChecks(std::uint64_t seed, std::size_t instances,
                                                double tolerance) {
  std::vector<CheckResult> out;
  std::uint64_t salt = 0;
  for (const OpCase& op : Registry()) {
    Rng rng(seed * 1000033 + salt++);
    if (!op.smooth) continue;
    out.push_back(Guarded(std::string(op.name) + "/second-order", instances, tolerance, [&] {
      double worst = 0.0;
      for (std::size_t i = 0; i < instances; ++i) {
        const Instance in = Sample(op, rng);
        const Builder first = Projected(in, rng);
        // G = sum_i ||d first / d input_i||^2, built through create_graph.
        const Builder second = [first](Graph& g, std::span<const Var> v) {
          const std::vector<Var> grads = g.Backward(first(g, v), v, true);
          Var total = ops::SquaredNorm(grads[0]);
          for (std::size_t k = 1; k < grads.size(); ++k) {
            total = ops::Add(total, ops::SquaredNorm(grads[k]));
          }
          return total;
        };
        // Linear ops have an identically zero second derivative, so an
        // absolute floor keeps round-off from dominating the ratio.
        worst = std::max(worst, CompareAllInputs(second, in.inputs, 1e-3));
      }
      return worst;
    }));
  }
  return out;
}

CheckResult RunGradientMatchingCheck(std::uint64_t seed, std::size_t instances,
                                     double tolerance) {
  return Guarded("gradient-matching/second-order", instances, tolerance, [&] {
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
      Rng rng(seed + 7919 * t);
      const ImageShape shape{2, 3, 1};
      const std::size_t batch = 2, classes = 3;
      const Model model = Model::FromLayers(
          shape, classes,
          {LayerSpec::Dense("fc0", shape.size(), 5), LayerSpec::Act(Activation::kSigmoid),
           LayerSpec::Dense("fc1", 5, classes)},
          rng());
      std::vector<Tensor> targets;
      for (const auto& e : model.params().entries()) targets.push_back(Uniform(rng, e.value.shape(), -0.1, 0.1));
      const std::vector<Tensor> inputs = {Uniform(rng, {batch, shape.size()}, 0, 1),
                                          Uniform(rng, {batch, classes}, -1, 1)};
      // Inputs: images and soft-label logits, as optimized by the attacks.
      const Builder g = [&](Graph& graph, std::span<const Var> v) {
        const std::vector<Var> params = model.ParamLeaves(graph);
        const Var logits = model.Forward(graph, params, v[0]).logits;
        const Var loss = ops::SoftmaxCrossEntropy(logits, ops::Softmax(v[1]));
        const std::vector<Var> grads = graph.Backward(loss, params, true);
        Var total;
        for (std::size_t k = 0; k < grads.size(); ++k) {
          const Var term = ops::SquaredNorm(ops::Sub(grads[k], graph.Constant(targets[k])));
          total = total.valid() ? ops::Add(total, term) : term;
        }
        return total;
      };
      worst = std::max(worst, CompareAllInputs(g, inputs, 1e-8));
    }
    return worst;
  });
}

CheckResult RunBatchLinearityCheck(std::uint64_t seed, double tolerance) {
  return Guarded("batch-linearity", 1, tolerance, [&] {
    Rng rng(seed);
    const ImageShape shape{3, 3, 1};
    const Model model = Model::FromLayers(
        shape, 4,
        {LayerSpec::Dense("fc0", shape.size(), 6), LayerSpec::Act(Activation::kSigmoid),
         LayerSpec::Dense("fc1", 6, 4)},
        rng());
    const std::size_t batch = 5;
    const Tensor x = Uniform(rng, {batch, shape.size()}, 0, 1);
    std::vector<int> labels(batch);
    for (int& l : labels) l = static_cast<int>(Dim(rng, 0, 3));
    const GradientUpdate full = ComputeLossAndGradients(model, x, labels).gradients;
    GradientUpdate mean = full.ZerosLike();
    for (std::size_t i = 0; i < batch; ++i) {
      Tensor xi({1, shape.size()});
      std::copy_n(x.data().begin() + i * shape.size(), shape.size(), xi.data().begin());
      const int li[] = {labels[i]};
      Axpy(1.0 / batch, ComputeLossAndGradients(model, xi, li).gradients, mean);
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < full.size(); ++k) worst = std::max(worst, MaxAbsDiff(full[k], mean[k]));
    return worst;
  });
}

std::vector<CheckResult> RunAllChecks(std::uint64_t seed) {
  std::vector<CheckResult> all = RunFirstOrderChecks(seed);
  for (auto& r : RunHigherOrderOpChecks(seed)) all.push_back(std::move(r));
  all.push_back(RunGradientMatchingCheck(seed));
  all.push_back(RunBatchLinearityCheck(seed));
  return all;
}

}  // namespace gradleak
