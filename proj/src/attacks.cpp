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


#include "gradleak/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gradleak/error.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/optim.hpp"

namespace gradleak {

AttackKind ParseAttackKind(std::string_view tag) {
  if (tag == "closed-form") return AttackKind::kClosedForm;
  if (tag == "dlg") return AttackKind::kDlg;
  if (tag == "gs") return AttackKind::kGs;
  if (tag == "imprint") return AttackKind::kImprint;
  Fail(ErrorCode::kConfig, "unknown attack '" + std::string(tag) + "'");
}

std::string_view AttackKindName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kClosedForm: return "closed-form";
    case AttackKind::kDlg: return "dlg";
    case AttackKind::kGs: return "gs";
    case AttackKind::kImprint: return "imprint";
  }
  return "unknown";
}

namespace {

constexpr double kLeakThreshold = 1e-12;

Tensor StackRows(const std::vector<Tensor>& rows, std::size_t width) {
  if (rows.empty()) return Tensor();
  Tensor out({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].data().begin(), rows[i].data().end(), out.data().begin() + i * width);
  }
  return out;
}

void ClipUnitBox(Tensor& t) {
  for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
}

bool UsesCosine(const AttackConfig& c) {
  if (c.distance == MatchDistance::kDefault) return c.kind == AttackKind::kGs;
  return c.distance == MatchDistance::kCosine;
}

double PriorWeight(const AttackConfig& c) { return c.kind == AttackKind::kGs ? c.prior_weight : 0.0; }

Var MatchLoss(Graph& graph, const Model& model, const GradientUpdate& target, Var x, Var label_logits,
              bool cosine, double prior_weight) {
  const std::vector<Var> params = model.ParamLeaves(graph);
  const Var logits = model.Forward(graph, params, x).logits;
  const Var loss = ops::SoftmaxCrossEntropy(logits, ops::Softmax(label_logits));
  const std::vector<Var> grads = graph.Backward(loss, params, true);
  Var total;
  auto accumulate = [](Var acc, Var term) { return acc.valid() ? ops::Add(acc, term) : term; };
  if (!cosine) {
    for (std::size_t k = 0; k < grads.size(); ++k) {
      total = accumulate(total, ops::SquaredNorm(ops::Sub(grads[k], graph.Constant(target[k]))));
    }
  } else {
    const double target_norm = L2Norm(target);
    if (target_norm == 0.0) Fail(ErrorCode::kDomain, "cosine distance to a zero gradient");
    Var dot, sq;
    for (std::size_t k = 0; k < grads.size(); ++k) {
      dot = accumulate(dot, ops::Dot(grads[k], graph.Constant(target[k])));
      sq = accumulate(sq, ops::SquaredNorm(grads[k]));
    }
    const Var cos = ops::Scale(ops::Mul(dot, ops::Pow(sq, -0.5)), 1.0 / target_norm);
    total = ops::Affine(cos, -1.0, 1.0);
  }
  if (prior_weight > 0.0) {
    const ImageShape& s = model.input_shape();
    const Var image = ops::Reshape(x, {x.shape()[0], s.height, s.width, s.channels});
    total = ops::Add(total, ops::Scale(ops::TotalVariation(image), prior_weight));
  }
  return total;
}

struct Attempt {
  Tensor x;
  Tensor label_logits;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
};

Attempt Optimize(const Model& model, const GradientUpdate& target, std::size_t batch,
                 const AttackConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x({batch, model.input_size()});
  for (double& v : x.data()) v = std::clamp(normal(rng), 0.0, 1.0);
  Tensor y({batch, model.classes()});
  for (double& v : y.data()) v = normal(rng);

  const bool cosine = UsesCosine(config);
  const double prior = PriorWeight(config);
  Adam adam({.lr = config.lr});
  Attempt out;
  out.x = x;
  out.label_logits = y;
  Graph graph;
  for (std::size_t t = 0; t < config.iterations; ++t) {
    graph.Clear();
    const Var xv = graph.Leaf(x);
    const Var yv = graph.Leaf(y);
    const Var loss = MatchLoss(graph, model, target, xv, yv, cosine, prior);
    const double value = loss.value().item();
    if (!std::isfinite(value)) Fail(ErrorCode::kDomain, "attack loss is not finite");
    out.trace.push_back(value);
    if (value < out.best_loss) {
      out.best_loss = value;
      out.x = x;
      out.label_logits = y;
    }
    const Var wrt[] = {xv, yv};
    const std::vector<Var> grads = graph.Backward(loss, wrt);
    Tensor params[] = {x, y};
    const Tensor g[] = {grads[0].value(), grads[1].value()};
    adam.Step(params, g);
    x = std::move(params[0]);
    y = std::move(params[1]);
    ClipUnitBox(x);
  }
  return out;
}

AttackResult OptimizationAttack(const Model& model, const GradientUpdate& target,
                                std::size_t batch, const AttackConfig& config) {
  RequireSameLayout(model.params(), target, "attack target");
  if (batch == 0) Fail(ErrorCode::kConfig, "attack batch size must be at least 1");
  if (config.iterations == 0) Fail(ErrorCode::kConfig, "attack needs at least one iteration");
  if (config.prior_weight < 0.0) Fail(ErrorCode::kConfig, "prior weight must be nonnegative");
  std::optional<Attempt> best;
  std::string last_failure;
  for (std::size_t attempt = 0; attempt <= config.restarts; ++attempt) {
    const std::uint64_t seed = config.seed * 0x9E3779B97F4A7C15ULL + attempt;
    try {
      Attempt a = Optimize(model, target, batch, config, seed);
      if (!best || a.best_loss < best->best_loss) best = std::move(a);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDomain) throw;
      last_failure = e.what();
    }
  }
  if (!best) {
    Fail(ErrorCode::kAttackDiverged, "every restart diverged; last: " + last_failure);
  }
  AttackResult r;
  r.reconstructions = std::move(best->x);
  r.best_loss = best->best_loss;
  r.loss_trace = std::move(best->trace);
  r.iterations = config.iterations;
  const std::size_t c = model.classes();
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = best->label_logits.data().data() + i * c;
    r.labels.push_back(static_cast<int>(std::max_element(row, row + c) - row));
  }
  return r;
}

}  // namespace

std::optional<Tensor> InvertFcClosedForm(const Tensor& dW, const Tensor& db, std::size_t row) {
  if (dW.rank() != 2 || db.rank() != 1 || dW.dim(0) != db.dim(0)) {
    Fail(ErrorCode::kShape, "closed-form inversion: weight " + ShapeString(dW.shape()) +
                                " and bias " + ShapeString(db.shape()) + " do not pair");
  }
  if (row >= db.dim(0)) Fail(ErrorCode::kContract, "closed-form inversion: row out of range");
  const double b = db[row];
  if (!(std::abs(b) > kLeakThreshold)) return std::nullopt;
  const std::size_t d = dW.dim(1);
  Tensor x({d});
  for (std::size_t j = 0; j < d; ++j) x[j] = dW[row * d + j] / b;
  return x;
}

AttackResult ClosedFormAttack(const Model& model, const GradientUpdate& target) {
  RequireSameLayout(model.params(), target, "attack target");
  const LayerKind first = model.layers().front().kind;
  if (first != LayerKind::kDense && first != LayerKind::kImprint) {
    Fail(ErrorCode::kConfig, "closed-form attack needs a leading dense layer");
  }
  const Tensor& dW = target[0];
  const Tensor& db = target[1];
  std::size_t row = 0;
  for (std::size_t l = 1; l < db.size(); ++l) {
    if (std::abs(db[l]) > std::abs(db[row])) row = l;
  }
  AttackResult r;
  if (std::optional<Tensor> x = InvertFcClosedForm(dW, db, row)) {
    ClipUnitBox(*x);
    r.reconstructions = StackRows({*x}, x->size());
  }
  return r;
}

AttackResult DlgAttack(const Model& model, const GradientUpdate& target, std::size_t batch,
                       const AttackConfig& config) {
  AttackConfig c = config;
  c.kind = AttackKind::kDlg;
  return OptimizationAttack(model, target, batch, c);
}

AttackResult GsAttack(const Model& model, const GradientUpdate& target, std::size_t batch,
                      const AttackConfig& config) {
  AttackConfig c = config;
  c.kind = AttackKind::kGs;
  return OptimizationAttack(model, target, batch, c);
}

AttackResult ImprintAttack(const Model& model, const GradientUpdate& target) {
  if (model.imprint() == nullptr) Fail(ErrorCode::kConfig, "imprint attack needs an imprinted model");
  RequireSameLayout(model.params(), target, "attack target");
  const Tensor* dW = target.Find("imprint.weight");
  const Tensor* db = target.Find("imprint.bias");
  if (dW == nullptr || db == nullptr) Fail(ErrorCode::kConfig, "update carries no imprint rows");
  const std::size_t k = db->size(), d = dW->dim(1);
  std::vector<Tensor> rows;
  for (std::size_t l = 0; l < k; ++l) {
    // The top bin is open-ended; its upper neighbour is an all-zero row.
    const double next_b = l + 1 < k ? (*db)[l + 1] : 0.0;
    const double delta = (*db)[l] - next_b;
    if (!(std::abs(delta) > kLeakThreshold)) continue;
    Tensor x({d});
    for (std::size_t j = 0; j < d; ++j) {
      const double next_w = l + 1 < k ? (*dW)[(l + 1) * d + j] : 0.0;
      x[j] = ((*dW)[l * d + j] - next_w) / delta;
    }
    ClipUnitBox(x);
    rows.push_back(std::move(x));
  }
  AttackResult r;
  r.reconstructions = StackRows(rows, d);
  return r;
}

AttackResult RunAttack(const Model& model, const GradientUpdate& target, std::size_t batch,
                       const AttackConfig& config) {
  switch (config.kind) {
    case AttackKind::kClosedForm: return ClosedFormAttack(model, target);
    case AttackKind::kDlg:
    case AttackKind::kGs: return OptimizationAttack(model, target, batch, config);
    case AttackKind::kImprint: return ImprintAttack(model, target);
  }
  Fail(ErrorCode::kConfig, "unknown attack kind");
}

double GradientMatchLoss(const Model& model, const GradientUpdate& target, const Tensor& x,
                         const Tensor& label_logits, const AttackConfig& config) {
  RequireSameLayout(model.params(), target, "attack target");
  Graph graph;
  return MatchLoss(graph, model, target, graph.Leaf(AsBatch(model, x)), graph.Leaf(label_logits),
                   UsesCosine(config), PriorWeight(config))
      .value()
      .item();
}

void ScoreAttack(AttackResult& result, const Tensor& targets, const ImageShape& shape,
                 AttackKind kind) {
  const std::vector<Tensor> truth = SplitRows(targets);
  std::vector<Tensor> recon = result.reconstructions.empty() ? std::vector<Tensor>{}
                                                             : SplitRows(result.reconstructions);
  result.psnr.clear();
  result.ssim.clear();
  result.assignment.clear();
  const bool analytic = kind == AttackKind::kClosedForm || kind == AttackKind::kImprint;
  if (!analytic && recon.size() == truth.size()) {
    const MatchResult m = BatchMatch(recon, truth, shape);
    result.psnr = m.psnr;
    result.ssim = m.ssim;
    result.assignment = m.assignment;
    result.greedy_match = m.greedy;
    return;
  }
  if (recon.empty()) {
    // Nothing leaked: score the content-free guess.
    recon.push_back(Tensor({shape.size()}, 0.5));
  }
  for (const Tensor& t : truth) {
    std::size_t best = 0;
    double best_psnr = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < recon.size(); ++r) {
      const double p = Psnr(t, recon[r]);
      if (p > best_psnr) {
        best_psnr = p;
        best = r;
      }
    }
    result.psnr.push_back(best_psnr);
    result.ssim.push_back(Ssim(t, recon[best], shape));
    result.assignment.push_back(best);
  }
}

}  // namespace gradleak
