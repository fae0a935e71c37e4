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


#include "gradleak/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "gradleak/error.hpp"
#include "gradleak/ops.hpp"
#include "gradleak/optim.hpp"

namespace gradleak {
namespace {

void RequireFraction(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) {
    Fail(ErrorCode::kConfig, std::string(what) + ": fraction " + std::to_string(p) +
                                 " outside [0, 1)");
  }
}

std::size_t PruneCount(double p, std::size_t n) {
  // The epsilon keeps products such as 0.7 * 10 from rounding up a slot.
  const double raw = std::ceil(p * static_cast<double>(n) - 1e-9);
  return static_cast<std::size_t>(std::clamp(raw, 0.0, static_cast<double>(n)));
}

// Zeroes the `count` smallest |values[i]| among `candidates`.
void ZeroSmallest(std::vector<double>& values, std::vector<std::size_t> candidates,
                  std::size_t count) {
  if (count == 0) return;
  auto less = [&](std::size_t a, std::size_t b) {
    const double va = std::abs(values[a]), vb = std::abs(values[b]);
    return va < vb || (va == vb && a < b);
  };
  std::nth_element(candidates.begin(), candidates.begin() + (count - 1), candidates.end(), less);
  for (std::size_t i = 0; i < count; ++i) values[candidates[i]] = 0.0;
}

Tensor SelectRows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t d = x.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(x.data().begin() + rows[r] * d, d, out.data().begin() + r * d);
  }
  return out;
}

std::vector<int> SelectLabels(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out;
  for (std::size_t r : rows) out.push_back(y[r]);
  return out;
}

struct ObjectiveTerms {
  Var objective;
  Var cosine;
};

// Builds the crafting objective for one candidate row against one sensitive
// point whose gradient and latent features are precomputed.
ObjectiveTerms BuildObjective(Graph& graph, const Model& model, Var candidate, int label,
                              const Tensor& sensitive, const GradientUpdate& sensitive_grad,
                              double sensitive_grad_norm, const Tensor& sensitive_latent,
                              const ConcealConfig& cfg) {
  const std::vector<Var> params = model.ParamLeaves(graph);
  const Model::Outputs out = model.Forward(graph, params, candidate);
  const int labels[] = {label};
  const Var loss = ops::SoftmaxCrossEntropy(out.logits, labels);
  const std::vector<Var> grads = graph.Backward(loss, params, true);
  Var dot, sq;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const Var d = ops::Dot(grads[k], graph.Constant(sensitive_grad[k]));
    const Var s = ops::SquaredNorm(grads[k]);
    dot = dot.valid() ? ops::Add(dot, d) : d;
    sq = sq.valid() ? ops::Add(sq, s) : s;
  }
  ObjectiveTerms t;
  t.cosine = ops::Scale(ops::Mul(dot, ops::Pow(sq, -0.5)), 1.0 / sensitive_grad_norm);
  Var dist = ops::L2Norm(ops::Sub(candidate, graph.Constant(sensitive)));
  if (dist.value().item() < 1e-8) dist = ops::AddScalar(dist, 1e-8);
  const Var latent = ops::L2Norm(ops::Sub(out.latent, graph.Constant(sensitive_latent)));
  t.objective = ops::Add(ops::Affine(t.cosine, -1.0, 1.0),
                         ops::Add(ops::Scale(ops::Pow(dist, -1.0), cfg.alpha),
                                  ops::Scale(latent, cfg.beta)));
  if (!std::isfinite(t.objective.value().item())) {
    Fail(ErrorCode::kCraftingDiverged, "concealing objective is not finite");
  }
  return t;
}

struct SensitiveTarget {
  Tensor x;  // [1, D]
  int y = 0;
  GradientUpdate grad;
  double grad_norm = 0.0;
  Tensor latent;
};

SensitiveTarget Prepare(const Model& model, const Tensor& x, int y) {
  SensitiveTarget s;
  s.x = AsBatch(model, x);
  s.y = y;
  const int labels[] = {y};
  s.grad = ComputeLossAndGradients(model, s.x, labels).gradients;
  s.grad_norm = L2Norm(s.grad);
  if (s.grad_norm == 0.0) {
    Fail(ErrorCode::kCraftingDiverged, "sensitive point has a zero gradient");
  }
  s.latent = LatentFeatures(model, s.x);
  return s;
}

ConcealObjective Evaluate(const Model& model, const Tensor& candidate, int label,
                          const SensitiveTarget& s, const ConcealConfig& cfg) {
  Graph graph;
  const ObjectiveTerms t = BuildObjective(graph, model, graph.Leaf(candidate), label, s.x, s.grad,
                                          s.grad_norm, s.latent, cfg);
  return {t.objective.value().item(), t.cosine.value().item()};
}

}  // namespace

GradientUpdate PruneUpdate(const GradientUpdate& g, double p) {
  RequireFraction(p, "prune");
  std::vector<double> flat = g.Flatten();
  std::vector<std::size_t> all(flat.size());
  std::iota(all.begin(), all.end(), 0);
  ZeroSmallest(flat, std::move(all), PruneCount(p, flat.size()));
  return GradientUpdate::Unflatten(g, flat);
}

GradientUpdate DpNoise(const GradientUpdate& g, NoiseKind kind, double scale,
                       std::mt19937_64& rng) {
  if (!(scale >= 0.0)) Fail(ErrorCode::kConfig, "noise scale must be nonnegative");
  GradientUpdate out = g;
  if (scale == 0.0) return out;
  if (kind == NoiseKind::kGaussian) {
    std::normal_distribution<double> noise(0.0, scale);
    for (auto& e : out.entries())
      for (double& v : e.value.data()) v += noise(rng);
  } else {
    // Difference of two exponentials with mean b is Laplace(0, b).
    std::exponential_distribution<double> expo(1.0 / scale);
    for (auto& e : out.entries())
      for (double& v : e.value.data()) v += expo(rng) - expo(rng);
  }
  return out;
}

GradientUpdate SingleLayerPrune(const GradientUpdate& g, std::string_view layer, double p) {
  RequireFraction(p, "layer prune");
  std::vector<double> flat = g.Flatten();
  std::vector<std::size_t> selected;
  std::size_t offset = 0;
  const std::string prefix = std::string(layer) + ".";
  for (const auto& e : g.entries()) {
    if (e.name == layer || e.name.starts_with(prefix)) {
      for (std::size_t i = 0; i < e.value.size(); ++i) selected.push_back(offset + i);
    }
    offset += e.value.size();
  }
  if (selected.empty()) Fail(ErrorCode::kConfig, "unknown layer '" + std::string(layer) + "'");
  const std::size_t count = PruneCount(p, selected.size());
  ZeroSmallest(flat, std::move(selected), count);
  return GradientUpdate::Unflatten(g, flat);
}

GradientUpdate ProjectUpdate(const GradientUpdate& g, const GradientUpdate& ref) {
  RequireSameLayout(g, ref, "project");
  const double dot = Dot(g, ref);
  const double rr = Dot(ref, ref);
  if (dot >= 0.0 || rr == 0.0) return g;
  GradientUpdate out = g;
  Axpy(-dot / rr, ref, out);
  return out;
}

StartPoint ParseStartPoint(std::string_view tag) {
  if (tag == "same-dataset") return StartPoint::kSameDataset;
  if (tag == "other-dataset") return StartPoint::kOtherDataset;
  if (tag == "noise") return StartPoint::kNoise;
  Fail(ErrorCode::kConfig, "unknown start point '" + std::string(tag) + "'");
}

std::string_view StartPointName(StartPoint s) {
  switch (s) {
    case StartPoint::kSameDataset: return "same-dataset";
    case StartPoint::kOtherDataset: return "other-dataset";
    case StartPoint::kNoise: return "noise";
  }
  return "unknown";
}

ProjectionReference ParseProjectionReference(std::string_view tag) {
  if (tag == "full-batch") return ProjectionReference::kFullBatch;
  if (tag == "exclude-sensitive") return ProjectionReference::kExcludeSensitive;
  Fail(ErrorCode::kConfig, "unknown projection reference '" + std::string(tag) + "'");
}

std::string_view ProjectionReferenceName(ProjectionReference r) {
  return r == ProjectionReference::kFullBatch ? "full-batch" : "exclude-sensitive";
}

void ValidateConcealConfig(const ConcealConfig& cfg) {
  if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0)) {
    Fail(ErrorCode::kConfig, "concealing alpha and beta must be nonnegative");
  }
  if (cfg.T < 1) Fail(ErrorCode::kConfig, "concealing needs T >= 1");
  if (cfg.k < 1) Fail(ErrorCode::kConfig, "concealing needs k >= 1");
  if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0)) {
    Fail(ErrorCode::kConfig, "mixup lambda must lie in (0, 1)");
  }
  if (!(cfg.step_size > 0.0)) Fail(ErrorCode::kConfig, "crafting step size must be positive");
}

SensitiveBatch MakeSensitiveBatch(Tensor x, std::vector<int> y, std::size_t m, std::size_t k) {
  SensitiveBatch b;
  b.k = k;
  const std::size_t n = y.size();
  if (x.rank() != 2 || x.dim(0) != n) {
    Fail(ErrorCode::kContract, "sensitive batch: " + std::to_string(n) + " labels for inputs " +
                                   ShapeString(x.shape()));
  }
  if (k < 1 || n < m * (k + 1)) {
    Fail(ErrorCode::kConfig, "batch of " + std::to_string(n) + " cannot hold " +
                                 std::to_string(m) + " sensitive points with " +
                                 std::to_string(k) + " concealing samples each");
  }
  b.x = std::move(x);
  b.y = std::move(y);
  for (std::size_t r = 0; r < m; ++r) b.sensitive.push_back(n - m + r);
  for (std::size_t s = 0; s < m * k; ++s) b.slots.push_back(s);
  return b;
}

void ValidateSensitiveBatch(const SensitiveBatch& b) {
  const std::size_t n = b.y.size();
  if (b.x.rank() != 2 || b.x.dim(0) != n) Fail(ErrorCode::kContract, "sensitive batch shape");
  if (b.slots.size() != b.m() * b.k) Fail(ErrorCode::kContract, "slot count must be m*k");
  if (n < b.m() * (b.k + 1)) Fail(ErrorCode::kConfig, "batch too small for m(k+1)");
  std::unordered_set<std::size_t> seen;
  for (std::size_t i : b.sensitive) {
    if (i >= n || !seen.insert(i).second) Fail(ErrorCode::kContract, "bad sensitive index");
  }
  for (std::size_t i : b.slots) {
    if (i >= n || !seen.insert(i).second) {
      Fail(ErrorCode::kContract, "concealing slots must be distinct and non-sensitive");
    }
  }
}

ConcealObjective EvaluateConcealObjective(const Model& model, const Tensor& candidate, int label,
                                          const Tensor& sensitive, int sensitive_label,
                                          const ConcealConfig& cfg) {
  return Evaluate(model, AsBatch(model, candidate), label,
                  Prepare(model, sensitive, sensitive_label), cfg);
}

CraftResult CraftConcealing(const Model& model, const SensitiveBatch& batch,
                            const ConcealConfig& cfg, std::mt19937_64& rng,
                            const Tensor* foreign) {
  ValidateConcealConfig(cfg);
  ValidateSensitiveBatch(batch);
  if (batch.k != cfg.k) Fail(ErrorCode::kContract, "batch slot layout disagrees with k");
  const std::size_t d = model.input_size();
  if (batch.x.dim(1) != d) Fail(ErrorCode::kShape, "batch width does not match the model");
  if (cfg.start_point == StartPoint::kOtherDataset &&
      (foreign == nullptr || foreign->empty() || foreign->size() % d != 0)) {
    Fail(ErrorCode::kConfig, "other-dataset start points need foreign images");
  }

  CraftResult result;
  result.crafted = Tensor({std::max<std::size_t>(batch.slots.size(), 1), d});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < batch.m(); ++r) {
    const std::size_t si = batch.sensitive[r];
    const SensitiveTarget target = Prepare(model, SelectRows(batch.x, std::span(&si, 1)), batch.y[si]);
    for (std::size_t j = 0; j < batch.k; ++j) {
      const std::size_t s = r * batch.k + j;
      const std::size_t slot = batch.slots[s];
      const int label = batch.y[slot];
      Tensor x({1, d});
      switch (cfg.start_point) {
        case StartPoint::kSameDataset:
          std::copy_n(batch.x.data().begin() + slot * d, d, x.data().begin());
          break;
        case StartPoint::kOtherDataset: {
          const std::size_t row = s % (foreign->size() / d);
          std::copy_n(foreign->data().begin() + row * d, d, x.data().begin());
          break;
        }
        case StartPoint::kNoise:
          for (double& v : x.data()) v = unit(rng);
          break;
      }
      Adam adam({.lr = cfg.step_size});
      Graph graph;
      for (std::size_t t = 0; t < cfg.T; ++t) {
        graph.Clear();
        const Var xv = graph.Leaf(x);
        const ObjectiveTerms terms = BuildObjective(graph, model, xv, label, target.x, target.grad,
                                                    target.grad_norm, target.latent, cfg);
        if (t == 0) {
          result.initial_objective.push_back(terms.objective.value().item());
          result.initial_cosine.push_back(terms.cosine.value().item());
        }
        const Var wrt[] = {xv};
        Tensor params[] = {x};
        const Tensor grads[] = {graph.Backward(terms.objective, wrt)[0].value()};
        adam.Step(params, grads);
        x = std::move(params[0]);
        for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
      }
      const ConcealObjective final_value = Evaluate(model, x, label, target, cfg);
      result.final_objective.push_back(final_value.objective);
      result.final_cosine.push_back(final_value.cosine);
      std::copy(x.data().begin(), x.data().end(), result.crafted.data().begin() + s * d);
    }
  }
  return result;
}

GradientUpdate MixupGradients(const Model& model, const Tensor& x, std::span<const int> y,
                              std::span<const std::size_t> slots, std::span<const int> y_slots,
                              std::span<const int> y_sensitive, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) Fail(ErrorCode::kConfig, "mixup lambda outside [0, 1]");
  if (y_slots.size() != slots.size() || y_sensitive.size() != slots.size()) {
    Fail(ErrorCode::kContract, "mixup: " + std::to_string(slots.size()) + " slots but " +
                                   std::to_string(y_slots.size()) + " slot labels and " +
                                   std::to_string(y_sensitive.size()) + " sensitive labels");
  }
  const Tensor batch = AsBatch(model, x);
  const std::size_t n = batch.dim(0);
  if (y.size() != n) Fail(ErrorCode::kContract, "mixup: label count does not match the batch");
  std::vector<char> is_slot(n, 0);
  for (std::size_t s : slots) {
    if (s >= n || is_slot[s]) Fail(ErrorCode::kContract, "mixup: bad slot index");
    is_slot[s] = 1;
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_slot[i]) rest.push_back(i);
  }

  Graph graph;
  const std::vector<Var> params = model.ParamLeaves(graph);
  Var loss;
  if (!slots.empty()) {
    const Var logits = model.Forward(graph, params, graph.Constant(SelectRows(batch, slots))).logits;
    loss = ops::Add(ops::Scale(ops::SoftmaxCrossEntropy(logits, y_slots), lambda),
                    ops::Scale(ops::SoftmaxCrossEntropy(logits, y_sensitive), 1.0 - lambda));
  }
  if (!rest.empty()) {
    const Var logits = model.Forward(graph, params, graph.Constant(SelectRows(batch, rest))).logits;
    const std::vector<int> y_rest = SelectLabels(y, rest);
    const Var term = ops::SoftmaxCrossEntropy(logits, y_rest);
    loss = loss.valid() ? ops::Add(loss, term) : term;
  }
  const std::vector<Var> grads = graph.Backward(loss, params);
  std::vector<GradientUpdate::Entry> entries;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    entries.push_back({model.params().entries()[k].name, grads[k].value()});
  }
  return GradientUpdate(std::move(entries));
}

DefenseOutput ConcealingDefense(const Model& model, const SensitiveBatch& batch,
                                const ConcealConfig& cfg, std::mt19937_64& rng,
                                const Tensor* foreign) {
  ValidateSensitiveBatch(batch);
  DefenseOutput out;
  out.reference_dot = std::numeric_limits<double>::quiet_NaN();
  if (batch.m() == 0) {
    out.update = ComputeLossAndGradients(model, batch.x, batch.y).gradients;
    out.defended_inputs = batch.x;
    return out;
  }
  out.craft = CraftConcealing(model, batch, cfg, rng, foreign);
  const std::size_t d = batch.x.dim(1);
  out.defended_inputs = batch.x;
  std::vector<int> y_slots, y_sensitive;
  for (std::size_t s = 0; s < batch.slots.size(); ++s) {
    std::copy_n(out.craft.crafted.data().begin() + s * d, d,
                out.defended_inputs.data().begin() + batch.slots[s] * d);
    y_slots.push_back(batch.y[batch.slots[s]]);
    y_sensitive.push_back(batch.y[batch.sensitive[s / batch.k]]);
  }
  const GradientUpdate mixed = MixupGradients(model, out.defended_inputs, batch.y, batch.slots,
                                              y_slots, y_sensitive, cfg.lambda);

  std::vector<std::size_t> ref_rows;
  std::vector<char> sensitive(batch.y.size(), 0);
  for (std::size_t i : batch.sensitive) sensitive[i] = 1;
  for (std::size_t i = 0; i < batch.y.size(); ++i) {
    if (cfg.projection_reference == ProjectionReference::kFullBatch || !sensitive[i]) {
      ref_rows.push_back(i);
    }
  }
  const GradientUpdate reference =
      ComputeLossAndGradients(model, SelectRows(batch.x, ref_rows), SelectLabels(batch.y, ref_rows))
          .gradients;
  out.update = ProjectUpdate(mixed, reference);
  out.projected = true;
  out.reference_dot = Dot(out.update, reference);
  return out;
}

DefenseKind ParseDefenseKind(std::string_view tag) {
  if (tag == "none") return DefenseKind::kNone;
  if (tag == "prune") return DefenseKind::kPrune;
  if (tag == "gaussian") return DefenseKind::kGaussian;
  if (tag == "laplacian") return DefenseKind::kLaplacian;
  if (tag == "layer-prune") return DefenseKind::kLayerPrune;
  if (tag == "concealing") return DefenseKind::kConcealing;
  Fail(ErrorCode::kConfig, "unknown defense '" + std::string(tag) + "'");
}

std::string_view DefenseKindName(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kPrune: return "prune";
    case DefenseKind::kGaussian: return "gaussian";
    case DefenseKind::kLaplacian: return "laplacian";
    case DefenseKind::kLayerPrune: return "layer-prune";
    case DefenseKind::kConcealing: return "concealing";
  }
  return "unknown";
}

bool DefenseSpec::conceals() const {
  return std::find(stages.begin(), stages.end(), DefenseKind::kConcealing) != stages.end();
}

std::string DefenseSpec::Name() const {
  std::string name;
  for (DefenseKind k : stages) {
    if (k == DefenseKind::kNone) continue;
    if (!name.empty()) name += '+';
    name += DefenseKindName(k);
  }
  return name.empty() ? "none" : name;
}

std::vector<DefenseKind> ParseDefenseStages(std::string_view tag) {
  std::vector<DefenseKind> stages;
  while (true) {
    const std::size_t plus = tag.find('+');
    const std::string_view part = tag.substr(0, plus);
    const DefenseKind k = ParseDefenseKind(part);
    if (k != DefenseKind::kNone) stages.push_back(k);
    if (plus == std::string_view::npos) break;
    tag.remove_prefix(plus + 1);
  }
  return stages;
}

void ValidateDefenseSpec(const DefenseSpec& spec) {
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    switch (spec.stages[i]) {
      case DefenseKind::kConcealing:
        if (i != 0) Fail(ErrorCode::kConfig, "concealing must be the first defense stage");
        ValidateConcealConfig(spec.conceal);
        break;
      case DefenseKind::kPrune:
      case DefenseKind::kLayerPrune:
        RequireFraction(spec.p, DefenseKindName(spec.stages[i]).data());
        break;
      case DefenseKind::kGaussian:
      case DefenseKind::kLaplacian:
        if (!(spec.scale >= 0.0)) Fail(ErrorCode::kConfig, "noise scale must be nonnegative");
        break;
      case DefenseKind::kNone:
        break;
    }
  }
}

DefenseOutput ApplyDefense(const Model& model, const Tensor& x, std::span<const int> y,
                           const DefenseSpec& spec, std::mt19937_64& rng, const Tensor* foreign) {
  ValidateDefenseSpec(spec);
  const Tensor batch = AsBatch(model, x);
  DefenseOutput out;
  out.reference_dot = std::numeric_limits<double>::quiet_NaN();
  if (spec.conceals()) {
    const SensitiveBatch sb =
        MakeSensitiveBatch(batch, std::vector<int>(y.begin(), y.end()), spec.m, spec.conceal.k);
    out = ConcealingDefense(model, sb, spec.conceal, rng, foreign);
  } else {
    out.update = ComputeLossAndGradients(model, batch, y).gradients;
    out.defended_inputs = batch;
  }
  for (DefenseKind k : spec.stages) {
    switch (k) {
      case DefenseKind::kPrune: out.update = PruneUpdate(out.update, spec.p); break;
      case DefenseKind::kGaussian:
        out.update = DpNoise(out.update, NoiseKind::kGaussian, spec.scale, rng);
        break;
      case DefenseKind::kLaplacian:
        out.update = DpNoise(out.update, NoiseKind::kLaplacian, spec.scale, rng);
        break;
      case DefenseKind::kLayerPrune:
        out.update = SingleLayerPrune(out.update, spec.layer, spec.p);
        break;
      case DefenseKind::kConcealing:
      case DefenseKind::kNone:
        break;
    }
  }
  return out;
}

}  // namespace gradleak
