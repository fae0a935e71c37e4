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


#ifndef GRADLEAK_DEFENSES_HPP_
#define GRADLEAK_DEFENSES_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gradleak/gradient_update.hpp"
#include "gradleak/nn.hpp"

namespace gradleak {

// Zeroes the ceil(p*N) smallest-magnitude coordinates across the flattened
// update. Ties go to the lower flat index.
GradientUpdate PruneUpdate(const GradientUpdate& g, double p);

enum class NoiseKind { kGaussian, kLaplacian };
// Gaussian: std = scale. Laplacian: diversity b = scale.
GradientUpdate DpNoise(const GradientUpdate& g, NoiseKind kind, double scale, std::mt19937_64& rng);

// `layer` names an entry ("fc0.weight") or a layer prefix ("fc0"); pruning
// ranks coordinates within that selection only.
GradientUpdate SingleLayerPrune(const GradientUpdate& g, std::string_view layer, double p);

// Unchanged when <g, ref> >= 0 or ref is zero; otherwise the minimal-norm
// correction onto <g, ref> = 0.
GradientUpdate ProjectUpdate(const GradientUpdate& g, const GradientUpdate& ref);

enum class StartPoint { kSameDataset, kOtherDataset, kNoise };
StartPoint ParseStartPoint(std::string_view tag);
std::string_view StartPointName(StartPoint s);

enum class ProjectionReference { kFullBatch, kExcludeSensitive };
ProjectionReference ParseProjectionReference(std::string_view tag);
std::string_view ProjectionReferenceName(ProjectionReference r);

struct ConcealConfig {
  double alpha = 0.1;
  double beta = 0.001;
  std::size_t T = 1000;
  double lambda = 0.3;
  std::size_t k = 1;
  StartPoint start_point = StartPoint::kSameDataset;
  ProjectionReference projection_reference = ProjectionReference::kExcludeSensitive;
  double step_size = 0.05;
};

void ValidateConcealConfig(const ConcealConfig& cfg);

struct SensitiveBatch {
  Tensor x;  // [n, D]
  std::vector<int> y;
  std::vector<std::size_t> sensitive;  // m indices
  // slots[r*k + j] is the j-th concealing slot owned by sensitive[r].
  std::vector<std::size_t> slots;
  std::size_t k = 1;

  std::size_t m() const { return sensitive.size(); }
};

// The last m items are sensitive; sensitive point r owns slots r*k..r*k+k-1.
SensitiveBatch MakeSensitiveBatch(Tensor x, std::vector<int> y, std::size_t m, std::size_t k);
void ValidateSensitiveBatch(const SensitiveBatch& b);

struct CraftResult {
  Tensor crafted;  // [m*k, D], in slot order
  std::vector<double> initial_objective;
  std::vector<double> final_objective;
  std::vector<double> initial_cosine;
  std::vector<double> final_cosine;
};

// `foreign` supplies start images for kOtherDataset (row j mod count).
CraftResult CraftConcealing(const Model& model, const SensitiveBatch& batch,
                            const ConcealConfig& cfg, std::mt19937_64& rng,
                            const Tensor* foreign = nullptr);

// Value of the crafting objective and its cosine term for one candidate.
struct ConcealObjective {
  double objective = 0.0;
  double cosine = 0.0;
};
ConcealObjective EvaluateConcealObjective(const Model& model, const Tensor& candidate, int label,
                                          const Tensor& sensitive, int sensitive_label,
                                          const ConcealConfig& cfg);

// Per-group mean losses, summed: lambda*L(Xc, Yc) + (1-lambda)*L(Xc, Ysen)
// + L(rest, Yrest). `x` already holds the crafted samples in its slots.
GradientUpdate MixupGradients(const Model& model, const Tensor& x, std::span<const int> y,
                              std::span<const std::size_t> slots, std::span<const int> y_slots,
                              std::span<const int> y_sensitive, double lambda);

struct DefenseOutput {
  GradientUpdate update;
  Tensor defended_inputs;  // the batch as the gradient saw it
  CraftResult craft;
  // <update, reference> after projection; NaN when no projection ran.
  double reference_dot = 0.0;
  bool projected = false;
};

DefenseOutput ConcealingDefense(const Model& model, const SensitiveBatch& batch,
                                const ConcealConfig& cfg, std::mt19937_64& rng,
                                const Tensor* foreign = nullptr);

// A defense pipeline: at most one leading "concealing" stage, followed by
// update transforms applied in order.
enum class DefenseKind { kNone, kPrune, kGaussian, kLaplacian, kLayerPrune, kConcealing };
DefenseKind ParseDefenseKind(std::string_view tag);
std::string_view DefenseKindName(DefenseKind kind);

struct DefenseSpec {
  std::vector<DefenseKind> stages;  // empty means no defense
  double p = 0.7;
  double scale = 1e-2;
  std::string layer = "fc0";
  std::size_t m = 1;  // sensitive points per batch
  ConcealConfig conceal;

  bool empty() const { return stages.empty(); }
  bool conceals() const;
  std::string Name() const;  // stages joined by '+', "none" when empty
};

// Parses "none", "prune", "concealing+gaussian", ...
std::vector<DefenseKind> ParseDefenseStages(std::string_view tag);
void ValidateDefenseSpec(const DefenseSpec& spec);

// Shared update for one client batch.
DefenseOutput ApplyDefense(const Model& model, const Tensor& x, std::span<const int> y,
                           const DefenseSpec& spec, std::mt19937_64& rng,
                           const Tensor* foreign = nullptr);

}  // namespace gradleak

#endif  // GRADLEAK_DEFENSES_HPP_
