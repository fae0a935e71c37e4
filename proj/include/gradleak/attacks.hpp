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


#ifndef GRADLEAK_ATTACKS_HPP_
#define GRADLEAK_ATTACKS_HPP_

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gradleak/gradient_update.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/nn.hpp"

namespace gradleak {

enum class AttackKind { kClosedForm, kDlg, kGs, kImprint };
AttackKind ParseAttackKind(std::string_view tag);
std::string_view AttackKindName(AttackKind kind);

enum class MatchDistance { kDefault, kL2, kCosine };

struct AttackConfig {
  AttackKind kind = AttackKind::kDlg;
  std::size_t iterations = 300;
  double lr = 0.1;
  double prior_weight = 1e-4;  // gs only
  // Extra random initializations beyond the first; the lowest loss wins.
  std::size_t restarts = 2;
  std::uint64_t seed = 0;
  // kDefault picks L2 for dlg and cosine for gs.
  MatchDistance distance = MatchDistance::kDefault;
};

struct AttackResult {
  Tensor reconstructions;  // [R, D]; R may be 0 for the analytic attacks
  std::vector<int> labels;
  std::vector<double> loss_trace;  // best restart
  double best_loss = 0.0;
  std::size_t iterations = 0;
  // Filled by ScoreAttack.
  std::vector<double> psnr;
  std::vector<double> ssim;
  std::vector<std::size_t> assignment;
  bool greedy_match = false;
};

// x = dW_row / db_row; nullopt when |db_row| <= 1e-12.
std::optional<Tensor> InvertFcClosedForm(const Tensor& dW, const Tensor& db, std::size_t row);

// Applies the identity to the leading dense layer, on the row with the
// largest |db|.
AttackResult ClosedFormAttack(const Model& model, const GradientUpdate& target);

AttackResult DlgAttack(const Model& model, const GradientUpdate& target, std::size_t batch,
                       const AttackConfig& config);
AttackResult GsAttack(const Model& model, const GradientUpdate& target, std::size_t batch,
                      const AttackConfig& config);
AttackResult ImprintAttack(const Model& model, const GradientUpdate& target);

AttackResult RunAttack(const Model& model, const GradientUpdate& target, std::size_t batch,
                       const AttackConfig& config);

// Gradient-matching loss of candidate (x, soft-label logits) against target.
double GradientMatchLoss(const Model& model, const GradientUpdate& target, const Tensor& x,
                         const Tensor& label_logits, const AttackConfig& config);

// Optimization attacks: matched one-to-one with batch_match. Analytic attacks
// may return any number of candidates, so each target takes its best.
void ScoreAttack(AttackResult& result, const Tensor& targets, const ImageShape& shape,
                 AttackKind kind);

}  // namespace gradleak

#endif  // GRADLEAK_ATTACKS_HPP_
