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


#ifndef GRADLEAK_EXPERIMENT_HPP_
#define GRADLEAK_EXPERIMENT_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "gradleak/config.hpp"
#include "gradleak/data.hpp"

namespace gradleak {

enum class ExperimentKind { kAttackEval, kFederate, kGradcheck, kCraft };
ExperimentKind ParseExperimentKind(std::string_view tag);

// One line of report.csv.
struct ReportRow {
  std::string target_id;  // "<batch>-<index>"
  std::string attack;
  std::string defense;
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t iters = 0;
  double wall_ms = 0.0;
  std::string role;    // sensitive, slot or plain
  std::string status;  // ok or an error code name
};

struct ExperimentSummary {
  ExperimentKind kind = ExperimentKind::kAttackEval;
  std::string config_hash;
  std::string out_dir;
  std::size_t items = 0;     // report rows, rounds, checks or crafted samples
  std::size_t failures = 0;  // nonzero means the run should exit nonzero
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double mean_psnr_sensitive_db = 0.0;  // NaN without sensitive rows
  double mean_ssim_sensitive = 0.0;
  double final_accuracy = 0.0;  // federate only
  std::vector<ReportRow> rows;
};

// Runs the configured experiment and writes its files under the configured
// output directory. Per-item failures are recorded, not thrown; invalid
// configs and I/O errors still throw.
ExperimentSummary RunExperiment(const Config& config);

// Loads the configured data source. `train` selects the training split.
Dataset LoadConfiguredData(const Config& config, bool train);

}  // namespace gradleak

#endif  // GRADLEAK_EXPERIMENT_HPP_
