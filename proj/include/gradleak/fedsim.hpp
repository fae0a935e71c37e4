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


#ifndef GRADLEAK_FEDSIM_HPP_
#define GRADLEAK_FEDSIM_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gradleak/data.hpp"
#include "gradleak/defenses.hpp"
#include "gradleak/nn.hpp"

namespace gradleak {

enum class PartitionMode { kIid, kNonIid };
PartitionMode ParsePartitionMode(std::string_view tag);

struct Partition {
  PartitionMode mode = PartitionMode::kIid;
  std::size_t labels_per_client = 0;  // non-iid only
  std::vector<std::vector<std::size_t>> clients;
  std::vector<std::vector<int>> client_labels;  // non-iid only
};

// Non-iid client c holds labels (c*L + j) mod classes, j < L, with
// samples_per_client / L samples of each.
Partition MakePartition(const Dataset& data, PartitionMode mode, std::size_t clients,
                        std::size_t samples_per_client, std::size_t labels_per_client,
                        std::uint64_t seed);

struct FLConfig {
  std::size_t clients = 10;
  std::size_t selected = 5;
  std::size_t rounds = 20;
  std::size_t batch_size = 64;
  double lr = 0.01;
  PartitionMode partition = PartitionMode::kIid;
  std::size_t samples_per_client = 400;
  std::size_t labels_per_client = 2;
  DefenseSpec defense;
  std::uint64_t seed = 0;
};

void ValidateFLConfig(const FLConfig& cfg);

struct ClientUpdate {
  GradientUpdate update;
  double reference_dot = 0.0;  // NaN unless projection ran
  std::vector<std::size_t> batch;
};

// Draws min(B, |indices|) samples without replacement; the full client set
// is used in stored order when B covers it.
ClientUpdate ClientRound(const Model& model, const Dataset& data,
                         std::span<const std::size_t> indices, std::size_t batch_size,
                         const DefenseSpec& defense, std::mt19937_64& rng,
                         const Tensor* foreign = nullptr);

// theta - (lr / |updates|) * sum(updates), summed in the given order.
ModelParams ServerStep(const ModelParams& theta, std::span<const GradientUpdate> updates, double lr);

double Evaluate(const Model& model, const Dataset& test);

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> selected;
  double update_l2 = 0.0;
  double accuracy = 0.0;
  double min_reference_dot = 0.0;  // NaN when no client projected
};

// Rounds are 1-based in the records. Updates are aggregated in ascending
// client-id order.
std::vector<RoundRecord> RunFederated(const FLConfig& cfg, Model& model, const Dataset& train,
                                      const Dataset& test, const Tensor* foreign = nullptr);

void WriteRoundsCsv(const std::string& path, std::span<const RoundRecord> records);

}  // namespace gradleak

#endif  // GRADLEAK_FEDSIM_HPP_
