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


#include "gradleak/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "gradleak/error.hpp"

namespace gradleak {

PartitionMode ParsePartitionMode(std::string_view tag) {
  if (tag == "iid") return PartitionMode::kIid;
  if (tag == "non-iid") return PartitionMode::kNonIid;
  Fail(ErrorCode::kConfig, "unknown partition mode '" + std::string(tag) + "'");
}

Partition MakePartition(const Dataset& data, PartitionMode mode, std::size_t clients,
                        std::size_t samples_per_client, std::size_t labels_per_client,
                        std::uint64_t seed) {
  if (clients == 0 || samples_per_client == 0) {
    Fail(ErrorCode::kConfig, "partition needs at least one client and one sample per client");
  }
  std::mt19937_64 rng(seed);
  Partition p;
  p.mode = mode;
  p.clients.resize(clients);
  if (mode == PartitionMode::kIid) {
    if (clients * samples_per_client > data.size()) {
      Fail(ErrorCode::kConfig, std::to_string(clients) + " clients x " +
                                   std::to_string(samples_per_client) + " samples exceed " +
                                   std::to_string(data.size()) + " available");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t c = 0; c < clients; ++c) {
      p.clients[c].assign(order.begin() + c * samples_per_client,
                          order.begin() + (c + 1) * samples_per_client);
    }
    return p;
  }

  const std::size_t labels = labels_per_client;
  if (labels == 0 || labels > data.classes || samples_per_client % labels != 0) {
    Fail(ErrorCode::kConfig, "non-iid partition needs 1 <= labels per client <= classes dividing "
                             "the per-client sample count");
  }
  p.labels_per_client = labels;
  std::vector<std::vector<std::size_t>> pools(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) pools[data.labels[i]].push_back(i);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> taken(data.classes, 0);
  const std::size_t per_label = samples_per_client / labels;
  for (std::size_t c = 0; c < clients; ++c) {
    std::vector<int> held;
    for (std::size_t j = 0; j < labels; ++j) {
      const std::size_t label = (c * labels + j) % data.classes;
      held.push_back(static_cast<int>(label));
      if (taken[label] + per_label > pools[label].size()) {
        Fail(ErrorCode::kConfig, "label " + std::to_string(label) + " has only " +
                                     std::to_string(pools[label].size()) +
                                     " samples for the requested non-iid allocation");
      }
      p.clients[c].insert(p.clients[c].end(), pools[label].begin() + taken[label],
                          pools[label].begin() + taken[label] + per_label);
      taken[label] += per_label;
    }
    p.client_labels.push_back(std::move(held));
  }
  return p;
}

void ValidateFLConfig(const FLConfig& cfg) {
  if (cfg.clients == 0 || cfg.selected == 0 || cfg.selected > cfg.clients) {
    Fail(ErrorCode::kConfig, "need 1 <= selected <= clients");
  }
  if (cfg.batch_size == 0) Fail(ErrorCode::kConfig, "client batch size must be at least 1");
  if (!(cfg.lr > 0.0)) Fail(ErrorCode::kConfig, "learning rate must be positive");
  ValidateDefenseSpec(cfg.defense);
}

ClientUpdate ClientRound(const Model& model, const Dataset& data,
                         std::span<const std::size_t> indices, std::size_t batch_size,
                         const DefenseSpec& defense, std::mt19937_64& rng, const Tensor* foreign) {
  if (indices.empty()) Fail(ErrorCode::kConfig, "client holds no samples");
  ClientUpdate out;
  if (batch_size >= indices.size()) {
    out.batch.assign(indices.begin(), indices.end());
  } else {
    std::vector<std::size_t> pool(indices.begin(), indices.end());
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    out.batch.assign(pool.begin(), pool.begin() + batch_size);
  }
  const Tensor x = data.Batch(out.batch);
  const std::vector<int> y = data.Labels(out.batch);
  DefenseOutput d = ApplyDefense(model, x, y, defense, rng, foreign);
  out.update = std::move(d.update);
  out.reference_dot = d.projected ? d.reference_dot : std::numeric_limits<double>::quiet_NaN();
  return out;
}

ModelParams ServerStep(const ModelParams& theta, std::span<const GradientUpdate> updates,
                       double lr) {
  if (updates.empty()) Fail(ErrorCode::kProtocol, "server step with no client updates");
  GradientUpdate sum = updates[0];
  RequireSameLayout(theta, sum, "server step");
  for (std::size_t i = 1; i < updates.size(); ++i) {
    RequireSameLayout(theta, updates[i], "server step");
    Axpy(1.0, updates[i], sum);
  }
  ModelParams out = theta;
  Axpy(-lr / static_cast<double>(updates.size()), sum, out);
  return out;
}

double Evaluate(const Model& model, const Dataset& test) {
  if (test.size() == 0) Fail(ErrorCode::kData, "evaluation set is empty");
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  const std::size_t c = model.classes();
  for (std::size_t begin = 0; begin < test.size(); begin += kChunk) {
    const std::size_t end = std::min(test.size(), begin + kChunk);
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const Tensor logits = Logits(model, test.Batch(rows));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double* z = logits.data().data() + r * c;
      const auto pred = static_cast<int>(std::max_element(z, z + c) - z);
      if (pred == test.labels[rows[r]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<RoundRecord> RunFederated(const FLConfig& cfg, Model& model, const Dataset& train,
                                      const Dataset& test, const Tensor* foreign) {
  ValidateFLConfig(cfg);
  const Partition part = MakePartition(train, cfg.partition, cfg.clients, cfg.samples_per_client,
                                       cfg.labels_per_client, cfg.seed);
  std::mt19937_64 run_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<RoundRecord> records;
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    std::vector<std::size_t> ids(cfg.clients);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), run_rng);
    ids.resize(cfg.selected);
    std::sort(ids.begin(), ids.end());

    RoundRecord rec;
    rec.round = round;
    rec.selected = ids;
    rec.min_reference_dot = std::numeric_limits<double>::quiet_NaN();
    std::vector<GradientUpdate> updates;
    for (std::size_t id : ids) {
      std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(round),
                        static_cast<std::uint64_t>(id)};
      std::mt19937_64 client_rng(seq);
      try {
        ClientUpdate u = ClientRound(model, train, part.clients[id], cfg.batch_size, cfg.defense,
                                     client_rng, foreign);
        if (!std::isnan(u.reference_dot)) {
          rec.min_reference_dot = std::isnan(rec.min_reference_dot)
                                      ? u.reference_dot
                                      : std::min(rec.min_reference_dot, u.reference_dot);
        }
        updates.push_back(std::move(u.update));
      } catch (const Error& e) {
        Fail(e.code(), "client " + std::to_string(id) + ": " + e.what());
      }
    }
    const ModelParams next = ServerStep(model.params(), updates, cfg.lr);
    GradientUpdate delta = next;
    Axpy(-1.0, model.params(), delta);
    rec.update_l2 = L2Norm(delta) / cfg.lr;
    model.set_params(next);
    rec.accuracy = Evaluate(model, test);
    records.push_back(std::move(rec));
  }
  return records;
}

void WriteRoundsCsv(const std::string& path, std::span<const RoundRecord> records) {
  std::ofstream os(path);
  if (!os) Fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  os << "round,selected_ids,update_l2,accuracy\n";
  char buf[64];
  for (const RoundRecord& r : records) {
    os << r.round << ',';
    for (std::size_t i = 0; i < r.selected.size(); ++i) os << (i ? ";" : "") << r.selected[i];
    std::snprintf(buf, sizeof buf, ",%.17g,%.6f\n", r.update_l2, r.accuracy);
    os << buf;
  }
  if (!os) Fail(ErrorCode::kIo, "failed writing " + path);
}

}  // namespace gradleak
