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


#include "gradleak/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "gradleak/attacks.hpp"
#include "gradleak/defenses.hpp"
#include "gradleak/error.hpp"
#include "gradleak/fedsim.hpp"
#include "gradleak/gradcheck.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/nn.hpp"

#ifndef GRADLEAK_DEFAULT_DATA_DIR
#define GRADLEAK_DEFAULT_DATA_DIR "data/mnist5k"
#endif

namespace gradleak {
namespace {

namespace fs = std::filesystem;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream tags keep the per-purpose seeds apart.
enum SeedTag : std::uint64_t {
  kTagSynthTrain = 1,
  kTagSynthTest,
  kTagTargets,
  kTagAttack,
  kTagModel,
  kTagImprint,
  kTagDefense,
  kTagForeign,
  kTagFl,
};

std::uint64_t Derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::string Fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// CSV fields never need quoting here if commas and newlines are swapped out.
std::string Field(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) Fail(ErrorCode::kIo, "cannot write " + path.string());
}

// "crafting diverged" -> "crafting-diverged"
std::string StatusToken(ErrorCode code) {
  std::string s = ErrorCodeName(code);
  for (char& ch : s) {
    if (ch == ' ' || ch == '/') ch = '-';
  }
  return s;
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

AttackConfig AttackFromConfig(const Config& c) {
  AttackConfig a;
  a.kind = ParseAttackKind(c.Get("attack.kind"));
  a.iterations = c.GetUint("attack.iterations");
  a.lr = c.GetDouble("attack.lr");
  a.prior_weight = c.GetDouble("attack.prior_weight");
  a.restarts = c.GetUint("attack.restarts");
  const std::string d = c.Get("attack.distance");
  if (d == "default") {
    a.distance = MatchDistance::kDefault;
  } else if (d == "l2") {
    a.distance = MatchDistance::kL2;
  } else if (d == "cosine") {
    a.distance = MatchDistance::kCosine;
  } else {
    Fail(ErrorCode::kConfig, "unknown attack.distance '" + d + "'");
  }
  return a;
}

DefenseSpec DefenseFromConfig(const Config& c) {
  DefenseSpec d;
  d.stages = ParseDefenseStages(c.Get("defense.kind"));
  d.p = c.GetDouble("defense.p");
  d.scale = c.GetDouble("defense.scale");
  d.layer = c.Get("defense.layer");
  d.m = c.GetUint("defense.m");
  d.conceal.alpha = c.GetDouble("defense.alpha");
  d.conceal.beta = c.GetDouble("defense.beta");
  d.conceal.T = c.GetUint("defense.T");
  d.conceal.lambda = c.GetDouble("defense.lambda");
  d.conceal.k = c.GetUint("defense.k");
  d.conceal.start_point = ParseStartPoint(c.Get("defense.start_point"));
  d.conceal.projection_reference = ParseProjectionReference(c.Get("defense.projection_reference"));
  d.conceal.step_size = c.GetDouble("defense.step_size");
  ValidateDefenseSpec(d);
  return d;
}

Model BuildModel(const Config& c, const ImageShape& shape, std::size_t classes,
                 std::uint64_t seed) {
  Model model = Model::Build(ParseArch(c.Get("model.arch")), shape, classes, seed);
  const std::string file = c.Get("model.file");
  if (!file.empty()) model.set_params(LoadParams(file));
  return model;
}

// Start images for other-dataset crafting: whichever source is not in use.
Tensor ForeignImages(const Config& c, const Dataset& data, std::uint64_t seed) {
  if (c.Get("data.source") == "mnist") {
    return SynthDataset(data.classes, 4, data.shape.height, data.shape.width, seed).images;
  }
  if (!(data.shape == ImageShape{28, 28, 1})) {
    Fail(ErrorCode::kConfig, "other-dataset start points need 28x28x1 synthetic images");
  }
  Config mnist = c;
  mnist.Set("data.source", "mnist");
  Dataset m = LoadConfiguredData(mnist, false);
  std::vector<std::size_t> first(std::min<std::size_t>(64, m.size()));
  std::iota(first.begin(), first.end(), 0);
  return m.Batch(first);
}

// Target batches drawn without replacement from a seeded permutation.
std::vector<std::vector<std::size_t>> TargetBatches(const Config& c, const Dataset& data,
                                                    std::uint64_t seed) {
  const std::size_t targets = c.GetUint("attack.targets");
  const std::size_t b = c.GetUint("attack.batch_size");
  if (b == 0) Fail(ErrorCode::kConfig, "attack.batch_size must be positive");
  if (targets * b > data.size()) {
    Fail(ErrorCode::kConfig, std::to_string(targets) + " batches of " + std::to_string(b) +
                                 " exceed the " + std::to_string(data.size()) + " test images");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(Derive(seed, kTagTargets));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(targets);
  for (std::size_t t = 0; t < targets; ++t) {
    out[t].assign(order.begin() + static_cast<std::ptrdiff_t>(t * b),
                  order.begin() + static_cast<std::ptrdiff_t>((t + 1) * b));
  }
  return out;
}

bool MeasureWall(const Config& c) {
  const std::string w = c.Get("report.wall_ms");
  if (w == "zero") return false;
  if (w == "measure") return true;
  Fail(ErrorCode::kConfig, "report.wall_ms must be zero or measure");
}

bool DumpImages(const Config& c) {
  const std::string v = c.Get("dump.images");
  if (v == "true") return true;
  if (v == "false") return false;
  Fail(ErrorCode::kConfig, "dump.images must be true or false");
}

std::string Role(std::size_t i, std::size_t b, const DefenseSpec& d) {
  if (i >= b - std::min(d.m, b)) return "sensitive";
  if (d.conceals() && i < d.m * d.conceal.k) return "slot";
  return "plain";
}

void AttackEval(const Config& c, std::uint64_t seed, const fs::path& out, ExperimentSummary& s) {
  const Dataset test = LoadConfiguredData(c, false);
  const AttackConfig base = AttackFromConfig(c);
  const DefenseSpec defense = DefenseFromConfig(c);
  const bool wall = MeasureWall(c);
  const bool dump = DumpImages(c);
  const auto batches = TargetBatches(c, test, seed);

  Tensor calibration;
  if (base.kind == AttackKind::kImprint) {
    const Dataset train = LoadConfiguredData(c, true);
    const std::size_t n = std::min<std::size_t>(c.GetUint("attack.calibration"), train.size());
    std::vector<std::size_t> first(n);
    std::iota(first.begin(), first.end(), 0);
    calibration = train.Batch(first);
  }
  Tensor foreign;
  if (defense.conceals() && defense.conceal.start_point == StartPoint::kOtherDataset) {
    foreign = ForeignImages(c, test, Derive(seed, kTagForeign));
  }

  std::string timing = "batch,wall_ms\n";
  for (std::size_t t = 0; t < batches.size(); ++t) {
    const auto& idx = batches[t];
    const Tensor x = test.Batch(idx);
    const std::vector<int> y = test.Labels(idx);
    const auto t0 = std::chrono::steady_clock::now();
    AttackResult result;
    std::string status = "ok";
    try {
      Model model = BuildModel(c, test.shape, test.classes, Derive(seed, kTagModel, t));
      if (base.kind == AttackKind::kImprint) {
        model = InsertImprint(model, c.GetUint("attack.bins"),
                              ParseMeasurement(c.Get("attack.measurement")), calibration,
                              Derive(seed, kTagImprint, t));
      }
      std::mt19937_64 rng(Derive(seed, kTagDefense, t));
      const DefenseOutput defended =
          ApplyDefense(model, x, y, defense, rng, foreign.empty() ? nullptr : &foreign);
      AttackConfig ac = base;
      ac.seed = Derive(seed, kTagAttack, t);
      result = RunAttack(model, defended.update, idx.size(), ac);
      ScoreAttack(result, x, test.shape, base.kind);
    } catch (const Error& e) {
      status = StatusToken(e.code());
      ++s.failures;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    timing += std::to_string(t) + "," + Fmt(ms) + "\n";
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ReportRow row;
      row.target_id = std::to_string(t) + "-" + std::to_string(i);
      row.attack = std::string(AttackKindName(base.kind));
      row.defense = defense.Name();
      const bool ok = status == "ok";
      row.psnr_db = ok ? result.psnr[i] : kNaN;
      row.ssim = ok ? result.ssim[i] : kNaN;
      row.iters = ok ? result.iterations : 0;
      row.wall_ms = wall ? ms : 0.0;
      row.role = Role(i, idx.size(), defense);
      row.status = status;
      if (ok && dump) {
        WritePgm((out / (row.target_id + "_truth.pgm")).string(), test.Image(idx[i]), test.shape);
        if (!result.reconstructions.empty()) {
          const std::vector<Tensor> recon = SplitRows(result.reconstructions);
          WritePgm((out / (row.target_id + "_recon.pgm")).string(), recon[result.assignment[i]],
                   test.shape);
        }
      }
      s.rows.push_back(std::move(row));
    }
  }

  std::string report = "target_id,attack,defense,psnr_db,ssim,iters,wall_ms,role,status,config_hash\n";
  std::vector<double> psnr, ssim, psnr_sen, ssim_sen;
  for (const ReportRow& r : s.rows) {
    report += r.target_id + "," + r.attack + "," + Field(r.defense) + "," + Fmt(r.psnr_db) + "," +
              Fmt(r.ssim) + "," + std::to_string(r.iters) + "," + Fmt(r.wall_ms) + "," + r.role +
              "," + r.status + "," + s.config_hash + "\n";
    if (r.status != "ok") continue;
    psnr.push_back(r.psnr_db);
    ssim.push_back(r.ssim);
    if (r.role == "sensitive") {
      psnr_sen.push_back(r.psnr_db);
      ssim_sen.push_back(r.ssim);
    }
  }
  WriteFile(out / "report.csv", report);
  WriteFile(out / "timing.csv", timing);
  s.items = s.rows.size();
  s.mean_psnr_db = Mean(psnr);
  s.mean_ssim = Mean(ssim);
  s.mean_psnr_sensitive_db = Mean(psnr_sen);
  s.mean_ssim_sensitive = Mean(ssim_sen);
}

void Federate(const Config& c, std::uint64_t seed, const fs::path& out, ExperimentSummary& s,
              std::string& status) {
  const Dataset train = LoadConfiguredData(c, true);
  const Dataset test = LoadConfiguredData(c, false);
  FLConfig fl;
  fl.clients = c.GetUint("fl.clients");
  fl.selected = c.GetUint("fl.selected");
  fl.rounds = c.GetUint("fl.rounds");
  fl.batch_size = c.GetUint("fl.batch_size");
  fl.lr = c.GetDouble("fl.lr");
  fl.partition = ParsePartitionMode(c.Get("fl.partition"));
  fl.samples_per_client = c.GetUint("fl.samples_per_client");
  fl.labels_per_client = c.GetUint("fl.labels_per_client");
  fl.defense = DefenseFromConfig(c);
  fl.seed = Derive(seed, kTagFl);
  ValidateFLConfig(fl);
  Tensor foreign;
  if (fl.defense.conceals() && fl.defense.conceal.start_point == StartPoint::kOtherDataset) {
    foreign = ForeignImages(c, train, Derive(seed, kTagForeign));
  }
  Model model = BuildModel(c, train.shape, train.classes, Derive(seed, kTagModel));
  try {
    const std::vector<RoundRecord> rounds =
        RunFederated(fl, model, train, test, foreign.empty() ? nullptr : &foreign);
    WriteRoundsCsv((out / "rounds.csv").string(), rounds);
    s.items = rounds.size();
    s.final_accuracy = rounds.empty() ? Evaluate(model, test) : rounds.back().accuracy;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig || e.code() == ErrorCode::kIo) throw;
    status = StatusToken(e.code()) + ": " + e.what();
    ++s.failures;
    s.final_accuracy = kNaN;
  }
}

void Gradcheck(std::uint64_t seed, const fs::path& out, ExperimentSummary& s) {
  std::string csv = "check,instances,max_error,tolerance,passed,detail\n";
  for (const CheckResult& r : RunAllChecks(seed)) {
    char err[32], tol[32];
    std::snprintf(err, sizeof err, "%.3e", r.max_error);
    std::snprintf(tol, sizeof tol, "%.1e", r.tolerance);
    csv += Field(r.name) + "," + std::to_string(r.instances) + "," + err + "," + tol + "," +
           (r.passed ? "true" : "false") + "," + Field(r.detail) + "\n";
    ++s.items;
    if (!r.passed) ++s.failures;
  }
  WriteFile(out / "gradcheck.csv", csv);
}

void Craft(const Config& c, std::uint64_t seed, const fs::path& out, ExperimentSummary& s) {
  const Dataset test = LoadConfiguredData(c, false);
  const DefenseSpec defense = DefenseFromConfig(c);
  const bool dump = DumpImages(c);
  const auto batches = TargetBatches(c, test, seed);
  Tensor foreign;
  if (defense.conceal.start_point == StartPoint::kOtherDataset) {
    foreign = ForeignImages(c, test, Derive(seed, kTagForeign));
  }
  std::string csv =
      "target_id,slot,initial_objective,final_objective,initial_cosine,final_cosine,status\n";
  for (std::size_t t = 0; t < batches.size(); ++t) {
    const auto& idx = batches[t];
    try {
      const Model model = BuildModel(c, test.shape, test.classes, Derive(seed, kTagModel, t));
      const SensitiveBatch batch =
          MakeSensitiveBatch(test.Batch(idx), test.Labels(idx), defense.m, defense.conceal.k);
      std::mt19937_64 rng(Derive(seed, kTagDefense, t));
      const CraftResult r = CraftConcealing(model, batch, defense.conceal, rng,
                                            foreign.empty() ? nullptr : &foreign);
      const std::vector<Tensor> crafted = SplitRows(r.crafted);
      for (std::size_t j = 0; j < batch.slots.size(); ++j) {
        const std::string id = std::to_string(t) + "-" + std::to_string(batch.slots[j]);
        csv += id + "," + std::to_string(j) + "," + Fmt(r.initial_objective[j]) + "," +
               Fmt(r.final_objective[j]) + "," + Fmt(r.initial_cosine[j]) + "," +
               Fmt(r.final_cosine[j]) + ",ok\n";
        if (dump) WritePgm((out / (id + "_crafted.pgm")).string(), crafted[j], test.shape);
        ++s.items;
      }
      if (dump) {
        for (std::size_t i : batch.sensitive) {
          WritePgm((out / (std::to_string(t) + "-" + std::to_string(i) + "_sensitive.pgm")).string(),
                   test.Image(idx[i]), test.shape);
        }
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfig) throw;
      csv += std::to_string(t) + ",,nan,nan,nan,nan," + StatusToken(e.code()) + "\n";
      ++s.failures;
    }
  }
  WriteFile(out / "craft.csv", csv);
}

}  // namespace

ExperimentKind ParseExperimentKind(std::string_view tag) {
  if (tag == "attack-eval") return ExperimentKind::kAttackEval;
  if (tag == "federate") return ExperimentKind::kFederate;
  if (tag == "gradcheck") return ExperimentKind::kGradcheck;
  if (tag == "craft") return ExperimentKind::kCraft;
  Fail(ErrorCode::kConfig, "unknown experiment kind '" + std::string(tag) + "'");
}

Dataset LoadConfiguredData(const Config& c, bool train) {
  const std::string source = c.Get("data.source");
  const std::uint64_t seed = c.GetUint("experiment.seed");
  if (source == "mnist") {
    std::string dir = c.Get("data.dir");
    if (dir.empty()) dir = DefaultDataDir(GRADLEAK_DEFAULT_DATA_DIR);
    return LoadMnist(dir, train);
  }
  if (source == "synth") {
    const std::size_t per = c.GetUint(train ? "data.per_class" : "data.test_per_class");
    return SynthDataset(c.GetUint("data.classes"), per, c.GetUint("data.height"),
                        c.GetUint("data.width"),
                        Derive(seed, train ? kTagSynthTrain : kTagSynthTest));
  }
  Fail(ErrorCode::kConfig, "unknown data.source '" + source + "'");
}

ExperimentSummary RunExperiment(const Config& config) {
  ExperimentSummary s;
  s.kind = ParseExperimentKind(config.Get("experiment.kind"));
  s.config_hash = config.Hash();
  s.mean_psnr_db = s.mean_ssim = s.mean_psnr_sensitive_db = s.mean_ssim_sensitive = kNaN;
  s.final_accuracy = kNaN;
  const std::uint64_t seed = config.GetUint("experiment.seed");
  const std::string file = config.Get("model.file");
  if (!file.empty() && !fs::exists(file)) Fail(ErrorCode::kConfig, "model.file " + file + " not found");

  const fs::path out = config.Get("experiment.out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + out.string() + ": " + ec.message());
  s.out_dir = out.string();
  WriteFile(out / "config.resolved", config.Resolved());

  std::string status = "ok";
  switch (s.kind) {
    case ExperimentKind::kAttackEval: AttackEval(config, seed, out, s); break;
    case ExperimentKind::kFederate: Federate(config, seed, out, s, status); break;
    case ExperimentKind::kGradcheck: Gradcheck(seed, out, s); break;
    case ExperimentKind::kCraft: Craft(config, seed, out, s); break;
  }
  if (status == "ok" && s.failures > 0) status = std::to_string(s.failures) + " failed";
  WriteFile(out / "summary.csv",
            "kind,items,failures,mean_psnr_db,mean_ssim,mean_psnr_sensitive_db,"
            "mean_ssim_sensitive,final_accuracy,status,config_hash\n" +
                config.Get("experiment.kind") + "," + std::to_string(s.items) + "," +
                std::to_string(s.failures) + "," + Fmt(s.mean_psnr_db) + "," + Fmt(s.mean_ssim) +
                "," + Fmt(s.mean_psnr_sensitive_db) + "," + Fmt(s.mean_ssim_sensitive) + "," +
                Fmt(s.final_accuracy) + "," + Field(status) + "," + s.config_hash + "\n");
  return s;
}

}  // namespace gradleak
