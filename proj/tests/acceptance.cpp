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


// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradleak/attacks.hpp"
#include "gradleak/config.hpp"
#include "gradleak/data.hpp"
#include "gradleak/defenses.hpp"
#include "gradleak/experiment.hpp"
#include "gradleak/fedsim.hpp"
#include "gradleak/gradcheck.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/nn.hpp"

namespace gl = gradleak;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates sub-checks; the criterion passes only if all of them do.
class Checks {
 public:
  void Expect(bool ok, const std::string& what) {
    if (!ok) out_.pass = false;
    if (!out_.detail.empty()) out_.detail += "; ";
    out_.detail += (ok ? "" : "!") + what;
  }
  Outcome Done() const { return out_; }

 private:
  Outcome out_;
};

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string OutDir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("gradleak_acceptance_" + tag);
  fs::remove_all(p);
  return p.string();
}

std::string Slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

gl::Tensor RandomImages(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  gl::Tensor t({n, d});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

gl::Tensor Row(const gl::Tensor& x, std::size_t i) {
  const std::size_t d = x.dim(1);
  return gl::Tensor({d}, std::vector<double>(x.data().begin() + i * d,
                                             x.data().begin() + (i + 1) * d));
}

double RowPsnr(const gl::ExperimentSummary& s, const std::string& id) {
  for (const gl::ReportRow& r : s.rows) {
    if (r.target_id == id) return r.psnr_db;
  }
  return std::nan("");
}

const gl::ReportRow* FindRow(const gl::ExperimentSummary& s, const std::string& id) {
  for (const gl::ReportRow& r : s.rows) {
    if (r.target_id == id) return &r;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

Outcome Numerics() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t ops = 0, failed = 0;
  double worst = 0.0;
  for (const gl::CheckResult& r : gl::RunFirstOrderChecks(1, 10, 1e-5)) {
    ++ops;
    worst = std::max(worst, r.max_error);
    if (!r.passed || r.instances < 10) ++failed;
  }
  c.Expect(failed == 0, std::to_string(ops) + " first-order op checks, " +
                            std::to_string(failed) + " failed, worst " + Fmt("%.2e", worst));
  const gl::CheckResult gm = gl::RunGradientMatchingCheck(1, 3, 1e-4);
  c.Expect(gm.passed, "second-order matching objective " + Fmt("%.2e", gm.max_error));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.Expect(secs < 60.0, Fmt("%.1f s", secs));
  return c.Done();
}

gl::Model OneLayer(std::uint64_t seed) {
  return gl::Model::FromLayers({28, 28, 1}, 10, {gl::LayerSpec::Dense("fc0", 784, 10)}, seed);
}

Outcome ClosedForm() {
  Checks c;
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const gl::Model m = OneLayer(seed);
    const gl::Tensor x = RandomImages(1, 784, rng);
    const int y = static_cast<int>(seed % 10);
    const gl::GradientUpdate g = gl::ComputeLossAndGradients(m, x, std::span(&y, 1)).gradients;
    const gl::AttackResult r = gl::ClosedFormAttack(m, g);
    worst = r.reconstructions.size() == x.size() ? std::max(worst, gl::MaxAbsDiff(r.reconstructions, x))
                                                 : INFINITY;
  }
  c.Expect(worst <= 1e-9, "batch 1 over 20 instances, max pixel error " + Fmt("%.2e", worst));

  // Batch of two: every row gives the bias-gradient weighted mean, checked
  // against per-sample gradients.
  double worst2 = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const gl::Model m = OneLayer(100 + seed);
    const gl::Tensor x = RandomImages(2, 784, rng);
    const std::vector<int> y = {static_cast<int>(seed % 10), static_cast<int>((seed + 3) % 10)};
    const gl::GradientUpdate g = gl::ComputeLossAndGradients(m, x, y).gradients;
    gl::GradientUpdate per[2];
    for (std::size_t i = 0; i < 2; ++i) {
      per[i] = gl::ComputeLossAndGradients(m, Row(x, i), std::span(&y[i], 1)).gradients;
    }
    for (std::size_t row = 0; row < 10; ++row) {
      const double b0 = (*per[0].Find("fc0.bias"))[row], b1 = (*per[1].Find("fc0.bias"))[row];
      const auto rec = gl::InvertFcClosedForm(*g.Find("fc0.weight"), *g.Find("fc0.bias"), row);
      if (!rec) {
        worst2 = INFINITY;
        continue;
      }
      for (std::size_t j = 0; j < 784; ++j) {
        const double expect = (b0 * x[j] + b1 * x[784 + j]) / (b0 + b1);
        worst2 = std::max(worst2, std::abs((*rec)[j] - expect) / std::max(1.0, std::abs(expect)));
      }
    }
  }
  c.Expect(worst2 <= 1e-9, "batch 2 weighted mean, max rel error " + Fmt("%.2e", worst2));
  return c.Done();
}

std::size_t BinOf(const gl::ImprintModule& im, const gl::Tensor& x) {
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) v += im.measurement[i] * x[i];
  std::size_t bin = 0;
  for (double t : im.thresholds) bin += v > t;
  return bin;
}

Outcome ImprintExact() {
  Checks c;
  const gl::Dataset train = gl::LoadMnist(gl::DefaultDataDir(GRADLEAK_TEST_DATA_DIR), true);
  const gl::Dataset test = gl::LoadMnist(gl::DefaultDataDir(GRADLEAK_TEST_DATA_DIR), false);
  std::vector<std::size_t> calib_idx(1000);
  std::iota(calib_idx.begin(), calib_idx.end(), 0);
  const gl::Model host = gl::Model::Build(gl::Arch::kMlpSmall, {28, 28, 1}, 10, 5);
  const gl::Model m =
      gl::InsertImprint(host, 4, gl::Measurement::kBrightness, train.Batch(calib_idx), 6);

  // First test digit landing in each of the four bins.
  std::vector<std::size_t> pick(5, test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const std::size_t b = BinOf(*m.imprint(), test.Image(i));
    if (b >= 1 && pick[b] == test.size()) pick[b] = i;
  }
  pick.erase(pick.begin());
  const bool found = std::none_of(pick.begin(), pick.end(), [&](auto i) { return i == test.size(); });
  c.Expect(found, "one test digit per bin");
  if (!found) return c.Done();
  const gl::Tensor x = test.Batch(pick);
  const gl::GradientUpdate g = gl::ComputeLossAndGradients(m, x, test.Labels(pick)).gradients;
  const gl::AttackResult r = gl::ImprintAttack(m, g);
  double worst = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double best = INFINITY;
    for (std::size_t k = 0; k < r.reconstructions.dim(0); ++k) {
      best = std::min(best, gl::MaxAbsDiff(Row(x, n), Row(r.reconstructions, k)));
    }
    worst = std::max(worst, best);
  }
  c.Expect(worst <= 1e-6, "4 reconstructions, max pixel error " + Fmt("%.2e", worst));
  const double pass = gl::MaxAbsDiff(gl::Logits(host, test.images), gl::Logits(m, test.images));
  c.Expect(pass <= 1e-9, "pass-through logits " + Fmt("%.2e", pass));
  return c.Done();
}

gl::Config AttackConfig(std::uint64_t seed, const std::string& out) {
  gl::Config cfg;
  cfg.Set("data.source", "mnist");
  cfg.Set("model.arch", "mlp-small");
  cfg.Set("attack.kind", "dlg");
  cfg.Set("attack.iterations", "300");
  cfg.Set("attack.lr", "0.1");
  cfg.Set("experiment.seed", std::to_string(seed));
  cfg.Set("experiment.out", out);
  cfg.Set("dump.images", "false");
  return cfg;
}

Outcome AttackStrength() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  gl::Config plain = AttackConfig(0, OutDir("c4_b1"));
  plain.Set("attack.batch_size", "1");
  plain.Set("attack.targets", "8");
  const gl::ExperimentSummary s1 = gl::RunExperiment(plain);
  std::size_t above = 0;
  for (const gl::ReportRow& r : s1.rows) above += r.psnr_db >= 25.0;
  c.Expect(s1.failures == 0 && s1.mean_psnr_db >= 25.0,
           "B=1 DLG mean " + Fmt("%.2f dB", s1.mean_psnr_db) + " (" + std::to_string(above) +
               "/8 digits >= 25)");

  std::size_t lower = 0;
  double psnr_sum = 0.0, ssim_sum = 0.0, psnr_max = -INFINITY, ssim_max = -INFINITY;
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    gl::Config base = AttackConfig(seed, OutDir("c4_none"));
    base.Set("attack.batch_size", "4");
    base.Set("attack.targets", "1");
    gl::Config def = base;
    def.Set("experiment.out", OutDir("c4_conceal"));
    def.Set("defense.kind", "concealing");
    def.Set("defense.alpha", "0.1");
    def.Set("defense.beta", "0.001");
    def.Set("defense.T", "1000");
    def.Set("defense.lambda", "0.3");
    def.Set("defense.m", "1");
    def.Set("defense.k", "1");
    const gl::ExperimentSummary u = gl::RunExperiment(base);
    const gl::ExperimentSummary d = gl::RunExperiment(def);
    const gl::ReportRow* sens = FindRow(d, "0-3");
    if (sens == nullptr || sens->role != "sensitive" || sens->status != "ok" || u.failures) continue;
    ++ok;
    const double undefended = RowPsnr(u, "0-3");
    lower += sens->psnr_db < undefended;
    psnr_sum += sens->psnr_db;
    ssim_sum += sens->ssim;
    psnr_max = std::max(psnr_max, sens->psnr_db);
    ssim_max = std::max(ssim_max, sens->ssim);
    std::printf("  criterion 4 seed %llu: undefended %.2f dB, defended %.2f dB / ssim %.3f\n",
                static_cast<unsigned long long>(seed), undefended, sens->psnr_db, sens->ssim);
    std::fflush(stdout);
  }
  c.Expect(ok == 10, std::to_string(ok) + "/10 seeds ran");
  const double n = std::max<std::size_t>(ok, 1);
  c.Expect(psnr_sum / n <= 13.0, "defended sensitive mean " + Fmt("%.2f dB", psnr_sum / n) +
                                     " (max " + Fmt("%.2f", psnr_max) + ")");
  c.Expect(ssim_sum / n <= 0.35,
           "ssim mean " + Fmt("%.3f", ssim_sum / n) + " (max " + Fmt("%.3f", ssim_max) + ")");
  c.Expect(lower >= 8, std::to_string(lower) + "/10 seeds below undefended");
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.Expect(secs <= 900.0, Fmt("%.0f s", secs));
  return c.Done();
}

Outcome ImprintVsConcealing() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  gl::Config base = AttackConfig(0, OutDir("c5_none"));
  base.Set("attack.kind", "imprint");
  base.Set("attack.bins", "64");
  base.Set("attack.calibration", "1000");
  base.Set("attack.measurement", "brightness");
  base.Set("attack.batch_size", "4");
  base.Set("attack.targets", "10");
  gl::Config def = base;
  def.Set("experiment.out", OutDir("c5_conceal"));
  def.Set("defense.kind", "concealing");
  def.Set("defense.alpha", "30");
  def.Set("defense.beta", "100");
  def.Set("defense.T", "100");
  def.Set("defense.step_size", "0.01");
  def.Set("defense.m", "1");
  def.Set("defense.k", "1");
  const gl::ExperimentSummary u = gl::RunExperiment(base);
  const gl::ExperimentSummary d = gl::RunExperiment(def);
  double usum = 0.0;
  std::size_t un = 0;
  for (const gl::ReportRow& r : u.rows) {
    if (r.target_id.size() > 2 && r.target_id.substr(r.target_id.size() - 2) == "-3") {
      usum += r.psnr_db;
      ++un;
    }
  }
  const double umean = un ? usum / static_cast<double>(un) : std::nan("");
  c.Expect(u.failures == 0 && un == 10 && umean >= 50.0,
           "undefended sensitive mean " + Fmt("%.2f dB", umean));
  c.Expect(d.failures == 0 && d.mean_psnr_sensitive_db <= 25.0,
           "defended sensitive mean " + Fmt("%.2f dB", d.mean_psnr_sensitive_db));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.Expect(secs <= 600.0, Fmt("%.0f s", secs));
  return c.Done();
}

gl::GradientUpdate RandomUpdate(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  gl::Tensor a({5, 4}), b({5});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = n01(rng);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = n01(rng);
  return gl::GradientUpdate({{"l.weight", a}, {"l.bias", b}});
}

Outcome Projection() {
  Checks c;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(0.1, 10.0);
  double worst = INFINITY;
  std::size_t identity_broken = 0, pairs = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const gl::GradientUpdate g = RandomUpdate(rng);
    gl::GradientUpdate r;
    switch (trial % 10) {
      case 0: r = gl::Scaled(g, -pos(rng)); break;  // antiparallel
      case 1: r = g.ZerosLike(); break;
      default: r = RandomUpdate(rng); break;
    }
    const gl::GradientUpdate p = gl::ProjectUpdate(g, r);
    worst = std::min(worst, gl::Dot(p, r));
    if (gl::Dot(g, r) >= 0 && !(p == g)) ++identity_broken;
    ++pairs;
  }
  c.Expect(worst >= -1e-9, std::to_string(pairs) + " pairs, min dot " + Fmt("%.2e", worst));
  c.Expect(identity_broken == 0, std::to_string(identity_broken) + " nonnegative pairs changed");
  return c.Done();
}

Outcome Utility() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  gl::Config base;
  base.Set("experiment.kind", "federate");
  base.Set("experiment.out", OutDir("c7_none"));
  base.Set("data.source", "synth");
  base.Set("data.per_class", "100");
  base.Set("data.test_per_class", "30");
  base.Set("model.arch", "mlp-small");
  base.Set("fl.clients", "10");
  base.Set("fl.selected", "5");
  base.Set("fl.rounds", "20");
  base.Set("fl.samples_per_client", "100");
  base.Set("fl.batch_size", "32");
  base.Set("fl.lr", "0.4");
  base.Set("fl.partition", "iid");
  gl::Config def = base;
  def.Set("experiment.out", OutDir("c7_conceal"));
  def.Set("defense.kind", "concealing");
  def.Set("defense.alpha", "0.1");
  def.Set("defense.beta", "0.001");
  def.Set("defense.T", "1000");
  def.Set("defense.lambda", "0.3");
  const gl::ExperimentSummary u = gl::RunExperiment(base);
  std::printf("  criterion 7 no defense: %.4f\n", u.final_accuracy);
  std::fflush(stdout);
  const gl::ExperimentSummary d = gl::RunExperiment(def);
  std::printf("  criterion 7 concealing: %.4f\n", d.final_accuracy);
  c.Expect(u.failures == 0 && u.final_accuracy >= 0.85,
           "no defense " + Fmt("%.4f", u.final_accuracy));
  const double gap = std::abs(u.final_accuracy - d.final_accuracy);
  c.Expect(d.failures == 0 && gap <= 0.03 + 1e-12,
           "concealing " + Fmt("%.4f", d.final_accuracy) + ", gap " + Fmt("%.1f pp", 100 * gap));

  // FedAvg with one client holding everything, full batch, against plain GD.
  const gl::Dataset train = gl::SynthDataset(10, 20, 28, 28, 1);
  gl::FLConfig fc;
  fc.clients = fc.selected = 1;
  fc.rounds = 15;
  fc.lr = 0.4;
  fc.samples_per_client = fc.batch_size = train.size();
  fc.seed = 3;
  gl::Model fed = gl::Model::Build(gl::Arch::kMlpSmall, {28, 28, 1}, 10, 11);
  gl::Model central = fed;
  gl::RunFederated(fc, fed, train, train);
  for (std::size_t t = 0; t < fc.rounds; ++t) {
    gl::GradientUpdate next = central.params();
    gl::Axpy(-fc.lr, gl::ComputeLossAndGradients(central, train.images, train.labels).gradients,
             next);
    central.set_params(next);
  }
  const std::vector<double> a = fed.params().Flatten(), b = central.params().Flatten();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  c.Expect(worst <= 1e-9, "single-client FedAvg vs centralized " + Fmt("%.2e", worst));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.Expect(secs <= 600.0, Fmt("%.0f s", secs));
  return c.Done();
}

Outcome Metrics() {
  Checks c;
  const gl::Dataset test = gl::LoadMnist(gl::DefaultDataDir(GRADLEAK_TEST_DATA_DIR), false);
  const gl::ImageShape shape{28, 28, 1};
  const gl::Tensor a = test.Image(0);
  c.Expect(gl::Psnr(a, a) == 100.0, "psnr identical " + Fmt("%.1f", gl::Psnr(a, a)));
  const double zero_one = gl::Psnr(gl::Tensor({784}, 0.0), gl::Tensor({784}, 1.0));
  c.Expect(std::abs(zero_one) <= 1e-12, "zeros vs ones " + Fmt("%.3g dB", zero_one));
  const double offset = gl::Psnr(gl::Tensor({784}, 0.3), gl::Tensor({784}, 0.4));
  c.Expect(std::abs(offset - 20.0) <= 1e-9, "offset 0.1 " + Fmt("%.9f dB", offset));
  c.Expect(gl::Ssim(a, a, shape) == 1.0, "ssim identical");
  gl::Tensor bin = a, neg({784});
  for (std::size_t i = 0; i < 784; ++i) {
    bin[i] = a[i] > 0.5 ? 1.0 : 0.0;
    neg[i] = 1.0 - bin[i];
  }
  const double sn = gl::Ssim(bin, neg, shape);
  c.Expect(sn < 0.5, "ssim vs negative " + Fmt("%.3f", sn));

  std::mt19937_64 rng(8);
  bool all = true;
  for (std::size_t b : {2u, 4u, 8u}) {
    std::vector<gl::Tensor> targets;
    for (std::size_t i = 0; i < b; ++i) targets.push_back(test.Image(10 + i));
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<gl::Tensor> recon(b);
    for (std::size_t i = 0; i < b; ++i) recon[perm[i]] = targets[i];
    const gl::MatchResult m = gl::BatchMatch(recon, targets, shape);
    all = all && !m.greedy && m.assignment == perm &&
          std::all_of(m.psnr.begin(), m.psnr.end(), [](double v) { return v == 100.0; });
  }
  c.Expect(all, "planted shuffles for B in {2,4,8}");
  return c.Done();
}

Outcome DpStats() {
  Checks c;
  const std::size_t n = 100000;
  const double s = 0.01;
  for (gl::NoiseKind kind : {gl::NoiseKind::kGaussian, gl::NoiseKind::kLaplacian}) {
    std::mt19937_64 rng(77);
    const gl::GradientUpdate zero({{"v", gl::Tensor({n}, 0.0)}});
    const std::vector<double> v = gl::DpNoise(zero, kind, s, rng).Flatten();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(n - 1));
    const bool gauss = kind == gl::NoiseKind::kGaussian;
    const double target = gauss ? s : std::sqrt(2.0) * s;
    const double mean_band = 5.0 * target / std::sqrt(static_cast<double>(n));
    const char* name = gauss ? "gaussian" : "laplacian";
    c.Expect(std::abs(mean) <= mean_band, std::string(name) + " mean " + Fmt("%.2e", mean));
    c.Expect(sd >= 0.97 * target && sd <= 1.03 * target,
             std::string(name) + " std " + Fmt("%.5f", sd));
  }
  return c.Done();
}

Outcome Determinism() {
  Checks c;
  auto twice = [&](gl::Config cfg, const std::string& tag, const char* file) {
    cfg.Set("experiment.out", OutDir(tag + "_a"));
    gl::RunExperiment(cfg);
    const std::string a = Slurp(fs::path(cfg.Get("experiment.out")) / file);
    cfg.Set("experiment.out", OutDir(tag + "_b"));
    gl::RunExperiment(cfg);
    const std::string b = Slurp(fs::path(cfg.Get("experiment.out")) / file);
    c.Expect(!a.empty() && a == b, tag + " " + file + " identical (" + std::to_string(a.size()) + " bytes)");
  };
  gl::Config dlg = AttackConfig(4, "");
  dlg.Set("attack.batch_size", "2");
  dlg.Set("attack.targets", "2");
  dlg.Set("attack.iterations", "60");
  dlg.Set("defense.kind", "concealing");
  dlg.Set("defense.T", "30");
  twice(dlg, "dlg-concealing", "report.csv");
  gl::Config gs = AttackConfig(5, "");
  gs.Set("attack.kind", "gs");
  gs.Set("attack.targets", "2");
  gs.Set("attack.iterations", "60");
  gs.Set("defense.kind", "gaussian");
  gs.Set("defense.scale", "0.001");
  twice(gs, "gs-gaussian", "report.csv");
  gl::Config imp = AttackConfig(6, "");
  imp.Set("attack.kind", "imprint");
  imp.Set("attack.batch_size", "4");
  imp.Set("attack.targets", "2");
  imp.Set("defense.kind", "prune");
  twice(imp, "imprint-prune", "report.csv");
  return c.Done();
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "numerics", Numerics},
      {2, "closed-form oracle", ClosedForm},
      {3, "imprint exactness", ImprintExact},
      {4, "attack strength", AttackStrength},
      {5, "imprint vs concealing", ImprintVsConcealing},
      {6, "projection invariant", Projection},
      {7, "utility", Utility},
      {8, "metric correctness", Metrics},
      {9, "dp noise statistics", DpStats},
      {10, "determinism", Determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& cr : all) {
    if (!wanted.empty() && !wanted.count(cr.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("criterion %2d %-22s %s  [%.1fs] %s\n", cr.id, cr.name, o.pass ? "PASS" : "FAIL",
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
