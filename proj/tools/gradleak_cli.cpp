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


// Command-line front end. Talks to the library only through gradleak.h.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gradleak/gradleak.h"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int Report(gl_status st, const char* what) {
  std::fprintf(stderr, "gradleak: %s: %s: %s\n", what, gl_status_name(st), gl_last_error());
  return 2;
}

void PrintValue(const char* label, double v) {
  if (!std::isnan(v)) std::printf("%s %.4f\n", label, v);
}

int Run(const char* kind, const Options& opt) {
  gl_config* cfg = nullptr;
  gl_status st = opt.config.empty() ? gl_config_new(&cfg) : gl_config_load(opt.config.c_str(), &cfg);
  if (st != GL_OK) return Report(st, "loading config");
  auto set = [&](const char* key, const std::string& value) {
    if (st == GL_OK) st = gl_config_set(cfg, key, value.c_str());
  };
  set("experiment.kind", kind);
  if (opt.seed) set("experiment.seed", std::to_string(*opt.seed));
  if (!opt.out.empty()) set("experiment.out", opt.out);
  if (st != GL_OK) {
    gl_config_free(cfg);
    return Report(st, "config");
  }
  gl_run_summary s{};
  st = gl_run(cfg, &s);
  gl_config_free(cfg);
  if (st != GL_OK) return Report(st, kind);

  std::printf("config_hash %s\nitems %zu\nfailures %zu\n", s.config_hash, s.items, s.failures);
  PrintValue("mean_psnr_db", s.mean_psnr_db);
  PrintValue("mean_ssim", s.mean_ssim);
  PrintValue("mean_psnr_sensitive_db", s.mean_psnr_sensitive_db);
  PrintValue("mean_ssim_sensitive", s.mean_ssim_sensitive);
  PrintValue("final_accuracy", s.final_accuracy);
  return s.failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient leakage attacks and defenses in simulated federated learning"};
  app.set_version_flag("--version", std::string(gl_version()));
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    sub->add_option("--config", opt.config, "experiment config file")
        ->check(CLI::ExistingFile)
        ->required(config_required);
    sub->add_option("--seed", opt.seed, "overrides experiment.seed");
    sub->add_option("--out", opt.out, "overrides experiment.out");
  };
  struct Sub {
    const char* name;
    const char* kind;
    const char* help;
    bool config_required;
  };
  const Sub subs[] = {
      {"gradcheck", "gradcheck", "run the numerical gradient checks", false},
      {"attack", "attack-eval", "attack (optionally defended) updates and score them", true},
      {"federate", "federate", "run a federated training simulation", true},
      {"craft", "craft", "craft concealing samples and dump them", true},
  };
  const char* chosen = nullptr;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, s.config_required);
    sub->callback([&chosen, kind = s.kind] { chosen = kind; });
  }
  CLI11_PARSE(app, argc, argv);
  return Run(chosen, opt);
}
