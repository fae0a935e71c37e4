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


#include "gradleak/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gradleak/error.hpp"

namespace gradleak {
namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Sorted by key.
constexpr KeyDefault kDefaults[] = {
    {"attack.batch_size", "1"},
    {"attack.bins", "64"},
    {"attack.calibration", "1000"},
    {"attack.distance", "default"},
    {"attack.iterations", "300"},
    {"attack.kind", "dlg"},
    {"attack.lr", "0.1"},
    {"attack.measurement", "brightness"},
    {"attack.prior_weight", "0.0001"},
    {"attack.restarts", "2"},
    {"attack.targets", "8"},
    {"data.classes", "10"},
    {"data.dir", ""},
    {"data.height", "28"},
    {"data.per_class", "100"},
    {"data.source", "mnist"},
    {"data.test_per_class", "30"},
    {"data.width", "28"},
    {"defense.T", "1000"},
    {"defense.alpha", "0.1"},
    {"defense.beta", "0.001"},
    {"defense.k", "1"},
    {"defense.kind", "none"},
    {"defense.lambda", "0.3"},
    {"defense.layer", "fc0"},
    {"defense.m", "1"},
    {"defense.p", "0.7"},
    {"defense.projection_reference", "exclude-sensitive"},
    {"defense.scale", "0.01"},
    {"defense.start_point", "same-dataset"},
    {"defense.step_size", "0.05"},
    {"dump.images", "true"},
    {"experiment.kind", "attack-eval"},
    {"experiment.name", "run"},
    {"experiment.out", "out"},
    {"experiment.seed", "0"},
    {"fl.batch_size", "32"},
    {"fl.clients", "10"},
    {"fl.labels_per_client", "2"},
    {"fl.lr", "0.5"},
    {"fl.partition", "iid"},
    {"fl.rounds", "20"},
    {"fl.samples_per_client", "100"},
    {"fl.selected", "5"},
    {"model.arch", "mlp-small"},
    {"model.file", ""},
    {"report.wall_ms", "zero"},
};

const KeyDefault* Find(std::string_view key) {
  const auto it = std::lower_bound(std::begin(kDefaults), std::end(kDefaults), key,
                                   [](const KeyDefault& d, std::string_view k) { return d.key < k; });
  return it != std::end(kDefaults) && it->key == key ? it : nullptr;
}

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

bool Config::IsKnownKey(std::string_view key) { return Find(key) != nullptr; }

Config Config::Parse(std::string_view text) {
  Config cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      Fail(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(Trim(line.substr(0, eq)));
    const std::string value(Trim(line.substr(eq + 1)));
    if (cfg.IsSet(key)) {
      Fail(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    cfg.Set(key, value);
  }
  return cfg;
}

Config Config::Load(const std::string& path) {
  std::ifstream is(path);
  if (!is) Fail(ErrorCode::kIo, "cannot open config " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return Parse(os.str());
}

void Config::Set(const std::string& key, const std::string& value) {
  if (!IsKnownKey(key)) Fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
  values_[key] = value;
}

std::string Config::Get(const std::string& key) const {
  const KeyDefault* d = Find(key);
  if (d == nullptr) Fail(ErrorCode::kConfig, "unknown config key '" + key + "'");
  const auto it = values_.find(key);
  return it != values_.end() ? it->second : d->value;
}

double Config::GetDouble(const std::string& key) const {
  const std::string v = Get(key);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    Fail(ErrorCode::kConfig, key + ": '" + v + "' is not a number");
  }
  return out;
}

std::uint64_t Config::GetUint(const std::string& key) const {
  const std::string v = Get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    Fail(ErrorCode::kConfig, key + ": '" + v + "' is not a nonnegative integer");
  }
  return out;
}

std::string Config::Resolved() const {
  std::string out;
  for (const KeyDefault& d : kDefaults) {
    out += d.key;
    out += " = ";
    out += Get(d.key);
    out += '\n';
  }
  return out;
}

std::string Config::Hash() const {
  // The output directory does not change results, so it stays out of the
  // hash and reports written to different places compare equal.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const KeyDefault& d : kDefaults) {
    if (std::string_view(d.key) == "experiment.out") continue;
    for (unsigned char c : std::string(d.key) + " = " + Get(d.key) + "\n") {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gradleak
