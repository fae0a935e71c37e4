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


#ifndef GRADLEAK_CONFIG_HPP_
#define GRADLEAK_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace gradleak {

// Flat `section.key = value` text with '#' comments. Every key must be one
// of the known keys; unset keys resolve to their defaults.
class Config {
 public:
  static Config Parse(std::string_view text);
  static Config Load(const std::string& path);

  void Set(const std::string& key, const std::string& value);
  bool IsSet(const std::string& key) const { return values_.count(key) != 0; }

  std::string Get(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  std::uint64_t GetUint(const std::string& key) const;

  // Every known key with its effective value, one `key = value` per line,
  // sorted by key.
  std::string Resolved() const;
  // FNV-1a 64 of Resolved() minus the experiment.out line, as 16 hex digits.
  std::string Hash() const;

  static bool IsKnownKey(std::string_view key);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gradleak

#endif  // GRADLEAK_CONFIG_HPP_
