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

#include "gradleak/gradient_update.hpp"

#include <cmath>

#include "gradleak/error.hpp"

namespace gradleak {

const Tensor* GradientUpdate::Find(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return &e.value;
  }
  return nullptr;
}

Tensor* GradientUpdate::Find(std::string_view name) {
  for (Entry& e : entries_) {
    if (e.name == name) return &e.value;
  }
  return nullptr;
}

std::size_t GradientUpdate::NumCoordinates() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> GradientUpdate::Flatten() const {
  std::vector<double> flat;
  flat.reserve(NumCoordinates());
  for (const Entry& e : entries_) flat.insert(flat.end(), e.value.vec().begin(), e.value.vec().end());
  return flat;
}

GradientUpdate GradientUpdate::Unflatten(const GradientUpdate& layout,
                                         std::span<const double> flat) {
  if (flat.size() != layout.NumCoordinates()) {
    Fail(ErrorCode::kShape, "unflatten: " + std::to_string(flat.size()) +
                                " values for a layout of " +
                                std::to_string(layout.NumCoordinates()));
  }
  std::vector<Entry> entries;
  entries.reserve(layout.size());
  std::size_t offset = 0;
  for (const Entry& e : layout.entries_) {
    const std::size_t n = e.value.size();
    entries.push_back({e.name, Tensor(e.value.shape(), std::vector<double>(
                                                           flat.begin() + offset,
                                                           flat.begin() + offset + n))});
    offset += n;
  }
  return GradientUpdate(std::move(entries));
}

bool GradientUpdate::SameLayout(const GradientUpdate& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].value.shape() != other.entries_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

GradientUpdate GradientUpdate::ZerosLike() const {
  std::vector<Entry> entries;
  entries.reserve(entries_.size());
  for (const Entry& e : entries_) entries.push_back({e.name, Tensor(e.value.shape())});
  return GradientUpdate(std::move(entries));
}

void RequireSameLayout(const GradientUpdate& a, const GradientUpdate& b, const char* what) {
  if (!a.SameLayout(b)) {
    Fail(ErrorCode::kShape, std::string(what) + ": gradient updates have different layouts");
  }
}

double Dot(const GradientUpdate& a, const GradientUpdate& b) {
  RequireSameLayout(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].data();
    const auto y = b[i].data();
    for (std::size_t j = 0; j < x.size(); ++j) acc += x[j] * y[j];
  }
  return acc;
}

double L2Norm(const GradientUpdate& g) { return std::sqrt(Dot(g, g)); }

void Axpy(double alpha, const GradientUpdate& x, GradientUpdate& y) {
  RequireSameLayout(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto src = x[i].data();
    auto dst = y[i].data();
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += alpha * src[j];
  }
}

GradientUpdate Scaled(const GradientUpdate& g, double factor) {
  GradientUpdate out = g;
  for (auto& e : out.entries()) {
    for (double& v : e.value.data()) v *= factor;
  }
  return out;
}

}  // namespace gradleak
