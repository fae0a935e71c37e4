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

#ifndef GRADLEAK_GRADIENT_UPDATE_HPP_
#define GRADLEAK_GRADIENT_UPDATE_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

// Ordered (layer-name, tensor) list. Used both for model parameters and for
// the gradient updates clients share, which always have the same layout.
class GradientUpdate {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  GradientUpdate() = default;
  explicit GradientUpdate(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Tensor& operator[](std::size_t i) const { return entries_[i].value; }
  Tensor& operator[](std::size_t i) { return entries_[i].value; }

  const Tensor* Find(std::string_view name) const;
  Tensor* Find(std::string_view name);

  std::size_t NumCoordinates() const;
  std::vector<double> Flatten() const;
  // Inverse of Flatten using `layout` for names and shapes.
  static GradientUpdate Unflatten(const GradientUpdate& layout, std::span<const double> flat);

  bool SameLayout(const GradientUpdate& other) const;
  GradientUpdate ZerosLike() const;

  friend bool operator==(const GradientUpdate&, const GradientUpdate&) = default;

 private:
  std::vector<Entry> entries_;
};

using ModelParams = GradientUpdate;

// Throws kShape unless both updates share names and shapes.
void RequireSameLayout(const GradientUpdate& a, const GradientUpdate& b, const char* what);

double Dot(const GradientUpdate& a, const GradientUpdate& b);
double L2Norm(const GradientUpdate& g);
// y += alpha * x.
void Axpy(double alpha, const GradientUpdate& x, GradientUpdate& y);
GradientUpdate Scaled(const GradientUpdate& g, double factor);

}  // namespace gradleak

#endif  // GRADLEAK_GRADIENT_UPDATE_HPP_
