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


#ifndef GRADLEAK_DATA_HPP_
#define GRADLEAK_DATA_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gradleak/nn.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

struct Dataset {
  std::string name;
  ImageShape shape;
  std::size_t classes = 0;
  Tensor images;  // [N, H*W*C], HWC order, values in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Tensor Image(std::size_t i) const;
  // Rows in the given order, as an [n, D] batch.
  Tensor Batch(std::span<const std::size_t> indices) const;
  std::vector<int> Labels(std::span<const std::size_t> indices) const;
  Dataset Subset(std::span<const std::size_t> indices) const;
};

// IDX pair (0x00000803 images, 0x00000801 labels). Bytes scale by 1/255.
Dataset LoadIdx(const std::string& images_path, const std::string& labels_path);

// train-* or t10k-* files under `dir`.
Dataset LoadMnist(const std::string& dir, bool train);

// GRADLEAK_DATA when set, otherwise `fallback`.
std::string DefaultDataDir(const std::string& fallback);

// Fixed per-class bar/blob template plus U[0, 0.1] noise.
Dataset SynthDataset(std::size_t classes, std::size_t per_class, std::size_t height,
                     std::size_t width, std::uint64_t seed);

// 8-bit binary PGM; multi-channel images are averaged to gray.
void WritePgm(const std::string& path, const Tensor& image, const ImageShape& shape);

}  // namespace gradleak

#endif  // GRADLEAK_DATA_HPP_
