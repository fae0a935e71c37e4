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


#include "gradleak/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "gradleak/error.hpp"

namespace gradleak {

Tensor Dataset::Image(std::size_t i) const {
  const std::size_t d = shape.size();
  if (i >= size()) Fail(ErrorCode::kContract, "image index out of range");
  Tensor out({d});
  std::copy_n(images.data().begin() + i * d, d, out.data().begin());
  return out;
}

Tensor Dataset::Batch(std::span<const std::size_t> indices) const {
  const std::size_t d = shape.size();
  if (indices.empty()) Fail(ErrorCode::kContract, "empty batch");
  Tensor out({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) Fail(ErrorCode::kContract, "image index out of range");
    std::copy_n(images.data().begin() + indices[r] * d, d, out.data().begin() + r * d);
  }
  return out;
}

std::vector<int> Dataset::Labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.shape = shape;
  out.classes = classes;
  out.images = Batch(indices);
  out.labels = Labels(indices);
  return out;
}

namespace {

std::vector<unsigned char> ReadAll(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) Fail(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t BigEndian(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void RequireMagic(const std::vector<unsigned char>& b, std::uint32_t magic, const std::string& path) {
  if (b.size() < 4 || BigEndian(b, 0) != magic) {
    std::ostringstream os;
    os << path << ": bad IDX magic, expected 0x" << std::hex << magic << ", found bytes";
    for (std::size_t i = 0; i < std::min<std::size_t>(4, b.size()); ++i) {
      os << ' ' << static_cast<unsigned>(b[i]);
    }
    Fail(ErrorCode::kFormat, os.str());
  }
}

}  // namespace

Dataset LoadIdx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<unsigned char> img = ReadAll(images_path);
  const std::vector<unsigned char> lab = ReadAll(labels_path);
  RequireMagic(img, 0x00000803, images_path);
  RequireMagic(lab, 0x00000801, labels_path);
  if (img.size() < 16) Fail(ErrorCode::kFormat, images_path + ": truncated IDX header");
  if (lab.size() < 8) Fail(ErrorCode::kFormat, labels_path + ": truncated IDX header");
  const std::size_t n = BigEndian(img, 4), h = BigEndian(img, 8), w = BigEndian(img, 12);
  const std::size_t nl = BigEndian(lab, 4);
  if (n == 0 || h == 0 || w == 0) Fail(ErrorCode::kFormat, images_path + ": zero extent in header");
  if (img.size() != 16 + n * h * w) {
    Fail(ErrorCode::kFormat, images_path + ": expected " + std::to_string(16 + n * h * w) +
                                 " bytes, found " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + nl) {
    Fail(ErrorCode::kFormat, labels_path + ": expected " + std::to_string(8 + nl) +
                                 " bytes, found " + std::to_string(lab.size()));
  }
  if (n != nl) {
    Fail(ErrorCode::kData, "image count " + std::to_string(n) + " does not match label count " +
                               std::to_string(nl));
  }
  Dataset ds;
  ds.name = "idx";
  ds.shape = {h, w, 1};
  ds.images = Tensor({n, h * w});
  for (std::size_t i = 0; i < n * h * w; ++i) ds.images[i] = img[16 + i] / 255.0;
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

Dataset LoadMnist(const std::string& dir, bool train) {
  const std::string prefix = dir + (train ? "/train-" : "/t10k-");
  Dataset ds = LoadIdx(prefix + "images-idx3-ubyte", prefix + "labels-idx1-ubyte");
  ds.name = train ? "mnist-train" : "mnist-test";
  return ds;
}

std::string DefaultDataDir(const std::string& fallback) {
  const char* env = std::getenv("GRADLEAK_DATA");
  return env != nullptr && *env != '\0' ? std::string(env) : fallback;
}

Dataset SynthDataset(std::size_t classes, std::size_t per_class, std::size_t height,
                     std::size_t width, std::uint64_t seed) {
  if (classes < 2) Fail(ErrorCode::kConfig, "synthetic dataset needs at least two classes");
  if (per_class == 0) Fail(ErrorCode::kData, "synthetic dataset would be empty");
  if (height < 8 || width < 8) Fail(ErrorCode::kConfig, "synthetic images must be at least 8x8");
  const std::size_t d = height * width;
  std::vector<Tensor> templates;
  for (std::size_t c = 0; c < classes; ++c) {
    Tensor t({d});
    // One bar (horizontal for even classes) and one square blob per class.
    const std::size_t bar = 1 + (c / 2) * 3 % (std::min(height, width) - 3);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t along = c % 2 == 0 ? y : x;
        if (along >= bar && along < bar + 2) t[y * width + x] = 0.9;
      }
    const std::size_t by = (c * 7 + 2) % (height - 4), bx = (c * 11 + 5) % (width - 4);
    for (std::size_t y = by; y < by + 4; ++y)
      for (std::size_t x = bx; x < bx + 4; ++x) t[y * width + x] = 0.9;
    templates.push_back(std::move(t));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.1);
  Dataset ds;
  ds.name = "synthetic";
  ds.shape = {height, width, 1};
  ds.classes = classes;
  const std::size_t n = classes * per_class;
  ds.images = Tensor({n, d});
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i % classes;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = order[i];
    for (std::size_t j = 0; j < d; ++j) {
      ds.images[i * d + j] = std::min(1.0, templates[c][j] + noise(rng));
    }
    ds.labels.push_back(static_cast<int>(c));
  }
  return ds;
}

void WritePgm(const std::string& path, const Tensor& image, const ImageShape& shape) {
  if (image.size() != shape.size()) Fail(ErrorCode::kContract, "pgm: image size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) Fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  os << "P5\n" << shape.width << ' ' << shape.height << "\n255\n";
  std::vector<char> bytes(shape.height * shape.width);
  for (std::size_t p = 0; p < bytes.size(); ++p) {
    double acc = 0.0;
    for (std::size_t c = 0; c < shape.channels; ++c) acc += image[p * shape.channels + c];
    const double v = std::clamp(acc / static_cast<double>(shape.channels), 0.0, 1.0);
    bytes[p] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) Fail(ErrorCode::kIo, "failed writing " + path);
}

}  // namespace gradleak
