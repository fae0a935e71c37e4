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


#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "gradleak/data.hpp"
#include "gradleak/fedsim.hpp"
#include "test_util.hpp"

namespace gradleak {
namespace {

namespace fs = std::filesystem;

void Put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

std::string WriteBytes(const std::string& name, const std::vector<unsigned char>& b) {
  const std::string path = (fs::temp_directory_path() / name).string();
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  return path;
}

std::vector<unsigned char> Images(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                                  std::vector<unsigned char> pixels) {
  std::vector<unsigned char> b;
  Put32(b, 0x00000803);
  Put32(b, n);
  Put32(b, h);
  Put32(b, w);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<unsigned char> Labels(std::vector<unsigned char> labels) {
  std::vector<unsigned char> b;
  Put32(b, 0x00000801);
  Put32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

TEST(Mnist, SubsetCounts) {
  const Dataset train = LoadMnist(test::DataDir(), true);
  const Dataset test = LoadMnist(test::DataDir(), false);
  EXPECT_EQ(train.size(), 4000u);
  EXPECT_EQ(test.size(), 1000u);
  EXPECT_EQ(train.shape.height, 28u);
  EXPECT_EQ(train.shape.channels, 1u);
  EXPECT_EQ(train.images.shape(), (Shape{4000, 784}));
  std::set<int> labels(train.labels.begin(), train.labels.end());
  EXPECT_EQ(labels.size(), 10u);
  for (std::size_t i = 0; i < train.images.size(); i += 97) {
    ASSERT_GE(train.images[i], 0.0);
    ASSERT_LE(train.images[i], 1.0);
  }
}

TEST(Idx, PixelScaling) {
  const std::string im = WriteBytes("gl_px.idx", Images(1, 1, 2, {255, 0}));
  const std::string lb = WriteBytes("gl_lb.idx", Labels({7}));
  const Dataset d = LoadIdx(im, lb);
  EXPECT_EQ(d.images[0], 1.0);
  EXPECT_EQ(d.images[1], 0.0);
  EXPECT_EQ(d.labels[0], 7);
}

TEST(Idx, Truncated) {
  const std::string lb = WriteBytes("gl_lb2.idx", Labels({1, 2}));
  const std::string im = WriteBytes("gl_tr.idx", Images(2, 2, 2, {1, 2, 3, 4, 5}));
  test::ExpectCode(ErrorCode::kFormat, [&] { LoadIdx(im, lb); });
  const std::string hdr = WriteBytes("gl_hdr.idx", {0, 0, 8, 3, 0});
  test::ExpectCode(ErrorCode::kFormat, [&] { LoadIdx(hdr, lb); });
}

TEST(Idx, BadMagicNamesTheBytes) {
  std::vector<unsigned char> b = Images(1, 1, 1, {9});
  b[2] = 0x09;
  const std::string im = WriteBytes("gl_mg.idx", b);
  const std::string lb = WriteBytes("gl_lb3.idx", Labels({1}));
  try {
    LoadIdx(im, lb);
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("found bytes 0 0 9 3"), std::string::npos) << e.what();
  }
}

TEST(Idx, CountMismatch) {
  const std::string im = WriteBytes("gl_cm.idx", Images(2, 1, 1, {1, 2}));
  const std::string lb = WriteBytes("gl_lb4.idx", Labels({1, 2, 3}));
  test::ExpectCode(ErrorCode::kData, [&] { LoadIdx(im, lb); });
}

TEST(Idx, MissingFile) {
  test::ExpectCode(ErrorCode::kIo, [] { LoadMnist("/nonexistent/gl", true); });
}

TEST(Synth, DeterministicAndBalanced) {
  const Dataset a = SynthDataset(4, 5, 12, 10, 3);
  const Dataset b = SynthDataset(4, 5, 12, 10, 3);
  const Dataset c = SynthDataset(4, 5, 12, 10, 4);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, c.images);
  EXPECT_EQ(a.size(), 20u);
  EXPECT_EQ(a.images.shape(), (Shape{20, 120}));
  for (int k = 0; k < 4; ++k) EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), k), 5);
  for (double v : a.images.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Synth, Errors) {
  test::ExpectCode(ErrorCode::kData, [] { SynthDataset(10, 0, 28, 28, 0); });
  test::ExpectCode(ErrorCode::kConfig, [] { SynthDataset(1, 5, 28, 28, 0); });
  test::ExpectCode(ErrorCode::kConfig, [] { SynthDataset(3, 5, 4, 28, 0); });
}

TEST(Synth, Learnable) {
  const Dataset d = SynthDataset(10, 20, 28, 28, 5);
  Model m = Model::Build(Arch::kMlpSmall, d.shape, 10, 1);
  for (int t = 0; t < 200; ++t) {
    GradientUpdate next = m.params();
    Axpy(-0.5, ComputeLossAndGradients(m, d.images, d.labels).gradients, next);
    m.set_params(next);
  }
  EXPECT_GE(Evaluate(m, d), 0.95);
}

TEST(Dataset, BatchAndSubset) {
  const Dataset d = SynthDataset(3, 2, 8, 8, 0);
  const std::vector<std::size_t> idx = {4, 1};
  const Tensor b = d.Batch(idx);
  EXPECT_EQ(b.shape(), (Shape{2, 64}));
  for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(b[64 + j], d.Image(1)[j]);
  EXPECT_EQ(d.Labels(idx), (std::vector<int>{d.labels[4], d.labels[1]}));
  EXPECT_EQ(d.Subset(idx).size(), 2u);
  test::ExpectCode(ErrorCode::kContract, [&] { d.Image(6); });
  test::ExpectCode(ErrorCode::kContract, [&] { d.Batch(std::vector<std::size_t>{}); });
}

TEST(Pgm, HeaderAndBytes) {
  const std::string path = (fs::temp_directory_path() / "gl_img.pgm").string();
  WritePgm(path, Tensor({3}, {0.0, 1.0, 0.5}), {1, 3, 1});
  std::ifstream is(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(is)), {});
  ASSERT_EQ(bytes.size(), std::string("P5\n3 1\n255\n").size() + 3);
  EXPECT_EQ(bytes.substr(0, 11), "P5\n3 1\n255\n");
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 128);
  test::ExpectCode(ErrorCode::kContract, [&] { WritePgm(path, Tensor({2}, 0.0), {1, 3, 1}); });
  fs::remove(path);
}

}  // namespace
}  // namespace gradleak
