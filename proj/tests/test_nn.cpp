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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gradleak/gradient_update.hpp"
#include "gradleak/nn.hpp"
#include "gradleak/optim.hpp"
#include "test_util.hpp"

namespace gradleak {
namespace {

constexpr ImageShape kMnist{28, 28, 1};

Tensor RandomImages(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return test::RandomTensor({n, d}, rng, 0.0, 1.0);
}

GradientUpdate Grad(const Model& m, const Tensor& x, std::vector<int> y) {
  return ComputeLossAndGradients(m, x, y).gradients;
}

Tensor Row(const Tensor& x, std::size_t i) {
  const std::size_t d = x.dim(1);
  return Tensor({1, d}, std::vector<double>(x.data().begin() + i * d, x.data().begin() + (i + 1) * d));
}

TEST(Build, LenetSigmoidHasFourConvsAndOneDense) {
  const Model m = Model::Build(Arch::kLenetSigmoid, kMnist, 10, 7);
  std::size_t convs = 0, dense = 0, acts = 0;
  for (const LayerSpec& l : m.layers()) {
    convs += l.kind == LayerKind::kConv2d;
    dense += l.kind == LayerKind::kDense;
    if (l.kind == LayerKind::kActivation) {
      ++acts;
      EXPECT_EQ(l.activation, Activation::kSigmoid);
    }
  }
  EXPECT_EQ(convs, 4u);
  EXPECT_EQ(dense, 1u);
  EXPECT_EQ(acts, 4u);
  EXPECT_EQ(Logits(m, RandomImages(2, 784, 1)).shape(), (Shape{2, 10}));
}

TEST(Build, MlpSmallShapes) {
  const Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 0);
  const auto& e = m.params().entries();
  ASSERT_EQ(e.size(), 4u);
  EXPECT_EQ(e[0].value.shape(), (Shape{128, 784}));
  EXPECT_EQ(e[1].value.shape(), (Shape{128}));
  EXPECT_EQ(e[2].value.shape(), (Shape{10, 128}));
  EXPECT_EQ(e[3].value.shape(), (Shape{10}));
  EXPECT_EQ(e[0].name, "fc0.weight");
}

TEST(Build, ConvnetReluRuns) {
  const Model m = Model::Build(Arch::kConvnetRelu, {32, 32, 3}, 10, 1);
  EXPECT_EQ(Logits(m, RandomImages(1, 32 * 32 * 3, 2)).shape(), (Shape{1, 10}));
}

TEST(Build, SameSeedSameParams) {
  EXPECT_EQ(Model::Build(Arch::kMlpSmall, kMnist, 10, 5).params(),
            Model::Build(Arch::kMlpSmall, kMnist, 10, 5).params());
  EXPECT_NE(Model::Build(Arch::kMlpSmall, kMnist, 10, 5).params(),
            Model::Build(Arch::kMlpSmall, kMnist, 10, 6).params());
}

TEST(Build, InitWithinFanInBound) {
  const Model m = Model::Build(Arch::kLenetSigmoid, kMnist, 10, 3);
  for (const auto& e : m.params().entries()) {
    const Shape& s = m.params().Find(e.name.substr(0, e.name.find('.')) + ".weight")->shape();
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double v : e.value.data()) EXPECT_LE(std::abs(v), bound) << e.name;
  }
}

TEST(Build, Errors) {
  test::ExpectCode(ErrorCode::kConfig, [] { ParseArch("resnet18"); });
  test::ExpectCode(ErrorCode::kConfig, [] { Model::Build(Arch::kConvnetRelu, kMnist, 10, 0); });
  test::ExpectCode(ErrorCode::kConfig, [] { Model::Build(Arch::kMlpSmall, kMnist, 1, 0); });
}

TEST(Loss, BatchOfOneIsSingleSample) {
  const Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  const Tensor x = RandomImages(1, 784, 4);
  const GradientUpdate a = Grad(m, x, {3});
  const GradientUpdate b = Grad(m, x.Reshaped({784}), {3});
  EXPECT_EQ(a, b);
}

TEST(Loss, BatchGradientIsMeanOfSamples) {
  for (Arch arch : {Arch::kMlpSmall, Arch::kLenetSigmoid}) {
    const Model m = Model::Build(arch, kMnist, 10, 2);
    const Tensor x = RandomImages(4, 784, 5);
    const std::vector<int> y = {0, 7, 3, 7};
    GradientUpdate mean = Grad(m, x, y).ZerosLike();
    for (std::size_t i = 0; i < 4; ++i) Axpy(0.25, Grad(m, Row(x, i), {y[i]}), mean);
    const GradientUpdate batch = Grad(m, x, y);
    const std::vector<double> a = batch.Flatten(), b = mean.Flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    EXPECT_LE(worst, 1e-9) << ArchName(arch);
  }
}

TEST(Loss, DuplicatedSampleIsSingleSample) {
  const Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  const Tensor x = RandomImages(1, 784, 6);
  Tensor xx({2, 784});
  std::copy_n(x.data().begin(), 784, xx.data().begin());
  std::copy_n(x.data().begin(), 784, xx.data().begin() + 784);
  const std::vector<double> a = Grad(m, xx, {2, 2}).Flatten(), b = Grad(m, x, {2}).Flatten();
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-15);
}

TEST(Loss, LabelOutOfRangeIsDataError) {
  const Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  test::ExpectCode(ErrorCode::kData, [&] { Grad(m, RandomImages(1, 784, 1), {10}); });
  test::ExpectCode(ErrorCode::kData, [&] { Grad(m, RandomImages(1, 784, 1), {-1}); });
}

TEST(Loss, BiasGradientIsSummedPreActivationGradient) {
  // One dense layer: the pre-activation is the logits, whose mean-CE
  // gradient is (softmax - onehot) / N.
  const Model m = Model::FromLayers({4, 4, 1}, 3, {LayerSpec::Dense("fc0", 16, 3)}, 9);
  const Tensor x = RandomImages(5, 16, 2);
  const std::vector<int> y = {0, 1, 2, 1, 0};
  const Tensor logits = Logits(m, x);
  std::vector<double> expect(3, 0.0);
  for (std::size_t n = 0; n < 5; ++n) {
    double mx = -1e300, z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) mx = std::max(mx, logits[n * 3 + c]);
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits[n * 3 + c] - mx);
    for (std::size_t c = 0; c < 3; ++c) {
      const double p = std::exp(logits[n * 3 + c] - mx) / z;
      expect[c] += (p - (static_cast<int>(c) == y[n] ? 1.0 : 0.0)) / 5.0;
    }
  }
  const GradientUpdate grad = Grad(m, x, y);
  const Tensor& db = *grad.Find("fc0.bias");
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(db[c], expect[c], 1e-12);
}

TEST(Latent, MlpSmallIsHidden128) {
  const Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 0);
  const Tensor x = RandomImages(3, 784, 1);
  const Tensor h = LatentFeatures(m, x);
  EXPECT_EQ(h.shape(), (Shape{3, 128}));
  EXPECT_EQ(h, LatentFeatures(m, x));
  for (double v : h.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Latent, GradientMatchesFiniteDifference) {
  for (Arch arch : {Arch::kMlpSmall, Arch::kLenetSigmoid}) {
    const Model m = Model::Build(arch, kMnist, 10, 3);
    const Tensor x0 = RandomImages(1, 784, 8);
    auto energy = [&](Graph& g, Var x) {
      const std::vector<Var> p = m.ParamLeaves(g);
      return ops::SquaredNorm(m.Forward(g, p, x).latent);
    };
    Graph g;
    const Var x = g.Leaf(x0);
    const Tensor analytic = g.Backward(energy(g, x), std::span(&x, 1))[0].value();
    // The energy is O(100), so a wider step keeps rounding noise well under
    // the truncation error.
    const Tensor fd = FiniteDifferenceGradient(
        [&](const Tensor& v) {
          Graph h;
          return energy(h, h.Leaf(v)).value().item();
        },
        x0, 1e-4);
    EXPECT_LE(RelativeError(analytic, fd), 1e-5) << ArchName(arch);
  }
}

// Number of thresholds at or below the measurement of x.
std::size_t BinOf(const ImprintModule& im, const Tensor& x) {
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) v += im.measurement[i] * x[i];
  std::size_t bin = 0;
  for (double c : im.thresholds) bin += v > c;
  return bin;
}

TEST(Imprint, LayerFollowsConstruction) {
  const Model host = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  const Model m = InsertImprint(host, 8, Measurement::kRandomUnit, RandomImages(64, 784, 3), 5);
  const ImprintModule* im = m.imprint();
  ASSERT_NE(im, nullptr);
  double norm = 0.0;
  for (double v : im->measurement.data()) norm += v * v;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  ASSERT_EQ(im->bins(), 8u);
  EXPECT_TRUE(std::is_sorted(im->thresholds.begin(), im->thresholds.end()));
  EXPECT_EQ(std::adjacent_find(im->thresholds.begin(), im->thresholds.end()), im->thresholds.end());
  for (std::size_t l = 0; l < 8; ++l) {
    for (std::size_t i = 0; i < 784; ++i) {
      ASSERT_EQ(im->frozen_weight[l * 784 + i], im->measurement[i]);
    }
    EXPECT_EQ(im->frozen_bias[l], -im->thresholds[l]);
  }
  EXPECT_EQ(m.params()[0], im->frozen_weight);
  EXPECT_EQ(m.params()[1], im->frozen_bias);
}

TEST(Imprint, BrightnessSeparatesBlackAndWhite) {
  const Model host = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  const Model m = InsertImprint(host, 4, Measurement::kBrightness, RandomImages(16, 784, 9), 0);
  EXPECT_NE(BinOf(*m.imprint(), Tensor({784}, 0.0)), BinOf(*m.imprint(), Tensor({784}, 1.0)));
}

TEST(Imprint, FourDistinctImagesGetOneBinEach) {
  const Model host = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  Tensor calib({4, 784});
  const double levels[] = {0.7, 0.1, 0.45, 0.9};
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t i = 0; i < 784; ++i) calib[n * 784 + i] = levels[n];
  }
  const Model m = InsertImprint(host, 4, Measurement::kBrightness, calib, 0);
  std::vector<std::size_t> bins;
  for (std::size_t n = 0; n < 4; ++n) bins.push_back(BinOf(*m.imprint(), Row(calib, n)));
  std::vector<std::size_t> sorted = bins;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{1, 2, 3, 4}));
  // Brighter images land in higher bins.
  EXPECT_LT(bins[1], bins[2]);
  EXPECT_LT(bins[2], bins[0]);
  EXPECT_LT(bins[0], bins[3]);
}

TEST(Imprint, PassThroughPreservesLogits) {
  for (Arch arch : {Arch::kMlpSmall, Arch::kLenetSigmoid}) {
    const Model host = Model::Build(arch, kMnist, 10, 4);
    const Model m = InsertImprint(host, 6, Measurement::kRandomUnit, RandomImages(32, 784, 2), 3);
    const Tensor x = RandomImages(16, 784, 12);
    EXPECT_LE(MaxAbsDiff(Logits(host, x), Logits(m, x)), 1e-9) << ArchName(arch);
  }
}

TEST(Imprint, Errors) {
  const Model host = Model::Build(Arch::kMlpSmall, kMnist, 10, 1);
  test::ExpectCode(ErrorCode::kConfig, [&] {
    InsertImprint(host, 8, Measurement::kBrightness, RandomImages(4, 784, 1), 0);
  });
  test::ExpectCode(ErrorCode::kConfig, [&] {
    InsertImprint(host, 1, Measurement::kBrightness, RandomImages(4, 784, 1), 0);
  });
  test::ExpectCode(ErrorCode::kConfig, [&] {
    InsertImprint(InsertImprint(host, 2, Measurement::kBrightness, RandomImages(4, 784, 1), 0), 2,
                  Measurement::kBrightness, RandomImages(4, 784, 1), 0);
  });
  test::ExpectCode(ErrorCode::kConfig, [] { ParseMeasurement("median"); });
}

TEST(Params, SaveLoadRoundTrip) {
  const Model m = Model::Build(Arch::kLenetSigmoid, kMnist, 10, 2);
  const std::string path = (std::filesystem::temp_directory_path() / "gl_params_rt.glkm").string();
  SaveParams(path, m.params());
  EXPECT_EQ(LoadParams(path), m.params());
  Model other = Model::Build(Arch::kLenetSigmoid, kMnist, 10, 3);
  other.set_params(LoadParams(path));
  EXPECT_EQ(other.params(), m.params());
  std::filesystem::remove(path);
}

TEST(Params, LoadErrors) {
  const auto dir = std::filesystem::temp_directory_path();
  test::ExpectCode(ErrorCode::kIo, [&] { LoadParams((dir / "gl_missing.glkm").string()); });
  const std::string bad = (dir / "gl_bad.glkm").string();
  std::ofstream(bad, std::ios::binary) << "NOPE0000";
  test::ExpectCode(ErrorCode::kFormat, [&] { LoadParams(bad); });
  // Truncated payload.
  const Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 2);
  SaveParams(bad, m.params());
  std::filesystem::resize_file(bad, std::filesystem::file_size(bad) - 8);
  test::ExpectCode(ErrorCode::kFormat, [&] { LoadParams(bad); });
  std::filesystem::remove(bad);
}

TEST(Params, SetParamsChecksLayout) {
  Model m = Model::Build(Arch::kMlpSmall, kMnist, 10, 0);
  const Model other = Model::Build(Arch::kLenetSigmoid, kMnist, 10, 0);
  test::ExpectCode(ErrorCode::kShape, [&] { m.set_params(other.params()); });
}

}  // namespace
}  // namespace gradleak
