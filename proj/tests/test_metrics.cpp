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
#include <numeric>
#include <random>

#include "gradleak/metrics.hpp"
#include "test_util.hpp"

namespace gradleak {
namespace {

constexpr ImageShape kShape{28, 28, 1};

Tensor Image(std::uint64_t seed, ImageShape s = kShape) {
  std::mt19937_64 rng(seed);
  return test::RandomTensor({s.size()}, rng, 0.0, 1.0);
}

// Smooth digit-like stroke with no mid-gray background.
Tensor Stroke() {
  Tensor t({784}, 0.0);
  for (std::size_t r = 0; r < 28; ++r) {
    for (std::size_t c = 0; c < 28; ++c) {
      const double d = std::abs(static_cast<double>(c) - 8.0 - 0.4 * static_cast<double>(r));
      t[r * 28 + c] = d < 3.0 ? 1.0 : 0.0;
    }
  }
  return t;
}

TEST(Psnr, Identities) {
  const Tensor a = Image(1);
  EXPECT_EQ(Psnr(a, a), 100.0);
  EXPECT_NEAR(Psnr(Tensor({784}, 0.0), Tensor({784}, 1.0)), 0.0, 1e-12);
  EXPECT_NEAR(Psnr(Tensor({784}, 0.3), Tensor({784}, 0.4)), 20.0, 1e-9);
}

TEST(Psnr, SymmetricAndClipped) {
  const Tensor a = Image(2), b = Image(3);
  EXPECT_EQ(Psnr(a, b), Psnr(b, a));
  // Values outside [0, 1] are clipped first.
  EXPECT_EQ(Psnr(Tensor({4}, 1.0), Tensor({4}, 3.0)), 100.0);
}

TEST(Psnr, ShapeMismatchIsContractError) {
  test::ExpectCode(ErrorCode::kContract, [] { Psnr(Tensor({4}), Tensor({5})); });
}

TEST(Ssim, IdenticalIsExactlyOne) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor a = Image(s);
    EXPECT_EQ(Ssim(a, a, kShape), 1.0);
  }
  const ImageShape rgb{12, 12, 3};
  const Tensor c = Image(9, rgb);
  EXPECT_EQ(Ssim(c, c, rgb), 1.0);
}

TEST(Ssim, Symmetric) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor a = Image(s), b = Image(s + 10);
    EXPECT_NEAR(Ssim(a, b, kShape), Ssim(b, a, kShape), 1e-12);
  }
}

TEST(Ssim, NegativeScoresLow) {
  const Tensor x = Stroke();
  Tensor neg({784});
  for (std::size_t i = 0; i < 784; ++i) neg[i] = 1.0 - x[i];
  EXPECT_LT(Ssim(x, neg, kShape), 0.5);
}

TEST(Ssim, InRangeAndSmallImageFallback) {
  const ImageShape tiny{4, 4, 1};
  const Tensor a = Image(1, tiny), b = Image(2, tiny);
  const double s = Ssim(a, b, tiny);
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
  EXPECT_EQ(Ssim(a, a, tiny), 1.0);
  // Global statistics by hand.
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    ma += a[i] / 16;
    mb += b[i] / 16;
  }
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    va += (a[i] - ma) * (a[i] - ma) / 16;
    vb += (b[i] - mb) * (b[i] - mb) / 16;
    cov += (a[i] - ma) * (b[i] - mb) / 16;
  }
  const double c1 = 1e-4, c2 = 9e-4;
  const double expect =
      (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  EXPECT_NEAR(s, expect, 1e-12);
}

TEST(BatchMatch, RecoversPlantedShuffle) {
  std::mt19937_64 rng(4);
  for (std::size_t b : {1u, 2u, 4u, 8u}) {
    std::vector<Tensor> targets;
    for (std::size_t i = 0; i < b; ++i) targets.push_back(Image(100 + i));
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tensor> recon(b);
    for (std::size_t i = 0; i < b; ++i) recon[perm[i]] = targets[i];
    const MatchResult m = BatchMatch(recon, targets, kShape);
    EXPECT_FALSE(m.greedy);
    for (std::size_t i = 0; i < b; ++i) {
      EXPECT_EQ(m.assignment[i], perm[i]);
      EXPECT_EQ(m.psnr[i], 100.0);
      EXPECT_EQ(m.ssim[i], 1.0);
    }
  }
}

double GreedyCost(const std::vector<Tensor>& r, const std::vector<Tensor>& t) {
  std::vector<char> used(r.size(), 0);
  double total = 0;
  for (const Tensor& target : t) {
    std::size_t best = 0;
    double cost = 1e300;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (used[j]) continue;
      const double c = MeanSquaredError(target, r[j]);
      if (c < cost) {
        cost = c;
        best = j;
      }
    }
    used[best] = 1;
    total += cost;
  }
  return total;
}

TEST(BatchMatch, ExhaustiveNoWorseThanGreedy) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> t, r;
    // Near-duplicate targets make greedy choices costly.
    const Tensor base = Image(trial);
    for (std::size_t i = 0; i < 5; ++i) {
      Tensor x = base;
      for (double& v : x.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
      t.push_back(x);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      Tensor x = t[(i + 1) % 5];
      for (double& v : x.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
      r.push_back(x);
    }
    const MatchResult m = BatchMatch(r, t, kShape);
    EXPECT_LE(m.total_mse, GreedyCost(r, t) + 1e-12);
  }
}

TEST(BatchMatch, CostInvariantUnderPermutation) {
  std::mt19937_64 rng(2);
  std::vector<Tensor> t, r;
  for (std::size_t i = 0; i < 6; ++i) {
    t.push_back(Image(10 + i));
    r.push_back(Image(20 + i));
  }
  const double cost = BatchMatch(r, t, kShape).total_mse;
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_NEAR(BatchMatch(r, t, kShape).total_mse, cost, 1e-12);
    std::shuffle(t.begin(), t.end(), rng);
    EXPECT_NEAR(BatchMatch(r, t, kShape).total_mse, cost, 1e-12);
  }
}

TEST(BatchMatch, LargeBatchFallsBackToGreedy) {
  std::vector<Tensor> t;
  for (std::size_t i = 0; i < 9; ++i) t.push_back(Image(i));
  const MatchResult m = BatchMatch(t, t, kShape);
  EXPECT_TRUE(m.greedy);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(m.assignment[i], i);
}

}  // namespace
}  // namespace gradleak
