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


#include "gradleak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gradleak/error.hpp"

namespace gradleak {
namespace {

double Clip01(double v) { return std::clamp(v, 0.0, 1.0); }

void RequireSameSize(const Tensor& a, const Tensor& b, const char* what) {
  if (a.size() != b.size() || a.empty()) {
    Fail(ErrorCode::kContract, std::string(what) + ": images " + ShapeString(a.shape()) +
                                   " and " + ShapeString(b.shape()) + " differ");
  }
}

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> GaussianWindow() {
  std::vector<double> w(kWindow * kWindow);
  const double mid = (kWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t y = 0; y < kWindow; ++y)
    for (std::size_t x = 0; x < kWindow; ++x) {
      const double dy = y - mid, dx = x - mid;
      w[y * kWindow + x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
      total += w[y * kWindow + x];
    }
  for (double& v : w) v /= total;
  return w;
}

double SsimFromMoments(double mx, double my, double sxx, double syy, double sxy) {
  return ((2 * mx * my + kC1) * (2 * sxy + kC2)) /
         ((mx * mx + my * my + kC1) * (sxx + syy + kC2));
}

}  // namespace

double MeanSquaredError(const Tensor& a, const Tensor& b) {
  RequireSameSize(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = Clip01(a[i]) - Clip01(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double Psnr(const Tensor& reference, const Tensor& candidate) {
  RequireSameSize(reference, candidate, "psnr");
  const double mse = MeanSquaredError(reference, candidate);
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double Ssim(const Tensor& reference, const Tensor& candidate, const ImageShape& shape) {
  RequireSameSize(reference, candidate, "ssim");
  if (reference.size() != shape.size()) {
    Fail(ErrorCode::kContract, "ssim: image size does not match " + std::to_string(shape.height) +
                                   "x" + std::to_string(shape.width) + "x" +
                                   std::to_string(shape.channels));
  }
  const std::size_t h = shape.height, w = shape.width, c = shape.channels;
  auto px = [&](const Tensor& t, std::size_t y, std::size_t x, std::size_t ch) {
    return Clip01(t[(y * w + x) * c + ch]);
  };
  double channel_total = 0.0;
  if (h < kWindow || w < kWindow) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double n = static_cast<double>(h * w);
      double mx = 0, my = 0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          mx += px(reference, y, x, ch);
          my += px(candidate, y, x, ch);
        }
      mx /= n;
      my /= n;
      double sxx = 0, syy = 0, sxy = 0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double a = px(reference, y, x, ch) - mx, b = px(candidate, y, x, ch) - my;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      channel_total += SsimFromMoments(mx, my, sxx / n, syy / n, sxy / n);
    }
    return channel_total / static_cast<double>(c);
  }
  static const std::vector<double> window = GaussianWindow();
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t y0 = 0; y0 < oh; ++y0)
      for (std::size_t x0 = 0; x0 < ow; ++x0) {
        double mx = 0, my = 0, exx = 0, eyy = 0, exy = 0;
        for (std::size_t dy = 0; dy < kWindow; ++dy)
          for (std::size_t dx = 0; dx < kWindow; ++dx) {
            const double g = window[dy * kWindow + dx];
            const double a = px(reference, y0 + dy, x0 + dx, ch);
            const double b = px(candidate, y0 + dy, x0 + dx, ch);
            mx += g * a;
            my += g * b;
            exx += g * a * a;
            eyy += g * b * b;
            exy += g * a * b;
          }
        acc += SsimFromMoments(mx, my, exx - mx * mx, eyy - my * my, exy - mx * my);
      }
    channel_total += acc / static_cast<double>(oh * ow);
  }
  return channel_total / static_cast<double>(c);
}

std::vector<Tensor> SplitRows(const Tensor& batch) {
  if (batch.rank() != 2) Fail(ErrorCode::kShape, "expected an [N, D] batch, got " + ShapeString(batch.shape()));
  const std::size_t n = batch.dim(0), d = batch.dim(1);
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor r({d});
    std::copy_n(batch.data().begin() + i * d, d, r.data().begin());
    rows.push_back(std::move(r));
  }
  return rows;
}

MatchResult BatchMatch(std::span<const Tensor> reconstructions, std::span<const Tensor> targets,
                       const ImageShape& shape) {
  const std::size_t n = targets.size();
  if (reconstructions.size() != n) {
    Fail(ErrorCode::kContract, "batch_match: " + std::to_string(reconstructions.size()) +
                                   " reconstructions for " + std::to_string(n) + " targets");
  }
  std::vector<double> cost(n * n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t r = 0; r < n; ++r) cost[t * n + r] = MeanSquaredError(targets[t], reconstructions[r]);

  MatchResult out;
  out.assignment.resize(n);
  if (n <= kExhaustiveMatchLimit) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (std::size_t t = 0; t < n && total < best; ++t) total += cost[t * n + perm[t]];
      if (total < best) {
        best = total;
        out.assignment = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    out.greedy = true;
    std::vector<char> used_t(n, 0), used_r(n, 0);
    for (std::size_t step = 0; step < n; ++step) {
      std::size_t bt = 0, br = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < n; ++t) {
        if (used_t[t]) continue;
        for (std::size_t r = 0; r < n; ++r) {
          if (!used_r[r] && cost[t * n + r] < best) {
            best = cost[t * n + r];
            bt = t;
            br = r;
          }
        }
      }
      used_t[bt] = used_r[br] = 1;
      out.assignment[bt] = br;
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    const Tensor& r = reconstructions[out.assignment[t]];
    out.total_mse += cost[t * n + out.assignment[t]];
    out.psnr.push_back(Psnr(targets[t], r));
    out.ssim.push_back(Ssim(targets[t], r, shape));
  }
  return out;
}

}  // namespace gradleak
