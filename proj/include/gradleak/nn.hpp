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

#ifndef GRADLEAK_NN_HPP_
#define GRADLEAK_NN_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradleak/gradient_update.hpp"
#include "gradleak/graph.hpp"
#include "gradleak/ops.hpp"

namespace gradleak {

enum class Arch { kMlpSmall, kLenetSigmoid, kConvnetRelu };

Arch ParseArch(std::string_view tag);
std::string_view ArchName(Arch arch);

struct ImageShape {
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

enum class LayerKind { kDense, kConv2d, kActivation, kAvgPool, kMaxPool, kFlatten, kImprint };
enum class Activation { kSigmoid, kRelu };

// Malicious binning layer placed in front of a model. Row l computes
// relu(w_m . x - c_l); all rows share the measurement w_m. The frozen copies
// reproduce the same activations without parameters, which lets the layer
// feed its rows forward with value exactly zero while their gradients stay
// live (see Model::Forward).
struct ImprintModule {
  Tensor measurement;              // [D], unit norm
  std::vector<double> thresholds;  // strictly increasing, K >= 2
  Tensor frozen_weight;            // [K, D]
  Tensor frozen_bias;              // [K]

  std::size_t bins() const { return thresholds.size(); }
};

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  std::string name;  // parameter prefix, e.g. "fc1" -> "fc1.weight"
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  ops::Conv2dGeometry conv;
  Activation activation = Activation::kSigmoid;
  std::size_t pool_kernel = 2;
  std::size_t pool_stride = 2;
  std::shared_ptr<const ImprintModule> imprint;

  static LayerSpec Dense(std::string name, std::size_t in, std::size_t out);
  static LayerSpec Conv(std::string name, std::size_t in_channels, std::size_t out_channels,
                        ops::Conv2dGeometry geometry);
  static LayerSpec Act(Activation activation);
  static LayerSpec AvgPool(std::size_t kernel, std::size_t stride);
  static LayerSpec MaxPool(std::size_t kernel, std::size_t stride);
  static LayerSpec Flatten();
};

class Model {
 public:
  // Parameters are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Model Build(Arch arch, ImageShape input, std::size_t classes, std::uint64_t seed);
  static Model FromLayers(ImageShape input, std::size_t classes, std::vector<LayerSpec> layers,
                          std::uint64_t seed);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const ModelParams& params() const { return params_; }
  void set_params(ModelParams params);

  const ImageShape& input_shape() const { return input_; }
  std::size_t input_size() const { return input_.size(); }
  std::size_t classes() const { return classes_; }
  // Index of the final dense layer; h(x) is that layer's input.
  std::size_t latent_tap() const { return latent_tap_; }
  const ImprintModule* imprint() const;

  struct Outputs {
    Var logits;
    Var latent;
  };

  // x is [N, D] with images flattened in HWC order; `params` holds one node
  // per parameter entry, in order.
  Outputs Forward(Graph& graph, std::span<const Var> params, Var x) const;

  std::vector<Var> ParamLeaves(Graph& graph) const;

 private:
  Model(ImageShape input, std::size_t classes, std::vector<LayerSpec> layers);
  void Validate();

  ImageShape input_;
  std::size_t classes_ = 0;
  std::vector<LayerSpec> layers_;
  ModelParams params_;
  std::size_t latent_tap_ = 0;
};

struct LossAndGradients {
  double loss = 0.0;
  GradientUpdate gradients;
};

// Mean cross-entropy over the batch and its parameter gradient.
LossAndGradients ComputeLossAndGradients(const Model& model, const Tensor& inputs,
                                         std::span<const int> labels);

Tensor Logits(const Model& model, const Tensor& inputs);
Tensor LatentFeatures(const Model& model, const Tensor& inputs);
// Inputs as a [N, D] tensor; a single flat image is promoted to [1, D].
Tensor AsBatch(const Model& model, const Tensor& inputs);

enum class Measurement { kBrightness, kRandomUnit };
Measurement ParseMeasurement(std::string_view tag);

// Returns a copy of `model` with a K-bin imprint layer in front. Thresholds
// split the calibration measurements into K equally populated bins; the bin
// above the last threshold is open-ended.
Model InsertImprint(const Model& model, std::size_t bins, Measurement measurement,
                    const Tensor& calibration, std::uint64_t seed);

// Binary parameter file: "GLKM", u32 version, u32 entry count, then per
// entry a u32-length-prefixed name, u32 rank, u32 extents and raw
// little-endian doubles.
void SaveParams(const std::string& path, const ModelParams& params);
ModelParams LoadParams(const std::string& path);

}  // namespace gradleak

#endif  // GRADLEAK_NN_HPP_
