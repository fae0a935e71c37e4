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

#include "gradleak/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "gradleak/error.hpp"

namespace gradleak {

Arch ParseArch(std::string_view tag) {
  if (tag == "mlp-small") return Arch::kMlpSmall;
  if (tag == "lenet-sigmoid") return Arch::kLenetSigmoid;
  if (tag == "convnet-relu") return Arch::kConvnetRelu;
  Fail(ErrorCode::kConfig, "unknown model architecture '" + std::string(tag) + "'");
}

std::string_view ArchName(Arch arch) {
  switch (arch) {
    case Arch::kMlpSmall: return "mlp-small";
    case Arch::kLenetSigmoid: return "lenet-sigmoid";
    case Arch::kConvnetRelu: return "convnet-relu";
  }
  return "unknown";
}

LayerSpec LayerSpec::Dense(std::string name, std::size_t in, std::size_t out) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.name = std::move(name);
  l.in_features = in;
  l.out_features = out;
  return l;
}

LayerSpec LayerSpec::Conv(std::string name, std::size_t in_channels, std::size_t out_channels,
                          ops::Conv2dGeometry geometry) {
  LayerSpec l;
  l.kind = LayerKind::kConv2d;
  l.name = std::move(name);
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  l.conv = geometry;
  return l;
}

LayerSpec LayerSpec::Act(Activation activation) {
  LayerSpec l;
  l.kind = LayerKind::kActivation;
  l.activation = activation;
  return l;
}

LayerSpec LayerSpec::AvgPool(std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::kAvgPool;
  l.pool_kernel = kernel;
  l.pool_stride = stride;
  return l;
}

LayerSpec LayerSpec::MaxPool(std::size_t kernel, std::size_t stride) {
  LayerSpec l = AvgPool(kernel, stride);
  l.kind = LayerKind::kMaxPool;
  return l;
}

LayerSpec LayerSpec::Flatten() {
  LayerSpec l;
  l.kind = LayerKind::kFlatten;
  return l;
}

namespace {

std::vector<LayerSpec> ArchLayers(Arch arch, const ImageShape& in, std::size_t classes) {
  using L = LayerSpec;
  switch (arch) {
    case Arch::kMlpSmall:
      if (in != ImageShape{28, 28, 1}) break;
      return {L::Dense("fc0", in.size(), 128), L::Act(Activation::kSigmoid),
              L::Dense("fc1", 128, classes)};
    case Arch::kLenetSigmoid:
      if (in != ImageShape{28, 28, 1}) break;
      return {L::Conv("conv0", 1, 12, {5, 2, 2}),  L::Act(Activation::kSigmoid),
              L::Conv("conv1", 12, 12, {5, 2, 2}), L::Act(Activation::kSigmoid),
              L::Conv("conv2", 12, 12, {5, 1, 2}), L::Act(Activation::kSigmoid),
              L::Conv("conv3", 12, 12, {5, 1, 2}), L::Act(Activation::kSigmoid),
              L::Flatten(),                        L::Dense("fc4", 12 * 7 * 7, classes)};
    case Arch::kConvnetRelu:
      if (in != ImageShape{32, 32, 3}) break;
      return {L::Conv("conv0", 3, 16, {5, 1, 2}),  L::Act(Activation::kRelu),
              L::Conv("conv1", 16, 32, {5, 1, 2}), L::Act(Activation::kRelu),
              L::AvgPool(2, 2),
              L::Conv("conv2", 32, 32, {5, 1, 2}), L::Act(Activation::kRelu),
              L::AvgPool(2, 2),
              L::Flatten(),                        L::Dense("fc3", 32 * 8 * 8, classes)};
  }
  Fail(ErrorCode::kConfig, std::string(ArchName(arch)) + " does not accept input " +
                               std::to_string(in.height) + "x" + std::to_string(in.width) + "x" +
                               std::to_string(in.channels));
}

Var DenseForward(Var x, Var weight, Var bias) {
  return ops::AddBias(ops::MatMul(ops::Flatten(x), weight, false, true), bias);
}

}  // namespace

Model::Model(ImageShape input, std::size_t classes, std::vector<LayerSpec> layers)
    : input_(input), classes_(classes), layers_(std::move(layers)) {}

Model Model::Build(Arch arch, ImageShape input, std::size_t classes, std::uint64_t seed) {
  return FromLayers(input, classes, ArchLayers(arch, input, classes), seed);
}

Model Model::FromLayers(ImageShape input, std::size_t classes, std::vector<LayerSpec> layers,
                        std::uint64_t seed) {
  Model model(input, classes, std::move(layers));
  model.Validate();
  std::mt19937_64 rng(seed);
  std::vector<GradientUpdate::Entry> entries;
  for (const LayerSpec& l : model.layers_) {
    if (l.kind == LayerKind::kImprint) {
      entries.push_back({l.name + ".weight", l.imprint->frozen_weight});
      entries.push_back({l.name + ".bias", l.imprint->frozen_bias});
      continue;
    }
    std::size_t fan_in = 0;
    Shape w_shape, b_shape;
    if (l.kind == LayerKind::kDense) {
      fan_in = l.in_features;
      w_shape = {l.out_features, l.in_features};
      b_shape = {l.out_features};
    } else if (l.kind == LayerKind::kConv2d) {
      fan_in = l.in_channels * l.conv.kernel * l.conv.kernel;
      w_shape = {l.out_channels, l.conv.kernel, l.conv.kernel, l.in_channels};
      b_shape = {l.out_channels};
    } else {
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w(w_shape), b(b_shape);
    for (double& v : w.data()) v = dist(rng);
    for (double& v : b.data()) v = dist(rng);
    entries.push_back({l.name + ".weight", std::move(w)});
    entries.push_back({l.name + ".bias", std::move(b)});
  }
  model.params_ = ModelParams(std::move(entries));
  return model;
}

void Model::Validate() {
  if (classes_ < 2) Fail(ErrorCode::kConfig, "model needs at least two classes");
  std::size_t last_dense = layers_.size();
  std::size_t param_layers = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerKind k = layers_[i].kind;
    if (k == LayerKind::kDense) last_dense = i;
    if (k == LayerKind::kDense || k == LayerKind::kConv2d || k == LayerKind::kImprint) {
      ++param_layers;
    }
    if (k == LayerKind::kImprint && i != 0) {
      Fail(ErrorCode::kConfig, "imprint layer must be the first layer");
    }
  }
  if (last_dense == layers_.size() || param_layers == 0) {
    Fail(ErrorCode::kConfig, "model has no dense classification layer");
  }
  for (std::size_t i = last_dense + 1; i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerKind::kActivation) {
      Fail(ErrorCode::kConfig, "final dense layer must be the classification layer");
    }
  }
  if (layers_[last_dense].out_features != classes_) {
    Fail(ErrorCode::kConfig, "classification layer width does not match class count");
  }
  // Shape inference; a flat width of 0 means the activation is still spatial.
  std::size_t h = input_.height, w = input_.width, c = input_.channels, flat = 0;
  for (const LayerSpec& l : layers_) {
    const std::size_t width = flat != 0 ? flat : h * w * c;
    switch (l.kind) {
      case LayerKind::kImprint:
        if (!l.imprint || l.imprint->frozen_weight.empty() ||
            l.imprint->frozen_weight.dim(1) != width) {
          Fail(ErrorCode::kConfig, "imprint layer does not match the input width");
        }
        break;
      case LayerKind::kDense:
        if (l.in_features != width || l.out_features == 0) {
          Fail(ErrorCode::kConfig, "dense layer " + l.name + " expects " +
                                       std::to_string(l.in_features) + " inputs, gets " +
                                       std::to_string(width));
        }
        flat = l.out_features;
        break;
      case LayerKind::kConv2d: {
        const auto& g = l.conv;
        if (flat != 0 || l.in_channels != c || l.out_channels == 0 || g.kernel == 0 ||
            g.stride == 0 || h + 2 * g.padding < g.kernel || w + 2 * g.padding < g.kernel) {
          Fail(ErrorCode::kConfig, "conv layer " + l.name + " does not fit its input");
        }
        h = (h + 2 * g.padding - g.kernel) / g.stride + 1;
        w = (w + 2 * g.padding - g.kernel) / g.stride + 1;
        c = l.out_channels;
        break;
      }
      case LayerKind::kAvgPool:
      case LayerKind::kMaxPool:
        if (flat != 0 || l.pool_kernel == 0 || l.pool_stride == 0 || h < l.pool_kernel ||
            w < l.pool_kernel) {
          Fail(ErrorCode::kConfig, "pooling layer does not fit its input");
        }
        h = (h - l.pool_kernel) / l.pool_stride + 1;
        w = (w - l.pool_kernel) / l.pool_stride + 1;
        break;
      case LayerKind::kFlatten:
        flat = width;
        break;
      case LayerKind::kActivation:
        break;
    }
  }
  latent_tap_ = last_dense;
}

void Model::set_params(ModelParams params) {
  RequireSameLayout(params_, params, "set_params");
  params_ = std::move(params);
}

const ImprintModule* Model::imprint() const {
  if (!layers_.empty() && layers_[0].kind == LayerKind::kImprint) return layers_[0].imprint.get();
  return nullptr;
}

std::vector<Var> Model::ParamLeaves(Graph& graph) const {
  std::vector<Var> leaves;
  leaves.reserve(params_.size());
  for (const auto& e : params_.entries()) leaves.push_back(graph.Leaf(e.value));
  return leaves;
}

Model::Outputs Model::Forward(Graph& graph, std::span<const Var> params, Var x) const {
  if (params.size() != params_.size()) {
    Fail(ErrorCode::kContract, "forward: expected " + std::to_string(params_.size()) +
                                   " parameter nodes, got " + std::to_string(params.size()));
  }
  if (x.shape().size() != 2 || x.shape()[1] != input_.size()) {
    Fail(ErrorCode::kShape, "forward: expected [N, " + std::to_string(input_.size()) +
                                "] input, got " + ShapeString(x.shape()));
  }
  const std::size_t n = x.shape()[0];
  std::size_t p = 0;
  Var h = x;
  Var bins;
  Outputs out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (i == latent_tap_) {
      Var latent = ops::Flatten(h);
      if (bins.valid()) {
        const Var parts[] = {latent, bins};
        latent = ops::Concat(parts, 1);
      }
      out.latent = latent;
    }
    switch (l.kind) {
      case LayerKind::kDense:
        h = DenseForward(h, params[p], params[p + 1]);
        p += 2;
        break;
      case LayerKind::kConv2d:
        if (h.shape().size() == 2) {
          h = ops::Reshape(h, {n, input_.height, input_.width, input_.channels});
        }
        h = ops::Conv2d(h, params[p], params[p + 1], l.conv);
        p += 2;
        break;
      case LayerKind::kActivation:
        h = l.activation == Activation::kSigmoid ? ops::Sigmoid(h) : ops::Relu(h);
        break;
      case LayerKind::kAvgPool:
        h = ops::AvgPool2d(h, l.pool_kernel, l.pool_stride);
        break;
      case LayerKind::kMaxPool:
        h = ops::MaxPool2d(h, l.pool_kernel, l.pool_stride);
        break;
      case LayerKind::kFlatten:
        h = ops::Flatten(h);
        break;
      case LayerKind::kImprint: {
        const ImprintModule& m = *l.imprint;
        bins = ops::Relu(DenseForward(h, params[p], params[p + 1]));
        p += 2;
        const Var frozen = ops::Relu(DenseForward(h, graph.Constant(m.frozen_weight),
                                                  graph.Constant(m.frozen_bias)));
        // Identically zero in value, but d/d(bin_l) = coupling . dL/dx'.
        const Var zero = ops::ReduceCols(ops::Sub(bins, frozen));
        const Var coupling = graph.Constant(m.measurement.Reshaped({1, m.measurement.size()}));
        h = ops::Add(h, ops::MatMul(ops::Reshape(zero, {n, 1}), coupling));
        break;
      }
    }
  }
  out.logits = h;
  return out;
}

Tensor AsBatch(const Model& model, const Tensor& inputs) {
  if (inputs.rank() == 2 && inputs.dim(1) == model.input_size()) return inputs;
  if (inputs.size() == model.input_size()) return inputs.Reshaped({1, model.input_size()});
  if (inputs.size() % model.input_size() == 0) {
    return inputs.Reshaped({inputs.size() / model.input_size(), model.input_size()});
  }
  Fail(ErrorCode::kShape, "input " + ShapeString(inputs.shape()) +
                              " is not a batch of images of size " +
                              std::to_string(model.input_size()));
}

LossAndGradients ComputeLossAndGradients(const Model& model, const Tensor& inputs,
                                         std::span<const int> labels) {
  Graph graph;
  const std::vector<Var> params = model.ParamLeaves(graph);
  const Var x = graph.Constant(AsBatch(model, inputs));
  const Var loss = ops::SoftmaxCrossEntropy(model.Forward(graph, params, x).logits, labels);
  const std::vector<Var> grads = graph.Backward(loss, params);
  LossAndGradients out;
  out.loss = loss.value().item();
  std::vector<GradientUpdate::Entry> entries;
  entries.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    entries.push_back({model.params().entries()[i].name, grads[i].value()});
  }
  out.gradients = GradientUpdate(std::move(entries));
  return out;
}

Tensor Logits(const Model& model, const Tensor& inputs) {
  Graph graph;
  std::vector<Var> params;
  for (const auto& e : model.params().entries()) params.push_back(graph.Constant(e.value));
  return model.Forward(graph, params, graph.Constant(AsBatch(model, inputs))).logits.value();
}

Tensor LatentFeatures(const Model& model, const Tensor& inputs) {
  Graph graph;
  std::vector<Var> params;
  for (const auto& e : model.params().entries()) params.push_back(graph.Constant(e.value));
  return model.Forward(graph, params, graph.Constant(AsBatch(model, inputs))).latent.value();
}

Measurement ParseMeasurement(std::string_view tag) {
  if (tag == "brightness") return Measurement::kBrightness;
  if (tag == "random-unit") return Measurement::kRandomUnit;
  Fail(ErrorCode::kConfig, "unknown imprint measurement '" + std::string(tag) + "'");
}

Model InsertImprint(const Model& model, std::size_t bins, Measurement measurement,
                    const Tensor& calibration, std::uint64_t seed) {
  if (model.imprint() != nullptr) Fail(ErrorCode::kConfig, "model already carries an imprint layer");
  if (bins < 2) Fail(ErrorCode::kConfig, "imprint needs at least 2 bins");
  const Tensor calib = AsBatch(model, calibration);
  const std::size_t n = calib.dim(0);
  const std::size_t d = model.input_size();
  if (bins > n) {
    Fail(ErrorCode::kConfig, "imprint: " + std::to_string(bins) + " bins but only " +
                                 std::to_string(n) + " calibration inputs");
  }

  auto module = std::make_shared<ImprintModule>();
  module->measurement = Tensor({d});
  if (measurement == Measurement::kBrightness) {
    for (double& v : module->measurement.data()) v = 1.0 / std::sqrt(static_cast<double>(d));
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double norm = 0.0;
    for (double& v : module->measurement.data()) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : module->measurement.data()) v /= norm;
  }

  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += module->measurement[j] * calib[i * d + j];
    s[i] = acc;
  }
  std::sort(s.begin(), s.end());
  // c_1 sits just below the smallest measurement; c_l (l >= 2) is the
  // midpoint straddling the (l-1)/K quantile, so every bin receives the same
  // number of calibration inputs and none sits exactly on a threshold.
  const double margin = std::max(1e-6, 0.5 * (s.back() - s.front()) / static_cast<double>(n));
  module->thresholds.push_back(s.front() - margin);
  for (std::size_t l = 1; l < bins; ++l) {
    const std::size_t idx = l * n / bins;
    module->thresholds.push_back(0.5 * (s[idx - 1] + s[idx]));
  }
  for (std::size_t l = 1; l < bins; ++l) {
    if (!(module->thresholds[l] > module->thresholds[l - 1])) {
      Fail(ErrorCode::kConfig,
           "imprint: calibration measurements are too concentrated for " +
               std::to_string(bins) + " distinct bins");
    }
  }
  module->frozen_weight = Tensor({bins, d});
  module->frozen_bias = Tensor({bins});
  for (std::size_t l = 0; l < bins; ++l) {
    for (std::size_t j = 0; j < d; ++j) module->frozen_weight[l * d + j] = module->measurement[j];
    module->frozen_bias[l] = -module->thresholds[l];
  }

  LayerSpec layer;
  layer.kind = LayerKind::kImprint;
  layer.name = "imprint";
  layer.in_features = d;
  layer.out_features = bins;
  layer.imprint = module;

  std::vector<LayerSpec> layers;
  layers.push_back(layer);
  layers.insert(layers.end(), model.layers().begin(), model.layers().end());
  Model out = Model::FromLayers(model.input_shape(), model.classes(), std::move(layers), seed);

  std::vector<GradientUpdate::Entry> entries(out.params().entries().begin(),
                                             out.params().entries().begin() + 2);
  for (const auto& e : model.params().entries()) entries.push_back(e);
  out.set_params(ModelParams(std::move(entries)));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'G', 'L', 'K', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "parameter files are written in host order; big-endian hosts need swapping");

void WriteU32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t ReadU32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    Fail(ErrorCode::kFormat, path + ": truncated parameter file");
  }
  return v;
}

}  // namespace

void SaveParams(const std::string& path, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) Fail(ErrorCode::kIo, "cannot open " + path + " for writing");
  os.write(kMagic, 4);
  WriteU32(os, kVersion);
  WriteU32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    WriteU32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    WriteU32(os, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) WriteU32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(e.value.data().data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!os) Fail(ErrorCode::kIo, "failed writing " + path);
}

ModelParams LoadParams(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) Fail(ErrorCode::kIo, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    Fail(ErrorCode::kFormat, path + ": not a GLKM parameter file");
  }
  const std::uint32_t version = ReadU32(is, path);
  if (version != kVersion) {
    Fail(ErrorCode::kFormat, path + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = ReadU32(is, path);
  std::vector<GradientUpdate::Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = ReadU32(is, path);
    if (len > 4096) Fail(ErrorCode::kFormat, path + ": implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) Fail(ErrorCode::kFormat, path + ": truncated parameter file");
    const std::uint32_t rank = ReadU32(is, path);
    if (rank == 0 || rank > 8) Fail(ErrorCode::kFormat, path + ": implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = ReadU32(is, path);
    const std::size_t n = NumElements(shape);
    if (n == 0 || n > (std::size_t{1} << 28)) Fail(ErrorCode::kFormat, path + ": bad extents");
    std::vector<double> values(n);
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(n * sizeof(double)))) {
      Fail(ErrorCode::kFormat, path + ": truncated parameter file");
    }
    entries.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return ModelParams(std::move(entries));
}

}  // namespace gradleak
