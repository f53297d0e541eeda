// Copyright 2026 The vpleak Authors
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
//

#include "vpleak/model_zoo.h"

#include <algorithm>

#include "json.hpp"
#include "vpleak/error.h"
#include "vpleak/io.h"

namespace vpleak {
namespace {

constexpr char kBlobMagic[] = "VPLW";
constexpr uint32_t kBlobVersion = 1;

struct ConvBlock {
  int channels;
  int stride;
};

nn::Network BuildConvNet(const Dims& dims, std::span<const ConvBlock> blocks,
                         int num_classes) {
  nn::Network net;
  Dims current = dims;
  for (const ConvBlock& b : blocks) {
    auto conv = std::make_unique<nn::Conv2d>(current, b.channels, 3, b.stride, 1);
    current = conv->output_dims();
    net.Add(std::move(conv));
    net.Add(std::make_unique<nn::Relu>(current.size()));
  }
  net.Add(std::make_unique<nn::Dense>(current.size(), num_classes));
  return net;
}

std::vector<uint8_t> EncodeBlob(const nn::Network& net) {
  ByteWriter w;
  w.Bytes(std::string_view(kBlobMagic, 4));
  w.U32(kBlobVersion);
  const auto params = net.Params();
  w.U32(static_cast<uint32_t>(params.size()));
  for (const Matrix* p : params) {
    w.U32(static_cast<uint32_t>(p->rows()));
    w.U32(static_cast<uint32_t>(p->cols()));
  }
  for (const Matrix* p : params) {
    for (Eigen::Index r = 0; r < p->rows(); ++r) {
      for (Eigen::Index c = 0; c < p->cols(); ++c) w.F32(static_cast<float>((*p)(r, c)));
    }
  }
  return w.bytes();
}

void DecodeBlobInto(std::span<const uint8_t> bytes, nn::Network& net) {
  ByteReader r(bytes);
  Require(r.Bytes(4) == std::string_view(kBlobMagic, 4), ErrorCode::kRegistry,
          "bad parameter blob magic");
  Require(r.U32() == kBlobVersion, ErrorCode::kRegistry,
          "unsupported parameter blob version");
  auto params = net.MutableParams();
  Require(r.U32() == params.size(), ErrorCode::kRegistry,
          "parameter blob array count does not match architecture");
  for (Matrix* p : params) {
    const uint32_t rows = r.U32();
    const uint32_t cols = r.U32();
    Require(rows == p->rows() && cols == p->cols(), ErrorCode::kRegistry,
            "parameter blob shape does not match architecture");
  }
  for (Matrix* p : params) {
    for (Eigen::Index row = 0; row < p->rows(); ++row) {
      for (Eigen::Index col = 0; col < p->cols(); ++col) (*p)(row, col) = r.F32();
    }
  }
  Require(r.remaining() == 0, ErrorCode::kRegistry, "trailing bytes in blob");
}

}  // namespace

std::vector<std::string> RegisteredArchitectures() {
  return {"cnn-small", "cnn-wide", "cnn-deep"};
}

nn::Network BuildArchitecture(const std::string& arch_name, const Dims& dims,
                              int num_classes) {
  Require(dims.channels > 0 && dims.height >= 8 && dims.width >= 8,
          ErrorCode::kConfig, "architecture input dims too small: " + ToString(dims));
  Require(num_classes > 0, ErrorCode::kConfig, "num_classes must be positive");
  if (arch_name == "cnn-small") {
    const ConvBlock blocks[] = {{8, 2}, {16, 2}};
    return BuildConvNet(dims, blocks, num_classes);
  }
  if (arch_name == "cnn-wide") {
    const ConvBlock blocks[] = {{16, 2}, {16, 2}};
    return BuildConvNet(dims, blocks, num_classes);
  }
  if (arch_name == "cnn-deep") {
    const ConvBlock blocks[] = {{8, 2}, {16, 2}, {16, 1}};
    return BuildConvNet(dims, blocks, num_classes);
  }
  Fail(ErrorCode::kConfig, "unknown architecture '" + arch_name + "'");
}

FrozenClassifier::FrozenClassifier(std::string model_id, std::string arch_name,
                                   Dims input_dims, int num_classes,
                                   uint64_t seed, nn::Network network)
    : model_id_(std::move(model_id)),
      arch_name_(std::move(arch_name)),
      input_dims_(input_dims),
      num_classes_(num_classes),
      seed_(seed),
      network_(std::move(network)) {
  Require(network_.InputSize() == input_dims_.size() &&
              network_.OutputSize() == num_classes_,
          ErrorCode::kConfig, "network shape does not match classifier metadata");
  param_digest_ = nn::ParamDigest(network_);
}

Vector FrozenClassifier::Forward(const Vector& image) const {
  Require(image.size() == input_dims_.size(), ErrorCode::kInput,
          "image has " + std::to_string(image.size()) + " values, model '" +
              model_id_ + "' expects " + ToString(input_dims_));
  return network_.Forward(image);
}

std::vector<Vector> FrozenClassifier::Forward(std::span<const Vector> batch) const {
  std::vector<Vector> out;
  out.reserve(batch.size());
  for (const Vector& x : batch) out.push_back(Forward(x));
  return out;
}

std::vector<Vector> PrepareImages(const Dataset& dataset, const Dims& model_dims) {
  Require(dataset.dims.channels == model_dims.channels, ErrorCode::kConfig,
          "dataset '" + dataset.name + "' has " +
              std::to_string(dataset.dims.channels) + " channels, model expects " +
              std::to_string(model_dims.channels));
  std::vector<Vector> out;
  out.reserve(dataset.size());
  for (const Vector& x : dataset.images) {
    out.push_back(ResizeImage(x, dataset.dims, model_dims));
  }
  return out;
}

FrozenClassifier PretrainBase(const DatasetDescriptor& data,
                              const ArchConfig& config, uint64_t seed,
                              const std::string& model_id) {
  Require(data.dims.channels == config.input_dims.channels, ErrorCode::kConfig,
          "pretraining data is " + ToString(data.dims) + " but architecture '" +
              config.arch_name + "' expects " + ToString(config.input_dims));
  Require(data.num_classes <= config.num_classes, ErrorCode::kConfig,
          "pretraining data has more classes than the classifier head");
  Dataset dataset = GenerateDataset(data);
  std::vector<Vector> inputs = PrepareImages(dataset, config.input_dims);
  nn::Network net =
      BuildArchitecture(config.arch_name, config.input_dims, config.num_classes);
  net.Initialize(seed);
  nn::FitOptions fit;
  fit.epochs = config.epochs;
  fit.learning_rate = config.learning_rate;
  fit.batch_size = config.batch_size;
  fit.seed = seed;
  fit.optimizer = nn::OptimizerKind::kAdam;
  nn::FitClassifier(net, inputs, dataset.labels, fit);
  net.RoundParamsToFloat();
  return FrozenClassifier(model_id, config.arch_name, config.input_dims,
                          config.num_classes, seed, std::move(net));
}

PromptedPass RunPromptedSample(const FrozenClassifier& model,
                               const Vector& image, const Vector& prompt_values,
                               const PromptSpec& spec, const LabelMap& label_map,
                               int label, bool need_grad) {
  Require(spec.dims == model.input_dims(), ErrorCode::kInput,
          "prompt dims " + ToString(spec.dims) + " do not match model input " +
              ToString(model.input_dims()));
  label_map.Validate(model.num_classes());
  Require(label >= 0 && label < label_map.num_downstream, ErrorCode::kInput,
          "true label " + std::to_string(label) + " outside [0," +
              std::to_string(label_map.num_downstream) + ")");
  Require(image.size() == prompt_values.size(), ErrorCode::kInput,
          "image and prompt sizes differ");
  const Vector prompted = image + prompt_values;
  nn::Tape tape;
  const Vector logits = model.network().Forward(prompted, need_grad ? &tape : nullptr);
  const Vector mapped = MapLogits(logits, label_map);
  nn::LossAndGrad lg = nn::SoftmaxCrossEntropy(mapped, label);
  PromptedPass out;
  out.posterior = nn::Softmax(mapped);
  out.loss = lg.loss;
  if (need_grad) {
    Vector dlogits = Vector::Zero(logits.size());
    dlogits.head(label_map.num_downstream) = lg.grad;
    Vector dx = model.network().Backward(dlogits, tape, nullptr, true);
    for (int c = 0; c < spec.dims.channels; ++c) {
      for (int h = 0; h < spec.dims.height; ++h) {
        for (int w = 0; w < spec.dims.width; ++w) {
          if (!IsBorderCell(spec, h, w)) dx[spec.dims.Index(c, h, w)] = 0.0;
        }
      }
    }
    out.prompt_grad = std::move(dx);
  }
  return out;
}

Vector InputGradient(const FrozenClassifier& model, const Vector& image,
                     const Prompt& prompt, const LabelMap& label_map,
                     int true_label) {
  return RunPromptedSample(model, image, prompt.AsVector(), prompt.spec, label_map,
                           true_label, /*need_grad=*/true)
      .prompt_grad;
}

void ModelRegistry::Put(const FrozenClassifier& model) const {
  std::filesystem::create_directories(dir_);
  nlohmann::json meta = {{"model_id", model.model_id()},
                         {"arch_name", model.arch_name()},
                         {"channels", model.input_dims().channels},
                         {"height", model.input_dims().height},
                         {"width", model.input_dims().width},
                         {"num_classes", model.num_classes()},
                         {"seed", model.seed()},
                         {"param_digest", model.param_digest()}};
  WriteTextFile(dir_ / (model.model_id() + ".json"), meta.dump(2) + "\n");
  WriteBinaryFile(dir_ / (model.model_id() + ".bin"), EncodeBlob(model.network()));
}

bool ModelRegistry::Contains(const std::string& model_id) const {
  return std::filesystem::exists(dir_ / (model_id + ".json")) &&
         std::filesystem::exists(dir_ / (model_id + ".bin"));
}

FrozenClassifier ModelRegistry::Get(const std::string& model_id) const {
  Require(Contains(model_id), ErrorCode::kRegistry,
          "model '" + model_id + "' is not registered in " + dir_.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ReadTextFile(dir_ / (model_id + ".json")));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kRegistry, "bad metadata for '" + model_id + "': " + e.what());
  }
  const Dims dims{meta.at("channels").get<int>(), meta.at("height").get<int>(),
                  meta.at("width").get<int>()};
  const int k = meta.at("num_classes").get<int>();
  const std::string arch = meta.at("arch_name").get<std::string>();
  nn::Network net = BuildArchitecture(arch, dims, k);
  DecodeBlobInto(ReadBinaryFile(dir_ / (model_id + ".bin")), net);
  FrozenClassifier model(model_id, arch, dims, k, meta.at("seed").get<uint64_t>(),
                         std::move(net));
  Require(model.param_digest() == meta.at("param_digest").get<std::string>(),
          ErrorCode::kRegistry, "parameter digest mismatch for '" + model_id + "'");
  return model;
}

std::vector<std::string> ModelRegistry::List() const {
  std::vector<std::string> ids;
  if (!std::filesystem::exists(dir_)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace vpleak
