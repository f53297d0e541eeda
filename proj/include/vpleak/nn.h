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

// Minimal feed-forward network engine: per-sample forward/backward through
// convolution, ReLU and dense layers, with gradients for both parameters and
// inputs. Samples are always processed one at a time so that a sample's
// output never depends on what else is in the batch.

#ifndef VPLEAK_NN_H_
#define VPLEAK_NN_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vpleak {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Channel-major image geometry. Flattened index of (c, h, w) is
// (c * height + h) * width + w.
struct Dims {
  int channels = 0;
  int height = 0;
  int width = 0;

  int size() const { return channels * height * width; }
  int Index(int c, int h, int w) const { return (c * height + h) * width + w; }
  bool operator==(const Dims&) const = default;
};

std::string ToString(const Dims& dims);

namespace nn {

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string Kind() const = 0;
  virtual int InputSize() const = 0;
  virtual int OutputSize() const = 0;
  virtual std::unique_ptr<Layer> Clone() const = 0;

  // `cache` receives whatever Backward needs besides the layer input.
  virtual Vector Forward(const Vector& x, Matrix* cache) const = 0;

  // Returns dLoss/dx (empty when `need_input_grad` is false). Parameter
  // gradients are accumulated into `grads` when it is non-empty.
  virtual Vector Backward(const Vector& dy, const Vector& x,
                          const Matrix& cache, std::span<Matrix> grads,
                          bool need_input_grad) const = 0;

  std::vector<Matrix>& params() { return params_; }
  const std::vector<Matrix>& params() const { return params_; }

 protected:
  std::vector<Matrix> params_;
};

// 2-D convolution with square kernel, zero padding and stride.
class Conv2d : public Layer {
 public:
  Conv2d(Dims input, int out_channels, int kernel, int stride, int pad);

  std::string Kind() const override { return "conv2d"; }
  int InputSize() const override { return input_.size(); }
  int OutputSize() const override { return output_.size(); }
  std::unique_ptr<Layer> Clone() const override;
  Vector Forward(const Vector& x, Matrix* cache) const override;
  Vector Backward(const Vector& dy, const Vector& x, const Matrix& cache,
                  std::span<Matrix> grads,
                  bool need_input_grad) const override;

  const Dims& output_dims() const { return output_; }

 private:
  Matrix Im2Col(const Vector& x) const;

  Dims input_;
  Dims output_;
  int kernel_;
  int stride_;
  int pad_;
};

class Relu : public Layer {
 public:
  explicit Relu(int size) : size_(size) {}

  std::string Kind() const override { return "relu"; }
  int InputSize() const override { return size_; }
  int OutputSize() const override { return size_; }
  std::unique_ptr<Layer> Clone() const override;
  Vector Forward(const Vector& x, Matrix* cache) const override;
  Vector Backward(const Vector& dy, const Vector& x, const Matrix& cache,
                  std::span<Matrix> grads,
                  bool need_input_grad) const override;

 private:
  int size_;
};

class Dense : public Layer {
 public:
  Dense(int in, int out);

  std::string Kind() const override { return "dense"; }
  int InputSize() const override { return static_cast<int>(params_[0].cols()); }
  int OutputSize() const override {
    return static_cast<int>(params_[0].rows());
  }
  std::unique_ptr<Layer> Clone() const override;
  Vector Forward(const Vector& x, Matrix* cache) const override;
  Vector Backward(const Vector& dy, const Vector& x, const Matrix& cache,
                  std::span<Matrix> grads,
                  bool need_input_grad) const override;
};

// Activations recorded by a forward pass, consumed by Backward.
struct Tape {
  std::vector<Vector> inputs;
  std::vector<Matrix> caches;
};

// Parameter gradients, one matrix per parameter in declaration order.
using Gradients = std::vector<Matrix>;

class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  Network& Add(std::unique_ptr<Layer> layer);

  int InputSize() const;
  int OutputSize() const;
  bool empty() const { return layers_.empty(); }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  // He-normal weights, zero biases.
  void Initialize(uint64_t seed);

  Vector Forward(const Vector& x, Tape* tape = nullptr) const;
  Vector Backward(const Vector& dy, const Tape& tape, Gradients* grads,
                  bool need_input_grad = true) const;

  Gradients ZeroGradients() const;
  std::vector<Matrix*> MutableParams();
  std::vector<const Matrix*> Params() const;
  int64_t ParamCount() const;

  // Rounds every parameter to the nearest 32-bit float so the in-memory
  // model is exactly what the serialized blob holds.
  void RoundParamsToFloat();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Numerically stable softmax.
Vector Softmax(const Vector& logits);

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;  // dLoss/dLogits
};

// Cross-entropy of softmax(logits) against `label`.
LossAndGrad SoftmaxCrossEntropy(const Vector& logits, int label);

class Sgd {
 public:
  void Step(const std::vector<Matrix*>& params, const Gradients& grads,
            double lr) const;
};

class Adam {
 public:
  explicit Adam(const std::vector<Matrix*>& params, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);
  void Step(const std::vector<Matrix*>& params, const Gradients& grads,
            double lr);

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  int64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

enum class OptimizerKind { kSgd, kAdam };

struct FitOptions {
  int epochs = 10;
  double learning_rate = 1e-3;
  int batch_size = 32;
  uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
};

// Minibatch cross-entropy training of a classifier network on
// (input, label) pairs. Deterministic given options.seed.
void FitClassifier(Network& network, std::span<const Vector> inputs,
                   std::span<const int> labels, const FitOptions& options);

int Argmax(const Vector& v);

// Hex SHA-256 over the parameter shapes and float32 little-endian values,
// in declaration order.
std::string ParamDigest(const Network& network);

}  // namespace nn
}  // namespace vpleak

#endif  // VPLEAK_NN_H_
