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

#include "vpleak/nn.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vpleak/error.h"
#include "vpleak/io.h"

namespace vpleak {

std::string ToString(const Dims& dims) {
  return std::to_string(dims.channels) + "x" + std::to_string(dims.height) +
         "x" + std::to_string(dims.width);
}

namespace nn {

Conv2d::Conv2d(Dims input, int out_channels, int kernel, int stride, int pad)
    : input_(input), kernel_(kernel), stride_(stride), pad_(pad) {
  Require(kernel > 0 && stride > 0 && pad >= 0 && out_channels > 0,
          ErrorCode::kConfig, "invalid conv2d geometry");
  output_.channels = out_channels;
  output_.height = (input.height + 2 * pad - kernel) / stride + 1;
  output_.width = (input.width + 2 * pad - kernel) / stride + 1;
  Require(output_.height > 0 && output_.width > 0, ErrorCode::kConfig,
          "conv2d input too small for kernel");
  params_.push_back(Matrix::Zero(input.channels * kernel * kernel, out_channels));
  params_.push_back(Matrix::Zero(out_channels, 1));
}

std::unique_ptr<Layer> Conv2d::Clone() const {
  return std::make_unique<Conv2d>(*this);
}

// Row = output position, column = (in_channel, ky, kx).
Matrix Conv2d::Im2Col(const Vector& x) const {
  const int positions = output_.height * output_.width;
  Matrix cols = Matrix::Zero(positions, input_.channels * kernel_ * kernel_);
  for (int c = 0; c < input_.channels; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const int col = (c * kernel_ + ky) * kernel_ + kx;
        double* dst = cols.col(col).data();
        for (int oy = 0; oy < output_.height; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= input_.height) continue;
          const double* row = x.data() + input_.Index(c, iy, 0);
          for (int ox = 0; ox < output_.width; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= input_.width) continue;
            dst[oy * output_.width + ox] = row[ix];
          }
        }
      }
    }
  }
  return cols;
}

Vector Conv2d::Forward(const Vector& x, Matrix* cache) const {
  const int positions = output_.height * output_.width;
  Matrix cols = Im2Col(x);
  Vector y(output_.size());
  Eigen::Map<Matrix> out(y.data(), positions, output_.channels);
  out.noalias() = cols * params_[0];
  out.rowwise() += params_[1].col(0).transpose();
  if (cache != nullptr) *cache = std::move(cols);
  return y;
}

Vector Conv2d::Backward(const Vector& dy, const Vector& /*x*/,
                        const Matrix& cache, std::span<Matrix> grads,
                        bool need_input_grad) const {
  const int positions = output_.height * output_.width;
  Eigen::Map<const Matrix> dout(dy.data(), positions, output_.channels);
  if (!grads.empty()) {
    grads[0].noalias() += cache.transpose() * dout;
    grads[1].col(0) += dout.colwise().sum().transpose();
  }
  if (!need_input_grad) return Vector();
  Matrix dcols = dout * params_[0].transpose();
  Vector dx = Vector::Zero(input_.size());
  for (int c = 0; c < input_.channels; ++c) {
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const double* src = dcols.col((c * kernel_ + ky) * kernel_ + kx).data();
        for (int oy = 0; oy < output_.height; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= input_.height) continue;
          double* row = dx.data() + input_.Index(c, iy, 0);
          for (int ox = 0; ox < output_.width; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= input_.width) continue;
            row[ix] += src[oy * output_.width + ox];
          }
        }
      }
    }
  }
  return dx;
}

std::unique_ptr<Layer> Relu::Clone() const { return std::make_unique<Relu>(*this); }

Vector Relu::Forward(const Vector& x, Matrix* /*cache*/) const {
  return x.cwiseMax(0.0);
}

Vector Relu::Backward(const Vector& dy, const Vector& x, const Matrix& /*cache*/,
                      std::span<Matrix> /*grads*/, bool need_input_grad) const {
  if (!need_input_grad) return Vector();
  return (x.array() > 0.0).select(dy, 0.0);
}

Dense::Dense(int in, int out) {
  Require(in > 0 && out > 0, ErrorCode::kConfig, "invalid dense geometry");
  params_.push_back(Matrix::Zero(out, in));
  params_.push_back(Matrix::Zero(out, 1));
}

std::unique_ptr<Layer> Dense::Clone() const { return std::make_unique<Dense>(*this); }

Vector Dense::Forward(const Vector& x, Matrix* /*cache*/) const {
  Vector y = params_[1].col(0);
  y.noalias() += params_[0] * x;
  return y;
}

Vector Dense::Backward(const Vector& dy, const Vector& x, const Matrix& /*cache*/,
                       std::span<Matrix> grads, bool need_input_grad) const {
  if (!grads.empty()) {
    grads[0].noalias() += dy * x.transpose();
    grads[1].col(0) += dy;
  }
  if (!need_input_grad) return Vector();
  return params_[0].transpose() * dy;
}

Network::Network(const Network& other) {
  for (const auto& layer : other.layers_) layers_.push_back(layer->Clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    layers_.clear();
    for (const auto& layer : other.layers_) layers_.push_back(layer->Clone());
  }
  return *this;
}

Network& Network::Add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty()) {
    Require(layers_.back()->OutputSize() == layer->InputSize(),
            ErrorCode::kConfig,
            "layer size mismatch: " + std::to_string(layers_.back()->OutputSize()) +
                " -> " + std::to_string(layer->InputSize()));
  }
  layers_.push_back(std::move(layer));
  return *this;
}

int Network::InputSize() const {
  return layers_.empty() ? 0 : layers_.front()->InputSize();
}

int Network::OutputSize() const {
  return layers_.empty() ? 0 : layers_.back()->OutputSize();
}

void Network::Initialize(uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& layer : layers_) {
    auto& params = layer->params();
    if (params.empty()) continue;
    // Fan-in is the weight dimension contracted with the input.
    Matrix& w = params[0];
    const double fan_in = layer->Kind() == "dense" ? static_cast<double>(w.cols())
                                                   : static_cast<double>(w.rows());
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
    }
    for (size_t k = 1; k < params.size(); ++k) params[k].setZero();
  }
}

Vector Network::Forward(const Vector& x, Tape* tape) const {
  Require(x.size() == InputSize(), ErrorCode::kInput,
          "network input has " + std::to_string(x.size()) + " values, expected " +
              std::to_string(InputSize()));
  if (tape != nullptr) {
    tape->inputs.resize(layers_.size());
    tape->caches.resize(layers_.size());
  }
  Vector h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (tape != nullptr) {
      tape->inputs[i] = h;
      h = layers_[i]->Forward(tape->inputs[i], &tape->caches[i]);
    } else {
      h = layers_[i]->Forward(h, nullptr);
    }
  }
  return h;
}

Vector Network::Backward(const Vector& dy, const Tape& tape, Gradients* grads,
                         bool need_input_grad) const {
  Vector d = dy;
  // Parameter offsets per layer into the flat gradient list.
  std::vector<size_t> offsets(layers_.size());
  size_t offset = 0;
  for (size_t i = 0; i < layers_.size(); ++i) {
    offsets[i] = offset;
    offset += layers_[i]->params().size();
  }
  for (size_t i = layers_.size(); i-- > 0;) {
    const Layer& layer = *layers_[i];
    std::span<Matrix> layer_grads;
    if (grads != nullptr && !layer.params().empty()) {
      layer_grads = std::span<Matrix>(grads->data() + offsets[i], layer.params().size());
    }
    const bool need = i > 0 || need_input_grad;
    if (!need && layer_grads.empty()) break;
    d = layer.Backward(d, tape.inputs[i], tape.caches[i], layer_grads, need);
  }
  return need_input_grad ? d : Vector();
}

Gradients Network::ZeroGradients() const {
  Gradients g;
  for (const auto& layer : layers_) {
    for (const auto& p : layer->params()) g.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return g;
}

std::vector<Matrix*> Network::MutableParams() {
  std::vector<Matrix*> out;
  for (auto& layer : layers_) {
    for (auto& p : layer->params()) out.push_back(&p);
  }
  return out;
}

std::vector<const Matrix*> Network::Params() const {
  std::vector<const Matrix*> out;
  for (const auto& layer : layers_) {
    for (const auto& p : layer->params()) out.push_back(&p);
  }
  return out;
}

int64_t Network::ParamCount() const {
  int64_t n = 0;
  for (const Matrix* p : Params()) n += p->size();
  return n;
}

void Network::RoundParamsToFloat() {
  for (Matrix* p : MutableParams()) {
    *p = p->unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  }
}

Vector Softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

LossAndGrad SoftmaxCrossEntropy(const Vector& logits, int label) {
  Require(label >= 0 && label < logits.size(), ErrorCode::kInput,
          "label " + std::to_string(label) + " out of range");
  const double m = logits.maxCoeff();
  const double log_sum = m + std::log((logits.array() - m).exp().sum());
  LossAndGrad out;
  out.loss = log_sum - logits[label];
  out.grad = (logits.array() - log_sum).exp();
  out.grad[label] -= 1.0;
  return out;
}

void Sgd::Step(const std::vector<Matrix*>& params, const Gradients& grads,
               double lr) const {
  for (size_t i = 0; i < params.size(); ++i) *params[i] -= lr * grads[i];
}

Adam::Adam(const std::vector<Matrix*>& params, double beta1, double beta2,
           double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const Matrix* p : params) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::Step(const std::vector<Matrix*>& params, const Gradients& grads,
                double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + epsilon_);
  }
}

void FitClassifier(Network& network, std::span<const Vector> inputs,
                   std::span<const int> labels, const FitOptions& options) {
  Require(inputs.size() == labels.size() && !inputs.empty(), ErrorCode::kInput,
          "classifier training needs matching, nonempty inputs and labels");
  Require(options.batch_size > 0 && options.epochs >= 0, ErrorCode::kConfig,
          "invalid batch size or epoch count");
  std::mt19937_64 rng(options.seed);
  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = network.MutableParams();
  Adam adam(params);
  Sgd sgd;
  Tape tape;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t end = std::min(order.size(), start + options.batch_size);
      Gradients grads = network.ZeroGradients();
      double loss = 0.0;
      for (size_t k = start; k < end; ++k) {
        const size_t i = order[k];
        Vector logits = network.Forward(inputs[i], &tape);
        LossAndGrad lg = SoftmaxCrossEntropy(logits, labels[i]);
        loss += lg.loss;
        network.Backward(lg.grad, tape, &grads, /*need_input_grad=*/false);
      }
      if (!std::isfinite(loss)) {
        Fail(ErrorCode::kTraining,
             "non-finite loss at epoch " + std::to_string(epoch));
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (Matrix& g : grads) g *= scale;
      if (options.optimizer == OptimizerKind::kAdam) {
        adam.Step(params, grads, options.learning_rate);
      } else {
        sgd.Step(params, grads, options.learning_rate);
      }
    }
  }
}

int Argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

std::string ParamDigest(const Network& network) {
  ByteWriter w;
  for (const Matrix* p : network.Params()) {
    w.U32(static_cast<uint32_t>(p->rows()));
    w.U32(static_cast<uint32_t>(p->cols()));
    for (Eigen::Index r = 0; r < p->rows(); ++r) {
      for (Eigen::Index c = 0; c < p->cols(); ++c) w.F32(static_cast<float>((*p)(r, c)));
    }
  }
  return Sha256Hex(w.bytes());
}

}  // namespace nn
}  // namespace vpleak
