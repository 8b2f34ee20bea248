#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "doeforge/errors.hpp"

namespace doeforge::nn {

enum class Activation { Relu, Tanh, Identity };

std::string toString(Activation a);
Activation activationFromString(const std::string& s);

/// Architecture of a fully connected network. `sizes` lists every layer width
/// from input to output; `dropout` holds one probability per hidden layer.
struct MlpSpec {
  std::vector<int> sizes;
  Activation hidden = Activation::Relu;
  Activation output = Activation::Identity;
  std::vector<double> dropout;

  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

/// 43 -> 128 -> 128 -> 64 -> 64 -> 1 with tanh head.
MlpSpec actorSpec(int observation_size = 43);
/// Same trunk on state||action, identity head.
MlpSpec criticSpec(int observation_size = 43);

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
  };

  /// Activations of a train-mode forward pass, tied to the parameter version
  /// that produced them.
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer (after dropout)
    std::vector<Matrix> pre;     // pre-activations
    std::vector<Matrix> masks;   // scaled dropout masks; empty when no dropout
    Matrix output;
    std::uint64_t version = 0;
  };

  struct Gradients {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;
    Matrix input;
  };

  Mlp() = default;

  /// All-zero parameters.
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t l = 0; l + 1 < spec_.sizes.size(); ++l) {
      layers_.push_back({Matrix::Zero(spec_.sizes[l + 1], spec_.sizes[l]), Vector::Zero(spec_.sizes[l + 1])});
    }
  }

  /// Hidden layers: uniform He fan-in scaling, zero bias. Output layer:
  /// uniform in [-final_scale, final_scale] for weights and bias.
  static Mlp initialized(MlpSpec spec, std::mt19937_64& rng, Scalar final_scale = Scalar(3e-3)) {
    Mlp net(std::move(spec));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::size_t l = 0; l < net.layers_.size(); ++l) {
      auto& layer = net.layers_[l];
      const bool last = l + 1 == net.layers_.size();
      const double bound = last ? static_cast<double>(final_scale) : std::sqrt(6.0 / layer.weight.cols());
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = Scalar(bound * unit(rng));
      if (last) {
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = Scalar(bound * unit(rng));
      }
    }
    return net;
  }

  const MlpSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  int inputSize() const { return spec_.sizes.front(); }
  int outputSize() const { return spec_.sizes.back(); }
  std::uint64_t version() const { return version_; }

  /// Mutable access bumps the parameter version so older caches go stale.
  std::vector<Layer>& mutableLayers() {
    ++version_;
    return layers_;
  }

  Eigen::Index numParams() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Eval mode: no dropout, deterministic. `x` is input_size x batch.
  Matrix forward(const Matrix& x) const {
    checkInput(x);
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = (layers_[l].weight * a).colwise() + layers_[l].bias;
      activate(z, activationOf(l));
      a = std::move(z);
    }
    return a;
  }

  /// Train mode: inverted dropout on hidden layers when `rng` is non-null.
  Matrix forward(const Matrix& x, Cache& cache, std::mt19937_64* rng) const {
    checkInput(x);
    cache.inputs.clear();
    cache.pre.clear();
    cache.masks.clear();
    cache.version = version_;
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      cache.inputs.push_back(a);
      Matrix z = (layers_[l].weight * a).colwise() + layers_[l].bias;
      cache.pre.push_back(z);
      activate(z, activationOf(l));
      const bool hidden = l + 1 < layers_.size();
      if (hidden && rng != nullptr && spec_.dropout[l] > 0.0) {
        const double p = spec_.dropout[l];
        const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        Matrix mask(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = unit(*rng) >= p ? keep_scale : Scalar(0);
        z = z.cwiseProduct(mask);
        cache.masks.push_back(std::move(mask));
      } else {
        cache.masks.emplace_back();
      }
      a = std::move(z);
    }
    cache.output = a;
    return a;
  }

  /// Reverse-mode gradients of sum(output .* d_output) with respect to all
  /// parameters and the input.
  Gradients backward(const Cache& cache, const Matrix& d_output) const {
    if (cache.version != version_ || cache.pre.size() != layers_.size()) {
      throw ValidationError("backward called with a stale or foreign forward cache");
    }
    if (d_output.rows() != outputSize() || d_output.cols() != cache.output.cols()) {
      throw ValidationError("backward: output gradient shape mismatch");
    }
    Gradients g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Matrix delta = d_output;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      if (cache.masks[li].size() > 0) delta = delta.cwiseProduct(cache.masks[li]);
      delta = delta.cwiseProduct(activationDerivative(cache.pre[li], activationOf(li)));
      g.weight[li] = delta * cache.inputs[li].transpose();
      g.bias[li] = delta.rowwise().sum();
      delta = layers_[li].weight.transpose() * delta;
    }
    g.input = std::move(delta);
    return g;
  }

  bool operator==(const Mlp& o) const {
    if (!(spec_ == o.spec_) || layers_.size() != o.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].weight != o.layers_[l].weight || layers_[l].bias != o.layers_[l].bias) return false;
    }
    return true;
  }

 private:
  Activation activationOf(std::size_t l) const { return l + 1 == layers_.size() ? spec_.output : spec_.hidden; }

  void checkInput(const Matrix& x) const {
    if (layers_.empty()) throw ValidationError("forward on an empty network");
    if (x.rows() != inputSize()) {
      throw ValidationError("forward: input has " + std::to_string(x.rows()) + " rows, network expects " +
                            std::to_string(inputSize()));
    }
  }

  static void activate(Matrix& z, Activation a) {
    switch (a) {
      case Activation::Relu:
        z = z.cwiseMax(Scalar(0));
        break;
      case Activation::Tanh:
        z = z.array().tanh().matrix();
        break;
      case Activation::Identity:
        break;
    }
  }

  static Matrix activationDerivative(const Matrix& pre, Activation a) {
    switch (a) {
      case Activation::Relu:
        return (pre.array() > Scalar(0)).template cast<Scalar>().matrix();
      case Activation::Tanh:
        return (Scalar(1) - pre.array().tanh().square()).matrix();
      case Activation::Identity:
        break;
    }
    return Matrix::Ones(pre.rows(), pre.cols());
  }

  MlpSpec spec_;
  std::vector<Layer> layers_;
  std::uint64_t version_ = 0;
};

/// Bias-corrected Adam.
template <typename Scalar>
class Adam {
 public:
  using Net = Mlp<Scalar>;

  struct Hyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const Net& net, Hyper hyper) : hyper_(hyper) {
    for (const auto& l : net.layers()) {
      m_w_.push_back(Net::Matrix::Zero(l.weight.rows(), l.weight.cols()));
      v_w_.push_back(Net::Matrix::Zero(l.weight.rows(), l.weight.cols()));
      m_b_.push_back(Net::Vector::Zero(l.bias.size()));
      v_b_.push_back(Net::Vector::Zero(l.bias.size()));
    }
  }

  void step(Net& net, const typename Net::Gradients& grads) {
    if (grads.weight.size() != m_w_.size() || net.layers().size() != m_w_.size()) {
      throw ValidationError("adam: gradient and network shapes differ from the optimizer state");
    }
    for (std::size_t l = 0; l < m_w_.size(); ++l) {
      if (grads.weight[l].rows() != m_w_[l].rows() || grads.weight[l].cols() != m_w_[l].cols() ||
          grads.bias[l].size() != m_b_[l].size()) {
        throw ValidationError("adam: gradient shape mismatch at layer " + std::to_string(l));
      }
      if (!grads.weight[l].allFinite() || !grads.bias[l].allFinite()) {
        throw NumericalError("adam: non-finite gradient at layer " + std::to_string(l));
      }
    }
    ++t_;
    const Scalar b1(hyper_.beta1), b2(hyper_.beta2);
    const Scalar c1 = Scalar(1.0 - std::pow(hyper_.beta1, static_cast<double>(t_)));
    const Scalar c2 = Scalar(1.0 - std::pow(hyper_.beta2, static_cast<double>(t_)));
    const Scalar lr(hyper_.lr), eps(hyper_.eps);
    auto& layers = net.mutableLayers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight, grads.weight[l], m_w_[l], v_w_[l], b1, b2, c1, c2, lr, eps);
      update(layers[l].bias, grads.bias[l], m_b_[l], v_b_[l], b1, b2, c1, c2, lr, eps);
    }
  }

  std::int64_t steps() const { return t_; }
  const Hyper& hyper() const { return hyper_; }
  const std::vector<typename Net::Matrix>& firstMomentWeights() const { return m_w_; }
  const std::vector<typename Net::Matrix>& secondMomentWeights() const { return v_w_; }

 private:
  template <typename P, typename G, typename M>
  static void update(P& param, const G& grad, M& m, M& v, Scalar b1, Scalar b2, Scalar c1, Scalar c2, Scalar lr,
                     Scalar eps) {
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  Hyper hyper_;
  std::vector<typename Net::Matrix> m_w_, v_w_;
  std::vector<typename Net::Vector> m_b_, v_b_;
  std::int64_t t_ = 0;
};

using MlpD = Mlp<double>;
using AdamD = Adam<double>;

inline constexpr int kNetworkFormatVersion = 1;

/// Checkpoint with a shape header; doubles round-trip exactly.
nlohmann::json toJson(const MlpD& net);
MlpD mlpFromJson(const nlohmann::json& j);
nlohmann::json toJson(const MlpSpec& spec);
MlpSpec specFromJson(const nlohmann::json& j);

}  // namespace doeforge::nn
