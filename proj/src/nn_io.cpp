#include <string>

#include "doeforge/nn.hpp"

namespace doeforge::nn {

std::string toString(Activation a) {
  switch (a) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation activationFromString(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw ValidationError("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (sizes.size() < 2) throw ValidationError("network needs at least an input and an output size");
  for (int n : sizes)
    if (n < 1) throw ValidationError("layer sizes must be positive");
  if (dropout.size() != sizes.size() - 2) {
    throw ValidationError("expected " + std::to_string(sizes.size() - 2) + " dropout probabilities, got " +
                          std::to_string(dropout.size()));
  }
  for (double p : dropout)
    if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout probability must be in [0, 1)");
}

MlpSpec actorSpec(int observation_size) {
  return {{observation_size, 128, 128, 64, 64, 1}, Activation::Relu, Activation::Tanh, {0.2, 0.2, 0.1, 0.1}};
}

MlpSpec criticSpec(int observation_size) {
  return {{observation_size + 1, 128, 128, 64, 64, 1}, Activation::Relu, Activation::Identity, {0.2, 0.2, 0.1, 0.1}};
}

nlohmann::json toJson(const MlpSpec& spec) {
  return {{"sizes", spec.sizes},
          {"hidden", toString(spec.hidden)},
          {"output", toString(spec.output)},
          {"dropout", spec.dropout}};
}

MlpSpec specFromJson(const nlohmann::json& j) {
  MlpSpec spec;
  spec.sizes = j.at("sizes").get<std::vector<int>>();
  spec.hidden = activationFromString(j.at("hidden").get<std::string>());
  spec.output = activationFromString(j.at("output").get<std::string>());
  spec.dropout = j.at("dropout").get<std::vector<double>>();
  spec.validate();
  return spec;
}

nlohmann::json toJson(const MlpD& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(l.weight.cols()));
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weight(r, c);
      rows.push_back(row);
    }
    layers.push_back({{"weight", rows}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return {{"format", "doeforge-mlp"},
          {"format_version", kNetworkFormatVersion},
          {"shape", toJson(net.spec())},
          {"layers", layers}};
}

MlpD mlpFromJson(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "doeforge-mlp") throw ValidationError("not a network checkpoint");
    const int version = j.at("format_version").get<int>();
    if (version != kNetworkFormatVersion) {
      throw ValidationError("unsupported network format version " + std::to_string(version));
    }
    MlpD net(specFromJson(j.at("shape")));
    const auto& jl = j.at("layers");
    if (jl.size() != net.layers().size()) throw ValidationError("layer count does not match the shape header");
    auto& layers = net.mutableLayers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& layer = layers[l];
      const auto& rows = jl[l].at("weight");
      const auto bias = jl[l].at("bias").get<std::vector<double>>();
      if (rows.size() != static_cast<std::size_t>(layer.weight.rows()) ||
          bias.size() != static_cast<std::size_t>(layer.bias.size())) {
        throw ValidationError("layer " + std::to_string(l) + " does not match the shape header");
      }
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
        if (row.size() != static_cast<std::size_t>(layer.weight.cols())) {
          throw ValidationError("layer " + std::to_string(l) + " does not match the shape header");
        }
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = row[static_cast<std::size_t>(c)];
      }
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = bias[static_cast<std::size_t>(i)];
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
        throw ValidationError("layer " + std::to_string(l) + " has non-finite parameters");
      }
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace doeforge::nn
