#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "gradsal/models.hpp"

namespace gradsal {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointFormat = "gradsal-checkpoint";
inline constexpr int kCheckpointVersion = 1;

// Reals are written as shortest round-trip decimal, so reading back is bit-exact.
inline nlohmann::json checkpoint_to_json(const Classifier& model) {
  model.validate();
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["input_shape"] = {model.input_height, model.input_width};
  j["num_classes"] = model.num_classes();
  j["temperature"] = model.temperature;
  j["calibrated"] = model.calibrated;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : model.layers) {
    nlohmann::json lj;
    lj["activation"] = to_string(layer.activation);
    lj["shape"] = {layer.out_width(), layer.in_width()};
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
    lj["weights"] = std::move(w);
    lj["biases"] = std::vector<double>(layer.biases.data(), layer.biases.data() + layer.biases.size());
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

inline Classifier checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw FormatError("not a checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    Classifier model;
    const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw FormatError("input_shape must have two entries");
    model.input_height = shape[0];
    model.input_width = shape[1];
    model.temperature = j.at("temperature").get<double>();
    model.calibrated = j.value("calibrated", false);
    for (const auto& lj : j.at("layers")) {
      DenseLayer layer;
      layer.activation = activation_from_string(lj.at("activation").get<std::string>());
      const auto ls = lj.at("shape").get<std::vector<Eigen::Index>>();
      if (ls.size() != 2) throw FormatError("layer shape must have two entries");
      const auto w = lj.at("weights").get<std::vector<double>>();
      const auto b = lj.at("biases").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != ls[0] * ls[1] || static_cast<Eigen::Index>(b.size()) != ls[0]) {
        throw FormatError("layer parameter count does not match its shape");
      }
      layer.weights.resize(ls[0], ls[1]);
      for (Eigen::Index r = 0; r < ls[0]; ++r)
        for (Eigen::Index c = 0; c < ls[1]; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * ls[1] + c)];
      layer.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), ls[0]);
      model.layers.push_back(std::move(layer));
    }
    if (model.num_classes() != j.at("num_classes").get<int>()) throw FormatError("num_classes mismatch");
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Classifier& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << checkpoint_to_json(model).dump(1) << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path);
}

inline Classifier load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace gradsal
