#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradsal/numerics.hpp"

namespace gradsal {

using ClassId = int;

/// Rows are examples, columns are flattened (row-major) grid pixels.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu, identity };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::identity;

  Eigen::Index in_width() const { return weights.cols(); }
  Eigen::Index out_width() const { return weights.rows(); }
};

/// Dense+ReLU network ending in a softmax. A single identity layer is multinomial regression.
struct Classifier {
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::vector<DenseLayer> layers;
  double temperature = 1.0;
  bool calibrated = false;  // set once temperature has been fitted on validation data

  std::size_t input_size() const { return input_height * input_width; }
  int num_classes() const { return layers.empty() ? 0 : static_cast<int>(layers.back().out_width()); }
  bool is_linear() const { return layers.size() == 1; }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("classifier has no layers");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw std::invalid_argument("classifier temperature must be finite and > 0");
    }
    Eigen::Index width = static_cast<Eigen::Index>(input_size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.in_width() != width) {
        throw ShapeError("layer " + std::to_string(l) + " expects input width " +
                         std::to_string(layer.in_width()) + ", got " + std::to_string(width));
      }
      if (layer.biases.size() != layer.out_width()) {
        throw ShapeError("layer " + std::to_string(l) + " bias length mismatch");
      }
      if (!layer.weights.allFinite() || !layer.biases.allFinite()) {
        throw std::invalid_argument("layer " + std::to_string(l) + " has non-finite parameters");
      }
      width = layer.out_width();
    }
    if (layers.back().activation != Activation::identity) {
      throw std::invalid_argument("final layer must produce raw logits");
    }
  }
};

namespace detail {

inline DenseLayer init_layer(Eigen::Index in, Eigen::Index out, Activation act, RandomSource& rng) {
  DenseLayer layer;
  layer.activation = act;
  layer.weights.resize(out, in);
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(in));
  // row-major fill keeps the draw order independent of Eigen's storage order
  for (Eigen::Index r = 0; r < out; ++r)
    for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = rng.normal(0.0, std_dev);
  layer.biases = Eigen::VectorXd::Zero(out);
  return layer;
}

}  // namespace detail

inline Classifier make_multinomial_regression(std::size_t height, std::size_t width, int num_classes,
                                              RandomSource& rng) {
  Classifier model;
  model.input_height = height;
  model.input_width = width;
  model.layers.push_back(detail::init_layer(static_cast<Eigen::Index>(height * width), num_classes,
                                            Activation::identity, rng));
  return model;
}

inline Classifier make_mlp(std::size_t height, std::size_t width, std::span<const int> hidden_widths,
                           int num_classes, RandomSource& rng) {
  Classifier model;
  model.input_height = height;
  model.input_width = width;
  Eigen::Index in = static_cast<Eigen::Index>(height * width);
  for (int h : hidden_widths) {
    if (h <= 0) throw std::invalid_argument("hidden width must be positive");
    model.layers.push_back(detail::init_layer(in, h, Activation::relu, rng));
    in = h;
  }
  model.layers.push_back(detail::init_layer(in, num_classes, Activation::identity, rng));
  return model;
}

/// Row-wise softmax of logits / temperature with max subtraction. Entries that underflow are
/// floored at the smallest normal double, so every probability stays strictly positive.
inline Batch softmax_rows(const Eigen::Ref<const Batch>& logits, double temperature) {
  Batch p = logits / temperature;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
    p.row(i) = p.row(i).cwiseMax(std::numeric_limits<double>::min());
  }
  return p;
}

/// Row-wise log-softmax of logits / temperature.
inline Batch log_softmax_rows(const Eigen::Ref<const Batch>& logits, double temperature) {
  Batch s = logits / temperature;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    const double lse = mx + std::log((s.row(i).array() - mx).exp().sum());
    s.row(i).array() -= lse;
  }
  return s;
}

/// Per-layer intermediates of a batched forward pass. The input itself is not copied; callers
/// that backpropagate pass it again.
struct ForwardPass {
  std::vector<Batch> pre;      // per layer, n x out, before the nonlinearity
  std::vector<Batch> outputs;  // per layer, n x out, after the nonlinearity
  Batch probabilities;         // n x K, temperature applied
  const Batch& logits() const { return pre.back(); }
};

inline ForwardPass forward_batch(const Classifier& model, const Eigen::Ref<const Batch>& inputs) {
  if (inputs.cols() != static_cast<Eigen::Index>(model.input_size())) {
    throw ShapeError("input has " + std::to_string(inputs.cols()) + " features, model expects " +
                     std::to_string(model.input_size()));
  }
  ForwardPass pass;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Batch z = (l == 0 ? inputs : Eigen::Ref<const Batch>(pass.outputs.back())) * layer.weights.transpose();
    z.rowwise() += layer.biases.transpose();
    pass.pre.push_back(z);
    if (layer.activation == Activation::relu) z = z.cwiseMax(0.0);
    pass.outputs.push_back(std::move(z));
  }
  pass.probabilities = softmax_rows(pass.logits(), model.temperature);
  return pass;
}

struct Prediction {
  std::vector<double> probabilities;
  std::vector<double> logits;
};

inline Eigen::Map<const Batch> as_row(const Grid& g) {
  return Eigen::Map<const Batch>(g.data(), 1, static_cast<Eigen::Index>(g.size()));
}

inline Prediction forward(const Classifier& model, const Grid& input) {
  const auto pass = forward_batch(model, as_row(input));
  Prediction pred;
  pred.logits.assign(pass.logits().data(), pass.logits().data() + pass.logits().size());
  pred.probabilities.assign(pass.probabilities.data(),
                            pass.probabilities.data() + pass.probabilities.size());
  return pred;
}

/// Argmax with ties going to the lowest class index.
inline ClassId argmax(std::span<const double> values) {
  ClassId best = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[static_cast<std::size_t>(best)]) best = static_cast<ClassId>(k);
  return best;
}

inline ClassId predict_class(const Classifier& model, const Grid& input) {
  return argmax(forward(model, input).logits);
}

namespace detail {

inline std::vector<ClassId> argmax_rows(const Batch& logits) {
  std::vector<ClassId> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out[static_cast<std::size_t>(i)] =
        argmax(std::span<const double>(logits.row(i).data(), static_cast<std::size_t>(logits.cols())));
  }
  return out;
}

}  // namespace detail

inline std::vector<ClassId> predict_batch(const Classifier& model, const Eigen::Ref<const Batch>& inputs) {
  return detail::argmax_rows(forward_batch(model, inputs).logits());
}

namespace detail {

inline void check_classes(const Classifier& model, std::span<const ClassId> classes) {
  for (ClassId c : classes)
    if (c < 0 || c >= model.num_classes())
      throw std::out_of_range("class id " + std::to_string(c) + " out of range");
}

// Pull d(.)/d(logits) back to the input through every layer.
inline Batch backprop_to_input(const Classifier& model, const ForwardPass& pass, Batch upstream) {
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    if (layer.activation == Activation::relu) upstream.array() *= (pass.pre[l].array() > 0.0).cast<double>();
    upstream = upstream * layer.weights;
  }
  return upstream;
}

}  // namespace detail

/// d p(target_i | x_i) / d x_i for every row, at the model temperature.
inline Batch input_gradient_batch(const Classifier& model, const Eigen::Ref<const Batch>& inputs,
                                  std::span<const ClassId> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != inputs.rows()) throw ShapeError("one target per row");
  detail::check_classes(model, targets);
  const auto pass = forward_batch(model, inputs);
  const Batch& p = pass.probabilities;
  Batch dz(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const auto c = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]);
    const double pc = p(i, c);
    // dp_c/dz_c = p_c * sum_{k != c} p_k avoids the cancellation in p_c * (1 - p_c)
    double rest = 0.0;
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
      if (k == c) continue;
      dz(i, k) = -pc * p(i, k) / model.temperature;
      rest += p(i, k);
    }
    dz(i, c) = pc * rest / model.temperature;
  }
  return detail::backprop_to_input(model, pass, std::move(dz));
}

inline Grid input_gradient(const Classifier& model, const Grid& input, ClassId target_class) {
  if (input.size() != model.input_size()) throw ShapeError("input does not match model");
  const std::array<ClassId, 1> targets{target_class};
  const Batch g = input_gradient_batch(model, as_row(input), targets);
  return Grid(input.height(), input.width(), std::vector<double>(g.data(), g.data() + g.size()));
}

struct LayerGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

/// Gradient of the log posterior, i.e. an ascent direction, one entry per layer.
using ParameterGradient = std::vector<LayerGradient>;

/// Mean over rows of grad_W log p(y|x) at the model temperature, minus l2 * W (weights only).
inline ParameterGradient log_posterior_gradient(const Classifier& model, const Eigen::Ref<const Batch>& inputs,
                                                std::span<const ClassId> labels, double l2_coefficient) {
  if (inputs.rows() == 0) throw std::invalid_argument("parameter gradient of an empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) throw ShapeError("one label per row");
  detail::check_classes(model, labels);
  const auto pass = forward_batch(model, inputs);
  const double n = static_cast<double>(inputs.rows());
  Batch upstream = -pass.probabilities;
  for (Eigen::Index i = 0; i < upstream.rows(); ++i) upstream(i, labels[static_cast<std::size_t>(i)]) += 1.0;
  upstream /= model.temperature;

  ParameterGradient grad(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    if (layer.activation == Activation::relu) upstream.array() *= (pass.pre[l].array() > 0.0).cast<double>();
    if (l == 0) {
      grad[l].weights = upstream.transpose() * inputs / n;
    } else {
      grad[l].weights = upstream.transpose() * pass.outputs[l - 1] / n;
    }
    grad[l].biases = upstream.colwise().sum().transpose() / n;
    if (l2_coefficient != 0.0) grad[l].weights -= l2_coefficient * layer.weights;
    if (l > 0) upstream = upstream * layer.weights;
  }
  return grad;
}

inline double mean_nll_of_logits(const Batch& logits, std::span<const ClassId> labels, double temperature) {
  const Batch logp = log_softmax_rows(logits, temperature);
  double s = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) s -= logp(i, labels[static_cast<std::size_t>(i)]);
  return s / static_cast<double>(logp.rows());
}

/// Mean negative log-likelihood of the labels at the model temperature.
inline double mean_nll(const Classifier& model, const Eigen::Ref<const Batch>& inputs,
                       std::span<const ClassId> labels) {
  return mean_nll_of_logits(forward_batch(model, inputs).logits(), labels, model.temperature);
}

struct BatchFit {
  double nll = 0.0;
  double accuracy = 0.0;
};

/// NLL and accuracy from a single forward pass.
inline BatchFit evaluate_fit(const Classifier& model, const Eigen::Ref<const Batch>& inputs,
                             std::span<const ClassId> labels) {
  const auto pass = forward_batch(model, inputs);
  const auto pred = detail::argmax_rows(pass.logits());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return {mean_nll_of_logits(pass.logits(), labels, model.temperature),
          pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size())};
}

struct LabeledExample {
  Grid input;
  ClassId label = 0;
};

inline Batch to_batch(std::span<const LabeledExample> examples) {
  if (examples.empty()) return Batch(0, 0);
  const auto d = static_cast<Eigen::Index>(examples.front().input.size());
  Batch x(static_cast<Eigen::Index>(examples.size()), d);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (static_cast<Eigen::Index>(examples[i].input.size()) != d) throw ShapeError("ragged batch");
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(examples[i].input.data(), d);
  }
  return x;
}

inline std::vector<ClassId> labels_of(std::span<const LabeledExample> examples) {
  std::vector<ClassId> y;
  y.reserve(examples.size());
  for (const auto& e : examples) y.push_back(e.label);
  return y;
}

inline ParameterGradient parameter_gradient(const Classifier& model, std::span<const LabeledExample> batch,
                                            double l2_coefficient = 0.0) {
  if (batch.empty()) throw std::invalid_argument("parameter gradient of an empty batch");
  const auto y = labels_of(batch);
  return log_posterior_gradient(model, to_batch(batch), y, l2_coefficient);
}

inline double weight_sq_norm(const Classifier& model) {
  double s = 0.0;
  for (const auto& layer : model.layers) s += layer.weights.squaredNorm();
  return s;
}

inline std::size_t parameter_count(const Classifier& model) {
  std::size_t n = 0;
  for (const auto& layer : model.layers) n += static_cast<std::size_t>(layer.weights.size() + layer.biases.size());
  return n;
}

/// Visits every parameter in a fixed order: per layer, weights row-major then biases.
template <typename F>
void for_each_parameter(Classifier& model, F&& fn) {
  for (auto& layer : model.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) fn(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) fn(layer.biases(r));
  }
}

/// Same traversal order as for_each_parameter.
inline std::vector<double> flatten(const ParameterGradient& grad) {
  std::vector<double> out;
  for (const auto& g : grad) {
    for (Eigen::Index r = 0; r < g.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < g.weights.cols(); ++c) out.push_back(g.weights(r, c));
    for (Eigen::Index r = 0; r < g.biases.size(); ++r) out.push_back(g.biases(r));
  }
  return out;
}

}  // namespace gradsal
