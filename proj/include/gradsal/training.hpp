#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "gradsal/models.hpp"
#include "gradsal/numerics.hpp"
#include "gradsal/synthdata.hpp"

namespace gradsal {

enum class Regime { plain, random_ball, pgd, algorithm1 };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::plain: return "plain";
    case Regime::random_ball: return "random_ball";
    case Regime::pgd: return "pgd";
    case Regime::algorithm1: return "algorithm1";
  }
  return "unknown";
}

inline Regime regime_from_string(const std::string& s) {
  if (s == "plain") return Regime::plain;
  if (s == "random_ball") return Regime::random_ball;
  if (s == "pgd") return Regime::pgd;
  if (s == "algorithm1") return Regime::algorithm1;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainingConfig {
  Regime regime = Regime::plain;
  double epsilon = 1.0;         // noise bound for random_ball, pgd and algorithm1
  int hop_steps = 3;            // m, algorithm1 only
  double learning_rate = 1e-3;  // tau
  double l2_coefficient = 1e-3; // lambda
  std::size_t batch_size = 0;   // 0 = full batch
  int max_epochs = 200;
  int patience = 20;            // epochs without validation NLL improvement; 0 disables
  AdamConfig adam;
  int pgd_steps = 3;
  double pgd_step_size = 0.0;   // 0 = 2 * epsilon / pgd_steps
  std::uint64_t seed = 0;

  double effective_pgd_step_size() const {
    return pgd_step_size > 0.0 ? pgd_step_size : 2.0 * epsilon / static_cast<double>(pgd_steps);
  }

  void validate() const {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
    if (regime == Regime::algorithm1 && hop_steps < 1) throw std::invalid_argument("hop_steps must be >= 1");
    if (regime == Regime::pgd && pgd_steps < 1) throw std::invalid_argument("pgd_steps must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(l2_coefficient >= 0.0)) throw std::invalid_argument("l2_coefficient must be >= 0");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (patience < 0) throw std::invalid_argument("patience must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw std::invalid_argument("adam betas must be in [0, 1)");
    }
    if (!(adam.epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be > 0");
  }
};

/// Adam over every classifier parameter, fed ascent directions of the log posterior.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(Classifier& model, const ParameterGradient& ascent, double lr) {
    if (first_.empty()) {
      for (const auto& layer : model.layers) {
        first_.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                          Eigen::VectorXd::Zero(layer.biases.size())});
      }
      second_ = first_;
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      update(model.layers[l].weights, ascent[l].weights, first_[l].weights, second_[l].weights, lr, c1, c2);
      update(model.layers[l].biases, ascent[l].biases, first_[l].biases, second_[l].biases, lr, c1, c2);
    }
  }

  long steps() const { return steps_; }

 private:
  template <typename P, typename G>
  void update(P& param, const G& ascent, P& m, P& v, double lr, double c1, double c2) const {
    // minimizing the negative objective: g = -ascent
    m = cfg_.beta1 * m - (1.0 - cfg_.beta1) * ascent;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * ascent.cwiseProduct(ascent);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  }

  AdamConfig cfg_;
  long steps_ = 0;
  std::vector<LayerGradient> first_;
  std::vector<LayerGradient> second_;
};

/// Observation points for instrumented runs. `on_noise` sees the per-example noise rows after
/// each PGD step or Algorithm 1 inner iteration.
struct TrainingHooks {
  std::function<void(const Batch& delta, double epsilon)> on_noise;
  std::function<void(const Classifier& model)> on_update;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = std::numeric_limits<double>::quiet_NaN();
  double val_nll = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedModel {
  Classifier classifier;
  std::vector<EpochRecord> log;
  TrainingConfig config;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, std::string state_dump)
      : std::runtime_error(what), dump_(std::move(state_dump)) {}
  const std::string& state_dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

inline double accuracy(const Classifier& model, const Eigen::Ref<const Batch>& inputs,
                       std::span<const ClassId> labels) {
  const auto pred = predict_batch(model, inputs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline double accuracy(const Classifier& model, const Dataset& ds) {
  const auto y = ds.labels();
  return accuracy(model, ds.inputs(), y);
}

namespace detail {

// Rescale any row whose norm exceeds epsilon back onto the sphere.
inline void project_rows(Batch& delta, double epsilon) {
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const double n = delta.row(i).norm();
    if (n > epsilon) delta.row(i) *= epsilon / n;
  }
}

// Step every row against its normalized gradient; rows with zero gradient are left alone.
inline void descend_rows(Batch& delta, const Batch& grad, std::span<const double> step_sizes) {
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    const double g = grad.row(i).norm();
    if (g > 0.0) delta.row(i) -= step_sizes[static_cast<std::size_t>(i)] * grad.row(i) / g;
  }
}

}  // namespace detail

inline LabeledExample perturb_random_ball(const LabeledExample& example, double epsilon, RandomSource& rng) {
  const auto noise = sample_uniform_l2_ball(rng, example.input.size(), epsilon);
  LabeledExample out = example;
  for (std::size_t i = 0; i < noise.size(); ++i) out.input[i] += noise[i];
  return out;
}

/// Non-targeted L2 PGD on p(y | x + delta): normalized gradient descent steps of `step_size`,
/// each followed by projection onto the epsilon ball. Rows are independent examples.
inline Batch pgd_attack(const Classifier& model, const Eigen::Ref<const Batch>& inputs,
                        std::span<const ClassId> labels, double epsilon, int steps, double step_size,
                        const TrainingHooks* hooks = nullptr) {
  if (steps < 1) throw std::invalid_argument("pgd_attack: steps must be >= 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("pgd_attack: epsilon must be >= 0");
  Batch delta = Batch::Zero(inputs.rows(), inputs.cols());
  if (epsilon == 0.0) return delta;
  const std::vector<double> sizes(static_cast<std::size_t>(inputs.rows()), step_size);
  for (int s = 0; s < steps; ++s) {
    const Batch shifted = inputs + delta;
    const Batch grad = input_gradient_batch(model, shifted, labels);
    detail::descend_rows(delta, grad, sizes);
    detail::project_rows(delta, epsilon);
    if (hooks && hooks->on_noise) hooks->on_noise(delta, epsilon);
  }
  return delta;
}

inline Grid pgd_attack(const Classifier& model, const Grid& input, ClassId label, double epsilon, int steps,
                       double step_size) {
  const std::array<ClassId, 1> y{label};
  const Batch d = pgd_attack(model, as_row(input), y, epsilon, steps, step_size);
  return Grid(input.height(), input.width(), std::vector<double>(d.data(), d.data() + d.size()));
}

struct AdversarialState {
  Batch delta;  // one row per example of the batch, as left after the last inner iteration
};

/// Lines 4-16 of m-step minibatch adversarial training for one minibatch: noise starts at zero,
/// then m times: parameter update at x + delta, then a random-length normalized step against
/// grad_x p(y | x + delta) per example, rescaled into the epsilon ball.
inline AdversarialState algorithm1_minibatch(Classifier& model, const Eigen::Ref<const Batch>& inputs,
                                             std::span<const ClassId> labels, double epsilon, int hop_steps,
                                             Adam& optimizer, double learning_rate, double l2_coefficient,
                                             RandomSource& rng, const TrainingHooks* hooks = nullptr) {
  if (hop_steps < 1) throw std::invalid_argument("hop_steps must be >= 1");
  AdversarialState state{Batch::Zero(inputs.rows(), inputs.cols())};
  std::vector<double> nu(static_cast<std::size_t>(inputs.rows()), 0.0);
  for (int i = 0; i < hop_steps; ++i) {
    const Batch shifted = inputs + state.delta;
    optimizer.step(model, log_posterior_gradient(model, shifted, labels, l2_coefficient), learning_rate);
    if (hooks && hooks->on_update) hooks->on_update(model);
    if (epsilon > 0.0) {
      const Batch g_adv = input_gradient_batch(model, shifted, labels);
      for (double& v : nu) v = rng.uniform(0.0, epsilon);
      detail::descend_rows(state.delta, g_adv, nu);
      detail::project_rows(state.delta, epsilon);
    }
    if (hooks && hooks->on_noise) hooks->on_noise(state.delta, epsilon);
  }
  return state;
}

/// One pass over `minibatches` (index lists into inputs). Returns the noise of every example.
inline AdversarialState algorithm1_epoch(Classifier& model, const Eigen::Ref<const Batch>& inputs,
                                         std::span<const ClassId> labels,
                                         const std::vector<std::vector<std::size_t>>& minibatches, double epsilon,
                                         int hop_steps, Adam& optimizer, double learning_rate,
                                         double l2_coefficient, RandomSource& rng,
                                         const TrainingHooks* hooks = nullptr) {
  AdversarialState all{Batch::Zero(inputs.rows(), inputs.cols())};
  for (const auto& idx : minibatches) {
    Batch xb(static_cast<Eigen::Index>(idx.size()), inputs.cols());
    std::vector<ClassId> yb(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      xb.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(idx[r]));
      yb[r] = labels[idx[r]];
    }
    const auto st = algorithm1_minibatch(model, xb, yb, epsilon, hop_steps, optimizer, learning_rate,
                                         l2_coefficient, rng, hooks);
    for (std::size_t r = 0; r < idx.size(); ++r)
      all.delta.row(static_cast<Eigen::Index>(idx[r])) = st.delta.row(static_cast<Eigen::Index>(r));
  }
  return all;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> make_minibatches(std::size_t n, std::size_t batch_size,
                                                              RandomSource& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (batch_size == 0 || batch_size >= n) return {order};
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return batches;
}

inline std::string dump_state(const Classifier& model, const EpochRecord& rec) {
  std::ostringstream os;
  os << "epoch=" << rec.epoch << " loss=" << rec.loss << " train_acc=" << rec.train_acc
     << " temperature=" << model.temperature;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    os << "\nlayer " << l << ": |W|max=" << layer.weights.cwiseAbs().maxCoeff()
       << " |b|max=" << layer.biases.cwiseAbs().maxCoeff() << " finite=" << layer.weights.allFinite();
  }
  return os.str();
}

}  // namespace detail

struct ValidationData {
  Batch inputs;
  std::vector<ClassId> labels;
};

/// Adam on mean NLL + (lambda/2)|W|^2 with the regime's input perturbation applied per batch visit.
/// Bit-reproducible given (config, data, initial model).
inline TrainedModel train(const TrainingConfig& config, const Dataset& data, Classifier model,
                          const Dataset* validation = nullptr, const TrainingHooks* hooks = nullptr) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  model.validate();
  if (data.height * data.width != model.input_size()) throw ShapeError("dataset does not match model input");

  const Batch x = data.inputs();
  const auto y = data.labels();
  ValidationData val;
  if (validation && validation->size() > 0) {
    val.inputs = validation->inputs();
    val.labels = validation->labels();
  }

  const RandomSource root(config.seed);
  RandomSource shuffle_rng = root.derive("shuffle");
  RandomSource noise_rng = root.derive("noise");
  Adam optimizer(config.adam);
  TrainedModel result{model, {}, config};
  Classifier& net = result.classifier;

  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = detail::make_minibatches(data.size(), config.batch_size, shuffle_rng);
    if (config.regime == Regime::algorithm1) {
      algorithm1_epoch(net, x, y, batches, config.epsilon, config.hop_steps, optimizer, config.learning_rate,
                       config.l2_coefficient, noise_rng, hooks);
    } else {
      for (const auto& idx : batches) {
        Batch xb(static_cast<Eigen::Index>(idx.size()), x.cols());
        std::vector<ClassId> yb(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
          xb.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
          yb[r] = y[idx[r]];
        }
        if (config.regime == Regime::random_ball) {
          for (Eigen::Index r = 0; r < xb.rows(); ++r) {
            const auto noise = sample_uniform_l2_ball(noise_rng, static_cast<std::size_t>(xb.cols()), config.epsilon);
            xb.row(r) += Eigen::Map<const Eigen::RowVectorXd>(noise.data(), xb.cols());
          }
        } else if (config.regime == Regime::pgd) {
          xb += pgd_attack(net, xb, yb, config.epsilon, config.pgd_steps, config.effective_pgd_step_size(), hooks);
        }
        optimizer.step(net, log_posterior_gradient(net, xb, yb, config.l2_coefficient), config.learning_rate);
        if (hooks && hooks->on_update) hooks->on_update(net);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const BatchFit fit = evaluate_fit(net, x, y);
    rec.loss = fit.nll + 0.5 * config.l2_coefficient * weight_sq_norm(net);
    rec.train_acc = fit.accuracy;
    if (val.inputs.rows() > 0) {
      const BatchFit vfit = evaluate_fit(net, val.inputs, val.labels);
      rec.val_acc = vfit.accuracy;
      rec.val_nll = vfit.nll;
    }
    result.log.push_back(rec);
    if (!std::isfinite(rec.loss)) {
      throw TrainingDivergence("non-finite training loss at epoch " + std::to_string(epoch),
                               detail::dump_state(net, rec));
    }
    if (config.patience > 0 && val.inputs.rows() > 0) {
      if (rec.val_nll < best_val) {
        best_val = rec.val_nll;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    }
  }
  return result;
}

struct CalibrationResult {
  double temperature = 1.0;
  double nll_at_one = 0.0;
  double nll_fitted = 0.0;
};

/// NLL of labels under softmax(logits / t).
inline double nll_at_temperature(const Batch& logits, std::span<const ClassId> labels, double t) {
  return mean_nll_of_logits(logits, labels, t);
}

/// Search interval for the fitted temperature. On perfectly separated validation data the NLL
/// falls monotonically as t -> 0, so the lower bound is what keeps probabilities unsaturated.
struct TemperatureSearch {
  double min_temperature = 1.0;
  double max_temperature = 1e3;

  void validate() const {
    if (!(min_temperature > 0.0 && min_temperature <= 1.0 && max_temperature >= 1.0 &&
          std::isfinite(max_temperature))) {
      throw std::invalid_argument("temperature search interval must satisfy 0 < min <= 1 <= max");
    }
  }
};

/// Fit t by Brent minimization of validation NLL over log t, with parameters frozen.
/// t = 1 is kept whenever the fit is not strictly better.
inline CalibrationResult calibrate_temperature(Classifier& model, const Eigen::Ref<const Batch>& inputs,
                                               std::span<const ClassId> labels,
                                               const TemperatureSearch& search = {}) {
  if (inputs.rows() == 0) throw std::invalid_argument("calibrate_temperature: empty validation set");
  search.validate();
  Classifier unit = model;
  unit.temperature = 1.0;
  const Batch logits = forward_batch(unit, inputs).logits();
  CalibrationResult out;
  out.nll_at_one = nll_at_temperature(logits, labels, 1.0);
  out.temperature = 1.0;
  out.nll_fitted = out.nll_at_one;
  if (search.max_temperature > search.min_temperature) {
    auto objective = [&](double log_t) { return nll_at_temperature(logits, labels, std::exp(log_t)); };
    const auto [log_t, nll] = boost::math::tools::brent_find_minima(
        objective, std::log(search.min_temperature), std::log(search.max_temperature), 40);
    if (nll < out.nll_at_one) {
      out.temperature = std::exp(log_t);
      out.nll_fitted = nll;
    }
  }
  model.temperature = out.temperature;
  model.calibrated = true;
  return out;
}

inline CalibrationResult calibrate_temperature(Classifier& model, const Dataset& validation,
                                               const TemperatureSearch& search = {}) {
  const auto y = validation.labels();
  return calibrate_temperature(model, validation.inputs(), y, search);
}

}  // namespace gradsal
