#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gradsal/models.hpp"
#include "gradsal/numerics.hpp"

namespace gradsal {

enum class Method { linear_weights, gradient, gradient_times_input, smoothgrad };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::linear_weights: return "linear_weights";
    case Method::gradient: return "gradient";
    case Method::gradient_times_input: return "gradient_times_input";
    case Method::smoothgrad: return "smoothgrad";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "linear_weights") return Method::linear_weights;
  if (s == "gradient") return Method::gradient;
  if (s == "gradient_times_input") return Method::gradient_times_input;
  if (s == "smoothgrad") return Method::smoothgrad;
  throw std::invalid_argument("unknown saliency method '" + s + "'");
}

class UnsupportedMethodError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SaliencyRequest {
  Method method = Method::gradient;
  ClassId target_class = 0;
  double smoothgrad_sigma = 0.3;
  std::size_t smoothgrad_samples = 50;

  void validate() const {
    if (method != Method::smoothgrad) return;
    if (!(smoothgrad_sigma >= 0.0)) throw std::invalid_argument("smoothgrad sigma must be >= 0");
    if (smoothgrad_samples < 1) throw std::invalid_argument("smoothgrad needs at least one sample");
  }
};

struct SaliencyMap {
  Grid values;
  Method method = Method::gradient;
  ClassId target_class = 0;
  std::int64_t source_example = -1;
};

inline SaliencyMap linear_weight_map(const Classifier& model, ClassId c) {
  if (!model.is_linear()) throw UnsupportedMethodError("weight maps need a single-layer model");
  if (c < 0 || c >= model.num_classes()) throw std::out_of_range("invalid class id");
  const Eigen::RowVectorXd row = model.layers.front().weights.row(c);
  return {Grid(model.input_height, model.input_width, std::vector<double>(row.data(), row.data() + row.size())),
          Method::linear_weights, c, -1};
}

inline SaliencyMap gradient_map(const Classifier& model, const Grid& input, ClassId c) {
  return {input_gradient(model, input, c), Method::gradient, c, -1};
}

inline SaliencyMap gradient_times_input_map(const Classifier& model, const Grid& input, ClassId c) {
  return {hadamard(input_gradient(model, input, c), input), Method::gradient_times_input, c, -1};
}

/// Monte-Carlo estimate of E[grad_x p(c | x + noise)], noise ~ N(0, sigma^2 I).
inline SaliencyMap smoothgrad_map(const Classifier& model, const Grid& input, ClassId c, double sigma,
                                  std::size_t n_samples, RandomSource& rng) {
  if (n_samples < 1) throw std::invalid_argument("smoothgrad needs at least one sample");
  if (!(sigma >= 0.0)) throw std::invalid_argument("smoothgrad sigma must be >= 0");
  if (sigma == 0.0) return {input_gradient(model, input, c), Method::smoothgrad, c, -1};
  Grid acc(input.height(), input.width());
  for (std::size_t s = 0; s < n_samples; ++s) {
    acc += input_gradient(model, input + sample_gaussian_grid(rng, input.height(), input.width(), sigma), c);
  }
  return {acc * (1.0 / static_cast<double>(n_samples)), Method::smoothgrad, c, -1};
}

/// Stream id of the SmoothGrad noise for (example, target): the same map is produced whether it
/// is computed alone or inside any batch.
inline std::uint64_t smoothgrad_stream(std::uint64_t example_index, ClassId target, int num_classes) {
  return example_index * static_cast<std::uint64_t>(num_classes) + static_cast<std::uint64_t>(target);
}

namespace detail {

template <typename F>
void parallel_chunks(Eigen::Index n, int jobs, F&& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    fn(Eigen::Index{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const Eigen::Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Eigen::Index lo = w * chunk;
    const Eigen::Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

struct BatchSaliencyOptions {
  double smoothgrad_sigma = 0.3;
  std::size_t smoothgrad_samples = 50;
  std::uint64_t seed = 0;  // smoothgrad noise root
  int jobs = 1;
};

/// Rows are processed in fixed blocks of this size, whatever the worker count.
inline constexpr Eigen::Index kSaliencyBlockRows = 64;

/// Maps for row i of `inputs` toward targets[i]; example_ids[i] keys the SmoothGrad stream.
/// The result is bit-identical for every value of `jobs`.
inline Batch saliency_batch(const Classifier& model, Method method, const Eigen::Ref<const Batch>& inputs,
                                      std::span<const ClassId> targets, std::span<const std::uint64_t> example_ids,
                                      const BatchSaliencyOptions& opts = {}) {
  if (static_cast<Eigen::Index>(targets.size()) != inputs.rows()) throw ShapeError("one target per row");
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = inputs.cols();
  Batch out(n, d);
  if (method == Method::linear_weights) {
    if (!model.is_linear()) throw UnsupportedMethodError("weight maps need a single-layer model");
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = model.layers.front().weights.row(targets[static_cast<std::size_t>(i)]);
    return out;
  }
  if (method == Method::smoothgrad && static_cast<Eigen::Index>(example_ids.size()) != n) {
    throw ShapeError("smoothgrad needs one example id per row");
  }
  if (method == Method::smoothgrad && opts.smoothgrad_samples < 1) {
    throw std::invalid_argument("smoothgrad needs at least one sample");
  }
  auto run_block = [&](Eigen::Index lo, Eigen::Index hi) {
    const Batch x = inputs.middleRows(lo, hi - lo);
    const auto t = targets.subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo));
    switch (method) {
      case Method::gradient:
        out.middleRows(lo, hi - lo) = input_gradient_batch(model, x, t);
        break;
      case Method::gradient_times_input:
        out.middleRows(lo, hi - lo) = input_gradient_batch(model, x, t).cwiseProduct(x);
        break;
      case Method::smoothgrad: {
        if (opts.smoothgrad_sigma == 0.0) {
          out.middleRows(lo, hi - lo) = input_gradient_batch(model, x, t);
          break;
        }
        const RandomSource root(opts.seed);
        std::vector<RandomSource> streams;
        for (Eigen::Index i = lo; i < hi; ++i) {
          streams.push_back(root.derive(smoothgrad_stream(example_ids[static_cast<std::size_t>(i)],
                                                          targets[static_cast<std::size_t>(i)], model.num_classes())));
        }
        Batch acc = Batch::Zero(hi - lo, d);
        Batch noisy(hi - lo, d);
        for (std::size_t s = 0; s < opts.smoothgrad_samples; ++s) {
          for (Eigen::Index r = 0; r < hi - lo; ++r)
            for (Eigen::Index k = 0; k < d; ++k) noisy(r, k) = x(r, k) + streams[static_cast<std::size_t>(r)].normal(0.0, opts.smoothgrad_sigma);
          acc += input_gradient_batch(model, noisy, t);
        }
        out.middleRows(lo, hi - lo) = acc / static_cast<double>(opts.smoothgrad_samples);
        break;
      }
      case Method::linear_weights:
        break;
    }
  };
  const Eigen::Index blocks = (n + kSaliencyBlockRows - 1) / kSaliencyBlockRows;
  detail::parallel_chunks(blocks, opts.jobs, [&](Eigen::Index b0, Eigen::Index b1) {
    for (Eigen::Index b = b0; b < b1; ++b) run_block(b * kSaliencyBlockRows, std::min(n, (b + 1) * kSaliencyBlockRows));
  });
  return out;
}

inline SaliencyMap compute_saliency(const Classifier& model, const Grid& input, const SaliencyRequest& req,
                                    RandomSource& rng) {
  req.validate();
  switch (req.method) {
    case Method::linear_weights: return linear_weight_map(model, req.target_class);
    case Method::gradient: return gradient_map(model, input, req.target_class);
    case Method::gradient_times_input: return gradient_times_input_map(model, input, req.target_class);
    case Method::smoothgrad:
      return smoothgrad_map(model, input, req.target_class, req.smoothgrad_sigma, req.smoothgrad_samples, rng);
  }
  throw UnsupportedMethodError("unknown method");
}

}  // namespace gradsal
