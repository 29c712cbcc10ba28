#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gradsal {

/// Raised when a statistic is undefined for its input (zero variance, too few samples).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A 2D scalar field stored row-major. Used for input images, templates and saliency maps.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), values_(height * width, fill) {}
  Grid(std::size_t height, std::size_t width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != height_ * width_) {
      throw ShapeError("grid values do not match " + std::to_string(height_) + "x" +
                       std::to_string(width_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& at(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  Grid& operator+=(const Grid& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }
  Grid& operator-=(const Grid& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }
  Grid& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend Grid operator+(Grid a, const Grid& b) { return a += b; }
  friend Grid operator-(Grid a, const Grid& b) { return a -= b; }
  friend Grid operator*(Grid a, double s) { return a *= s; }
  friend Grid operator-(Grid a) { return a *= -1.0; }
  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  void require_same_shape(const Grid& other) const {
    if (!same_shape(other)) throw ShapeError("grid shape mismatch");
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

inline Grid hadamard(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw ShapeError("grid shape mismatch");
  Grid out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Seeded mt19937_64 stream. Sub-streams derived with `derive` are decorrelated by
/// SplitMix64 mixing of (seed, tag), so data, init and noise draws never share state.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  RandomSource derive(std::uint64_t tag) const { return RandomSource(mix(seed_ ^ mix(tag + 1))); }
  RandomSource derive(std::string_view tag) const { return derive(fnv1a(tag)); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return normal_(engine_, std::normal_distribution<double>::param_type(mean, stddev));
  }
  /// Uniform on [lo, hi).
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t uniform_index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline double mean(std::span<const double> a) {
  if (a.empty()) throw DegenerateInputError("mean of empty sample");
  return std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
}

/// Unbiased (n - 1) sample standard deviation.
inline double sample_stddev(std::span<const double> a) {
  if (a.size() < 2) throw DegenerateInputError("standard deviation needs at least two values");
  const double m = mean(a);
  double ss = 0.0;
  for (double x : a) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(a.size() - 1));
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  if (a.size() < 2) throw DegenerateInputError("pearson: need at least two values");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateInputError("pearson: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw ShapeError("pearson: grid shape mismatch");
  return pearson(a.values(), b.values());
}

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double incomplete_beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * detail::incomplete_beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return std::clamp(regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t)), 0.0, 1.0);
}

inline double t_cdf(double t, double df) {
  if (df < 1.0) throw std::invalid_argument("t_cdf: df must be >= 1");
  if (t == 0.0) return 0.5;
  const double tail = 0.5 * t_two_sided_p(t, df);
  return t > 0.0 ? 1.0 - tail : tail;
}

struct TestResult {
  double t_statistic = 0.0;
  std::size_t degrees_of_freedom = 0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
};

inline double bonferroni(double p, std::size_t num_comparisons) {
  return std::min(1.0, p * static_cast<double>(std::max<std::size_t>(num_comparisons, 1)));
}

inline TestResult with_bonferroni(TestResult r, std::size_t num_comparisons) {
  r.p_adjusted = bonferroni(r.p_value, num_comparisons);
  return r;
}

/// Two-sided paired t-test on a - b. Identical samples give t = 0, p = 1; a constant
/// nonzero difference has no defined t and raises DegenerateInputError.
inline TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired_t_test: length mismatch");
  if (a.size() < 2) throw DegenerateInputError("paired_t_test: need at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const std::size_t df = a.size() - 1;
  const double md = mean(diff);
  double ss = 0.0;
  for (double d : diff) ss += (d - md) * (d - md);
  if (ss == 0.0) {
    if (std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; })) {
      return {0.0, df, 1.0, 1.0};
    }
    throw DegenerateInputError("paired_t_test: zero-variance differences");
  }
  const double se = std::sqrt(ss / static_cast<double>(df)) / std::sqrt(static_cast<double>(a.size()));
  const double t = md / se;
  const double p = t_two_sided_p(t, static_cast<double>(df));
  return {t, df, p, p};
}

inline Grid sample_gaussian_grid(RandomSource& rng, std::size_t height, std::size_t width,
                                 double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sample_gaussian_grid: sigma must be >= 0");
  Grid g(height, width);
  if (sigma == 0.0) return g;
  for (double& v : g.values()) v = rng.normal(0.0, sigma);
  return g;
}

/// Uniform point in the closed L2 ball of radius epsilon: Gaussian direction, radius eps * U^(1/dim).
inline std::vector<double> sample_uniform_l2_ball(RandomSource& rng, std::size_t dim,
                                                  double epsilon) {
  if (dim == 0) throw std::invalid_argument("sample_uniform_l2_ball: dim must be >= 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("sample_uniform_l2_ball: epsilon must be >= 0");
  std::vector<double> v(dim, 0.0);
  if (epsilon == 0.0) return v;
  double norm = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    norm = l2_norm(v);
  } while (norm == 0.0);
  const double radius = epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
  for (double& x : v) x *= radius / norm;
  // rounding can push the norm a hair above epsilon
  for (double n2 = l2_norm(v); n2 > epsilon; n2 = l2_norm(v)) {
    for (double& x : v) x *= (epsilon / n2) * (1.0 - 1e-15);
  }
  return v;
}

/// Linear-interpolated percentile (0..100) of a sample.
inline double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw DegenerateInputError("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace gradsal
