#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradsal/numerics.hpp"
#include "gradsal/synthdata.hpp"

namespace gradsal {

struct CriterionScore {
  std::string method;
  std::vector<double> correlations;  // one per test example, in dataset order
  double mean = 0.0;
  double standard_error = 0.0;
};

inline CriterionScore make_score(std::string method, std::vector<double> correlations) {
  CriterionScore s{std::move(method), std::move(correlations), 0.0, 0.0};
  s.mean = gradsal::mean(s.correlations);
  s.standard_error = s.correlations.size() > 1
                         ? sample_stddev(s.correlations) / std::sqrt(static_cast<double>(s.correlations.size()))
                         : 0.0;
  return s;
}

/// Optional restriction of correlations to a pixel subset (a brain mask). Empty = all pixels.
using PixelMask = std::vector<std::size_t>;

namespace detail {

inline double masked_pearson(const Grid& a, const Grid& b, const PixelMask& mask) {
  if (!a.same_shape(b)) throw ShapeError("saliency map and ground truth differ in shape");
  if (mask.empty()) return pearson(a, b);
  std::vector<double> xa, xb;
  xa.reserve(mask.size());
  xb.reserve(mask.size());
  for (std::size_t i : mask) {
    xa.push_back(a.values()[i]);
    xb.push_back(b.values()[i]);
  }
  return pearson(xa, xb);
}

}  // namespace detail

/// Correlation of each example's correct-class map with its class informative map.
inline CriterionScore score_criterion1(const std::string& method, std::span<const Grid> maps,
                                       std::span<const ClassId> labels, const GroundTruth& truth,
                                       const PixelMask& mask = {}) {
  if (maps.size() != labels.size()) throw ShapeError("criterion 1: one map per example");
  std::vector<double> r(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= truth.informative.size()) throw std::out_of_range("criterion 1: label out of range");
    r[i] = detail::masked_pearson(maps[i], truth.informative[c], mask);
  }
  return make_score(method, std::move(r));
}

/// Maps toward every other class, for one example.
using TargetMaps = std::map<ClassId, Grid>;

/// Mean correlation per (source, target) pair, for the disaggregated criterion-2 table.
struct PairBreakdown {
  std::map<std::pair<ClassId, ClassId>, std::vector<double>> correlations;
};

/// Per example of class s: mean over targets t != s of r(map toward t, template_t - template_s).
inline CriterionScore score_criterion2(const std::string& method, std::span<const TargetMaps> maps,
                                       std::span<const ClassId> labels, const GroundTruth& truth,
                                       const PixelMask& mask = {}, PairBreakdown* breakdown = nullptr) {
  if (maps.size() != labels.size()) throw ShapeError("criterion 2: one map set per example");
  const auto k = static_cast<ClassId>(truth.informative.size());
  std::vector<double> r(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const ClassId s = labels[i];
    double acc = 0.0;
    for (ClassId t = 0; t < k; ++t) {
      if (t == s) continue;
      const auto it = maps[i].find(t);
      if (it == maps[i].end()) {
        throw std::invalid_argument("criterion 2: example " + std::to_string(i) + " lacks a map toward class " +
                                    std::to_string(t));
      }
      const double rt = detail::masked_pearson(it->second, truth.pairwise.at({s, t}), mask);
      if (breakdown) breakdown->correlations[{s, t}].push_back(rt);
      acc += rt;
    }
    r[i] = acc / static_cast<double>(k - 1);
  }
  return make_score(method, std::move(r));
}

struct PairwiseTest {
  int criterion = 1;
  std::size_t method_a = 0;  // indices into EvaluationReport::methods
  std::size_t method_b = 0;
  TestResult result;
  bool exact_dominance = false;  // constant nonzero paired difference: t = +-inf, p = 0
};

enum class BonferroniFamily { per_criterion, global };

struct EvaluationReport {
  std::vector<std::string> methods;
  std::vector<CriterionScore> criterion1;  // same order as methods; empty if disabled
  std::vector<CriterionScore> criterion2;
  std::vector<PairwiseTest> tests;         // both orders of every pair, per criterion
  std::map<int, std::size_t> num_comparisons;

  const std::vector<CriterionScore>& scores(int criterion) const {
    return criterion == 1 ? criterion1 : criterion2;
  }

  std::size_t method_index(const std::string& name) const {
    for (std::size_t i = 0; i < methods.size(); ++i)
      if (methods[i] == name) return i;
    throw std::out_of_range("no method named '" + name + "' in report");
  }

  const PairwiseTest& test(int criterion, const std::string& a, const std::string& b) const {
    const auto ia = method_index(a);
    const auto ib = method_index(b);
    for (const auto& t : tests)
      if (t.criterion == criterion && t.method_a == ia && t.method_b == ib) return t;
    throw std::out_of_range("no test for " + a + " vs " + b);
  }
};

/// Paired test that maps a constant nonzero difference to exact dominance instead of failing.
inline PairwiseTest paired_comparison(const CriterionScore& a, const CriterionScore& b) {
  PairwiseTest out;
  if (a.correlations.size() != b.correlations.size()) {
    throw ShapeError("methods '" + a.method + "' and '" + b.method + "' are not paired by example");
  }
  try {
    out.result = paired_t_test(a.correlations, b.correlations);
  } catch (const DegenerateInputError&) {
    const double d = a.correlations.front() - b.correlations.front();
    out.exact_dominance = true;
    out.result = {d > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(),
                  a.correlations.size() - 1, 0.0, 0.0};
  }
  return out;
}

/// All ordered method pairs per criterion, Bonferroni-adjusted over unordered pairs.
inline EvaluationReport compare_methods(std::vector<CriterionScore> criterion1, std::vector<CriterionScore> criterion2,
                                        BonferroniFamily family = BonferroniFamily::per_criterion) {
  EvaluationReport rep;
  const auto& first = criterion1.empty() ? criterion2 : criterion1;
  for (const auto& s : first) rep.methods.push_back(s.method);
  if (!criterion1.empty() && !criterion2.empty()) {
    if (criterion1.size() != criterion2.size()) throw std::invalid_argument("criteria list different methods");
    for (std::size_t i = 0; i < criterion1.size(); ++i)
      if (criterion1[i].method != criterion2[i].method) throw std::invalid_argument("criteria list different methods");
  }
  rep.criterion1 = std::move(criterion1);
  rep.criterion2 = std::move(criterion2);

  const std::size_t m = rep.methods.size();
  const std::size_t pairs = m * (m - 1) / 2;
  const std::size_t criteria = (rep.criterion1.empty() ? 0 : 1) + (rep.criterion2.empty() ? 0 : 1);
  for (int c : {1, 2}) {
    const auto& scores = rep.scores(c);
    if (scores.empty()) continue;
    const std::size_t n_cmp = family == BonferroniFamily::global ? pairs * criteria : pairs;
    rep.num_comparisons[c] = n_cmp;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        if (a == b) continue;
        PairwiseTest t = paired_comparison(scores[a], scores[b]);
        t.criterion = c;
        t.method_a = a;
        t.method_b = b;
        t.result = with_bonferroni(t.result, n_cmp);
        rep.tests.push_back(t);
      }
    }
  }
  return rep;
}

}  // namespace gradsal
