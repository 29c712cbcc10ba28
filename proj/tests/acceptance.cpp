#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "gradsal/gradsal.hpp"

using namespace gradsal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int criterion;
  bool pass;
  std::string title;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string describe(const PairwiseTest& t) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "t=%.3g p_adj=%.3g", t.result.t_statistic, t.result.p_adjusted);
  return buf;
}

/// a > b with adjusted p below alpha.
bool significantly_greater(const EvaluationReport& rep, int criterion, const std::string& a, const std::string& b,
                           double alpha, std::string& detail) {
  const PairwiseTest& t = rep.test(criterion, a, b);
  detail += " " + a + ">" + b + "[" + describe(t) + "]";
  return t.result.t_statistic > 0.0 && t.result.p_adjusted < alpha;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 1e-12, err = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::fabs(analytic[i]), std::fabs(numeric[i])});
    err = std::max(err, std::fabs(analytic[i] - numeric[i]));
  }
  return err / scale;
}

/// Randomized dense+ReLU fixture with every ReLU pre-activation at least 1e-3 from the kink.
std::pair<Classifier, Grid> gradient_fixture(RandomSource& rng) {
  while (true) {
    const std::size_t h = 2 + rng.uniform_index(4), w = 2 + rng.uniform_index(4);
    const int k = 2 + static_cast<int>(rng.uniform_index(4));
    Classifier m;
    if (rng.uniform() < 0.25) {
      m = make_multinomial_regression(h, w, k, rng);
    } else {
      std::vector<int> hidden;
      for (std::size_t d = 0, depth = 1 + rng.uniform_index(2); d < depth; ++d)
        hidden.push_back(2 + static_cast<int>(rng.uniform_index(8)));
      m = make_mlp(h, w, hidden, k, rng);
    }
    for (auto& layer : m.layers)
      for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases(i) = rng.normal(0.0, 0.3);
    m.temperature = std::exp(rng.uniform(-0.5, 1.0));
    const Grid x = sample_gaussian_grid(rng, h, w, 1.0);
    const auto pass = forward_batch(m, as_row(x));
    bool near_kink = false;
    for (std::size_t l = 0; l + 1 < m.layers.size(); ++l)
      near_kink = near_kink || (pass.pre[l].array().abs() < 1e-3).any();
    if (!near_kink) return {m, x};
  }
}

Outcome gradient_correctness() {
  RandomSource rng(20240601);
  const double h = 1e-5;
  const int fixtures = 120;
  double worst_input = 0.0, worst_param = 0.0;
  for (int f = 0; f < fixtures; ++f) {
    auto [model, x] = gradient_fixture(rng);
    const ClassId c = static_cast<ClassId>(rng.uniform_index(static_cast<std::size_t>(model.num_classes())));
    const Grid g = input_gradient(model, x, c);
    std::vector<double> numeric(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      Grid up = x, down = x;
      up[i] += h;
      down[i] -= h;
      numeric[i] = (forward(model, up).probabilities[static_cast<std::size_t>(c)] -
                    forward(model, down).probabilities[static_cast<std::size_t>(c)]) / (2 * h);
    }
    worst_input = std::max(worst_input, max_relative_error(g.values(), numeric));

    const std::vector<LabeledExample> batch{{x, c}};
    const double l2 = f % 2 == 0 ? 0.0 : 0.05;
    const auto analytic = flatten(parameter_gradient(model, batch, l2));
    auto objective = [&](const Classifier& m) {
      return std::log(forward(m, x).probabilities[static_cast<std::size_t>(c)]) - 0.5 * l2 * weight_sq_norm(m);
    };
    std::vector<double> pnum;
    Classifier probe = model;
    for_each_parameter(probe, [&](double& p) {
      const double keep = p;
      p = keep + h;
      const double fu = objective(probe);
      p = keep - h;
      const double fd = objective(probe);
      p = keep;
      pnum.push_back((fu - fd) / (2 * h));
    });
    worst_param = std::max(worst_param, max_relative_error(analytic, pnum));
  }
  const bool ok = worst_input < 1e-6 && worst_param < 1e-6;
  return {6, ok, "gradient correctness",
          std::to_string(fixtures) + " fixtures, max rel err input " + fmt("%.2e", worst_input) + ", parameters " +
              fmt("%.2e", worst_param) + " (bound 1e-6)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run over the default experiment"};
  std::string out_dir;
  std::string adversarial = "algorithm1";
  app.add_option("--out-dir", out_dir, "Run directory root (default: a fresh temporary directory)");
  app.add_option("--adversarial", adversarial, "Adversarial model under test")
      ->check(CLI::IsMember({"algorithm1", "pgd"}));
  CLI11_PARSE(app, argc, argv);

  ExperimentConfig config;
  config.training.adversarial_regime = regime_from_string(adversarial);
  const bool fresh = out_dir.empty();
  const fs::path root = fresh ? fs::temp_directory_path() / "gradsal_acceptance" : fs::path(out_dir);
  if (fresh) fs::remove_all(root);

  long noise_checks = 0, violations = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  PipelineHooks hooks;
  hooks.training.on_noise = [&](const Batch& delta, double eps) {
    for (Eigen::Index r = 0; r < delta.rows(); ++r) {
      const double excess = delta.row(r).norm() - eps;
      ++noise_checks;
      worst_excess = std::max(worst_excess, excess);
      if (excess > 1e-9) ++violations;
    }
  };
  hooks.on_stage = [](const std::string& stage, bool cached) {
    std::fprintf(stderr, "  [%s] %s\n", cached ? "cached" : "done", stage.c_str());
  };

  const auto t0 = std::chrono::steady_clock::now();
  Pipeline pipeline(config, root, hooks);
  pipeline.run_all();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const Dataset val = load_dataset(pipeline.path(paths::split_file(Split::validation)));
  const Dataset test = load_dataset(pipeline.path(paths::split_file(Split::test)));
  const EvaluationReport rep = pipeline.score_all();
  const std::string adv = adversarial_method(config);
  std::vector<Outcome> outcomes;

  {
    bool ok = test.size() == 3000 && seconds < 300.0;
    std::string detail = std::to_string(test.size()) + " test examples;";
    for (const auto& m : model_names()) {
      const double acc = accuracy(load_checkpoint(pipeline.path(paths::calibrated(m))), test);
      ok = ok && acc >= 0.995;
      detail += " " + m + " " + fmt("%.4f", acc);
    }
    detail += "; pipeline " + fmt("%.0f", seconds) + " s (limit 300)";
    outcomes.push_back({1, ok, "perfect synthetic classification", detail});
  }
  {
    std::string detail;
    bool ok = true;
    for (const char* other : {"nn_gradient", "random_noise_nn_gradient", "nn_smoothgrad"})
      ok = significantly_greater(rep, 1, adv, other, 0.01, detail) && ok;
    outcomes.push_back({2, ok, "criterion-1 adversarial ordering", detail});
  }
  {
    std::string detail;
    bool ok = significantly_greater(rep, 1, "linreg_gradient", "linreg_weights", 0.01, detail);
    ok = significantly_greater(rep, 1, "nn_gradient", "linreg_gradient", 0.01, detail) && ok;
    outcomes.push_back({3, ok, "criterion-1 model-class ordering", detail});
  }
  {
    std::string detail;
    bool ok = true;
    for (const char* other : {"nn_gradient", "nn_smoothgrad", "random_noise_nn_gradient", "pgd_nn_gradient",
                              "algorithm1_nn_gradient", "linreg_gradient"})
      ok = significantly_greater(rep, 1, other, "nn_gradient_times_input", 0.01, detail) && ok;
    outcomes.push_back({4, ok, "gradient x input inferiority", detail});
  }
  {
    std::string detail;
    bool ok = true;
    for (const char* other : {"nn_gradient", "random_noise_nn_gradient", "nn_smoothgrad"})
      ok = significantly_greater(rep, 2, adv, other, 0.01, detail) && ok;
    ok = significantly_greater(rep, 2, "nn_gradient", "random_noise_nn_gradient", 0.01, detail) && ok;
    const PairwiseTest& sg = rep.test(2, "nn_smoothgrad", "nn_gradient");
    detail += " smoothgrad~nn_gradient[" + describe(sg) + "]";
    ok = ok && sg.result.p_adjusted >= 0.05;
    outcomes.push_back({5, ok, "criterion-2 results", detail});
  }
  outcomes.push_back(gradient_correctness());
  {
    double worst = 0.0;
    const Batch x = test.inputs();
    for (const auto& m : model_names()) {
      const Classifier model = load_checkpoint(pipeline.path(paths::calibrated(m)));
      Batch sum = Batch::Zero(x.rows(), x.cols());
      for (ClassId c = 0; c < model.num_classes(); ++c)
        sum += input_gradient_batch(model, x, std::vector<ClassId>(static_cast<std::size_t>(x.rows()), c));
      worst = std::max(worst, sum.cwiseAbs().maxCoeff());
    }
    outcomes.push_back({7, worst <= 1e-10, "softmax conservation",
                        "max |sum_c grad p_c| = " + fmt("%.2e", worst) + " over " + std::to_string(test.size()) +
                            " examples x " + std::to_string(model_names().size()) + " models (bound 1e-10)"});
  }
  {
    const bool trained_here = noise_checks > 0;
    outcomes.push_back({8, trained_here && violations == 0, "adversarial-noise containment",
                        trained_here ? std::to_string(noise_checks) + " noise rows checked, " +
                                           std::to_string(violations) + " violations, max |delta|-eps = " +
                                           fmt("%.2e", worst_excess)
                                     : "training was cached; rerun without --out-dir to instrument it"});
  }
  {
    bool ok = true;
    std::string detail;
    const Batch x = val.inputs();
    const auto y = val.labels();
    for (const auto& m : model_names()) {
      const Classifier calibrated = load_checkpoint(pipeline.path(paths::calibrated(m)));
      Classifier unit = calibrated;
      unit.temperature = 1.0;
      const BatchFit before = evaluate_fit(unit, x, y);
      const BatchFit after = evaluate_fit(calibrated, x, y);
      const bool same_pred = predict_batch(unit, x) == predict_batch(calibrated, x);
      ok = ok && calibrated.calibrated && after.nll <= before.nll && after.accuracy == before.accuracy && same_pred;
      detail += " " + m + "(t=" + fmt("%.3g", calibrated.temperature) + " nll " + fmt("%.3g", before.nll) + "->" +
                fmt("%.3g", after.nll) + ")";
    }
    outcomes.push_back({9, ok, "temperature calibration", detail});
  }
  {
    const GroundTruth gt = ground_truth(templates_for(config));
    MethodMaps mm{test.labels(), {}};
    for (ClassId s : mm.labels) {
      std::vector<Grid> row;
      for (ClassId t = 0; t < config.data.num_classes; ++t)
        row.push_back(t == s ? gt.informative[static_cast<std::size_t>(s)] : gt.pairwise.at({s, t}));
      mm.maps.push_back(std::move(row));
    }
    const double r1 = score_method_criterion1("truth", mm, gt, config.evaluation.mask).mean;
    const double r2 = score_method_criterion2("truth", mm, gt, config.evaluation.mask).mean;
    outcomes.push_back({10, std::fabs(r1 - 1.0) <= 1e-12 && std::fabs(r2 - 1.0) <= 1e-12, "ground-truth oracle bound",
                        "criterion 1 mean r - 1 = " + fmt("%.1e", r1 - 1.0) + ", criterion 2 mean r - 1 = " +
                            fmt("%.1e", r2 - 1.0)});
  }

  int failed = 0;
  std::printf("acceptance run in %s (adversarial model: %s)\n", pipeline.run_dir().string().c_str(), adv.c_str());
  for (const auto& o : outcomes) {
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", o.criterion, o.pass ? "PASS" : "FAIL", o.title.c_str(), o.detail.c_str());
  }
  std::printf("criterion 11 N/A   real-data quantitative results: out of scope\n");
  std::printf("%d of %zu criteria passed\n", static_cast<int>(outcomes.size()) - failed, outcomes.size());
  return failed == 0 ? 0 : 1;
}
