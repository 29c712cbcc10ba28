#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradsal/gradsal.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDivergence = 4, kIo = 5 };

struct GlobalOptions {
  std::string config_path;
  std::string out_dir = "runs";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool quiet = false;
};

gradsal::ExperimentConfig resolve_config(const GlobalOptions& g) {
  nlohmann::json doc = gradsal::config_to_json(gradsal::ExperimentConfig{});
  if (!g.config_path.empty()) {
    std::string text;
    try {
      text = gradsal::read_file(g.config_path);
    } catch (const gradsal::IoError&) {
      throw gradsal::IoError("cannot read config " + g.config_path);
    }
    nlohmann::json user = nlohmann::json::parse(text, nullptr, false);
    if (user.is_discarded()) throw gradsal::ConfigError(g.config_path + " is not valid JSON");
    // validate the file on its own so unknown keys are reported against it
    gradsal::config_from_json(user);
    doc = user;
  }
  for (const auto& o : g.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw gradsal::ConfigError("--set expects KEY=VALUE, got '" + o + "'");
    gradsal::apply_override(doc, o.substr(0, eq), o.substr(eq + 1));
  }
  if (g.seed) doc["seed"] = *g.seed;
  if (g.jobs) doc["run"]["jobs"] = *g.jobs;
  return gradsal::config_from_json(doc);
}

gradsal::PipelineHooks progress_hooks(bool quiet) {
  gradsal::PipelineHooks hooks;
  if (!quiet) {
    hooks.on_stage = [](const std::string& stage, bool cached) {
      std::fprintf(stderr, "[%s] %s\n", cached ? "cached" : "done", stage.c_str());
    };
  }
  return hooks;
}

int tune_smoothgrad(gradsal::Pipeline& p) {
  using namespace gradsal;
  const ExperimentConfig& c = p.config();
  const Dataset val = load_dataset(p.path(paths::split_file(Split::validation)));
  const Classifier model = load_checkpoint(p.path(paths::calibrated("nn_plain")));
  const GroundTruth gt = ground_truth(templates_for(c));
  std::ostringstream csv;
  csv << "sigma,criterion1_mean_r,criterion2_mean_r,combined\n";
  double best_sigma = 0.0, best_score = -2.0;
  for (double sigma : c.saliency.sigma_grid) {
    BatchSaliencyOptions opts = p.smoothgrad_options();
    opts.smoothgrad_sigma = sigma;
    const MethodMaps mm = compute_method_maps(model, Method::smoothgrad, val, opts);
    double total = 0.0;
    int used = 0;
    double r1 = std::numeric_limits<double>::quiet_NaN(), r2 = r1;
    if (c.evaluation.criterion1) {
      r1 = score_method_criterion1("smoothgrad", mm, gt, c.evaluation.mask).mean;
      total += r1;
      ++used;
    }
    if (c.evaluation.criterion2) {
      r2 = score_method_criterion2("smoothgrad", mm, gt, c.evaluation.mask).mean;
      total += r2;
      ++used;
    }
    const double combined = total / used;
    csv << format_real(sigma) << ',' << format_real(r1) << ',' << format_real(r2) << ',' << format_real(combined) << '\n';
    if (combined > best_score) {
      best_score = combined;
      best_sigma = sigma;
    }
  }
  const std::string out = p.path("tuning/smoothgrad.csv");
  std::filesystem::create_directories(std::filesystem::path(out).parent_path());
  write_text(csv.str(), out);
  std::cout << csv.str() << "best smoothgrad_sigma = " << format_real(best_sigma) << " (wrote " << out << ")\n";
  return kOk;
}

int tune_l2(gradsal::Pipeline& p, const std::vector<std::string>& models, const std::vector<double>& grid) {
  using namespace gradsal;
  const Dataset train_set = load_dataset(p.path(paths::split_file(Split::train)));
  const Dataset val_set = load_dataset(p.path(paths::split_file(Split::validation)));
  std::filesystem::create_directories(p.path("tuning"));
  for (const auto& m : models) {
    std::ostringstream csv;
    csv << "l2_coefficient,epochs,val_nll,val_acc\n";
    double best_l2 = grid.front(), best_nll = std::numeric_limits<double>::infinity();
    for (double l2 : grid) {
      TrainingConfig tc = seeded_training_config(p.config(), m);
      tc.l2_coefficient = l2;
      const TrainedModel tm = train(tc, train_set, initial_model(p.config(), m), &val_set);
      const EpochRecord& last = tm.log.back();
      csv << format_real(l2) << ',' << last.epoch << ',' << format_real(last.val_nll) << ','
          << format_real(last.val_acc) << '\n';
      if (last.val_nll < best_nll) {
        best_nll = last.val_nll;
        best_l2 = l2;
      }
    }
    const std::string out = p.path("tuning/l2_" + m + ".csv");
    write_text(csv.str(), out);
    std::cout << m << "\n" << csv.str() << "best l2_coefficient = " << format_real(best_l2) << " (wrote " << out << ")\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saliency-map interpretability experiments on synthetic activation data"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)");
  app.add_option("--out-dir", g.out_dir, "Directory holding run-<hash> folders")->capture_default_str();
  app.add_option("--seed", g.seed, "Root seed (overrides config)");
  app.add_option("--jobs", g.jobs, "Worker threads within a stage")->check(CLI::PositiveNumber);
  app.add_option("--set", g.overrides, "Override a config path, e.g. --set training.pgd.epsilon=0.5");
  app.add_flag("-q,--quiet", g.quiet, "Suppress stage progress");

  auto* generate = app.add_subcommand("generate-data", "Write train/validation/test sets and ground-truth maps");
  std::vector<std::string> train_models;
  auto* train = app.add_subcommand("train", "Train the linear model and the NN regimes");
  train->add_option("--model", train_models, "Models to train (default: all)")
      ->check(CLI::IsMember(gradsal::model_names()));
  auto* calibrate = app.add_subcommand("calibrate", "Fit softmax temperatures on validation data");
  std::vector<std::string> methods;
  auto* saliency = app.add_subcommand("saliency", "Compute per-example saliency maps on the test set");
  std::vector<std::string> method_names;
  for (const auto& s : gradsal::method_specs()) method_names.push_back(s.name);
  saliency->add_option("--method", methods, "Methods to compute (default: all)")->check(CLI::IsMember(method_names));
  auto* evaluate = app.add_subcommand("evaluate", "Score maps against ground truth and run paired tests");
  auto* report = app.add_subcommand("report", "Render average-map figures and the summary");
  auto* run_all = app.add_subcommand("run-all", "Run every stage, reusing cached results");
  auto* tune_sg = app.add_subcommand("tune-smoothgrad", "Grid-search the SmoothGrad sigma on validation data");
  std::vector<std::string> tune_models;
  std::vector<double> l2_grid{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  auto* tune_l2_cmd = app.add_subcommand("tune-l2", "Pick L2 coefficients by validation NLL");
  tune_l2_cmd->add_option("--model", tune_models, "Models to tune (default: all)")
      ->check(CLI::IsMember(gradsal::model_names()));
  tune_l2_cmd->add_option("--grid", l2_grid, "Candidate coefficients")->capture_default_str();
  auto* show = app.add_subcommand("show-config", "Print the resolved config and its run directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const gradsal::ExperimentConfig config = resolve_config(g);
    if (show->parsed()) {
      std::cout << gradsal::config_to_json(config).dump(2) << "\n";
      std::cout << "run directory: " << (std::filesystem::path(g.out_dir) / ("run-" + gradsal::config_hash(config).substr(0, 16))).string() << "\n";
      return kOk;
    }
    gradsal::Pipeline p(config, g.out_dir, progress_hooks(g.quiet));
    if (generate->parsed()) p.generate_data();
    if (train->parsed()) {
      if (train_models.empty()) p.train_all();
      for (const auto& m : train_models) p.train(m);
    }
    if (calibrate->parsed()) p.calibrate();
    if (saliency->parsed()) {
      if (methods.empty()) p.saliency_all();
      for (const auto& m : methods) p.saliency(m);
    }
    if (evaluate->parsed()) p.evaluate();
    if (report->parsed()) p.report();
    if (run_all->parsed()) {
      p.run_all();
      std::cout << gradsal::read_file(p.path(gradsal::paths::summary()));
    }
    if (tune_sg->parsed()) return tune_smoothgrad(p);
    if (tune_l2_cmd->parsed()) return tune_l2(p, tune_models.empty() ? gradsal::model_names() : tune_models, l2_grid);
    std::cout << p.run_dir().string() << "\n";
    return kOk;
  } catch (const gradsal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const gradsal::TrainingDivergence& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const gradsal::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const gradsal::MissingArtifactError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const gradsal::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
