#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradsal/checkpoint.hpp"
#include "gradsal/config.hpp"
#include "gradsal/evaluation.hpp"
#include "gradsal/export.hpp"
#include "gradsal/saliency.hpp"
#include "gradsal/synthdata.hpp"
#include "gradsal/training.hpp"

namespace gradsal {

inline constexpr const char* kToolVersion = "1.0.0";

/// A stage was asked to run before the stage producing its inputs.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trained models, in pipeline order.
inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"linear", "nn_plain", "nn_random_ball", "nn_pgd", "nn_algorithm1"};
  return names;
}

struct MethodSpec {
  std::string name;
  std::string model;
  Method method;
};

/// Saliency methods in report order.
inline const std::vector<MethodSpec>& method_specs() {
  static const std::vector<MethodSpec> specs{
      {"linreg_weights", "linear", Method::linear_weights},
      {"linreg_gradient", "linear", Method::gradient},
      {"nn_gradient", "nn_plain", Method::gradient},
      {"nn_gradient_times_input", "nn_plain", Method::gradient_times_input},
      {"nn_smoothgrad", "nn_plain", Method::smoothgrad},
      {"random_noise_nn_gradient", "nn_random_ball", Method::gradient},
      {"pgd_nn_gradient", "nn_pgd", Method::gradient},
      {"algorithm1_nn_gradient", "nn_algorithm1", Method::gradient},
  };
  return specs;
}

inline const MethodSpec& method_spec(const std::string& name) {
  for (const auto& s : method_specs())
    if (s.name == name) return s;
  throw std::out_of_range("unknown method '" + name + "'");
}

/// The method standing for "the adversarially trained NN" in summaries.
inline std::string adversarial_method(const ExperimentConfig& c) {
  return c.training.adversarial_regime == Regime::pgd ? "pgd_nn_gradient" : "algorithm1_nn_gradient";
}

inline const TrainingConfig& training_config_for(const ExperimentConfig& c, const std::string& model) {
  if (model == "linear") return c.training.linear;
  if (model == "nn_plain") return c.training.plain;
  if (model == "nn_random_ball") return c.training.random_ball;
  if (model == "nn_pgd") return c.training.pgd;
  if (model == "nn_algorithm1") return c.training.algorithm1;
  throw std::out_of_range("unknown model '" + model + "'");
}

inline TemplateSet templates_for(const ExperimentConfig& c) {
  return build_templates(c.data.layout, c.data.height, c.data.width, c.data.region_size, c.data.num_classes);
}

/// Untrained model: the linear model and all NNs each share one initialization stream, so the NN
/// regimes start from identical weights.
inline Classifier initial_model(const ExperimentConfig& c, const std::string& model) {
  const RandomSource init = RandomSource(c.seed).derive("init");
  if (model == "linear") {
    RandomSource rng = init.derive("linear");
    return make_multinomial_regression(c.data.height, c.data.width, c.data.num_classes, rng);
  }
  RandomSource rng = init.derive("nn");
  return make_mlp(c.data.height, c.data.width, c.models.hidden_widths, c.data.num_classes, rng);
}

inline TrainingConfig seeded_training_config(const ExperimentConfig& c, const std::string& model) {
  TrainingConfig t = training_config_for(c, model);
  t.seed = RandomSource(c.seed).derive("train").derive(model).seed();
  return t;
}

inline std::uint64_t smoothgrad_seed(const ExperimentConfig& c) { return RandomSource(c.seed).derive("smoothgrad").seed(); }

namespace paths {
inline std::string split_file(Split s) { return "data/" + to_string(s) + ".gsds"; }
inline std::string templates_file() { return "data/templates.gsds"; }
inline std::string informative_file() { return "data/informative_maps.gsds"; }
inline std::string pairwise_file() { return "data/pairwise_maps.gsds"; }
inline std::string checkpoint(const std::string& model) { return "models/" + model + ".json"; }
inline std::string training_log(const std::string& model) { return "logs/" + model + ".csv"; }
inline std::string calibrated(const std::string& model) { return "models/" + model + ".calibrated.json"; }
inline std::string calibration_table() { return "calibration.csv"; }
inline std::string maps(const std::string& method) { return "maps/" + method + ".gsds"; }
inline std::string scores() { return "scores.csv"; }
inline std::string pairwise() { return "pairwise.csv"; }
inline std::string criterion2_pairs() { return "criterion2_pairs.csv"; }
inline std::string correlations() { return "correlations.csv"; }
inline std::string criterion1_figure() { return "figures/criterion1_average_maps.pgm"; }
inline std::string criterion2_figure() { return "figures/criterion2_average_maps.pgm"; }
inline std::string summary() { return "summary.txt"; }
}  // namespace paths

inline std::string training_log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  os << "epoch,loss,train_acc,val_acc,val_nll\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.loss, r.train_acc, r.val_acc, r.val_nll);
    os << buf;
  }
  return os.str();
}

/// Per-method saliency, every target class for every test example, stored example-major.
struct MethodMaps {
  std::vector<ClassId> labels;          // true class per example
  std::vector<std::vector<Grid>> maps;  // maps[i][t]
};

inline GridFile method_maps_to_file(const MethodMaps& mm, std::size_t h, std::size_t w, int k, std::uint64_t seed) {
  GridFile f{RecordKind::saliency_maps, h, w, k, Split::test, seed, {}};
  f.records.reserve(mm.maps.size() * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < mm.maps.size(); ++i)
    for (ClassId t = 0; t < k; ++t) f.records.push_back({t, static_cast<std::int32_t>(i), mm.maps[i][static_cast<std::size_t>(t)]});
  return f;
}

inline MethodMaps method_maps_from_file(const GridFile& f, std::span<const ClassId> labels) {
  const auto k = static_cast<std::size_t>(f.num_classes);
  if (f.kind != RecordKind::saliency_maps || f.records.size() != labels.size() * k) {
    throw FormatError("saliency map file does not hold one map per (example, class)");
  }
  MethodMaps mm{{labels.begin(), labels.end()}, std::vector<std::vector<Grid>>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i) mm.maps[i].resize(k);
  for (const auto& rec : f.records) {
    const auto i = static_cast<std::size_t>(rec.source_index);
    if (rec.source_index < 0 || i >= labels.size()) throw FormatError("saliency map record has a bad example index");
    mm.maps[i][static_cast<std::size_t>(rec.label)] = rec.values;
  }
  return mm;
}

/// Every target-class map for each row of the test set.
inline MethodMaps compute_method_maps(const Classifier& model, Method method, const Dataset& test,
                                      const BatchSaliencyOptions& opts) {
  const Batch x = test.inputs();
  const auto labels = test.labels();
  const auto k = model.num_classes();
  std::vector<std::uint64_t> ids(labels.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  MethodMaps mm{labels, std::vector<std::vector<Grid>>(labels.size(), std::vector<Grid>(static_cast<std::size_t>(k)))};
  for (ClassId t = 0; t < k; ++t) {
    const std::vector<ClassId> targets(labels.size(), t);
    const Batch maps = saliency_batch(model, method, x, targets, ids, opts);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto row = maps.row(static_cast<Eigen::Index>(i));
      mm.maps[i][static_cast<std::size_t>(t)] =
          Grid(test.height, test.width, std::vector<double>(row.data(), row.data() + row.size()));
    }
  }
  return mm;
}

inline CriterionScore score_method_criterion1(const std::string& name, const MethodMaps& mm, const GroundTruth& gt,
                                              const PixelMask& mask) {
  std::vector<Grid> own(mm.maps.size());
  for (std::size_t i = 0; i < own.size(); ++i) own[i] = mm.maps[i][static_cast<std::size_t>(mm.labels[i])];
  return score_criterion1(name, own, mm.labels, gt, mask);
}

inline CriterionScore score_method_criterion2(const std::string& name, const MethodMaps& mm, const GroundTruth& gt,
                                              const PixelMask& mask, PairBreakdown* breakdown = nullptr) {
  std::vector<TargetMaps> tm(mm.maps.size());
  for (std::size_t i = 0; i < tm.size(); ++i)
    for (std::size_t t = 0; t < mm.maps[i].size(); ++t)
      if (static_cast<ClassId>(t) != mm.labels[i]) tm[i][static_cast<ClassId>(t)] = mm.maps[i][t];
  return score_criterion2(name, tm, mm.labels, gt, mask, breakdown);
}

/// Average map toward `target` over test examples of class `source` (source == target: criterion 1).
inline Grid average_map(const MethodMaps& mm, ClassId source, ClassId target) {
  Grid acc;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mm.maps.size(); ++i) {
    if (mm.labels[i] != source) continue;
    const Grid& g = mm.maps[i][static_cast<std::size_t>(target)];
    if (n == 0) acc = Grid(g.height(), g.width());
    acc += g;
    ++n;
  }
  if (n == 0) return acc;
  return acc * (1.0 / static_cast<double>(n));
}

struct PipelineHooks {
  TrainingHooks training;
  std::function<void(const std::string& stage, bool cached)> on_stage;
};

/// One experiment run rooted at out_dir/run-<config hash>. Each step is cached under a key built
/// from its config section and the digests of its inputs; manifest.json records every output.
class Pipeline {
 public:
  Pipeline(ExperimentConfig config, const std::filesystem::path& out_dir, PipelineHooks hooks = {})
      : config_(std::move(config)), hooks_(std::move(hooks)) {
    config_.validate();
    hash_ = config_hash(config_);
    run_dir_ = out_dir / ("run-" + hash_.substr(0, 16));
    std::error_code ec;
    std::filesystem::create_directories(run_dir_, ec);
    if (ec) throw IoError("cannot create run directory " + run_dir_.string() + ": " + ec.message());
    load_manifest();
  }

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  const std::string& hash() const { return hash_; }
  const nlohmann::json& manifest() const { return manifest_; }
  std::string path(const std::string& rel) const { return (run_dir_ / rel).string(); }

  void generate_data() {
    run_stage("data", data_key(), {}, [&](Outputs& out) {
      const TemplateSet t = templates_for(config_);
      for (Split s : {Split::train, Split::validation, Split::test}) {
        save_dataset(generate_split(t, s, config_.data.n_per_class, config_.data.noise_sigma, config_.seed),
                     out.add(paths::split_file(s)));
      }
      const GroundTruth gt = ground_truth(t);
      const auto k = t.num_classes();
      GridFile tf{RecordKind::examples, t.height, t.width, k, Split::train, config_.seed, {}};
      GridFile inf{RecordKind::saliency_maps, t.height, t.width, k, Split::test, config_.seed, {}};
      GridFile pw = inf;
      for (ClassId c = 0; c < k; ++c) {
        tf.records.push_back({c, c, t.templates[static_cast<std::size_t>(c)]});
        inf.records.push_back({c, c, gt.informative[static_cast<std::size_t>(c)]});
      }
      for (const auto& [st, g] : gt.pairwise) pw.records.push_back({st.second, st.first, g});
      write_grid_file(tf, out.add(paths::templates_file()));
      write_grid_file(inf, out.add(paths::informative_file()));
      write_grid_file(pw, out.add(paths::pairwise_file()));
    });
  }

  void train(const std::string& model) {
    const TrainingConfig tc = seeded_training_config(config_, model);
    nlohmann::json key{{"training", detail::regime_to_json(tc)},
                       {"regime", to_string(tc.regime)},
                       {"seed", tc.seed},
                       {"architecture", model == "linear" ? nlohmann::json("linear") : nlohmann::json(config_.models.hidden_widths)}};
    run_stage("train:" + model, key, {"data"}, [&](Outputs& out) {
      const Dataset train_set = load_dataset(path(paths::split_file(Split::train)));
      const Dataset val_set = load_dataset(path(paths::split_file(Split::validation)));
      TrainedModel tm;
      try {
        tm = gradsal::train(tc, train_set, initial_model(config_, model), &val_set,
                            hooks_.training.on_noise || hooks_.training.on_update ? &hooks_.training : nullptr);
      } catch (const TrainingDivergence& e) {
        ensure_parent(path("logs/" + model + ".divergence.txt"));
        write_text(std::string(e.what()) + "\n" + e.state_dump(), path("logs/" + model + ".divergence.txt"));
        throw;
      }
      save_checkpoint(tm.classifier, out.add(paths::checkpoint(model)));
      write_text(training_log_csv(tm.log), out.add(paths::training_log(model)));
    });
  }

  void train_all() {
    for (const auto& m : model_names()) train(m);
  }

  void calibrate() {
    nlohmann::json key = config_to_json(config_)["calibration"];
    std::vector<std::string> deps{"data"};
    for (const auto& m : model_names()) deps.push_back("train:" + m);
    run_stage("calibrate", key, deps, [&](Outputs& out) {
      const Dataset val_set = load_dataset(path(paths::split_file(Split::validation)));
      const Batch x = val_set.inputs();
      const auto y = val_set.labels();
      std::ostringstream table;
      table << "model,temperature,nll_at_one,nll_fitted,val_acc_before,val_acc_after\n";
      for (const auto& m : model_names()) {
        Classifier model = load_checkpoint(path(paths::checkpoint(m)));
        const double before = accuracy(model, x, y);
        const CalibrationResult r = calibrate_temperature(model, x, y, config_.calibration);
        const double after = accuracy(model, x, y);
        save_checkpoint(model, out.add(paths::calibrated(m)));
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.c_str(), r.temperature, r.nll_at_one,
                      r.nll_fitted, before, after);
        table << buf;
      }
      write_text(table.str(), out.add(paths::calibration_table()));
    });
  }

  void saliency(const std::string& method) {
    const MethodSpec& spec = method_spec(method);
    nlohmann::json key{{"method", to_string(spec.method)}, {"model", spec.model}};
    if (spec.method == Method::smoothgrad) {
      key["smoothgrad_sigma"] = config_.saliency.smoothgrad_sigma;
      key["smoothgrad_samples"] = config_.saliency.smoothgrad_samples;
      key["seed"] = smoothgrad_seed(config_);
    }
    run_stage("saliency:" + method, key, {"data", "calibrate"}, [&](Outputs& out) {
      const Dataset test = load_dataset(path(paths::split_file(Split::test)));
      const Classifier model = load_checkpoint(path(paths::calibrated(spec.model)));
      const MethodMaps mm = compute_method_maps(model, spec.method, test, smoothgrad_options());
      write_grid_file(method_maps_to_file(mm, test.height, test.width, test.num_classes, config_.seed),
                      out.add(paths::maps(method)));
    });
  }

  void saliency_all() {
    for (const auto& s : method_specs()) saliency(s.name);
  }

  MethodMaps load_method_maps(const std::string& method) const {
    const Dataset test = load_dataset(path(paths::split_file(Split::test)));
    return method_maps_from_file(read_grid_file(path(paths::maps(method))), test.labels());
  }

  /// Scores every method on the enabled criteria from the stored maps.
  EvaluationReport score_all(PairBreakdown* breakdown_per_method = nullptr) const {
    const GroundTruth gt = ground_truth(templates_for(config_));
    std::vector<CriterionScore> c1, c2;
    std::size_t idx = 0;
    for (const auto& s : method_specs()) {
      const MethodMaps mm = load_method_maps(s.name);
      if (config_.evaluation.criterion1) c1.push_back(score_method_criterion1(s.name, mm, gt, config_.evaluation.mask));
      if (config_.evaluation.criterion2) {
        c2.push_back(score_method_criterion2(s.name, mm, gt, config_.evaluation.mask,
                                             breakdown_per_method ? &breakdown_per_method[idx] : nullptr));
      }
      ++idx;
    }
    return compare_methods(std::move(c1), std::move(c2), config_.evaluation.bonferroni_family);
  }

  void evaluate() {
    nlohmann::json key = config_to_json(config_)["evaluation"];
    std::vector<std::string> deps{"data"};
    for (const auto& s : method_specs()) deps.push_back("saliency:" + s.name);
    run_stage("evaluate", key, deps, [&](Outputs& out) {
      std::vector<PairBreakdown> breakdowns(method_specs().size());
      const EvaluationReport rep = score_all(breakdowns.data());
      export_scores_csv(rep, out.add(paths::scores()));
      export_pairwise_csv(rep, out.add(paths::pairwise()));

      std::ostringstream pairs;
      pairs << "method,source,target,mean_r,n\n";
      if (config_.evaluation.criterion2) {
        for (std::size_t m = 0; m < rep.methods.size(); ++m)
          for (const auto& [st, rs] : breakdowns[m].correlations)
            pairs << rep.methods[m] << ',' << st.first << ',' << st.second << ',' << format_real(gradsal::mean(rs)) << ','
                  << rs.size() << '\n';
      }
      write_text(pairs.str(), out.add(paths::criterion2_pairs()));

      std::ostringstream corr;
      corr << "method,criterion,example,r\n";
      char buf[64];
      for (int c : {1, 2}) {
        for (const auto& s : rep.scores(c)) {
          for (std::size_t i = 0; i < s.correlations.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", s.correlations[i]);
            corr << s.method << ',' << criterion_name(c) << ',' << i << ',' << buf << '\n';
          }
        }
      }
      write_text(corr.str(), out.add(paths::correlations()));
    });
  }

  void report() {
    nlohmann::json key = config_to_json(config_)["export"];
    key["adversarial_method"] = adversarial_method(config_);
    std::vector<std::string> deps{"data", "calibrate", "evaluate"};
    for (const auto& s : method_specs()) deps.push_back("saliency:" + s.name);
    run_stage("report", key, deps, [&](Outputs& out) {
      const TemplateSet t = templates_for(config_);
      const GroundTruth gt = ground_truth(t);
      const auto k = t.num_classes();
      const double pct = config_.export_options.percentile;
      const std::size_t up = config_.export_options.upscale;

      std::vector<std::vector<Grid>> fig1{t.templates, gt.informative};
      std::vector<std::vector<Grid>> fig2(1);
      for (const auto& [st, g] : gt.pairwise) fig2[0].push_back(g);
      for (const auto& s : method_specs()) {
        const MethodMaps mm = load_method_maps(s.name);
        std::vector<Grid> row1, row2;
        for (ClassId c = 0; c < k; ++c) row1.push_back(average_map(mm, c, c));
        for (const auto& [st, g] : gt.pairwise) row2.push_back(average_map(mm, st.first, st.second));
        fig1.push_back(std::move(row1));
        fig2.push_back(std::move(row2));
      }
      ensure_parent(path(paths::criterion1_figure()));
      write_pgm(tile_maps(fig1, pct, up), out.add(paths::criterion1_figure()));
      write_pgm(tile_maps(fig2, pct, up), out.add(paths::criterion2_figure()));
      write_text(summary_text(), out.add(paths::summary()));
    });
  }

  void run_all() {
    generate_data();
    train_all();
    calibrate();
    saliency_all();
    evaluate();
    report();
  }

  BatchSaliencyOptions smoothgrad_options() const {
    return {config_.saliency.smoothgrad_sigma, config_.saliency.smoothgrad_samples, smoothgrad_seed(config_),
            config_.run.jobs};
  }

 private:
  struct Outputs {
    const Pipeline* owner;
    std::vector<std::string> files;
    std::string add(const std::string& rel) {
      files.push_back(rel);
      const std::string p = owner->path(rel);
      ensure_parent(p);
      return p;
    }
  };

  static void ensure_parent(const std::string& p) {
    std::error_code ec;
    std::filesystem::create_directories(std::filesystem::path(p).parent_path(), ec);
    if (ec) throw IoError("cannot create directory for " + p + ": " + ec.message());
  }

  static std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  nlohmann::json data_key() const {
    nlohmann::json key = config_to_json(config_)["data"];
    key["seed"] = config_.seed;
    return key;
  }

  void load_manifest() {
    const std::string p = path("manifest.json");
    if (std::filesystem::exists(p)) {
      try {
        manifest_ = nlohmann::json::parse(read_file(p));
      } catch (const nlohmann::json::exception&) {
        manifest_ = nlohmann::json();
      }
    }
    if (!manifest_.is_object() || manifest_.value("config_hash", "") != hash_) {
      manifest_ = nlohmann::json::object();
      manifest_["stages"] = nlohmann::json::object();
    }
    manifest_["tool_version"] = kToolVersion;
    manifest_["config_hash"] = hash_;
    manifest_["seed"] = config_.seed;
    manifest_["config"] = config_to_json(config_);
    const std::string cfg_path = path("config.json");
    write_text(config_to_json(config_).dump(2) + "\n", cfg_path);
  }

  void save_manifest() const { write_text(manifest_.dump(2) + "\n", path("manifest.json")); }

  nlohmann::json upstream_digests(const std::vector<std::string>& deps) const {
    nlohmann::json d = nlohmann::json::object();
    for (const auto& dep : deps) {
      if (!manifest_["stages"].contains(dep)) {
        throw MissingArtifactError("stage '" + dep + "' has not been run in " + run_dir_.string());
      }
      d[dep] = manifest_["stages"][dep]["outputs"];
    }
    return d;
  }

  bool cache_valid(const std::string& stage, const std::string& key) const {
    const auto& stages = manifest_["stages"];
    if (!stages.contains(stage) || stages[stage].value("key", "") != key) return false;
    for (const auto& [rel, digest] : stages[stage]["outputs"].items()) {
      const std::string p = path(rel);
      if (!std::filesystem::exists(p) || file_sha256(p) != digest.get<std::string>()) return false;
    }
    return true;
  }

  template <typename Body>
  void run_stage(const std::string& stage, const nlohmann::json& section, const std::vector<std::string>& deps,
                 Body&& body) {
    const nlohmann::json material{{"stage", stage}, {"section", section}, {"inputs", upstream_digests(deps)}};
    const std::string key = sha256_hex(material.dump());
    if (cache_valid(stage, key)) {
      if (hooks_.on_stage) hooks_.on_stage(stage, true);
      return;
    }
    manifest_["stages"].erase(stage);
    const std::string started = utc_now();
    Outputs out{this, {}};
    body(out);
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& rel : out.files) outputs[rel] = file_sha256(path(rel));
    manifest_["stages"][stage] = {{"key", key}, {"started", started}, {"finished", utc_now()}, {"outputs", outputs}};
    save_manifest();
    if (hooks_.on_stage) hooks_.on_stage(stage, false);
  }

  std::string summary_text() const {
    std::ostringstream os;
    os << "gradsal " << kToolVersion << " run " << hash_.substr(0, 16) << "\n\n";
    const Dataset test = load_dataset(path(paths::split_file(Split::test)));
    os << "test accuracy (" << test.size() << " examples)\n";
    char buf[256];
    for (const auto& m : model_names()) {
      const Classifier model = load_checkpoint(path(paths::calibrated(m)));
      std::snprintf(buf, sizeof buf, "  %-16s %.4f  (t = %.4g)\n", m.c_str(), accuracy(model, test), model.temperature);
      os << buf;
    }
    const auto scores = parse_scores_csv(read_file(path(paths::scores())));
    for (int c : {1, 2}) {
      bool any = false;
      for (const auto& row : scores) {
        if (row.criterion != c) continue;
        if (!any) os << "\n" << criterion_name(c) << " mean r (stderr)\n";
        any = true;
        std::snprintf(buf, sizeof buf, "  %-26s %.4f (%.4f)\n", row.method.c_str(), row.mean_r, row.standard_error);
        os << buf;
      }
    }
    os << "\nadversarial model: " << adversarial_method(config_) << "\n";
    os << "pairwise tests: " << paths::pairwise() << "\n";
    return os.str();
  }

  ExperimentConfig config_;
  PipelineHooks hooks_;
  std::string hash_;
  std::filesystem::path run_dir_;
  nlohmann::json manifest_;
};

}  // namespace gradsal
