#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "gradsal/gradsal.hpp"

using namespace gradsal;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gradsal_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Small enough to run every stage in a couple of seconds.
ExperimentConfig tiny_config() {
  nlohmann::json doc = config_to_json(ExperimentConfig{});
  apply_override(doc, "data.n_per_class", "12");
  for (const char* slot : {"linear", "plain", "random_ball", "pgd", "algorithm1"}) {
    apply_override(doc, std::string("training.") + slot + ".max_epochs", "4");
    apply_override(doc, std::string("training.") + slot + ".learning_rate", "0.01");
  }
  apply_override(doc, "saliency.smoothgrad_samples", "3");
  apply_override(doc, "seed", "5");
  return config_from_json(doc);
}

std::map<std::string, std::string> all_digests(const nlohmann::json& manifest) {
  std::map<std::string, std::string> out;
  for (const auto& [stage, entry] : manifest["stages"].items())
    for (const auto& [rel, digest] : entry["outputs"].items()) out[rel] = digest.get<std::string>();
  return out;
}

std::vector<std::uint8_t> pgm_pixels(const std::string& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  for (int newlines = 0; newlines < 3; ++pos)
    if (bytes[pos] == '\n') ++newlines;
  return {bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GRADSAL_CLI_PATH) + " -q " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsRoundTripAndValidate) {
  const ExperimentConfig def;
  EXPECT_NO_THROW(def.validate());
  const nlohmann::json j = config_to_json(def);
  const ExperimentConfig back = config_from_json(j);
  EXPECT_EQ(config_to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(def));
  EXPECT_EQ(def.training.algorithm1.hop_steps, 3);
  EXPECT_EQ(def.training.pgd.epsilon, 1.0);
  EXPECT_EQ(def.data.noise_sigma, 0.5);
  EXPECT_EQ(def.saliency.smoothgrad_sigma, 0.3);
  EXPECT_EQ(def.training.adversarial_regime, Regime::algorithm1);
}

TEST(Config, UnknownKeysAreRejectedAtAnyDepth) {
  for (const char* path : {"bogus", "data.bogus", "training.pgd.bogus", "training.plain.adam.bogus"}) {
    nlohmann::json doc = config_to_json(ExperimentConfig{});
    apply_override(doc, path, "1");
    EXPECT_THROW(config_from_json(doc), ConfigError) << path;
  }
  nlohmann::json doc = config_to_json(ExperimentConfig{});
  apply_override(doc, "training.plain.hop_steps", "3");
  EXPECT_THROW(config_from_json(doc), ConfigError);
}

TEST(Config, InvalidValuesAreRejected) {
  const std::vector<std::pair<std::string, std::string>> bad{
      {"data.noise_sigma", "-1"},          {"training.pgd.epsilon", "-0.5"},
      {"training.algorithm1.hop_steps", "0"}, {"saliency.smoothgrad_samples", "0"},
      {"data.n_per_class", "\"many\""},     {"evaluation.bonferroni_family", "holm"},
      {"training.adversarial_regime", "plain"}, {"schema_version", "2"},
      {"calibration.min_temperature", "2"}};
  for (const auto& [path, value] : bad) {
    nlohmann::json doc = config_to_json(ExperimentConfig{});
    apply_override(doc, path, value);
    EXPECT_THROW(config_from_json(doc), ConfigError) << path << "=" << value;
  }
}

TEST(Config, OverridesChangeHashExceptRunSection) {
  nlohmann::json doc = config_to_json(ExperimentConfig{});
  apply_override(doc, "training.pgd.epsilon", "0.5");
  const ExperimentConfig changed = config_from_json(doc);
  EXPECT_EQ(changed.training.pgd.epsilon, 0.5);
  EXPECT_NE(config_hash(changed), config_hash(ExperimentConfig{}));
  apply_override(doc, "training.adversarial_regime", "pgd");
  EXPECT_EQ(config_from_json(doc).training.adversarial_regime, Regime::pgd);
  ExperimentConfig jobs;
  jobs.run.jobs = 8;
  EXPECT_EQ(config_hash(jobs), config_hash(ExperimentConfig{}));
  EXPECT_THROW(apply_override(doc, "a..b", "1"), ConfigError);
}

TEST(Config, LoadFromFile) {
  const fs::path dir = fresh_dir("config_file");
  const std::string p = (dir / "c.json").string();
  write_text(R"({"schema_version": 1, "seed": 42, "data": {"n_per_class": 7}})", p);
  const ExperimentConfig c = load_config(p);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.data.n_per_class, 7u);
  EXPECT_EQ(c.data.noise_sigma, 0.5);
  write_text("{not json", p);
  EXPECT_THROW(load_config(p), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), IoError);
  fs::remove_all(dir);
}

TEST(Export, ZeroMapIsMidGray) {
  const GrayImage img = render_map(Grid(5, 7, 0.0), 99.9999, 2);
  EXPECT_EQ(img.height, 10u);
  EXPECT_EQ(img.width, 14u);
  for (auto v : img.pixels) EXPECT_EQ(v, 128);
}

TEST(Export, ScaledMapGivesIdenticalImage) {
  RandomSource rng(1);
  const Grid g = sample_gaussian_grid(rng, 8, 8, 1.0);
  EXPECT_EQ(render_map(g, 100.0).pixels, render_map(g * 2.0, 100.0).pixels);
}

TEST(Export, InformativeMapPeaksInItsSpecificRegion) {
  const TemplateSet t = build_templates(default_layout());
  const Grid a = informative_map(t, 0);
  const GrayImage img = render_map(a, 99.9999);
  for (const auto& r : t.regions) {
    if (r.membership != class_bit(0)) continue;
    for (std::size_t dy = 0; dy < 3; ++dy)
      for (std::size_t dx = 0; dx < 3; ++dx) EXPECT_EQ(img.pixels[(r.top + dy) * 32 + r.left + dx], 255);
  }
  EXPECT_EQ(img.pixels[0], 128);
  const fs::path dir = fresh_dir("pgm");
  const std::string p = (dir / "a.pgm").string();
  export_map_image(a, p);
  EXPECT_EQ(read_file(p).substr(0, 13), "P5\n32 32\n255\n");
  EXPECT_EQ(pgm_pixels(p), img.pixels);
  EXPECT_THROW(export_map_image(a, (dir / "no/such/dir/a.pgm").string()), IoError);
  fs::remove_all(dir);
}

TEST(Export, ScoresCsvRoundTripAndRowCount) {
  RandomSource rng(2);
  std::vector<CriterionScore> c1, c2;
  for (const char* name : {"a", "b", "c"}) {
    std::vector<double> r1(20), r2(20);
    for (std::size_t i = 0; i < 20; ++i) {
      r1[i] = rng.uniform(0.1, 0.9);
      r2[i] = rng.uniform(0.1, 0.9);
    }
    c1.push_back(make_score(name, r1));
    c2.push_back(make_score(name, r2));
  }
  const EvaluationReport rep = compare_methods(c1, c2);
  const std::string csv = scores_csv(rep);
  const auto rows = parse_scores_csv(csv);
  ASSERT_EQ(rows.size(), 3u * 2);
  for (const auto& row : rows) {
    const auto& s = rep.scores(row.criterion)[rep.method_index(row.method)];
    EXPECT_NEAR(row.mean_r, s.mean, 1e-5);
    EXPECT_NEAR(row.standard_error, s.standard_error, 1e-5);
    EXPECT_EQ(row.n, 20u);
  }
  EXPECT_EQ(scores_csv(rep), csv);
  std::size_t lines = 0;
  for (char ch : pairwise_csv(rep)) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 2 * 3 * 2);
  EXPECT_THROW(parse_scores_csv("wrong,header\n"), FormatError);
}

TEST(Pipeline, TinyRunProducesEveryArtifactAndIsDeterministic) {
  const fs::path out_a = fresh_dir("pipe_a");
  const fs::path out_b = fresh_dir("pipe_b");
  const ExperimentConfig cfg = tiny_config();
  std::vector<std::pair<std::string, bool>> stages;
  PipelineHooks hooks;
  hooks.on_stage = [&](const std::string& s, bool cached) { stages.emplace_back(s, cached); };
  Pipeline a(cfg, out_a, hooks);
  a.run_all();
  for (const std::string rel : {paths::scores(), paths::pairwise(), paths::criterion2_pairs(), paths::correlations(),
                                paths::criterion1_figure(), paths::criterion2_figure(), paths::summary(),
                                paths::calibration_table(), std::string("manifest.json"), std::string("config.json")}) {
    EXPECT_TRUE(fs::exists(a.path(rel))) << rel;
  }
  for (const auto& m : model_names()) EXPECT_TRUE(fs::exists(a.path(paths::calibrated(m)))) << m;
  for (const auto& s : method_specs()) EXPECT_TRUE(fs::exists(a.path(paths::maps(s.name)))) << s.name;
  for (const auto& [s, cached] : stages) EXPECT_FALSE(cached) << s;
  const auto digests = all_digests(a.manifest());
  for (const auto& [rel, d] : digests) EXPECT_EQ(file_sha256(a.path(rel)), d) << rel;
  EXPECT_EQ(a.manifest()["config_hash"], a.hash());
  EXPECT_EQ(a.manifest()["tool_version"], kToolVersion);

  stages.clear();
  Pipeline again(cfg, out_a, hooks);
  again.run_all();
  for (const auto& [s, cached] : stages) EXPECT_TRUE(cached) << s;
  EXPECT_EQ(all_digests(again.manifest()), digests);

  ExperimentConfig parallel = cfg;
  parallel.run.jobs = 3;
  Pipeline b(parallel, out_b);
  b.run_all();
  EXPECT_EQ(all_digests(b.manifest()), digests);

  fs::remove(a.path(paths::scores()));
  stages.clear();
  Pipeline repaired(cfg, out_a, hooks);
  repaired.run_all();
  bool reran_evaluate = false;
  for (const auto& [s, cached] : stages) {
    if (s == "evaluate") reran_evaluate = !cached;
    if (s.rfind("train:", 0) == 0) EXPECT_TRUE(cached) << s;
  }
  EXPECT_TRUE(reran_evaluate);
  EXPECT_EQ(all_digests(repaired.manifest()), digests);
  fs::remove_all(out_a);
  fs::remove_all(out_b);
}

TEST(Pipeline, StagesRequireTheirInputs) {
  const fs::path out = fresh_dir("pipe_missing");
  Pipeline p(tiny_config(), out);
  EXPECT_THROW(p.train("linear"), MissingArtifactError);
  EXPECT_THROW(p.evaluate(), MissingArtifactError);
  fs::remove_all(out);
}

TEST(Cli, ExitCodes) {
  const fs::path out = fresh_dir("cli");
  const std::string base = "--out-dir " + out.string();
  const std::string tiny = base + " --set data.n_per_class=6 --set training.linear.max_epochs=2";
  EXPECT_EQ(run_cli("show-config " + base), 0);
  EXPECT_EQ(run_cli("show-config " + base + " --set data.bogus=1"), 2);
  const std::string bad_json = (out / "bad.json").string();
  write_text("{oops", bad_json);
  EXPECT_EQ(run_cli("show-config " + base + " --config " + bad_json), 2);
  EXPECT_EQ(run_cli("show-config " + base + " --config " + (out / "none.json").string()), 5);
  EXPECT_EQ(run_cli("evaluate " + base), 3);
  EXPECT_EQ(run_cli("generate-data " + tiny), 0);
  const std::string exploding = tiny + " --set training.linear.learning_rate=1e300";
  EXPECT_EQ(run_cli("generate-data " + exploding), 0);
  EXPECT_EQ(run_cli("train --model linear " + exploding), 4);
  EXPECT_EQ(run_cli("train --model linear " + tiny), 0);
  for (const auto& entry : fs::directory_iterator(out)) {
    if (!entry.is_directory()) continue;
    const fs::path val = entry.path() / paths::split_file(Split::validation);
    if (fs::exists(val)) write_text("garbage", val.string());
  }
  EXPECT_EQ(run_cli("train --model nn_plain " + tiny), 3);
  fs::remove_all(out);
}
