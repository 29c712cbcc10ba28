#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradsal/checkpoint.hpp"
#include "gradsal/evaluation.hpp"
#include "gradsal/export.hpp"
#include "gradsal/saliency.hpp"
#include "gradsal/synthdata.hpp"
#include "gradsal/training.hpp"

namespace gradsal {

inline constexpr int kConfigSchemaVersion = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataSection {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t region_size = 3;
  int num_classes = 3;
  std::vector<RegionSpec> layout = default_layout();
  double noise_sigma = 0.5;
  std::size_t n_per_class = 1000;
};

struct ModelSection {
  std::vector<int> hidden_widths{20};
};

/// One TrainingConfig per trained model. The regime field of each entry is fixed by its slot.
struct TrainingSection {
  TrainingConfig linear;
  TrainingConfig plain;
  TrainingConfig random_ball;
  TrainingConfig pgd;
  TrainingConfig algorithm1;
  Regime adversarial_regime = Regime::algorithm1;

  TrainingSection() {
    linear.l2_coefficient = 3e-2;
    for (TrainingConfig* c : {&plain, &random_ball, &pgd, &algorithm1}) c->l2_coefficient = 1e-2;
    random_ball.regime = Regime::random_ball;
    pgd.regime = Regime::pgd;
    algorithm1.regime = Regime::algorithm1;
  }
};

struct SaliencySection {
  double smoothgrad_sigma = 0.3;
  std::size_t smoothgrad_samples = 50;
  std::vector<double> sigma_grid{0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0};
};

struct EvaluationSection {
  bool criterion1 = true;
  bool criterion2 = true;
  BonferroniFamily bonferroni_family = BonferroniFamily::per_criterion;
  PixelMask mask;
};

struct ExportSection {
  double percentile = 99.9999;
  std::size_t upscale = 4;
};

struct RunSection {
  int jobs = 1;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  DataSection data;
  ModelSection models;
  TrainingSection training;
  TemperatureSearch calibration;
  SaliencySection saliency;
  EvaluationSection evaluation;
  ExportSection export_options;
  RunSection run;

  void validate() const;
};

inline std::string to_string(BonferroniFamily f) {
  return f == BonferroniFamily::global ? "global" : "per_criterion";
}

inline BonferroniFamily bonferroni_family_from_string(const std::string& s) {
  if (s == "per_criterion") return BonferroniFamily::per_criterion;
  if (s == "global") return BonferroniFamily::global;
  throw ConfigError("unknown bonferroni family '" + s + "'");
}

namespace detail {

using nlohmann::json;

/// Strict reader for one JSON object: typed lookups, and finish() rejects any key never asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    const json* v = find(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be a boolean");
      out = v->get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)) {
        throw ConfigError(where(key) + " must be a non-negative integer");
      }
      out = static_cast<T>(v->get<unsigned long long>());
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      const long long x = v->get<long long>();
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
        throw ConfigError(where(key) + " is out of range");
      }
      out = static_cast<T>(x);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) throw ConfigError(where(key) + " must be a number");
      out = v->get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(where(key) + " must be an array");
    std::vector<T> items;
    for (std::size_t i = 0; i < v->size(); ++i) {
      json wrapper = json::object();
      wrapper["item"] = (*v)[i];
      ObjectReader r(wrapper, where(key) + "[" + std::to_string(i) + "]");
      T item{};
      r.read("item", item);
      items.push_back(item);
    }
    out = std::move(items);
  }

  const json* child(const char* key) { return find(key); }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key()) + "'");
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json regime_to_json(const TrainingConfig& c) {
  json j{{"learning_rate", c.learning_rate},
         {"l2_coefficient", c.l2_coefficient},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"batch_size", c.batch_size},
         {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
  if (c.regime != Regime::plain) j["epsilon"] = c.epsilon;
  if (c.regime == Regime::algorithm1) j["hop_steps"] = c.hop_steps;
  if (c.regime == Regime::pgd) {
    j["steps"] = c.pgd_steps;
    j["step_size"] = c.pgd_step_size;
  }
  return j;
}

inline void regime_from_json(const json& j, const std::string& path, TrainingConfig& c) {
  ObjectReader r(j, path);
  r.read("learning_rate", c.learning_rate);
  r.read("l2_coefficient", c.l2_coefficient);
  r.read("max_epochs", c.max_epochs);
  r.read("patience", c.patience);
  r.read("batch_size", c.batch_size);
  if (const json* a = r.child("adam")) {
    ObjectReader ar(*a, r.where("adam"));
    ar.read("beta1", c.adam.beta1);
    ar.read("beta2", c.adam.beta2);
    ar.read("epsilon", c.adam.epsilon);
    ar.finish();
  }
  if (c.regime != Regime::plain) r.read("epsilon", c.epsilon);
  if (c.regime == Regime::algorithm1) r.read("hop_steps", c.hop_steps);
  if (c.regime == Regime::pgd) {
    r.read("steps", c.pgd_steps);
    r.read("step_size", c.pgd_step_size);
  }
  r.finish();
}

inline json layout_to_json(const std::vector<RegionSpec>& layout) {
  json out = json::array();
  for (const auto& reg : layout) {
    json classes = json::array();
    for (ClassId c = 0; c < 32; ++c)
      if (reg.contains(c)) classes.push_back(c);
    out.push_back({{"top", reg.top}, {"left", reg.left}, {"classes", classes}});
  }
  return out;
}

inline std::vector<RegionSpec> layout_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + " must be an array");
  std::vector<RegionSpec> layout;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    ObjectReader r(j[i], p);
    RegionSpec reg;
    r.read("top", reg.top);
    r.read("left", reg.left);
    std::vector<int> classes;
    r.read_list("classes", classes);
    r.finish();
    for (int c : classes) {
      if (c < 0 || c >= 32) throw ConfigError(p + ".classes has an invalid class id");
      reg.membership |= class_bit(c);
    }
    layout.push_back(reg);
  }
  return layout;
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  const auto& d = c.data;
  const auto& t = c.training;
  return json{
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"data",
       {{"height", d.height},
        {"width", d.width},
        {"region_size", d.region_size},
        {"num_classes", d.num_classes},
        {"layout", detail::layout_to_json(d.layout)},
        {"noise_sigma", d.noise_sigma},
        {"n_per_class", d.n_per_class}}},
      {"models", {{"hidden_widths", c.models.hidden_widths}}},
      {"training",
       {{"linear", detail::regime_to_json(t.linear)},
        {"plain", detail::regime_to_json(t.plain)},
        {"random_ball", detail::regime_to_json(t.random_ball)},
        {"pgd", detail::regime_to_json(t.pgd)},
        {"algorithm1", detail::regime_to_json(t.algorithm1)},
        {"adversarial_regime", to_string(t.adversarial_regime)}}},
      {"calibration",
       {{"min_temperature", c.calibration.min_temperature}, {"max_temperature", c.calibration.max_temperature}}},
      {"saliency",
       {{"smoothgrad_sigma", c.saliency.smoothgrad_sigma},
        {"smoothgrad_samples", c.saliency.smoothgrad_samples},
        {"sigma_grid", c.saliency.sigma_grid}}},
      {"evaluation",
       {{"criterion1", c.evaluation.criterion1},
        {"criterion2", c.evaluation.criterion2},
        {"bonferroni_family", to_string(c.evaluation.bonferroni_family)},
        {"mask", c.evaluation.mask}}},
      {"export", {{"percentile", c.export_options.percentile}, {"upscale", c.export_options.upscale}}},
      {"run", {{"jobs", c.run.jobs}}},
  };
}

/// Parses and validates; missing keys keep their defaults, unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  ExperimentConfig c;
  detail::ObjectReader root(j, "");
  root.read("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
  }
  root.read("seed", c.seed);
  if (const json* s = root.child("data")) {
    detail::ObjectReader r(*s, "data");
    r.read("height", c.data.height);
    r.read("width", c.data.width);
    r.read("region_size", c.data.region_size);
    r.read("num_classes", c.data.num_classes);
    if (const json* l = r.child("layout")) c.data.layout = detail::layout_from_json(*l, "data.layout");
    r.read("noise_sigma", c.data.noise_sigma);
    r.read("n_per_class", c.data.n_per_class);
    r.finish();
  }
  if (const json* s = root.child("models")) {
    detail::ObjectReader r(*s, "models");
    r.read_list("hidden_widths", c.models.hidden_widths);
    r.finish();
  }
  if (const json* s = root.child("training")) {
    detail::ObjectReader r(*s, "training");
    auto& t = c.training;
    const std::pair<const char*, TrainingConfig*> slots[] = {{"linear", &t.linear},
                                                             {"plain", &t.plain},
                                                             {"random_ball", &t.random_ball},
                                                             {"pgd", &t.pgd},
                                                             {"algorithm1", &t.algorithm1}};
    for (const auto& [name, cfg] : slots) {
      if (const json* sub = r.child(name)) detail::regime_from_json(*sub, r.where(name), *cfg);
    }
    std::string adv = to_string(t.adversarial_regime);
    r.read("adversarial_regime", adv);
    if (adv == "pgd") {
      t.adversarial_regime = Regime::pgd;
    } else if (adv == "algorithm1") {
      t.adversarial_regime = Regime::algorithm1;
    } else {
      throw ConfigError("training.adversarial_regime must be 'pgd' or 'algorithm1'");
    }
    r.finish();
  }
  if (const json* s = root.child("calibration")) {
    detail::ObjectReader r(*s, "calibration");
    r.read("min_temperature", c.calibration.min_temperature);
    r.read("max_temperature", c.calibration.max_temperature);
    r.finish();
  }
  if (const json* s = root.child("saliency")) {
    detail::ObjectReader r(*s, "saliency");
    r.read("smoothgrad_sigma", c.saliency.smoothgrad_sigma);
    r.read("smoothgrad_samples", c.saliency.smoothgrad_samples);
    r.read_list("sigma_grid", c.saliency.sigma_grid);
    r.finish();
  }
  if (const json* s = root.child("evaluation")) {
    detail::ObjectReader r(*s, "evaluation");
    r.read("criterion1", c.evaluation.criterion1);
    r.read("criterion2", c.evaluation.criterion2);
    std::string fam = to_string(c.evaluation.bonferroni_family);
    r.read("bonferroni_family", fam);
    c.evaluation.bonferroni_family = bonferroni_family_from_string(fam);
    r.read_list("mask", c.evaluation.mask);
    r.finish();
  }
  if (const json* s = root.child("export")) {
    detail::ObjectReader r(*s, "export");
    r.read("percentile", c.export_options.percentile);
    r.read("upscale", c.export_options.upscale);
    r.finish();
  }
  if (const json* s = root.child("run")) {
    detail::ObjectReader r(*s, "run");
    r.read("jobs", c.run.jobs);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline void ExperimentConfig::validate() const {
  auto wrap = [](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  };
  wrap("data", [&] {
    if (data.n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
    if (!(data.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
    build_templates(data.layout, data.height, data.width, data.region_size, data.num_classes);
  });
  wrap("models", [&] {
    if (models.hidden_widths.empty()) throw std::invalid_argument("hidden_widths must list at least one layer");
    for (int w : models.hidden_widths)
      if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
  });
  wrap("training.linear", [&] { training.linear.validate(); });
  wrap("training.plain", [&] { training.plain.validate(); });
  wrap("training.random_ball", [&] { training.random_ball.validate(); });
  wrap("training.pgd", [&] { training.pgd.validate(); });
  wrap("training.algorithm1", [&] { training.algorithm1.validate(); });
  wrap("calibration", [&] { calibration.validate(); });
  wrap("saliency", [&] {
    if (!(saliency.smoothgrad_sigma >= 0.0)) throw std::invalid_argument("smoothgrad_sigma must be >= 0");
    if (saliency.smoothgrad_samples < 1) throw std::invalid_argument("smoothgrad_samples must be >= 1");
    for (double s : saliency.sigma_grid)
      if (!(s >= 0.0)) throw std::invalid_argument("sigma_grid entries must be >= 0");
  });
  wrap("evaluation", [&] {
    if (!evaluation.criterion1 && !evaluation.criterion2) throw std::invalid_argument("enable at least one criterion");
    const std::size_t pixels = data.height * data.width;
    for (std::size_t i : evaluation.mask)
      if (i >= pixels) throw std::invalid_argument("mask index out of range");
    if (!evaluation.mask.empty() && evaluation.mask.size() < 2) throw std::invalid_argument("mask needs >= 2 pixels");
  });
  wrap("export", [&] {
    if (!(export_options.percentile > 0.0 && export_options.percentile <= 100.0)) {
      throw std::invalid_argument("percentile must be in (0, 100]");
    }
    if (export_options.upscale < 1) throw std::invalid_argument("upscale must be >= 1");
  });
  wrap("run", [&] {
    if (run.jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  });
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Sets a dotted path ("training.pgd.epsilon") in a config document. The value is parsed as JSON
/// and falls back to a plain string.
inline void apply_override(nlohmann::json& doc, const std::string& dotted, const std::string& value) {
  if (dotted.empty()) throw ConfigError("empty override path");
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("malformed override path '" + dotted + "'");
    if (!node->is_object()) throw ConfigError("override path '" + dotted + "' crosses a non-object");
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

/// Digest of the canonical config, excluding settings that cannot change any output.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = config_to_json(c);
  j.erase("run");
  return sha256_hex(j.dump());
}

}  // namespace gradsal
