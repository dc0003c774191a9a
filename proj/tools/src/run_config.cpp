#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

#include <cssl/error.hpp>

namespace cssl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* type_name(const json& v) { return v.type_name(); }

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, std::string("expected a number, got ") + type_name(v));
  return v.get<double>();
}

std::size_t get_count(const json& v, const std::string& path) {
  if (!v.is_number_integer()) {
    throw ConfigError(path, std::string("expected a non-negative integer, got ") + type_name(v));
  }
  if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, std::string("expected true or false, got ") + type_name(v));
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, std::string("expected a string, got ") + type_name(v));
  return v.get<std::string>();
}

void require_range(bool ok, const std::string& path, const char* what) {
  if (!ok) throw ConfigError(path, what);
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::vector<std::string>& ssl_only_keys() {
  static const std::vector<std::string> keys{"preset",  "batch_unlabelled", "mixing",
                                             "filter_q", "weighting",       "sce_enabled",
                                             "sce",      "rounds",          "ensemble_views"};
  return keys;
}

void parse_sce(SceConfig& sce, const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError(path, std::string("expected an object, got ") + type_name(v));
  for (const auto& [key, val] : v.items()) {
    const std::string p = path + "/" + key;
    if (key == "alpha") {
      sce.alpha = get_number(val, p);
      require_range(sce.alpha >= 0.0, p, "must be >= 0");
    } else if (key == "beta") {
      sce.beta = get_number(val, p);
      require_range(sce.beta >= 0.0, p, "must be >= 0");
    } else if (key == "log_clamp") {
      sce.clamp = get_number(val, p);
      require_range(sce.clamp < 0.0, p, "must be < 0");
    } else {
      throw ConfigError(p, "unknown key");
    }
  }
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"dataset", [](RunConfig& c, const json& v, const std::string& p) { c.dataset = get_string(v, p); }},
      {"output_dir", [](RunConfig& c, const json& v, const std::string& p) { c.output_dir = get_string(v, p); }},
      {"seed", [](RunConfig& c, const json& v, const std::string& p) { c.train.seed = get_count(v, p); }},
      {"steps",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.steps = get_count(v, p);
         require_range(c.train.steps >= 1, p, "must be >= 1");
       }},
      {"base_lr",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.base_lr = get_number(v, p);
         require_range(c.train.base_lr > 0.0, p, "must be > 0");
       }},
      {"poly_power",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.poly_power = get_number(v, p);
         require_range(c.train.poly_power >= 0.0, p, "must be >= 0");
       }},
      {"momentum",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.momentum = get_number(v, p);
         require_range(c.train.momentum >= 0.0 && c.train.momentum < 1.0, p, "must be in [0, 1)");
       }},
      {"weight_decay",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.weight_decay = get_number(v, p);
         require_range(c.train.weight_decay >= 0.0, p, "must be >= 0");
       }},
      {"batch_labelled",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.batch_labelled = get_count(v, p);
         require_range(c.train.batch_labelled >= 1, p, "must be >= 1");
       }},
      {"batch_unlabelled",
       [](RunConfig& c, const json& v, const std::string& p) { c.train.batch_unlabelled = get_count(v, p); }},
      {"eval_every",
       [](RunConfig& c, const json& v, const std::string& p) { c.train.eval_every = get_count(v, p); }},
      {"hflip", [](RunConfig& c, const json& v, const std::string& p) { c.train.hflip = get_bool(v, p); }},
      {"ensemble_views",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.ensemble_views = get_count(v, p);
         require_range(c.train.ensemble_views >= 1, p, "must be >= 1");
       }},
      {"mixing",
       [](RunConfig& c, const json& v, const std::string& p) {
         try {
           c.train.mixing = parse_mix_mode(get_string(v, p));
         } catch (const ArgumentError&) {
           throw ConfigError(p, "expected one of none, cow, cutmix");
         }
       }},
      {"filter_q",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.filter_q = get_number(v, p);
         require_range(c.train.filter_q >= 0.0 && c.train.filter_q < 1.0, p, "must be in [0, 1)");
       }},
      {"weighting", [](RunConfig& c, const json& v, const std::string& p) { c.train.weighting = get_bool(v, p); }},
      {"sce_enabled",
       [](RunConfig& c, const json& v, const std::string& p) { c.train.sce_enabled = get_bool(v, p); }},
      {"sce", [](RunConfig& c, const json& v, const std::string& p) { parse_sce(c.train.sce, v, p); }},
      {"rounds",
       [](RunConfig& c, const json& v, const std::string& p) {
         c.train.rounds = get_count(v, p);
         require_range(c.train.rounds >= 1, p, "must be >= 1");
       }},
  };
  return table;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return fs::absolute(base / p).lexically_normal();
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  RunConfig cfg;
  // The preset is applied first so explicit keys override it.
  if (doc.contains("preset")) {
    cfg.preset = get_string(doc.at("preset"), "/preset");
    try {
      cfg.train = ablation_preset(cfg.preset, cfg.train);
    } catch (const ArgumentError& e) {
      throw ConfigError("/preset", e.what());
    }
  }
  for (const auto& [key, val] : doc.items()) {
    if (key == "preset") continue;
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("/" + key, "unknown key");
    it->second(cfg, val, "/" + key);
  }
  for (const auto& key : ssl_only_keys()) {
    if (doc.contains(key)) cfg.ssl_keys_present.push_back(key);
  }
  if (cfg.dataset.empty()) throw ConfigError("/dataset", "required key missing");
  if (cfg.output_dir.empty()) throw ConfigError("/output_dir", "required key missing");
  cfg.dataset = resolve(base_dir, cfg.dataset);
  cfg.output_dir = resolve(base_dir, cfg.output_dir);
  try {
    cfg.train.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError("", e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json j;
  j["dataset"] = c.dataset.string();
  j["output_dir"] = c.output_dir.string();
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["seed"] = t.seed;
  j["steps"] = t.steps;
  j["base_lr"] = t.base_lr;
  j["poly_power"] = t.poly_power;
  j["momentum"] = t.momentum;
  j["weight_decay"] = t.weight_decay;
  j["batch_labelled"] = t.batch_labelled;
  j["batch_unlabelled"] = t.batch_unlabelled;
  j["eval_every"] = t.eval_every;
  j["hflip"] = t.hflip;
  j["ensemble_views"] = t.ensemble_views;
  j["mixing"] = std::string(to_string(t.mixing));
  j["filter_q"] = t.filter_q;
  j["weighting"] = t.weighting;
  j["sce_enabled"] = t.sce_enabled;
  j["sce"] = {{"alpha", t.sce.alpha}, {"beta", t.sce.beta}, {"log_clamp", t.sce.clamp}};
  j["rounds"] = t.rounds;
  return j;
}

}  // namespace cssl::cli
