#include "ftm/attack/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ftm/core/error.hpp"

using nlohmann::json;

namespace ftm::attack {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("config field '" + field + "': " + why);
}

// Accepts a JSON number or a fraction string like "16/255".
double number_or_ratio(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    size_t slash = s.find('/');
    try {
      if (slash == std::string::npos) return std::stod(s);
      double num = std::stod(s.substr(0, slash));
      double den = std::stod(s.substr(slash + 1));
      if (den == 0) throw ConfigError("config field '" + field + "': division by zero");
      return num / den;
    } catch (const std::invalid_argument&) {
      throw ConfigError("config field '" + field + "': cannot parse number '" + s + "'");
    }
  }
  throw ConfigError("config field '" + field + "': expected number or \"a/b\" string");
}

json transform_to_json(const TransformSpec& t) {
  json j;
  j["kind"] = t.kind;
  if (t.kind == "di") {
    j["di_prob"] = t.di_prob;
    j["max_pad_ratio"] = t.max_pad_ratio;
  } else if (t.kind == "rdi") {
    j["max_pad_ratio"] = t.max_pad_ratio;
  } else if (t.kind == "ti") {
    j["ti_kernel_size"] = t.ti_kernel_size;
    j["ti_sigma"] = t.ti_sigma;
  } else if (t.kind == "si") {
    j["si_copies"] = t.si_copies;
  } else if (t.kind == "admix") {
    j["admix_weight"] = t.admix_weight;
    j["admix_count"] = t.admix_count;
    j["admix_scales"] = t.admix_scales;
  } else if (t.kind == "vt") {
    j["vt_samples"] = t.vt_samples;
    j["vt_bound"] = t.vt_bound;
  }
  return j;
}

TransformSpec transform_from_json(const json& j, const std::string& field) {
  TransformSpec t;
  if (!j.contains("kind")) throw ConfigError("config field '" + field + "': transform misses 'kind'");
  t.kind = j["kind"].get<std::string>();
  if (j.contains("di_prob")) t.di_prob = number_or_ratio(j["di_prob"], field + ".di_prob");
  if (j.contains("max_pad_ratio")) t.max_pad_ratio = number_or_ratio(j["max_pad_ratio"], field + ".max_pad_ratio");
  if (j.contains("ti_kernel_size")) t.ti_kernel_size = j["ti_kernel_size"].get<int>();
  if (j.contains("ti_sigma")) t.ti_sigma = number_or_ratio(j["ti_sigma"], field + ".ti_sigma");
  if (j.contains("si_copies")) t.si_copies = j["si_copies"].get<int>();
  if (j.contains("admix_weight")) t.admix_weight = number_or_ratio(j["admix_weight"], field + ".admix_weight");
  if (j.contains("admix_count")) t.admix_count = j["admix_count"].get<int>();
  if (j.contains("admix_scales")) t.admix_scales = j["admix_scales"].get<int>();
  if (j.contains("vt_samples")) t.vt_samples = j["vt_samples"].get<int>();
  if (j.contains("vt_bound")) t.vt_bound = number_or_ratio(j["vt_bound"], field + ".vt_bound");
  return t;
}

}  // namespace

void AttackConfig::validate() const {
  require(epsilon > 0.0 && epsilon <= 1.0, "atk.epsilon", "must be in (0, 1]");
  require(eta > 0.0 && eta <= epsilon, "atk.eta", "must be in (0, epsilon]");
  require(iterations >= 1, "atk.iterations", "must be >= 1");
  require(mu >= 0.0, "atk.mu", "must be >= 0");
  require(p >= 0.0 && p <= 1.0, "atk.p", "must be in [0, 1]");
  require(alpha_max >= 0.0 && alpha_max <= 1.0, "atk.alpha_max", "must be in [0, 1]");
  require(beta >= 0.0, "atk.beta", "must be >= 0");
  require(ensemble_k >= 1, "atk.ensemble_k", "must be >= 1");
  require(eps_bar > 0.0, "atk.eps_bar", "must be > 0");
  require(batch_size >= 1, "atk.batch_size", "must be >= 1");
  int fan_out_stages = 0;
  for (size_t i = 0; i < transforms.size(); ++i) {
    const TransformSpec& t = transforms[i];
    std::string field = "atk.transforms[" + std::to_string(i) + "]";
    if (t.kind == "identity") {
    } else if (t.kind == "di") {
      require(t.di_prob >= 0.0 && t.di_prob <= 1.0, field + ".di_prob", "must be in [0, 1]");
      require(t.max_pad_ratio >= 1.0, field + ".max_pad_ratio", "must be >= 1");
    } else if (t.kind == "rdi") {
      require(t.max_pad_ratio >= 1.0, field + ".max_pad_ratio", "must be >= 1");
    } else if (t.kind == "ti") {
      require(t.ti_kernel_size >= 1 && t.ti_kernel_size % 2 == 1, field + ".ti_kernel_size", "must be odd and >= 1");
      require(t.ti_sigma > 0.0, field + ".ti_sigma", "must be > 0");
    } else if (t.kind == "si") {
      require(t.si_copies >= 1, field + ".si_copies", "must be >= 1");
      ++fan_out_stages;
    } else if (t.kind == "admix") {
      require(t.admix_weight >= 0.0 && t.admix_weight <= 1.0, field + ".admix_weight", "must be in [0, 1]");
      require(t.admix_count >= 1, field + ".admix_count", "must be >= 1");
      require(t.admix_scales >= 1, field + ".admix_scales", "must be >= 1");
      ++fan_out_stages;
    } else if (t.kind == "vt") {
      require(t.vt_samples >= 1, field + ".vt_samples", "must be >= 1");
      require(t.vt_bound > 0.0, field + ".vt_bound", "must be > 0");
    } else {
      throw ConfigError("config field '" + field + ".kind': unknown transform '" + t.kind + "'");
    }
  }
  require(fan_out_stages <= 1, "atk.transforms", "at most one multi-copy transform (si/admix) per pipeline");
}

void RunConfig::validate() const {
  atk.validate();
  require(mode == "desk" || mode == "full", "mode", "must be 'desk' or 'full'");
  bool named = false;
  for (const auto& n : named_attacks())
    if (n == attack) named = true;
  require(named || attack == "custom", "attack", "unknown attack '" + attack + "'");
  if (attack == "RDI-FTM-E") require(atk.ensemble_k >= 2, "atk.ensemble_k", "RDI-FTM-E requires ensemble_k >= 2");
}

std::vector<std::string> named_attacks() {
  return {"MI", "DI", "RDI", "RDI-SI", "RDI-VT", "RDI-Admix", "RDI-CFM", "RDI-FTM", "RDI-FTM-E"};
}

AttackConfig expand_pipeline(const std::string& attack_name, const std::string& mode) {
  AttackConfig c;
  c.epsilon = 16.0 / 255.0;
  c.eta = 2.0 / 255.0;
  c.mu = 1.0;
  c.iterations = (mode == "full") ? 300 : 100;

  TransformSpec ti;
  ti.kind = "ti";
  TransformSpec rdi;
  rdi.kind = "rdi";

  auto add_mixup = [&](double beta) {
    c.beta = beta;
    c.p = 0.1;
    c.alpha_max = 0.75;
  };

  if (attack_name == "MI") {
    c.transforms = {ti};
  } else if (attack_name == "DI") {
    TransformSpec di;
    di.kind = "di";
    c.transforms = {di, ti};
  } else if (attack_name == "RDI") {
    c.transforms = {rdi, ti};
  } else if (attack_name == "RDI-SI") {
    TransformSpec si;
    si.kind = "si";
    c.transforms = {rdi, si, ti};
  } else if (attack_name == "RDI-VT") {
    TransformSpec vt;
    vt.kind = "vt";
    c.transforms = {rdi, vt, ti};
  } else if (attack_name == "RDI-Admix") {
    TransformSpec ad;
    ad.kind = "admix";
    c.transforms = {rdi, ad, ti};
  } else if (attack_name == "RDI-CFM") {
    c.transforms = {rdi, ti};
    add_mixup(0.0);
  } else if (attack_name == "RDI-FTM") {
    c.transforms = {rdi, ti};
    add_mixup(0.01);
  } else if (attack_name == "RDI-FTM-E") {
    c.transforms = {rdi, ti};
    add_mixup(0.01);
    c.ensemble_k = 2;
  } else {
    throw ConfigError("unknown named attack '" + attack_name + "'");
  }
  return c;
}

namespace {

json attack_to_json(const AttackConfig& c) {
  json j;
  j["epsilon"] = c.epsilon;
  j["eta"] = c.eta;
  j["mu"] = c.mu;
  j["iterations"] = c.iterations;
  j["beta"] = c.beta;
  j["p"] = c.p;
  j["alpha_max"] = c.alpha_max;
  j["ensemble_k"] = c.ensemble_k;
  j["eps_bar"] = c.eps_bar;
  j["seed"] = c.seed;
  j["batch_size"] = c.batch_size;
  j["transforms"] = json::array();
  for (const auto& t : c.transforms) j["transforms"].push_back(transform_to_json(t));
  return j;
}

AttackConfig attack_from_json(const json& j) {
  AttackConfig c;
  if (j.contains("epsilon")) c.epsilon = number_or_ratio(j["epsilon"], "atk.epsilon");
  if (j.contains("eta")) c.eta = number_or_ratio(j["eta"], "atk.eta");
  if (j.contains("mu")) c.mu = number_or_ratio(j["mu"], "atk.mu");
  if (j.contains("iterations")) c.iterations = j["iterations"].get<int>();
  if (j.contains("beta")) c.beta = number_or_ratio(j["beta"], "atk.beta");
  if (j.contains("p")) c.p = number_or_ratio(j["p"], "atk.p");
  if (j.contains("alpha_max")) c.alpha_max = number_or_ratio(j["alpha_max"], "atk.alpha_max");
  if (j.contains("ensemble_k")) c.ensemble_k = j["ensemble_k"].get<int>();
  if (j.contains("eps_bar")) c.eps_bar = number_or_ratio(j["eps_bar"], "atk.eps_bar");
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("transforms")) {
    c.transforms.clear();
    int i = 0;
    for (const auto& t : j["transforms"]) c.transforms.push_back(transform_from_json(t, "atk.transforms[" + std::to_string(i++) + "]"));
  }
  return c;
}

}  // namespace

std::string serialize_run_config(const RunConfig& cfg) {
  json j;
  j["attack"] = cfg.attack;
  j["mode"] = cfg.mode;
  j["dataset_manifest"] = cfg.dataset_manifest;
  j["registry"] = cfg.registry_path;
  j["output_dir"] = cfg.output_dir;
  j["surrogate"] = cfg.surrogate;
  j["targets"] = cfg.targets;
  j["max_images"] = cfg.max_images;
  j["export_png"] = cfg.export_png;
  j["atk"] = attack_to_json(cfg.atk);
  return j.dump(2) + "\n";
}

RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  if (j.contains("attack")) cfg.attack = j["attack"].get<std::string>();
  if (j.contains("mode")) cfg.mode = j["mode"].get<std::string>();
  // Named attacks expand first; explicit atk fields then override.
  if (cfg.attack != "custom") cfg.atk = expand_pipeline(cfg.attack, cfg.mode);
  if (j.contains("dataset_manifest")) cfg.dataset_manifest = j["dataset_manifest"].get<std::string>();
  if (j.contains("registry")) cfg.registry_path = j["registry"].get<std::string>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("surrogate")) cfg.surrogate = j["surrogate"].get<std::string>();
  if (j.contains("targets")) cfg.targets = j["targets"].get<std::vector<std::string>>();
  if (j.contains("max_images")) cfg.max_images = j["max_images"].get<int>();
  if (j.contains("export_png")) cfg.export_png = j["export_png"].get<bool>();
  if (j.contains("atk")) {
    json merged = attack_to_json(cfg.atk);
    merged.update(j["atk"]);
    cfg.atk = attack_from_json(merged);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config_text(ss.str());
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write config file: " + path);
  f << serialize_run_config(cfg);
}

void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value) {
  std::vector<std::string> parts;
  size_t start = 0;
  for (;;) {
    size_t dot = key.find('.', start);
    parts.push_back(key.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json patch = json::object();
  json* cur = &patch;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    (*cur)[parts[i]] = json::object();
    cur = &(*cur)[parts[i]];
  }
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    v = value;  // plain string
  }
  (*cur)[parts.back()] = v;

  json full = json::parse(serialize_run_config(cfg));
  // Switching the named attack or mode re-expands the pipeline instead of
  // keeping the previous expansion's fields.
  if (key == "attack" || key == "mode") full.erase("atk");
  full.merge_patch(patch);
  cfg = parse_run_config_text(full.dump());
}

}  // namespace ftm::attack
