#include "ftm/models/registry.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ftm/models/serialize.hpp"
#include "ftm/models/zoo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftm::models {

const ModelSpec& Registry::find(const std::string& name) const {
  for (const auto& m : models)
    if (m.name == name) return m;
  std::string known;
  for (const auto& m : models) known += (known.empty() ? "" : ", ") + m.name;
  throw RegistryError("model '" + name + "' not in registry (known: " + known + ")");
}

std::vector<std::string> Registry::names() const {
  std::vector<std::string> out;
  for (const auto& m : models) out.push_back(m.name);
  return out;
}

Registry load_registry(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw RegistryError("cannot open registry: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw RegistryError("registry " + path + " is not valid JSON: " + e.what());
  }
  Registry reg;
  reg.path = path;
  if (!j.contains("models") || !j["models"].is_array()) throw RegistryError("registry " + path + ": missing models[]");
  for (const auto& m : j["models"]) {
    ModelSpec s;
    try {
      s.name = m.at("name").get<std::string>();
      s.arch = m.at("arch").get<std::string>();
      s.weights = m.at("weights").get<std::string>();
      s.input_side = m.at("input_side").get<int>();
      s.num_classes = m.at("num_classes").get<int>();
      s.mean = m.at("mean").get<std::vector<float>>();
      s.std = m.at("std").get<std::vector<float>>();
      s.interception = m.value("interception", std::string("auto"));
      s.test_accuracy = m.value("test_accuracy", 0.0);
    } catch (const json::exception& e) {
      throw RegistryError("registry " + path + ": bad model entry: " + e.what());
    }
    reg.models.push_back(std::move(s));
  }
  return reg;
}

void save_registry(const Registry& reg, const std::string& path) {
  json j;
  j["models"] = json::array();
  for (const auto& m : reg.models) {
    json e;
    e["name"] = m.name;
    e["arch"] = m.arch;
    e["weights"] = m.weights;
    e["input_side"] = m.input_side;
    e["num_classes"] = m.num_classes;
    e["mean"] = m.mean;
    e["std"] = m.std;
    e["interception"] = m.interception;
    e["test_accuracy"] = m.test_accuracy;
    j["models"].push_back(e);
  }
  std::ofstream f(path);
  if (!f) throw RegistryError("cannot write registry: " + path);
  f << j.dump(2) << "\n";
}

attack::Model<float> wrap_model(const ModelSpec& spec, nn::Sequential<float> raw_net) {
  attack::Model<float> m;
  m.name = spec.name;
  m.arch = spec.arch;
  m.input_side = spec.input_side;
  m.num_classes = spec.num_classes;
  nn::Sequential<float> net;
  net.add(std::make_unique<nn::Normalize<float>>("normalize", std::vector<float>(spec.mean.begin(), spec.mean.end()),
                                                 std::vector<float>(spec.std.begin(), spec.std.end())));
  // splice the classifier behind the normalizer
  nn::Sequential<float> built = std::move(raw_net);
  for (int i = 0; i < built.size(); ++i) net.add(built.layer(i).clone());
  m.net = std::move(net);
  return m;
}

attack::Model<float> load_model(const Registry& reg, const std::string& name) {
  const ModelSpec& spec = reg.find(name);
  if (spec.interception != "auto")
    throw RegistryError("model '" + name + "': unsupported interception spec '" + spec.interception + "'");
  nn::Sequential<float> raw = build_arch<float>(spec.arch, spec.num_classes);
  fs::path wpath(spec.weights);
  if (wpath.is_relative() && !reg.path.empty()) wpath = fs::path(reg.path).parent_path() / wpath;
  load_weights(wpath.string(), raw);
  return wrap_model(spec, std::move(raw));
}

}  // namespace ftm::models
