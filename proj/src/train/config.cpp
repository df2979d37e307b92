#include <fstream>
#include <sstream>

#include "px3d/train.hpp"

namespace px3d::train {

using nlohmann::json;

namespace {

void flatten_into(const json& j, const std::string& prefix, json& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      flatten_into(value, name, out);
    } else {
      out[name] = value;
    }
  }
}

json flatten(const json& j) {
  json out = json::object();
  flatten_into(j, "", out);
  return out;
}

json unflatten(const json& flat) {
  json out = json::object();
  for (const auto& [key, value] : flat.items()) {
    json* node = &out;
    std::size_t start = 0;
    for (std::size_t dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
      node = &(*node)[key.substr(start, dot - start)];
      start = dot + 1;
    }
    (*node)[key.substr(start)] = value;
  }
  return out;
}

std::string key_list(const TrainConfig& config) {
  std::string out;
  for (const auto& k : config_keys(config)) out += "\n  " + k;
  return out;
}

json merge_flat(const json& base_flat, const json& updates_flat) {
  json merged = base_flat;
  for (const auto& [key, value] : updates_flat.items()) {
    if (!base_flat.contains(key)) {
      throw ConfigError("unknown config key '" + key + "'; valid keys:" + key_list({}));
    }
    merged[key] = value;
  }
  return merged;
}

TrainConfig parse_typed(const json& j) {
  TrainConfig c;
  try {
    c.dataset = j.at("dataset").get<std::string>();
    c.network = net::NetworkConfig::from_json(j.at("network"));
    c.schedule = loss::schedule_direction_from_string(j.at("schedule").get<std::string>());
    c.normalize_loss = j.at("normalize_loss").get<bool>();
    const auto& a = j.at("adam");
    c.adam = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
              a.at("eps").get<double>()};
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.max_steps = j.at("max_steps").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ConfigError("adam.lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam.beta1 and adam.beta2 must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam.eps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0 && max_steps == 0) throw ConfigError("epochs must be at least 1");
  try {
    network.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

loss::GuidanceSchedule TrainConfig::guidance() const {
  return network.progressive ? loss::GuidanceSchedule::make(net::kPyramidBlocks, schedule)
                             : loss::GuidanceSchedule::final_only();
}

json TrainConfig::to_json() const {
  return {{"dataset", dataset},
          {"network", network.to_json()},
          {"schedule", loss::to_string(schedule)},
          {"normalize_loss", normalize_loss},
          {"adam", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every},
          {"eval_every", eval_every}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  const json merged = merge_flat(flatten(TrainConfig{}.to_json()), flatten(j));
  return parse_typed(unflatten(merged));
}

std::vector<std::string> config_keys(const TrainConfig& config) {
  std::vector<std::string> keys;
  const json flat = flatten(config.to_json());
  for (const auto& [key, value] : flat.items()) keys.push_back(key);
  return keys;
}

void apply_override(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json flat = flatten(config.to_json());
  if (!flat.contains(key)) {
    throw ConfigError("unknown config key '" + key + "'; valid keys:" + key_list(config));
  }
  flat[key] = value;
  config = parse_typed(unflatten(flat));
}

TrainConfig resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& overrides) {
  TrainConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
    config = TrainConfig::from_json(j);
  }
  for (const auto& o : overrides) apply_override(config, o);
  config.validate();
  return config;
}

}  // namespace px3d::train
