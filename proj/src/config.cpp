#include "lmdvit/config.hpp"

#include <algorithm>
#include <set>

#include "lmdvit/errors.hpp"

namespace lmdvit {

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.profile = "full";
  c.window_size = 8;
  c.base_channels = 32;
  c.depths = {2, 2, 8, 12, 8, 12, 8, 2, 2};
  c.heads = {1, 2, 4, 8, 16, 8, 4, 2, 1};
  return c;
}

ModelConfig ModelConfig::from_profile(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "full") return full();
  throw ConfigError("unknown model profile '" + name + "' (expected tiny or full)");
}

std::size_t ModelConfig::stage_scale(std::size_t stage) {
  static constexpr std::size_t scales[kStageCount] = {0, 1, 2, 3, 4, 3, 2, 1, 0};
  return scales[stage];
}

std::size_t ModelConfig::stage_channels(std::size_t stage) const { return base_channels << stage_scale(stage); }

bool ModelConfig::prunes(std::size_t stage) const {
  return std::find(prune_stages.begin(), prune_stages.end(), stage + 1) != prune_stages.end();
}

void ModelConfig::validate() const {
  if (window_size < 2) throw ConfigError("window_size must be >= 2");
  if (base_channels < 2 || base_channels % 2 != 0) throw ConfigError("base_channels must be even and >= 2");
  if (depths.size() != kStageCount || heads.size() != kStageCount) {
    throw ConfigError("depths and heads need exactly 9 entries");
  }
  for (std::size_t s = 0; s < kStageCount; ++s) {
    if (depths[s] == 0) throw ConfigError("stage depth must be >= 1");
    if (heads[s] == 0 || stage_channels(s) % heads[s] != 0) {
      throw ConfigError("stage " + std::to_string(s + 1) + ": " + std::to_string(stage_channels(s)) +
                        " channels not divisible by " + std::to_string(heads[s]) + " heads");
    }
  }
  std::set<std::size_t> seen;
  for (auto p : prune_stages) {
    if (p < 1 || p > kStageCount || !seen.insert(p).second) {
      throw ConfigError("prune_stages entries must be distinct values in 1..9");
    }
  }
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0,1)");
  if (!(s > 0.0 && s <= 1.0)) throw ConfigError("s must lie in (0,1]");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"profile", c.profile},
          {"window_size", c.window_size},
          {"base_channels", c.base_channels},
          {"depths", c.depths},
          {"heads", c.heads},
          {"prune_stages", c.prune_stages},
          {"beta", c.beta},
          {"s", c.s},
          {"tau", c.tau},
          {"leff_variant", c.leff_variant},
          {"skip_train_remask", c.skip_train_remask},
          {"detach_predictor_input", c.detach_predictor_input}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c = ModelConfig::from_profile(j.value("profile", std::string("tiny")));
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "profile") {
        continue;
      } else if (key == "window_size") {
        c.window_size = value.get<std::size_t>();
      } else if (key == "base_channels") {
        c.base_channels = value.get<std::size_t>();
      } else if (key == "depths") {
        c.depths = value.get<std::vector<std::size_t>>();
      } else if (key == "heads") {
        c.heads = value.get<std::vector<std::size_t>>();
      } else if (key == "prune_stages") {
        c.prune_stages = value.get<std::vector<std::size_t>>();
      } else if (key == "beta") {
        c.beta = value.get<double>();
      } else if (key == "s") {
        c.s = value.get<double>();
      } else if (key == "tau") {
        c.tau = value.get<double>();
      } else if (key == "leff_variant") {
        c.leff_variant = value.get<bool>();
      } else if (key == "skip_train_remask") {
        c.skip_train_remask = value.get<bool>();
      } else if (key == "detach_predictor_input") {
        c.detach_predictor_input = value.get<bool>();
      } else {
        throw ConfigError("unknown model config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config value: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace lmdvit
