#include "dvmpc/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace dvmpc {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

const json& expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  return j;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(path + "/" + item.key(), "unknown key");
  }
}

scalar_t get_scalar(const json& j, const std::string& path, const char* key,
                    scalar_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) fail(path + "/" + key, "expected a number");
  return v.get<scalar_t>();
}

int get_positive_int(const json& j, const std::string& path, const char* key,
                     int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    fail(path + "/" + key, "expected a positive integer");
  }
  return v.get<int>();
}

int get_nonnegative_int(const json& j, const std::string& path, const char* key,
                        int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(path + "/" + key, "expected a nonnegative integer");
  }
  return v.get<int>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail(path + "/" + key, "expected a boolean");
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) fail(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

std::optional<scalar_t> get_optional_scalar(const json& j, const std::string& path,
                                            const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const json& v = j.at(key);
  if (!v.is_number()) fail(path + "/" + key, "expected a number");
  return v.get<scalar_t>();
}

void parse_environment(const json& j, RunConfig* config) {
  const std::string path = "/environment";
  expect_object(j, path);
  check_keys(j, path,
             {"name", "timestep", "discount", "episode_length", "termination_penalty",
              "noise_scale", "success_radius"});
  config->environment = get_string(j, path, "name", config->environment);
  auto& ov = config->env_overrides;
  ov.timestep = get_optional_scalar(j, path, "timestep");
  ov.discount = get_optional_scalar(j, path, "discount");
  ov.episode_length = get_optional_scalar(j, path, "episode_length");
  ov.termination_penalty = get_optional_scalar(j, path, "termination_penalty");
  ov.noise_scale = get_optional_scalar(j, path, "noise_scale");
  ov.success_radius = get_optional_scalar(j, path, "success_radius");
}

void parse_value_net(const json& j, RunConfig* config) {
  const std::string path = "/value_net";
  expect_object(j, path);
  check_keys(j, path, {"hidden"});
  if (!j.contains("hidden")) return;
  const json& hidden = j.at("hidden");
  if (!hidden.is_array() || hidden.empty()) {
    fail(path + "/hidden", "expected a non-empty array of positive integers");
  }
  config->hidden_layers.clear();
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const json& v = hidden.at(i);
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      fail(path + "/hidden/" + std::to_string(i), "expected a positive integer");
    }
    config->hidden_layers.push_back(v.get<int>());
  }
}

void parse_mpc(const json& j, RunConfig* config) {
  const std::string path = "/mpc";
  expect_object(j, path);
  check_keys(j, path,
             {"horizon", "timestep", "cost_mode", "max_iterations", "cost_tolerance"});
  MpcConfig& mpc = config->mpc;
  mpc.horizon = get_scalar(j, path, "horizon", mpc.horizon);
  mpc.timestep = get_scalar(j, path, "timestep", mpc.timestep);
  mpc.max_iterations = get_positive_int(j, path, "max_iterations", mpc.max_iterations);
  mpc.cost_tolerance = get_scalar(j, path, "cost_tolerance", mpc.cost_tolerance);
  if (j.contains("cost_mode")) {
    const std::string mode = get_string(j, path, "cost_mode", "");
    try {
      mpc.cost_mode = parse_cost_mode(mode);
    } catch (const ContractViolation&) {
      fail(path + "/cost_mode",
           "expected \"heuristic_plus_running\" or \"heuristic_only\"");
    }
  }
}

void parse_critic(const json& j, RunConfig* config) {
  const std::string path = "/critic";
  expect_object(j, path);
  check_keys(j, path,
             {"minibatches_per_update", "batch_size", "step_size", "weight_decay",
              "tau_polyak", "discount_mode", "buffer_capacity", "actor_value_source"});
  config->critic_minibatches =
      get_positive_int(j, path, "minibatches_per_update", config->critic_minibatches);
  config->critic_batch_size =
      get_positive_int(j, path, "batch_size", config->critic_batch_size);
  config->critic_step_size = get_scalar(j, path, "step_size", config->critic_step_size);
  config->critic_weight_decay =
      get_scalar(j, path, "weight_decay", config->critic_weight_decay);
  config->critic_tau_polyak =
      get_scalar(j, path, "tau_polyak", config->critic_tau_polyak);
  if (j.contains("discount_mode")) {
    const std::string mode = get_string(j, path, "discount_mode", "");
    if (mode == "per_second") {
      config->critic_discount_mode = DiscountMode::kPerSecond;
    } else if (mode == "per_step_raw") {
      config->critic_discount_mode = DiscountMode::kPerStepRaw;
    } else {
      fail(path + "/discount_mode", "expected \"per_second\" or \"per_step_raw\"");
    }
  }
  const int capacity = get_positive_int(
      j, path, "buffer_capacity", static_cast<int>(config->buffer_capacity));
  config->buffer_capacity = static_cast<std::size_t>(capacity);
  if (j.contains("actor_value_source")) {
    const std::string source = get_string(j, path, "actor_value_source", "");
    if (source == "target") {
      config->actor_reads_target = true;
    } else if (source == "live") {
      config->actor_reads_target = false;
    } else {
      fail(path + "/actor_value_source", "expected \"target\" or \"live\"");
    }
  }
}

void parse_training(const json& j, RunConfig* config) {
  const std::string path = "/training";
  expect_object(j, path);
  check_keys(j, path,
             {"episodes", "evaluation_cadence", "checkpoint_cadence",
              "stochastic_rollouts"});
  TrainingConfig& tr = config->training;
  tr.episodes = get_nonnegative_int(j, path, "episodes", tr.episodes);
  tr.evaluation_cadence =
      get_positive_int(j, path, "evaluation_cadence", tr.evaluation_cadence);
  tr.checkpoint_cadence =
      get_positive_int(j, path, "checkpoint_cadence", tr.checkpoint_cadence);
  tr.stochastic_rollouts =
      get_bool(j, path, "stochastic_rollouts", tr.stochastic_rollouts);
}

void parse_evaluation(const json& j, RunConfig* config) {
  const std::string path = "/evaluation";
  expect_object(j, path);
  check_keys(j, path, {"num_starts"});
  config->evaluation_starts =
      get_positive_int(j, path, "num_starts", config->evaluation_starts);
}

void parse_ablation(const json& j, RunConfig* config) {
  const std::string path = "/ablation";
  expect_object(j, path);
  check_keys(j, path,
             {"horizons", "cost_modes", "seeds", "success_threshold", "episodes"});
  AblationConfig& ab = config->ablation;
  if (j.contains("horizons")) {
    const json& arr = j.at("horizons");
    if (!arr.is_array() || arr.empty()) {
      fail(path + "/horizons", "expected a non-empty array of positive numbers");
    }
    ab.horizons.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr.at(i).is_number() || arr.at(i).get<scalar_t>() <= 0) {
        fail(path + "/horizons/" + std::to_string(i), "expected a positive number");
      }
      ab.horizons.push_back(arr.at(i).get<scalar_t>());
    }
  }
  if (j.contains("cost_modes")) {
    const json& arr = j.at("cost_modes");
    if (!arr.is_array() || arr.empty()) {
      fail(path + "/cost_modes", "expected a non-empty array of mode names");
    }
    ab.cost_modes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr.at(i).is_string()) {
        fail(path + "/cost_modes/" + std::to_string(i), "expected a string");
      }
      try {
        ab.cost_modes.push_back(parse_cost_mode(arr.at(i).get<std::string>()));
      } catch (const ContractViolation&) {
        fail(path + "/cost_modes/" + std::to_string(i),
             "expected \"heuristic_plus_running\" or \"heuristic_only\"");
      }
    }
  }
  if (j.contains("seeds")) {
    const json& arr = j.at("seeds");
    if (!arr.is_array() || arr.empty()) {
      fail(path + "/seeds", "expected a non-empty array of nonnegative integers");
    }
    ab.seeds.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr.at(i).is_number_integer() || arr.at(i).get<long long>() < 0) {
        fail(path + "/seeds/" + std::to_string(i), "expected a nonnegative integer");
      }
      ab.seeds.push_back(arr.at(i).get<std::uint64_t>());
    }
  }
  ab.success_threshold =
      get_scalar(j, path, "success_threshold", ab.success_threshold);
  ab.episodes = get_nonnegative_int(j, path, "episodes", ab.episodes);
}

void parse_output(const json& j, RunConfig* config) {
  const std::string path = "/output";
  expect_object(j, path);
  check_keys(j, path, {"directory"});
  config->output_dir = get_string(j, path, "directory", config->output_dir);
}

}  // namespace

void RunConfig::validate() const {
  if (environment.empty()) throw ConfigError("/environment/name: must not be empty");
  if (hidden_layers.empty()) throw ConfigError("/value_net/hidden: must not be empty");
  for (int width : hidden_layers) {
    if (width <= 0) throw ConfigError("/value_net/hidden: widths must be positive");
  }
  try {
    mpc.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("/mpc: ") + e.what());
  }
  if (critic_step_size <= 0) throw ConfigError("/critic/step_size: must be positive");
  if (critic_weight_decay < 0) {
    throw ConfigError("/critic/weight_decay: must be nonnegative");
  }
  if (critic_tau_polyak <= 0 || critic_tau_polyak > 1) {
    throw ConfigError("/critic/tau_polyak: must lie in (0, 1]");
  }
  if (buffer_capacity == 0) {
    throw ConfigError("/critic/buffer_capacity: must be positive");
  }
  if (ablation.success_threshold < 0 || ablation.success_threshold > 1) {
    throw ConfigError("/ablation/success_threshold: must lie in [0, 1]");
  }
  if (env_overrides.discount &&
      (*env_overrides.discount <= 0 || *env_overrides.discount > 1)) {
    throw ConfigError("/environment/discount: must lie in (0, 1]");
  }
  if (env_overrides.timestep && *env_overrides.timestep <= 0) {
    throw ConfigError("/environment/timestep: must be positive");
  }
  if (env_overrides.episode_length && *env_overrides.episode_length <= 0) {
    throw ConfigError("/environment/episode_length: must be positive");
  }
  if (env_overrides.noise_scale && *env_overrides.noise_scale < 0) {
    throw ConfigError("/environment/noise_scale: must be nonnegative");
  }
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("not valid JSON: ") + e.what());
  }
  expect_object(root, "/");
  check_keys(root, "",
             {"environment", "value_net", "mpc", "critic", "training", "evaluation",
              "ablation", "seed", "output"});

  RunConfig config;
  if (root.contains("environment")) parse_environment(root.at("environment"), &config);
  if (root.contains("value_net")) parse_value_net(root.at("value_net"), &config);
  if (root.contains("mpc")) parse_mpc(root.at("mpc"), &config);
  if (root.contains("critic")) parse_critic(root.at("critic"), &config);
  if (root.contains("training")) parse_training(root.at("training"), &config);
  if (root.contains("evaluation")) parse_evaluation(root.at("evaluation"), &config);
  if (root.contains("ablation")) parse_ablation(root.at("ablation"), &config);
  if (root.contains("seed")) {
    const json& v = root.at("seed");
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      fail("/seed", "expected a nonnegative integer");
    }
    config.seed = v.get<std::uint64_t>();
  }
  if (root.contains("output")) parse_output(root.at("output"), &config);

  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string render_run_config(const RunConfig& config) {
  json root;
  json& env = root["environment"];
  env["name"] = config.environment;
  const auto& ov = config.env_overrides;
  if (ov.timestep) env["timestep"] = *ov.timestep;
  if (ov.discount) env["discount"] = *ov.discount;
  if (ov.episode_length) env["episode_length"] = *ov.episode_length;
  if (ov.termination_penalty) env["termination_penalty"] = *ov.termination_penalty;
  if (ov.noise_scale) env["noise_scale"] = *ov.noise_scale;
  if (ov.success_radius) env["success_radius"] = *ov.success_radius;

  root["value_net"]["hidden"] = config.hidden_layers;

  json& mpc = root["mpc"];
  mpc["horizon"] = config.mpc.horizon;
  mpc["timestep"] = config.mpc.timestep;
  mpc["cost_mode"] = cost_mode_name(config.mpc.cost_mode);
  mpc["max_iterations"] = config.mpc.max_iterations;
  mpc["cost_tolerance"] = config.mpc.cost_tolerance;

  json& critic = root["critic"];
  critic["minibatches_per_update"] = config.critic_minibatches;
  critic["batch_size"] = config.critic_batch_size;
  critic["step_size"] = config.critic_step_size;
  critic["weight_decay"] = config.critic_weight_decay;
  critic["tau_polyak"] = config.critic_tau_polyak;
  critic["discount_mode"] =
      config.critic_discount_mode == DiscountMode::kPerSecond ? "per_second"
                                                              : "per_step_raw";
  critic["buffer_capacity"] = config.buffer_capacity;
  critic["actor_value_source"] = config.actor_reads_target ? "target" : "live";

  json& training = root["training"];
  training["episodes"] = config.training.episodes;
  training["evaluation_cadence"] = config.training.evaluation_cadence;
  training["checkpoint_cadence"] = config.training.checkpoint_cadence;
  training["stochastic_rollouts"] = config.training.stochastic_rollouts;

  root["evaluation"]["num_starts"] = config.evaluation_starts;

  json& ablation = root["ablation"];
  ablation["horizons"] = config.ablation.horizons;
  json modes = json::array();
  for (CostMode mode : config.ablation.cost_modes) modes.push_back(cost_mode_name(mode));
  ablation["cost_modes"] = modes;
  ablation["seeds"] = config.ablation.seeds;
  ablation["success_threshold"] = config.ablation.success_threshold;
  ablation["episodes"] = config.ablation.episodes;

  root["seed"] = config.seed;
  root["output"]["directory"] = config.output_dir;

  return root.dump(2) + "\n";
}

}  // namespace dvmpc
