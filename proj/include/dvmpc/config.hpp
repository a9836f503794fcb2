#pragma once

#include "dvmpc/critic.hpp"
#include "dvmpc/mpc.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvmpc {

/// Configuration parse/validation failure; the message names the JSON path of
/// the offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnvironmentOverrides {
  std::optional<scalar_t> timestep;
  std::optional<scalar_t> discount;
  std::optional<scalar_t> episode_length;
  std::optional<scalar_t> termination_penalty;
  std::optional<scalar_t> noise_scale;
  std::optional<scalar_t> success_radius;
};

struct TrainingConfig {
  int episodes = 300;
  int evaluation_cadence = 25;   // episodes between evaluations
  int checkpoint_cadence = 100;  // episodes between checkpoints
  bool stochastic_rollouts = true;
};

struct AblationConfig {
  std::vector<scalar_t> horizons = {0.5, 1.0};
  std::vector<CostMode> cost_modes = {CostMode::kHeuristicPlusRunning,
                                      CostMode::kHeuristicOnly};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  scalar_t success_threshold = 0.9;
  int episodes = 0;  // 0: use training.episodes
};

struct RunConfig {
  std::string environment = "point_mass_walls";
  EnvironmentOverrides env_overrides;

  std::vector<int> hidden_layers = {12, 12, 12};

  MpcConfig mpc;

  int critic_minibatches = 40;
  int critic_batch_size = 64;
  scalar_t critic_step_size = 1e-3;
  scalar_t critic_weight_decay = 1e-4;
  scalar_t critic_tau_polyak = 0.05;
  DiscountMode critic_discount_mode = DiscountMode::kPerSecond;
  std::size_t buffer_capacity = 200000;
  bool actor_reads_target = true;

  TrainingConfig training;
  int evaluation_starts = 8;
  AblationConfig ablation;

  std::uint64_t seed = 1;
  std::string output_dir = "runs";

  void validate() const;
};

/// Parses the documented JSON layout. Unknown keys and ill-typed values are
/// rejected with the full path, e.g. "/critic/batch_size: expected a positive
/// integer".
RunConfig parse_run_config(const std::string& text);

RunConfig load_run_config(const std::string& path);

/// Resolved configuration in the same JSON layout the parser accepts.
std::string render_run_config(const RunConfig& config);

}  // namespace dvmpc
