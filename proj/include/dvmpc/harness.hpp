#pragma once

#include "dvmpc/config.hpp"
#include "dvmpc/critic.hpp"
#include "dvmpc/stochastic.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>

namespace dvmpc {

/// Environment named by the config with overrides applied. Overriding the
/// noise scale rebuilds the model so the derived covariance factors stay
/// consistent with it.
EnvironmentSpec build_environment(const RunConfig& config);

NetArchitecture build_architecture(const RunConfig& config,
                                   const EnvironmentSpec& env);

CriticConfig build_critic_config(const RunConfig& config,
                                 const EnvironmentSpec& env);

/// Fresh directory <output_dir>/<kind>_<YYYYMMDD-HHMMSS>_seed<seed>, with a
/// numeric suffix on collision. Created before returning.
std::filesystem::path make_run_directory(const std::filesystem::path& output_dir,
                                         const std::string& kind,
                                         std::uint64_t seed);

/// Shortest decimal representation with 12 significant digits.
std::string format_metric(scalar_t v);

/// The final state is inside the success radius of the goal on the position
/// coordinates and the episode ran to the horizon.
bool reaches_goal(const EnvironmentSpec& env, const Trajectory& traj);

struct EvaluationResult {
  scalar_t mean_cost = 0;
  scalar_t success_rate = 0;
  std::vector<Trajectory> trajectories;
};

/// Deterministic receding-horizon rollouts from `starts` (the environment's
/// evaluation starts when empty), scored by discounted path cost and goal
/// success. A null value source evaluates the plain trajectory optimizer on
/// the raw environment costs.
EvaluationResult evaluate_policy(const EnvironmentSpec& env,
                                 std::shared_ptr<const ValueSource> value,
                                 const MpcConfig& mpc,
                                 const std::vector<vector_t>& starts = {});

struct EvaluationRecord {
  int iteration = 0;  // episodes completed when the evaluation ran
  scalar_t mean_cost = 0;
  scalar_t success_rate = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EvaluationRecord> evaluations;
  int episodes = 0;
  int nonconverged_solves = 0;
};

/// Value-learning loop: each episode runs one stochastic receding-horizon
/// rollout under the current value estimate, pushes the transitions into the
/// replay buffer, and applies one critic update. Evaluations and checkpoints
/// land in run_dir at the configured cadences. Everything written except
/// timing.csv is a pure function of the config and seed.
///
/// run_dir contents: config.json (resolved), metrics.csv (iteration,
/// mean_eval_cost,success_rate), critic_metrics.csv (iteration,loss,
/// buffer_size,mean_target), timing.csv (iteration,seconds), ckpt_<n>.txt at
/// the checkpoint cadence, ckpt_final.txt, trajectories/final_<k>.csv.
TrainResult train(const RunConfig& config, const std::filesystem::path& run_dir,
                  std::ostream* log = nullptr);

struct AblationCell {
  CostMode cost_mode = CostMode::kHeuristicPlusRunning;
  scalar_t horizon = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  scalar_t final_success = 0;
  scalar_t final_cost = 0;
  int first_success_iteration = -1;  // episodes until the success threshold
};

struct AblationResult {
  std::vector<AblationCell> cells;
};

/// Cost-mode x horizon x seed grid of training runs, one subdirectory per
/// cell. Cells sharing a seed share initial states and rollout noise. Cell
/// failures are recorded and the grid continues; the combined table lands in
/// <out_dir>/ablation.csv.
AblationResult run_ablation(const RunConfig& config,
                            const std::filesystem::path& out_dir,
                            std::ostream* log = nullptr);

/// Header cost_mode,horizon,seed,status,final_success,final_cost,
/// first_success_iteration.
void write_ablation_csv(const AblationResult& result, std::ostream& os);

/// Derived running cost l(t, x) on a grid over the two position coordinates,
/// remaining coordinates zero. Bounds cover the goal, the evaluation starts,
/// and the walls with a half-unit margin. Header x,y,l_value, raster order.
void export_running_cost_heatmap(const EnvironmentSpec& env,
                                 std::shared_ptr<const ValueSource> value,
                                 const MpcConfig& mpc, scalar_t t, int grid_x,
                                 int grid_y, std::ostream& os);

// Pinned problem instances shared by the command-line verifier and the
// acceptance suite.

/// Scalar problem with a stationary Riccati solution, P(t) = 1.
LqProblem verification_scalar_lq();

/// Scalar problem with zero terminal weight, P(t) = tanh(T - t).
LqProblem verification_timevarying_lq();

HorizonBoundSetup pinned_horizon_bound_setup();
EquivalenceSetup pinned_equivalence_setup();

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerificationReport {
  std::vector<SuiteResult> suites;
  bool all_pass() const;
};

/// Runs the named verification suites ("riccati", "proposition1", "girsanov",
/// "desirability", "theorem1", "theorem2"; empty selects all), one pass/fail
/// line per suite on `log`. Bound-report CSVs land in report_dir when given.
VerificationReport run_verification(const std::vector<std::string>& suites,
                                    std::ostream& log,
                                    const std::filesystem::path* report_dir = nullptr,
                                    std::uint64_t seed = 1);

}  // namespace dvmpc
