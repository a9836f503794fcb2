#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dvmpc/harness.hpp"
#include "dvmpc/lq_oracle.hpp"
#include "dvmpc/value_source.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

using namespace dvmpc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("dvmpc_harness_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

int count_numbered_checkpoints(const fs::path& dir) {
  const std::regex pattern("ckpt_[0-9]+\\.txt");
  int count = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (std::regex_match(entry.path().filename().string(), pattern)) ++count;
  }
  return count;
}

// Small scalar-LQ training setup that finishes in well under a second.
RunConfig tiny_lq_config() {
  RunConfig config;
  config.environment = "scalar_lq";
  config.env_overrides.episode_length = 0.5;
  config.env_overrides.timestep = 0.05;
  config.hidden_layers = {8, 8};
  config.mpc.horizon = 0.3;
  config.mpc.timestep = 0.05;
  config.mpc.max_iterations = 25;
  config.critic_minibatches = 5;
  config.critic_batch_size = 8;
  config.training.episodes = 6;
  config.training.evaluation_cadence = 2;
  config.training.checkpoint_cadence = 2;
  config.seed = 3;
  return config;
}

}  // namespace

TEST_CASE("run directories get a numeric suffix on collision") {
  const fs::path out = fresh_dir("rundir");
  const fs::path first = make_run_directory(out, "train", 7);
  const fs::path second = make_run_directory(out, "train", 7);
  CHECK(fs::exists(first));
  CHECK(fs::exists(second));
  CHECK(first != second);
  CHECK(first.filename().string().rfind("train_", 0) == 0);
  CHECK(first.filename().string().find("_seed7") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("metric formatting is the shortest 12-digit decimal") {
  CHECK(format_metric(0.1) == "0.1");
  CHECK(format_metric(2.0) == "2");
  CHECK(format_metric(1.0 / 3.0) == "0.333333333333");
  CHECK(format_metric(-1.5e-7) == "-1.5e-07");
}

TEST_CASE("goal detection requires a full episode ending inside the radius") {
  const EnvironmentSpec env = make_environment("point_mass_walls");
  const Policy idle = [](scalar_t, const vector_t&) { return vector_t::Zero(2); };
  RngEngine rng = make_rng(1, 1);

  vector_t at_goal = vector_t::Zero(4);
  at_goal[0] = env.goal[0];
  at_goal[1] = env.goal[1];
  const Trajectory parked = rollout(env, idle, at_goal, 0.0, false, rng);
  CHECK_FALSE(parked.terminated_early);
  CHECK(reaches_goal(env, parked));

  vector_t far = vector_t::Zero(4);
  far[0] = 1.4;
  far[1] = -1.5;
  const Trajectory stuck = rollout(env, idle, far, 0.0, false, rng);
  CHECK_FALSE(reaches_goal(env, stuck));

  // Coasting into the wall ends the episode early, which never counts.
  vector_t ramming = vector_t::Zero(4);
  ramming[1] = -0.1;
  ramming[3] = 3.0;
  const Trajectory crashed = rollout(env, idle, ramming, 0.0, false, rng);
  CHECK(crashed.terminated_early);
  CHECK_FALSE(reaches_goal(env, crashed));
}

TEST_CASE("plain planner holds a start placed on the goal") {
  EnvironmentSpec env = make_environment("point_mass_walls");
  env.episode_length = 0.6;  // keep the receding-horizon rollout short

  MpcConfig mpc;
  mpc.horizon = 0.3;
  mpc.timestep = 0.02;
  mpc.max_iterations = 30;

  vector_t start = vector_t::Zero(4);
  start[0] = env.goal[0];
  start[1] = env.goal[1];
  const EvaluationResult result = evaluate_policy(env, nullptr, mpc, {start});
  CHECK(result.success_rate == 1.0);
  CHECK(result.trajectories.size() == 1);
  CHECK(result.mean_cost < 0.1);
}

TEST_CASE("heatmap of a zero value source is identically zero") {
  const EnvironmentSpec env = make_environment("point_mass_walls");
  MpcConfig mpc;
  std::ostringstream os;
  export_running_cost_heatmap(env, std::make_shared<ZeroValueSource>(4), mpc,
                              0.0, 7, 5, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "x,y,l_value");
  int rows = 0;
  while (std::getline(is, line)) {
    double x, y, l;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &y, &l) == 3);
    CHECK(l == 0.0);
    ++rows;
  }
  CHECK(rows == 7 * 5);
}

TEST_CASE("heatmap under the oracle recovers the noise-corrected cost") {
  const LqProblem lq = double_integrator_lq_problem(0.7);
  const EnvironmentSpec env = lq_environment(lq, "di_heat", 0.02);
  const RiccatiSolution riccati = solve_riccati(lq);
  const scalar_t t = 0.25;

  MpcConfig mpc;
  std::ostringstream os;
  export_running_cost_heatmap(env, std::make_shared<OracleValueSource>(riccati),
                              mpc, t, 6, 5, os);

  const matrix_t xi =
      lq.B * lq.R.inverse() * lq.B.transpose();
  const scalar_t correction = 0.5 * lq.noise_scale * (xi * riccati.P_at(t)).trace();

  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  int rows = 0;
  while (std::getline(is, line)) {
    double x, y, l;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &y, &l) == 3);
    vector_t state(2);
    state << x, y;
    const scalar_t expected = 0.5 * state.dot(lq.Q * state) + correction;
    CHECK(l == doctest::Approx(expected).epsilon(1e-6));
    ++rows;
  }
  CHECK(rows == 6 * 5);
}

TEST_CASE("oracle-guided evaluation reproduces the optimal cost") {
  const LqProblem lq = scalar_lq_problem(0.0);
  const EnvironmentSpec env = lq_environment(lq, "slq_eval", 0.02);
  const RiccatiSolution riccati = solve_riccati(lq);

  MpcConfig mpc;
  mpc.horizon = 0.4;
  mpc.timestep = 0.02;

  const EvaluationResult result =
      evaluate_policy(env, std::make_shared<OracleValueSource>(riccati), mpc);

  scalar_t expected = 0;
  for (const vector_t& s : env.eval_start_states) {
    expected += optimal_value(riccati, 0.0, s);
  }
  expected /= static_cast<scalar_t>(env.eval_start_states.size());
  CHECK(result.mean_cost == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("training writes the documented artifacts") {
  const fs::path out = fresh_dir("train_artifacts");
  const RunConfig config = tiny_lq_config();
  const TrainResult result = train(config, out / "run");

  // Numbered checkpoints land every checkpoint_cadence episodes plus the
  // final episode count when it falls on the cadence.
  CHECK(count_numbered_checkpoints(out / "run") ==
        config.training.episodes / config.training.checkpoint_cadence + 1);
  CHECK(fs::exists(out / "run" / "ckpt_final.txt"));
  CHECK(fs::exists(out / "run" / "config.json"));

  // metrics.csv: evaluations at the cadence plus the final one.
  const auto metrics = read_lines(out / "run" / "metrics.csv");
  CHECK(metrics.at(0) == "iteration,mean_eval_cost,success_rate");
  CHECK(metrics.size() - 1 == result.evaluations.size());
  CHECK(result.evaluations.size() == 4);  // episodes 0, 2, 4 and the final 6
  CHECK(result.evaluations.back().iteration == config.training.episodes);
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    int iteration;
    double cost, success;
    REQUIRE(std::sscanf(metrics[i].c_str(), "%d,%lf,%lf", &iteration, &cost,
                        &success) == 3);
    CHECK(iteration == result.evaluations[i - 1].iteration);
  }

  // critic_metrics.csv: one row per episode once the buffer can fill a batch.
  const auto critic = read_lines(out / "run" / "critic_metrics.csv");
  CHECK(critic.at(0) == "iteration,loss,buffer_size,mean_target");
  CHECK(critic.size() - 1 == static_cast<std::size_t>(config.training.episodes));
  for (std::size_t i = 1; i < critic.size(); ++i) {
    int iteration;
    double loss, mean_target;
    long buffer_size;
    REQUIRE(std::sscanf(critic[i].c_str(), "%d,%lf,%ld,%lf", &iteration, &loss,
                        &buffer_size, &mean_target) == 4);
    CHECK(buffer_size > 0);
  }

  // One trajectory file per evaluation start.
  const EnvironmentSpec env = build_environment(config);
  for (std::size_t k = 0; k < env.eval_start_states.size(); ++k) {
    const auto rows =
        read_lines(out / "run" / "trajectories" / ("final_" + std::to_string(k) + ".csv"));
    CHECK(rows.at(0).rfind("t,x0", 0) == 0);
    CHECK(rows.size() > 2);
  }
  fs::remove_all(out);
}

TEST_CASE("zero-episode training still writes the initial state of the net") {
  const fs::path out = fresh_dir("train_zero");
  RunConfig config = tiny_lq_config();
  config.training.episodes = 0;
  const TrainResult result = train(config, out / "run");

  CHECK(result.episodes == 0);
  CHECK(count_numbered_checkpoints(out / "run") == 1);
  CHECK(slurp(out / "run" / "ckpt_0.txt") == slurp(out / "run" / "ckpt_final.txt"));
  CHECK(read_lines(out / "run" / "metrics.csv").size() == 2);         // header + eval 0
  CHECK(read_lines(out / "run" / "critic_metrics.csv").size() == 1);  // header only
  fs::remove_all(out);
}

TEST_CASE("identical config and seed reproduce every artifact byte for byte") {
  const fs::path out = fresh_dir("train_deterministic");
  const RunConfig config = tiny_lq_config();
  train(config, out / "a");
  train(config, out / "b");

  for (const char* name : {"config.json", "metrics.csv", "critic_metrics.csv",
                           "ckpt_final.txt", "ckpt_0.txt"}) {
    CAPTURE(name);
    CHECK(slurp(out / "a" / name) == slurp(out / "b" / name));
  }
  const EnvironmentSpec env = build_environment(config);
  for (std::size_t k = 0; k < env.eval_start_states.size(); ++k) {
    const std::string name = "final_" + std::to_string(k) + ".csv";
    CHECK(slurp(out / "a" / "trajectories" / name) ==
          slurp(out / "b" / "trajectories" / name));
  }
  fs::remove_all(out);
}

TEST_CASE("a single-cell ablation is the corresponding training run") {
  const fs::path out = fresh_dir("ablation_single");
  RunConfig config = tiny_lq_config();
  config.ablation.horizons = {config.mpc.horizon};
  config.ablation.cost_modes = {config.mpc.cost_mode};
  config.ablation.seeds = {config.seed};
  config.ablation.episodes = 0;  // inherit training.episodes

  const AblationResult result = run_ablation(config, out / "grid");
  REQUIRE(result.cells.size() == 1);
  CHECK(result.cells[0].completed);
  CHECK(result.cells[0].error.empty());

  const fs::path cell_dir = out / "grid" / "heuristic_plus_running_H0.3_seed3";
  REQUIRE(fs::exists(cell_dir));

  train(config, out / "direct");
  CHECK(slurp(cell_dir / "metrics.csv") == slurp(out / "direct" / "metrics.csv"));
  CHECK(slurp(cell_dir / "ckpt_final.txt") ==
        slurp(out / "direct" / "ckpt_final.txt"));

  const auto table = read_lines(out / "grid" / "ablation.csv");
  CHECK(table.at(0) ==
        "cost_mode,horizon,seed,status,final_success,final_cost,"
        "first_success_iteration");
  REQUIRE(table.size() == 2);
  char mode[64], status[16];
  double horizon, final_success, final_cost;
  long seed;
  int first_success;
  REQUIRE(std::sscanf(table[1].c_str(), "%63[^,],%lf,%ld,%15[^,],%lf,%lf,%d",
                      mode, &horizon, &seed, status, &final_success, &final_cost,
                      &first_success) == 7);
  CHECK(std::string(mode) == "heuristic_plus_running");
  CHECK(horizon == doctest::Approx(0.3));
  CHECK(seed == 3);
  CHECK(std::string(status) == "ok");
  fs::remove_all(out);
}
