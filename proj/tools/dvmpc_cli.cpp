#include "dvmpc/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace dvmpc;

// Precedence: command-line flag > environment variable > config file.
void apply_overrides(RunConfig& config, const std::optional<std::uint64_t>& seed_flag,
                     const std::string& out_flag) {
  if (const char* s = std::getenv("DVMPC_SEED")) {
    try {
      config.seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("DVMPC_SEED: not an unsigned integer: ") + s);
    }
  }
  if (const char* s = std::getenv("DVMPC_OUT")) config.output_dir = s;
  if (seed_flag) config.seed = *seed_flag;
  if (!out_flag.empty()) config.output_dir = out_flag;
}

std::filesystem::path open_run_dir(const RunConfig& config, const std::string& kind) {
  const std::filesystem::path dir =
      make_run_directory(config.output_dir, kind, config.seed);
  std::ofstream resolved(dir / "config.json");
  resolved << render_run_config(config);
  return dir;
}

std::shared_ptr<const ValueSource> load_value_source(const std::string& checkpoint,
                                                     const EnvironmentSpec& env) {
  const Checkpoint ckpt = load_checkpoint_file(checkpoint);
  return std::make_shared<NetValueSource>(std::make_shared<ValueNet>(ckpt.net),
                                          env.goal);
}

// The environment's evaluation starts, extended deterministically when more
// are requested than it declares.
std::vector<vector_t> pick_starts(const EnvironmentSpec& env, std::uint64_t seed,
                                  int n) {
  std::vector<vector_t> starts;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(env.eval_start_states.size())) {
      starts.push_back(env.eval_start_states[i]);
    } else {
      RngEngine rng = make_rng(seed, 14, static_cast<std::uint64_t>(i));
      starts.push_back(env.initial_state_sampler(rng));
    }
  }
  return starts;
}

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool config_required = true) {
  cmd->add_option("--config", opt.config_path, "run configuration file (JSON)")
      ->required(config_required)
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "master seed override");
  cmd->add_option("--out", opt.out, "output directory override");
}

RunConfig load_with_overrides(const CommonOptions& opt) {
  RunConfig config = load_run_config(opt.config_path);
  apply_overrides(config, opt.seed, opt.out);
  config.validate();
  return config;
}

int cmd_train(const CommonOptions& opt) {
  const RunConfig config = load_with_overrides(opt);
  const std::filesystem::path dir = open_run_dir(config, "train");
  std::cout << "run directory: " << dir.string() << "\n";
  const TrainResult result = train(config, dir, &std::cout);
  const EvaluationRecord& final = result.evaluations.back();
  std::cout << "final: eval cost " << format_metric(final.mean_cost) << ", success "
            << format_metric(final.success_rate) << " after " << result.episodes
            << " episodes\n";
  return 0;
}

int cmd_eval(const CommonOptions& opt, const std::string& checkpoint, int n) {
  const RunConfig config = load_with_overrides(opt);
  const EnvironmentSpec env = build_environment(config);
  const EvaluationResult result = evaluate_policy(
      env, load_value_source(checkpoint, env), config.mpc,
      pick_starts(env, config.seed, n));
  const std::filesystem::path dir = open_run_dir(config, "eval");
  for (std::size_t k = 0; k < result.trajectories.size(); ++k) {
    std::ofstream os(dir / ("eval_" + std::to_string(k) + ".csv"));
    write_trajectory_csv(result.trajectories[k], os);
  }
  std::cout << "run directory: " << dir.string() << "\n"
            << "mean cost " << format_metric(result.mean_cost) << ", success "
            << format_metric(result.success_rate) << " over " << n << " starts\n";
  return 0;
}

int cmd_ablate(const CommonOptions& opt) {
  const RunConfig config = load_with_overrides(opt);
  const std::filesystem::path dir = open_run_dir(config, "ablate");
  std::cout << "run directory: " << dir.string() << "\n";
  const AblationResult result = run_ablation(config, dir, &std::cout);
  write_ablation_csv(result, std::cout);
  bool all_completed = true;
  for (const AblationCell& cell : result.cells) all_completed &= cell.completed;
  return all_completed ? 0 : 1;
}

int cmd_export_heatmap(const CommonOptions& opt, const std::string& checkpoint,
                       double t, const std::string& grid) {
  int gx = 0, gy = 0;
  if (std::sscanf(grid.c_str(), "%dx%d", &gx, &gy) != 2 || gx < 2 || gy < 2) {
    throw ConfigError("--grid expects WxH with W, H >= 2, got: " + grid);
  }
  const RunConfig config = load_with_overrides(opt);
  const EnvironmentSpec env = build_environment(config);
  const std::filesystem::path dir = open_run_dir(config, "heatmap");
  std::ofstream os(dir / "running_cost_heatmap.csv");
  export_running_cost_heatmap(env, load_value_source(checkpoint, env), config.mpc,
                              t, gx, gy, os);
  std::cout << "wrote " << (dir / "running_cost_heatmap.csv").string() << " ("
            << gx << "x" << gy << " at t=" << format_metric(t) << ")\n";
  return 0;
}

int cmd_export_trajectories(const CommonOptions& opt, const std::string& checkpoint,
                            int n) {
  const RunConfig config = load_with_overrides(opt);
  const EnvironmentSpec env = build_environment(config);
  const EvaluationResult result = evaluate_policy(
      env, load_value_source(checkpoint, env), config.mpc,
      pick_starts(env, config.seed, n));
  const std::filesystem::path dir = open_run_dir(config, "trajectories");
  for (std::size_t k = 0; k < result.trajectories.size(); ++k) {
    std::ofstream os(dir / ("trajectory_" + std::to_string(k) + ".csv"));
    write_trajectory_csv(result.trajectories[k], os);
  }
  std::cout << "wrote " << result.trajectories.size() << " trajectories under "
            << dir.string() << "\n";
  return 0;
}

int cmd_verify(const std::vector<std::string>& suites, const std::string& out,
               std::uint64_t seed) {
  std::optional<std::filesystem::path> report_dir;
  std::string out_base = out;
  if (out_base.empty()) {
    if (const char* s = std::getenv("DVMPC_OUT")) out_base = s;
  }
  if (!out_base.empty()) {
    report_dir = make_run_directory(out_base, "verify", seed);
    std::cout << "report directory: " << report_dir->string() << "\n";
  }
  const VerificationReport report = run_verification(
      suites, std::cout, report_dir ? &*report_dir : nullptr, seed);
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon control with a learned value function"};
  app.require_subcommand(1);

  CommonOptions train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "run the value-learning loop");
  add_common(train_cmd, train_opt);

  CommonOptions eval_opt;
  std::string eval_checkpoint;
  int eval_n = 8;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint with deterministic rollouts");
  add_common(eval_cmd, eval_opt);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--n", eval_n, "number of start states")
      ->check(CLI::PositiveNumber);

  CommonOptions ablate_opt;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "train over the cost-mode x horizon x seed grid");
  add_common(ablate_cmd, ablate_opt);

  CommonOptions heatmap_opt;
  std::string heatmap_checkpoint, heatmap_grid = "64x64";
  double heatmap_t = 0.0;
  CLI::App* heatmap_cmd = app.add_subcommand(
      "export-heatmap", "derived running cost on a position grid");
  add_common(heatmap_cmd, heatmap_opt);
  heatmap_cmd->add_option("--checkpoint", heatmap_checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  heatmap_cmd->add_option("--t", heatmap_t, "evaluation time (seconds)");
  heatmap_cmd->add_option("--grid", heatmap_grid, "grid size WxH");

  CommonOptions traj_opt;
  std::string traj_checkpoint;
  int traj_n = 8;
  CLI::App* traj_cmd = app.add_subcommand(
      "export-trajectories", "deterministic closed-loop rollouts of a checkpoint");
  add_common(traj_cmd, traj_opt);
  traj_cmd->add_option("--checkpoint", traj_checkpoint, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  traj_cmd->add_option("--n", traj_n, "number of start states")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> verify_suites;
  std::string verify_out;
  std::uint64_t verify_seed = 1;
  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "numerical verification suites (exit 0 iff all pass)");
  verify_cmd->add_option("suites", verify_suites,
                         "riccati, proposition1, girsanov, desirability, theorem1, "
                         "theorem2 (default: all)");
  verify_cmd->add_option("--out", verify_out, "directory for report CSVs");
  verify_cmd->add_option("--seed", verify_seed, "master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opt);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt, eval_checkpoint, eval_n);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_opt);
    if (heatmap_cmd->parsed()) {
      return cmd_export_heatmap(heatmap_opt, heatmap_checkpoint, heatmap_t,
                                heatmap_grid);
    }
    if (traj_cmd->parsed()) {
      return cmd_export_trajectories(traj_opt, traj_checkpoint, traj_n);
    }
    if (verify_cmd->parsed()) return cmd_verify(verify_suites, verify_out, verify_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
