#include "dvmpc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

namespace dvmpc {

namespace {

// Rng stream tags. Training streams are keyed per episode so that runs with
// the same seed share draws episode-by-episode regardless of cadence settings.
constexpr std::uint64_t kStreamInitialState = 11;
constexpr std::uint64_t kStreamRolloutNoise = 12;
constexpr std::uint64_t kStreamCriticSampling = 13;
constexpr std::uint64_t kStreamProposition1 = 301;
constexpr std::uint64_t kStreamGirsanov = 401;
constexpr std::uint64_t kStreamDesirability = 501;
constexpr std::uint64_t kStreamTheorem1 = 601;

std::ofstream open_csv(const std::filesystem::path& path, const std::string& header) {
  std::ofstream os(path);
  if (!os) throw DomainError("cannot open " + path.string() + " for writing");
  os << header << "\n";
  return os;
}

scalar_t seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<scalar_t>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

EnvironmentSpec build_environment(const RunConfig& config) {
  EnvironmentSpec env = make_environment(config.environment);
  const EnvironmentOverrides& ov = config.env_overrides;
  if (ov.timestep) env.timestep = *ov.timestep;
  if (ov.discount) env.discount = *ov.discount;
  if (ov.episode_length) env.episode_length = *ov.episode_length;
  if (ov.termination_penalty) env.termination_penalty = *ov.termination_penalty;
  if (ov.success_radius) env.success_radius = *ov.success_radius;
  if (ov.noise_scale) {
    const ControlAffineModel& m = env.model;
    env.model = ControlAffineModel::make(m.state_dim, m.control_dim, m.drift,
                                         m.actuation, *ov.noise_scale,
                                         m.control_penalty, m.drift_jacobian);
  }
  env.validate();
  return env;
}

NetArchitecture build_architecture(const RunConfig& config,
                                   const EnvironmentSpec& env) {
  NetArchitecture arch;
  arch.state_dim = env.model.state_dim;
  arch.goal_dim = static_cast<int>(env.goal.size());
  arch.hidden = config.hidden_layers;
  arch.horizon = env.episode_length;
  arch.input_shift = env.net_input_shift;
  arch.input_scale = env.net_input_scale;
  arch.output_scale = env.net_output_scale;
  arch.output_shift = env.net_output_shift;
  arch.validate();
  return arch;
}

CriticConfig build_critic_config(const RunConfig& config,
                                 const EnvironmentSpec& env) {
  CriticConfig cc;
  cc.minibatches_per_update = config.critic_minibatches;
  cc.batch_size = config.critic_batch_size;
  cc.step_size = config.critic_step_size;
  cc.weight_decay = config.critic_weight_decay;
  cc.tau_polyak = config.critic_tau_polyak;
  cc.discount = env.discount;
  cc.timestep = env.timestep;
  cc.discount_mode = config.critic_discount_mode;
  cc.validate();
  return cc;
}

std::filesystem::path make_run_directory(const std::filesystem::path& output_dir,
                                         const std::string& kind,
                                         std::uint64_t seed) {
  const std::time_t now = std::time(nullptr);
  std::tm tm_buf{};
#if defined(_WIN32)
  localtime_s(&tm_buf, &now);
#else
  localtime_r(&now, &tm_buf);
#endif
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_buf);
  const std::string base = kind + "_" + stamp + "_seed" + std::to_string(seed);
  std::filesystem::path dir = output_dir / base;
  for (int k = 1; std::filesystem::exists(dir); ++k) {
    dir = output_dir / (base + "_" + std::to_string(k));
  }
  std::filesystem::create_directories(dir);
  return dir;
}

std::string format_metric(scalar_t v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

bool reaches_goal(const EnvironmentSpec& env, const Trajectory& traj) {
  if (traj.terminated_early) return false;
  if (traj.states.empty()) return false;
  const vector_t& x = traj.states.back();
  scalar_t sq = 0;
  for (std::size_t i = 0; i < env.position_dims.size(); ++i) {
    const scalar_t d = x[env.position_dims[i]] - env.goal[static_cast<int>(i)];
    sq += d * d;
  }
  return std::sqrt(sq) <= env.success_radius;
}

EvaluationResult evaluate_policy(const EnvironmentSpec& env,
                                 std::shared_ptr<const ValueSource> value,
                                 const MpcConfig& mpc,
                                 const std::vector<vector_t>& starts) {
  const std::vector<vector_t>& s0 = starts.empty() ? env.eval_start_states : starts;
  if (s0.empty()) throw DomainError("no evaluation start states");

  const ValueCostModel cost_model = ValueCostModel::from_environment(env, value);
  EvaluationResult result;
  RngEngine unused(0);
  for (const vector_t& x0 : s0) {
    MpcSession session(env.model, cost_model, mpc);
    Trajectory traj =
        rollout(env, session.as_policy(), x0, 0.0, /*stochastic=*/false, unused);
    result.mean_cost += path_cost(traj, env);
    result.success_rate += reaches_goal(env, traj) ? 1.0 : 0.0;
    result.trajectories.push_back(std::move(traj));
  }
  result.mean_cost /= static_cast<scalar_t>(s0.size());
  result.success_rate /= static_cast<scalar_t>(s0.size());
  return result;
}

TrainResult train(const RunConfig& config, const std::filesystem::path& run_dir,
                  std::ostream* log) {
  config.validate();
  std::filesystem::create_directories(run_dir);
  {
    std::ofstream resolved(run_dir / "config.json");
    resolved << render_run_config(config);
  }

  const EnvironmentSpec env = build_environment(config);
  const NetArchitecture arch = build_architecture(config, env);
  const CriticConfig critic_cfg = build_critic_config(config, env);
  const int episodes = config.training.episodes;
  const int eval_cadence = config.training.evaluation_cadence;
  const int ckpt_cadence = config.training.checkpoint_cadence;

  TrainResult result;
  result.episodes = episodes;
  result.checkpoint.net = ValueNet::init(arch, config.seed);
  result.checkpoint.target = result.checkpoint.net;
  result.checkpoint.tau_polyak = config.critic_tau_polyak;

  ReplayBuffer buffer(config.buffer_capacity);
  AdamState adam = AdamState::like(result.checkpoint.net);

  std::ofstream metrics =
      open_csv(run_dir / "metrics.csv", "iteration,mean_eval_cost,success_rate");
  std::ofstream critic_metrics = open_csv(
      run_dir / "critic_metrics.csv", "iteration,loss,buffer_size,mean_target");
  std::ofstream timing = open_csv(run_dir / "timing.csv", "iteration,seconds");

  const auto save_ckpt = [&](const std::string& name) {
    save_checkpoint_file(result.checkpoint, (run_dir / name).string());
  };
  const auto run_eval = [&](int iteration) -> EvaluationResult {
    auto live = std::make_shared<ValueNet>(result.checkpoint.net);
    EvaluationResult eval = evaluate_policy(
        env, std::make_shared<NetValueSource>(live, env.goal), config.mpc);
    result.evaluations.push_back({iteration, eval.mean_cost, eval.success_rate});
    metrics << iteration << "," << format_metric(eval.mean_cost) << ","
            << format_metric(eval.success_rate) << "\n";
    metrics.flush();
    if (log) {
      *log << "episode " << iteration << ": eval cost "
           << format_metric(eval.mean_cost) << ", success "
           << format_metric(eval.success_rate) << "\n";
    }
    return eval;
  };

  for (int ep = 0; ep < episodes; ++ep) {
    if (ep % ckpt_cadence == 0) save_ckpt("ckpt_" + std::to_string(ep) + ".txt");
    if (ep % eval_cadence == 0) run_eval(ep);

    const auto episode_start = std::chrono::steady_clock::now();

    RngEngine init_rng = make_rng(config.seed, kStreamInitialState,
                                  static_cast<std::uint64_t>(ep));
    const vector_t x0 = env.initial_state_sampler(init_rng);

    auto actor_net = std::make_shared<ValueNet>(config.actor_reads_target
                                                    ? result.checkpoint.target
                                                    : result.checkpoint.net);
    const ValueCostModel cost_model = ValueCostModel::from_environment(
        env, std::make_shared<NetValueSource>(actor_net, env.goal));
    MpcSession session(env.model, cost_model, config.mpc);
    int nonconverged = 0;
    const Policy actor = [&session, &nonconverged](scalar_t t,
                                                   const vector_t& x) -> vector_t {
      vector_t u = session.policy_step(t, x);
      if (!session.last_solution().converged) ++nonconverged;
      return u;
    };

    RngEngine rollout_rng = make_rng(config.seed, kStreamRolloutNoise,
                                     static_cast<std::uint64_t>(ep));
    Trajectory traj;
    try {
      traj = rollout(env, actor, x0, 0.0, config.training.stochastic_rollouts,
                     rollout_rng);
    } catch (const std::exception& e) {
      if (log) *log << "aborting at episode " << ep << ": " << e.what() << "\n";
      throw;
    }
    if (nonconverged > 0) {
      result.nonconverged_solves += nonconverged;
      if (log) {
        *log << "episode " << ep << ": " << nonconverged
             << " solve(s) returned without convergence\n";
      }
    }

    for (const TransitionTuple& tuple :
         collect_transitions(env, traj, critic_cfg.step_discount())) {
      buffer.push(tuple);
    }

    RngEngine critic_rng = make_rng(config.seed, kStreamCriticSampling,
                                    static_cast<std::uint64_t>(ep));
    if (auto stats = critic_update(result.checkpoint.net, result.checkpoint.target,
                                   buffer, critic_cfg, adam, critic_rng)) {
      if (!std::isfinite(stats->mean_loss) || !std::isfinite(stats->mean_target)) {
        if (log) *log << "aborting at episode " << ep << ": non-finite critic loss\n";
        throw IntegrationDiverged("critic update produced a non-finite loss at episode " +
                                  std::to_string(ep));
      }
      critic_metrics << ep << "," << format_metric(stats->mean_loss) << ","
                     << buffer.size() << "," << format_metric(stats->mean_target)
                     << "\n";
      critic_metrics.flush();
    }

    timing << ep << "," << format_metric(seconds_since(episode_start)) << "\n";
    timing.flush();
  }

  if (episodes % ckpt_cadence == 0) {
    save_ckpt("ckpt_" + std::to_string(episodes) + ".txt");
  }
  save_ckpt("ckpt_final.txt");
  const EvaluationResult final_eval = run_eval(episodes);

  const std::filesystem::path traj_dir = run_dir / "trajectories";
  std::filesystem::create_directories(traj_dir);
  for (std::size_t k = 0; k < final_eval.trajectories.size(); ++k) {
    std::ofstream os(traj_dir / ("final_" + std::to_string(k) + ".csv"));
    write_trajectory_csv(final_eval.trajectories[k], os);
  }
  return result;
}

AblationResult run_ablation(const RunConfig& config,
                            const std::filesystem::path& out_dir,
                            std::ostream* log) {
  config.validate();
  std::filesystem::create_directories(out_dir);

  AblationResult result;
  for (CostMode mode : config.ablation.cost_modes) {
    for (scalar_t horizon : config.ablation.horizons) {
      for (std::uint64_t seed : config.ablation.seeds) {
        AblationCell cell;
        cell.cost_mode = mode;
        cell.horizon = horizon;
        cell.seed = seed;

        RunConfig cell_config = config;
        cell_config.mpc.cost_mode = mode;
        cell_config.mpc.horizon = horizon;
        cell_config.seed = seed;
        if (config.ablation.episodes > 0) {
          cell_config.training.episodes = config.ablation.episodes;
        }

        char hbuf[32];
        std::snprintf(hbuf, sizeof(hbuf), "%g", horizon);
        const std::filesystem::path cell_dir =
            out_dir / (std::string(cost_mode_name(mode)) + "_H" + hbuf + "_seed" +
                       std::to_string(seed));
        if (log) *log << "ablation cell " << cell_dir.filename().string() << "\n";
        try {
          const TrainResult r = train(cell_config, cell_dir, log);
          cell.completed = true;
          cell.final_success = r.evaluations.back().success_rate;
          cell.final_cost = r.evaluations.back().mean_cost;
          for (const EvaluationRecord& e : r.evaluations) {
            if (e.success_rate >= config.ablation.success_threshold) {
              cell.first_success_iteration = e.iteration;
              break;
            }
          }
        } catch (const std::exception& e) {
          cell.error = e.what();
          if (log) {
            *log << "ablation cell " << cell_dir.filename().string()
                 << " failed: " << e.what() << "\n";
          }
        }
        result.cells.push_back(std::move(cell));
      }
    }
  }

  std::ofstream table(out_dir / "ablation.csv");
  write_ablation_csv(result, table);
  return result;
}

void write_ablation_csv(const AblationResult& result, std::ostream& os) {
  os << "cost_mode,horizon,seed,status,final_success,final_cost,"
        "first_success_iteration\n";
  for (const AblationCell& c : result.cells) {
    os << cost_mode_name(c.cost_mode) << "," << format_metric(c.horizon) << ","
       << c.seed << "," << (c.completed ? "ok" : "failed") << ","
       << (c.completed ? format_metric(c.final_success) : "nan") << ","
       << (c.completed ? format_metric(c.final_cost) : "nan") << ","
       << c.first_success_iteration << "\n";
  }
}

void export_running_cost_heatmap(const EnvironmentSpec& env,
                                 std::shared_ptr<const ValueSource> value,
                                 const MpcConfig& mpc, scalar_t t, int grid_x,
                                 int grid_y, std::ostream& os) {
  if (env.position_dims.size() != 2) {
    throw DomainError("heatmap export needs exactly two position coordinates");
  }
  if (grid_x < 2 || grid_y < 2) throw DomainError("heatmap grid must be at least 2x2");
  const int dx = env.position_dims[0];
  const int dy = env.position_dims[1];

  scalar_t lo_x = env.goal[0], hi_x = env.goal[0];
  scalar_t lo_y = env.goal[1], hi_y = env.goal[1];
  const auto grow = [&](scalar_t x, scalar_t y) {
    lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
  };
  for (const vector_t& s : env.eval_start_states) grow(s[dx], s[dy]);
  for (const AxisAlignedBox& box : env.walls) {
    grow(box.lo[0], box.lo[1]);
    grow(box.hi[0], box.hi[1]);
  }
  const scalar_t margin = 0.5;
  lo_x -= margin, hi_x += margin;
  lo_y -= margin, hi_y += margin;

  const ValueCostModel cost_model = ValueCostModel::from_environment(env, value);
  os << "x,y,l_value\n";
  for (int j = 0; j < grid_y; ++j) {
    const scalar_t y = lo_y + (hi_y - lo_y) * j / (grid_y - 1);
    for (int i = 0; i < grid_x; ++i) {
      const scalar_t x = lo_x + (hi_x - lo_x) * i / (grid_x - 1);
      vector_t state = vector_t::Zero(env.model.state_dim);
      state[dx] = x;
      state[dy] = y;
      const scalar_t l =
          running_cost(cost_model, env.model, mpc.cost_mode, t, state);
      os << format_metric(x) << "," << format_metric(y) << "," << format_metric(l)
         << "\n";
    }
  }
}

LqProblem verification_scalar_lq() { return scalar_lq_problem(1.0); }

LqProblem verification_timevarying_lq() {
  LqProblem lq = scalar_lq_problem(1.0);
  lq.Q_f.setZero();
  lq.horizon = 3.0;
  return lq;
}

HorizonBoundSetup pinned_horizon_bound_setup() {
  HorizonBoundSetup setup;
  setup.problem = verification_scalar_lq();
  for (scalar_t amplitude : {0.1, 0.5}) {
    SinPerturbation pert;
    pert.amplitude = amplitude;
    pert.w = vector_t::Constant(1, 0.7);
    pert.phase = 0.3;
    setup.perturbations.push_back(pert);
  }
  setup.horizons = {0.25, 0.5, 1.0};
  setup.bound_discount = 0.9;
  setup.mpc_timestep = 0.02;
  setup.rollout_timestep = 0.02;
  setup.samples = 256;
  setup.start_time = 0.0;
  setup.start_state = vector_t::Constant(1, 1.0);
  return setup;
}

EquivalenceSetup pinned_equivalence_setup() {
  EquivalenceSetup setup;
  setup.problem = verification_timevarying_lq();
  setup.horizons = {0.25, 0.5, 1.0};
  setup.action_probes_per_horizon = 50;
  setup.identity_probes = 100;
  setup.mpc_timestep = 5e-4;
  setup.action_tolerance = 1e-3;
  setup.identity_tolerance = 1e-6;
  setup.probe_state_min = 0.5;
  setup.probe_state_max = 2.0;
  return setup;
}

bool VerificationReport::all_pass() const {
  return std::all_of(suites.begin(), suites.end(),
                     [](const SuiteResult& s) { return s.pass; });
}

namespace {

std::string format_brief(scalar_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Second moment of the scalar diffusion dx = (a - k) x dt + g dB,
// Var[dB] = sigma dt, integrated over [0, T]:
//   m2' = 2 (a - k) m2 + g^2 sigma,  m2(0) = x0^2,
// in closed form, giving KL(p^{u=-k x} || p^{u=-ka x}) for the feedback pair
// as 0.5 R (ka - k)^2 int m2.
scalar_t feedback_kl_closed_form(scalar_t a, scalar_t g, scalar_t sigma, scalar_t R,
                                 scalar_t gain_a, scalar_t gain_b, scalar_t x0,
                                 scalar_t T) {
  const scalar_t rate = 2.0 * (a - gain_b);
  const scalar_t diffusion = g * g * sigma;
  scalar_t second_moment_integral;
  if (std::abs(rate) < 1e-12) {
    second_moment_integral = x0 * x0 * T + 0.5 * diffusion * T * T;
  } else {
    const scalar_t m_inf = -diffusion / rate;
    second_moment_integral =
        m_inf * T + (x0 * x0 - m_inf) * (std::exp(rate * T) - 1.0) / rate;
  }
  const scalar_t dg = gain_a - gain_b;
  return 0.5 * R * dg * dg * second_moment_integral;
}

SuiteResult riccati_suite() {
  const auto start = std::chrono::steady_clock::now();
  const LqProblem lq = double_integrator_lq_problem(0.0);
  const scalar_t dt = 0.02;
  vector_t x0(2);
  x0 << 1.0, 0.5;

  const DiscreteLqrSolution dlqr = solve_discrete_lqr(lq, dt);
  const RiccatiSolution riccati = solve_riccati(lq);

  ValueCostModel cost_model;
  cost_model.running_cost = quadratic_cost_field(lq.Q);
  cost_model.terminal_cost = quadratic_cost_field(lq.Q_f);
  cost_model.discount = 1.0;
  cost_model.final_time = lq.horizon;

  MpcConfig config;
  config.horizon = lq.horizon;
  config.timestep = dt;

  const MpcSolution solution =
      solve_mpc(lq.to_model(), cost_model, x0, 0.0, config);
  const scalar_t elapsed = seconds_since(start);

  const scalar_t expected_cost = dlqr.cost(x0);
  const scalar_t cost_rel =
      std::abs(solution.cost - expected_cost) / std::abs(expected_cost);
  const scalar_t control_err =
      (solution.first_control() - dlqr.first_control(x0)).lpNorm<Eigen::Infinity>();
  const scalar_t continuous_rel =
      std::abs(expected_cost - optimal_value(riccati, 0.0, x0)) /
      optimal_value(riccati, 0.0, x0);

  SuiteResult result;
  result.name = "riccati";
  result.pass = solution.converged && cost_rel <= 1e-6 && control_err <= 1e-6 &&
                elapsed < 1.0;
  result.detail = "cost rel err " + format_brief(cost_rel) + " (tol 1e-6), first-control err " +
                  format_brief(control_err) + " (tol 1e-6), vs continuous oracle " +
                  format_brief(continuous_rel) + ", " + format_brief(elapsed) + "s";
  return result;
}

SuiteResult proposition1_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  RngEngine rng = make_rng(seed, kStreamProposition1);
  const EquivalenceReport report = verify_proposition1(pinned_equivalence_setup(), rng);
  const scalar_t elapsed = seconds_since(start);

  SuiteResult result;
  result.name = "proposition1";
  result.pass = report.pass() && elapsed < 10.0;
  result.detail = "max first-action rel err " +
                  format_brief(report.max_action_relative_error) + " (tol " +
                  format_brief(report.action_tolerance) + "), max stage-cost identity err " +
                  format_brief(report.max_identity_error) + " (tol " +
                  format_brief(report.identity_tolerance) + "), " +
                  format_brief(elapsed) + "s";
  return result;
}

SuiteResult girsanov_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const LqProblem lq = verification_scalar_lq();
  const EnvironmentSpec env = lq_environment(lq, "scalar_lq_girsanov", 0.01);
  const scalar_t gain_a = 1.0, gain_b = 0.5;
  const Policy policy_a = [gain_a](scalar_t, const vector_t& x) -> vector_t {
    return -gain_a * x;
  };
  const Policy policy_b = [gain_b](scalar_t, const vector_t& x) -> vector_t {
    return -gain_b * x;
  };
  const vector_t x0 = vector_t::Constant(1, 1.5);

  RngEngine rng = make_rng(seed, kStreamGirsanov);
  const KlEstimate estimate =
      kl_girsanov(env, policy_a, policy_b, 0.0, x0, 10000, rng);
  const scalar_t closed = feedback_kl_closed_form(
      0.0, 1.0, lq.noise_scale / lq.R(0, 0), lq.R(0, 0), gain_a, gain_b, x0[0],
      lq.horizon);
  const scalar_t elapsed = seconds_since(start);

  SuiteResult result;
  result.name = "girsanov";
  result.pass = std::abs(estimate.value - closed) <= 3.0 * estimate.standard_error &&
                elapsed < 10.0;
  result.detail = "estimate " + format_brief(estimate.value) + " vs closed form " +
                  format_brief(closed) + ", se " +
                  format_brief(estimate.standard_error) + " (tol 3 se), " +
                  format_brief(elapsed) + "s";
  return result;
}

SuiteResult desirability_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const LqProblem lq = verification_scalar_lq();
  const EnvironmentSpec env = lq_environment(lq, "scalar_lq_desirability", 0.01);
  const RiccatiSolution riccati = solve_riccati(lq);
  const Policy sampler = optimal_policy(riccati);

  const scalar_t probes[] = {-2.0, -1.0, 0.5, 1.0, 2.0};
  scalar_t max_rel = 0;
  scalar_t min_ess_ratio = 1.0;
  for (std::size_t i = 0; i < 5; ++i) {
    const vector_t x = vector_t::Constant(1, probes[i]);
    RngEngine rng = make_rng(seed, kStreamDesirability, i);
    const DesirabilityEstimate estimate =
        estimate_desirability(env, sampler, 0.0, x, lq.noise_scale, 100000, rng);
    const scalar_t oracle = optimal_value(riccati, 0.0, x);
    max_rel = std::max(max_rel, std::abs(estimate.value() - oracle) / oracle);
    min_ess_ratio = std::min(
        min_ess_ratio, estimate.ess / static_cast<scalar_t>(estimate.samples));
  }
  const scalar_t elapsed = seconds_since(start);

  SuiteResult result;
  result.name = "desirability";
  result.pass = max_rel <= 0.02 && elapsed < 30.0;
  result.detail = "max value rel err " + format_brief(max_rel) +
                  " (tol 0.02), min ess fraction " + format_brief(min_ess_ratio) +
                  ", " + format_brief(elapsed) + "s";
  return result;
}

SuiteResult theorem1_suite(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const LqProblem lq = verification_scalar_lq();
  const RiccatiSolution riccati = solve_riccati(lq);
  const Policy sampler = [riccati](scalar_t t, const vector_t& x) -> vector_t {
    return 0.5 * optimal_policy_control(riccati, t, x);
  };

  RngEngine rng = make_rng(seed, kStreamTheorem1);
  const ForwardKlReport report = verify_theorem1(
      lq, sampler, 0.0, vector_t::Constant(1, 1.0), 10000, 0.01, rng);
  const scalar_t elapsed = seconds_since(start);

  SuiteResult result;
  result.name = "theorem1";
  result.pass = report.pass;
  result.detail = "forward kl " + format_brief(report.forward_kl) + " <= bound " +
                  format_brief(report.bound) + " (reverse " +
                  format_brief(report.reverse_kl) + ", envelope " +
                  format_brief(report.envelope) + ", weight var " +
                  format_brief(report.weight_variance) + "), " +
                  format_brief(elapsed) + "s";
  return result;
}

SuiteResult theorem2_suite(std::uint64_t seed,
                           const std::filesystem::path* report_dir) {
  const auto start = std::chrono::steady_clock::now();
  const HorizonBoundReport report =
      verify_theorem2(pinned_horizon_bound_setup(), seed);
  const scalar_t elapsed = seconds_since(start);

  if (report_dir) {
    std::ofstream os(*report_dir / "bound_report.csv");
    write_bound_report_csv(report.cells, os);
  }

  int passing = 0;
  for (const BoundCell& cell : report.cells) passing += cell.pass ? 1 : 0;

  SuiteResult result;
  result.name = "theorem2";
  result.pass = report.pass() && elapsed < 120.0;
  result.detail = std::to_string(passing) + "/" +
                  std::to_string(report.cells.size()) +
                  " cells within bound + 3 se, kl " +
                  std::string(report.monotone_in_horizon ? "non-increasing" : "NOT non-increasing") +
                  " in horizon, " + format_brief(elapsed) + "s";
  return result;
}

}  // namespace

VerificationReport run_verification(const std::vector<std::string>& suites,
                                    std::ostream& log,
                                    const std::filesystem::path* report_dir,
                                    std::uint64_t seed) {
  const std::vector<std::string> all = {"riccati",      "proposition1", "girsanov",
                                        "desirability", "theorem1",     "theorem2"};
  const std::vector<std::string>& selected = suites.empty() ? all : suites;

  VerificationReport report;
  for (const std::string& name : selected) {
    SuiteResult suite;
    if (name == "riccati") {
      suite = riccati_suite();
    } else if (name == "proposition1") {
      suite = proposition1_suite(seed);
    } else if (name == "girsanov") {
      suite = girsanov_suite(seed);
    } else if (name == "desirability") {
      suite = desirability_suite(seed);
    } else if (name == "theorem1") {
      suite = theorem1_suite(seed);
    } else if (name == "theorem2") {
      suite = theorem2_suite(seed, report_dir);
    } else {
      throw DomainError("unknown verification suite: " + name);
    }
    log << (suite.pass ? "[PASS] " : "[FAIL] ") << suite.name << ": "
        << suite.detail << "\n";
    report.suites.push_back(std::move(suite));
  }
  return report;
}

}  // namespace dvmpc
