#include "dvmpc/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dvmpc {

namespace {

constexpr std::uint32_t kStreamHorizonBound = 201;

struct RunningMoments {
  scalar_t sum = 0;
  scalar_t sum_sq = 0;
  std::size_t count = 0;

  void add(scalar_t v) {
    sum += v;
    sum_sq += v * v;
    ++count;
  }
  scalar_t mean() const { return sum / static_cast<scalar_t>(count); }
  scalar_t variance() const {
    const scalar_t n = static_cast<scalar_t>(count);
    return std::max<scalar_t>(0, (sum_sq - sum * sum / n) / (n - 1));
  }
  scalar_t standard_error() const {
    return std::sqrt(variance() / static_cast<scalar_t>(count));
  }
};

scalar_t girsanov_integral(const Trajectory& traj, const Policy& policy_a,
                           const matrix_t& R) {
  scalar_t integral = 0;
  for (int i = 0; i < traj.num_steps(); ++i) {
    const vector_t du = policy_a(traj.times[i], traj.states[i]) - traj.controls[i];
    integral += 0.5 * du.dot(R * du) * (traj.times[i + 1] - traj.times[i]);
  }
  return integral;
}

}  // namespace

scalar_t DesirabilityEstimate::value() const { return -noise_scale * std::log(psi); }

DesirabilityEstimate estimate_desirability(const EnvironmentSpec& env,
                                           const Policy& sampling_policy, scalar_t t,
                                           const vector_t& s, scalar_t noise_scale,
                                           std::size_t samples, RngEngine& rng) {
  if (samples < 2) {
    throw ContractViolation("estimate_desirability: need at least 2 samples");
  }
  if (noise_scale <= 0) {
    throw ContractViolation("estimate_desirability: noise_scale must be positive");
  }
  std::vector<scalar_t> weights(samples);
  scalar_t weight_sum = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Trajectory traj = rollout(env, sampling_policy, s, t, true, rng);
    weights[i] = std::exp(-path_cost(traj, env) / noise_scale);
    weight_sum += weights[i];
  }
  DesirabilityEstimate est;
  est.noise_scale = noise_scale;
  est.samples = samples;
  est.psi = weight_sum / static_cast<scalar_t>(samples);
  if (est.psi <= 0 || !std::isfinite(est.psi)) {
    throw DegenerateEstimate(
        "estimate_desirability: weights degenerate (psi = " +
        std::to_string(est.psi) +
        "); increase noise_scale or use a better sampling policy");
  }
  RunningMoments normalized;
  for (scalar_t w : weights) normalized.add(w / est.psi);
  est.weight_variance = normalized.variance();
  est.ess = static_cast<scalar_t>(samples) / (1.0 + est.weight_variance);
  return est;
}

KlEstimate kl_girsanov(const EnvironmentSpec& env, const Policy& policy_a,
                       const Policy& policy_b, scalar_t t, const vector_t& s,
                       std::size_t samples, RngEngine& rng,
                       std::vector<scalar_t>* per_sample) {
  if (samples < 2) {
    throw ContractViolation("kl_girsanov: need at least 2 samples");
  }
  if (per_sample != nullptr) {
    per_sample->clear();
    per_sample->reserve(samples);
  }
  RunningMoments moments;
  for (std::size_t i = 0; i < samples; ++i) {
    const Trajectory traj = rollout(env, policy_b, s, t, true, rng);
    const scalar_t integral =
        girsanov_integral(traj, policy_a, env.model.control_penalty);
    moments.add(integral);
    if (per_sample != nullptr) per_sample->push_back(integral);
  }
  KlEstimate est;
  est.value = moments.mean();
  est.standard_error = moments.standard_error();
  est.samples = samples;
  return est;
}

void write_bound_report_csv(const std::vector<BoundCell>& cells, std::ostream& os) {
  os << "H,L,lambda,gamma,measured_kl,stderr,bound,pass\n";
  for (const BoundCell& cell : cells) {
    os << cell.horizon << ',' << cell.perturbation_norm << ',' << cell.noise_scale
       << ',' << cell.discount << ',' << cell.measured_kl << ','
       << cell.standard_error << ',' << cell.bound << ',' << (cell.pass ? 1 : 0)
       << '\n';
  }
}

scalar_t horizon_error_bound(scalar_t perturbation_norm, scalar_t discount,
                             scalar_t horizon, scalar_t noise_scale) {
  if (discount <= 0 || discount >= 1) {
    throw ContractViolation("horizon_error_bound: discount must lie in (0, 1)");
  }
  if (horizon <= 0 || noise_scale <= 0) {
    throw ContractViolation("horizon_error_bound: horizon and noise_scale must be positive");
  }
  const scalar_t g = std::pow(discount, horizon);
  return 2.0 * perturbation_norm * g / (noise_scale * (1.0 - g));
}

bool HorizonBoundReport::all_cells_pass() const {
  return std::all_of(cells.begin(), cells.end(),
                     [](const BoundCell& c) { return c.pass; });
}

bool HorizonBoundReport::pass() const { return all_cells_pass() && monotone_in_horizon; }

HorizonBoundReport verify_theorem2(const HorizonBoundSetup& setup, std::uint64_t seed) {
  if (setup.horizons.empty() || setup.perturbations.empty()) {
    throw ContractViolation("verify_theorem2: empty horizon or perturbation grid");
  }
  if (!std::is_sorted(setup.horizons.begin(), setup.horizons.end())) {
    throw ContractViolation("verify_theorem2: horizons must be ascending");
  }
  const RiccatiSolution sol = solve_riccati(setup.problem);
  const ControlAffineModel model = setup.problem.to_model();
  const EnvironmentSpec env =
      lq_environment(setup.problem, "lq_bound", setup.rollout_timestep);
  const Policy oracle = optimal_policy(sol);
  const auto base = std::make_shared<OracleValueSource>(sol);

  HorizonBoundReport report;
  for (std::size_t p = 0; p < setup.perturbations.size(); ++p) {
    const SinPerturbation& pert = setup.perturbations[p];
    std::vector<std::vector<scalar_t>> cell_samples;
    for (scalar_t horizon : setup.horizons) {
      ValueCostModel cm;
      cm.value = std::make_shared<PerturbedValueSource>(base, pert);
      cm.running_cost = quadratic_cost_field(setup.problem.Q);
      cm.discount = 1.0;
      cm.final_time = setup.problem.horizon;

      MpcConfig mc;
      mc.horizon = horizon;
      mc.timestep = setup.mpc_timestep;
      mc.cost_mode = CostMode::kHeuristicOnly;

      MpcSession session(model, cm, mc);
      Policy pi = session.as_policy();

      // Cells at the same perturbation level share noise realizations so the
      // horizon comparison is paired.
      RngEngine cell_rng =
          make_rng(seed, kStreamHorizonBound, static_cast<std::uint32_t>(p));
      std::vector<scalar_t> integrals;
      const KlEstimate kl =
          kl_girsanov(env, oracle, pi, setup.start_time, setup.start_state,
                      setup.samples, cell_rng, &integrals);

      BoundCell cell;
      cell.horizon = horizon;
      cell.perturbation_norm = pert.reported_norm();
      cell.noise_scale = setup.problem.noise_scale;
      cell.discount = setup.bound_discount;
      cell.measured_kl = kl.value;
      cell.standard_error = kl.standard_error;
      cell.bound = horizon_error_bound(pert.reported_norm(), setup.bound_discount,
                                       horizon, setup.problem.noise_scale);
      cell.pass = cell.measured_kl <= cell.bound + 3.0 * cell.standard_error;
      report.cells.push_back(cell);
      cell_samples.push_back(std::move(integrals));
    }
    for (std::size_t j = 0; j + 1 < cell_samples.size(); ++j) {
      RunningMoments diff;
      for (std::size_t i = 0; i < cell_samples[j].size(); ++i) {
        diff.add(cell_samples[j + 1][i] - cell_samples[j][i]);
      }
      if (diff.mean() > 3.0 * diff.standard_error() + 1e-6) {
        report.monotone_in_horizon = false;
      }
    }
  }
  return report;
}

ForwardKlReport verify_theorem1(const LqProblem& problem, const Policy& sampling_policy,
                                scalar_t t, const vector_t& s, std::size_t samples,
                                scalar_t rollout_timestep, RngEngine& rng) {
  const RiccatiSolution sol = solve_riccati(problem);
  const EnvironmentSpec env = lq_environment(problem, "lq_fwd", rollout_timestep);
  const Policy oracle = optimal_policy(sol);

  ForwardKlReport report;
  report.samples = samples;

  // Forward KL(p* || p^pi): rollouts under the oracle, integrand against pi.
  const KlEstimate forward =
      kl_girsanov(env, sampling_policy, oracle, t, s, samples, rng);
  report.forward_kl = forward.value;
  report.forward_se = forward.standard_error;

  // Reverse KL(p^pi || p*): rollouts under pi; the same per-sample integrals
  // supply the empirical envelope.
  std::vector<scalar_t> integrals;
  const KlEstimate reverse =
      kl_girsanov(env, oracle, sampling_policy, t, s, samples, rng, &integrals);
  report.reverse_kl = reverse.value;
  report.reverse_se = reverse.standard_error;
  report.envelope = *std::max_element(integrals.begin(), integrals.end());

  report.weight_variance =
      estimate_desirability(env, sampling_policy, t, s, problem.noise_scale, samples,
                            rng)
          .weight_variance;

  report.bound =
      report.reverse_kl +
      std::sqrt(report.envelope * report.reverse_kl * report.weight_variance);
  report.pass = report.forward_kl <=
                report.bound + 3.0 * (report.forward_se + report.reverse_se);
  return report;
}

bool EquivalenceReport::pass() const {
  return max_action_relative_error <= action_tolerance &&
         max_identity_error <= identity_tolerance;
}

EquivalenceReport verify_proposition1(const EquivalenceSetup& setup, RngEngine& rng) {
  if (setup.horizons.empty()) {
    throw ContractViolation("verify_proposition1: no horizons given");
  }
  const scalar_t max_horizon =
      *std::max_element(setup.horizons.begin(), setup.horizons.end());
  if (max_horizon >= setup.problem.horizon) {
    throw ContractViolation(
        "verify_proposition1: horizons must leave room for probe start times");
  }
  const RiccatiSolution sol = solve_riccati(setup.problem);
  const ControlAffineModel model = setup.problem.to_model();
  const int n = setup.problem.state_dim();

  ValueCostModel cm;
  cm.value = std::make_shared<OracleValueSource>(sol);
  cm.discount = 1.0;
  cm.final_time = setup.problem.horizon;

  std::uniform_real_distribution<scalar_t> time_pick(0.0,
                                                     setup.problem.horizon - max_horizon);
  std::uniform_real_distribution<scalar_t> magnitude(setup.probe_state_min,
                                                     setup.probe_state_max);
  std::bernoulli_distribution sign(0.5);

  EquivalenceReport report;
  report.action_tolerance = setup.action_tolerance;
  report.identity_tolerance = setup.identity_tolerance;

  for (scalar_t horizon : setup.horizons) {
    MpcConfig mc;
    mc.horizon = horizon;
    mc.timestep = setup.mpc_timestep;
    mc.cost_mode = CostMode::kHeuristicPlusRunning;
    for (int probe = 0; probe < setup.action_probes_per_horizon; ++probe) {
      ActionProbe ap;
      ap.horizon = horizon;
      ap.t = time_pick(rng);
      ap.state = vector_t::Zero(n);
      for (int i = 0; i < n; ++i) {
        ap.state[i] = (sign(rng) ? 1.0 : -1.0) * magnitude(rng);
      }
      const MpcSolution mpc = solve_mpc(model, cm, ap.state, ap.t, mc);
      ap.mpc_control = mpc.first_control();
      ap.oracle_control = optimal_policy_control(sol, ap.t, ap.state);
      ap.relative_error = (ap.mpc_control - ap.oracle_control).norm() /
                          std::max<scalar_t>(ap.oracle_control.norm(), 1e-9);
      report.max_action_relative_error =
          std::max(report.max_action_relative_error, ap.relative_error);
      report.action_probes.push_back(std::move(ap));
    }
  }

  std::uniform_real_distribution<scalar_t> any_time(0.0, setup.problem.horizon);
  std::uniform_real_distribution<scalar_t> any_state(-setup.probe_state_max,
                                                     setup.probe_state_max);
  report.identity_probes = static_cast<std::size_t>(setup.identity_probes);
  for (int probe = 0; probe < setup.identity_probes; ++probe) {
    const scalar_t tau = any_time(rng);
    vector_t x(n);
    for (int i = 0; i < n; ++i) x[i] = any_state(rng);
    const scalar_t l =
        running_cost(cm, model, CostMode::kHeuristicPlusRunning, tau, x);
    const scalar_t q = 0.5 * quadratic_form(setup.problem.Q, x);
    const scalar_t trace_term = 0.5 * setup.problem.noise_scale *
                                (model.weighted_actuation(tau, x) * sol.P_at(tau))
                                    .trace();
    report.max_identity_error =
        std::max(report.max_identity_error, std::abs(l - q - trace_term));
  }
  return report;
}

}  // namespace dvmpc
