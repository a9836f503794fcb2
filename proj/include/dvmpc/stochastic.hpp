#pragma once

#include "dvmpc/environment.hpp"
#include "dvmpc/lq_oracle.hpp"
#include "dvmpc/mpc.hpp"
#include "dvmpc/value_source.hpp"

#include <iosfwd>

namespace dvmpc {

struct DesirabilityEstimate {
  scalar_t psi = 0;
  scalar_t noise_scale = 0;
  std::size_t samples = 0;
  scalar_t weight_variance = 0;  // Var of e^{-C/lambda} / psi
  scalar_t ess = 0;              // samples / (1 + weight_variance)

  /// -lambda log(psi), the value implied by the estimate.
  scalar_t value() const;
};

/// Monte-Carlo desirability psi = E[e^{-C/lambda}] over M stochastic rollouts
/// from (t, s) under the sampling policy, with C the full path cost including
/// the reconstructed control-noise cross term. `noise_scale` is the lambda of
/// the weighting; it matches env.model.noise_scale whenever the path-integral
/// identity is wanted, but stays usable on a noiseless environment.
DesirabilityEstimate estimate_desirability(const EnvironmentSpec& env,
                                           const Policy& sampling_policy, scalar_t t,
                                           const vector_t& s, scalar_t noise_scale,
                                           std::size_t samples, RngEngine& rng);

struct KlEstimate {
  scalar_t value = 0;
  scalar_t standard_error = 0;
  std::size_t samples = 0;
};

/// KL divergence between the path measures of two policies on the same
/// diffusion, KL(p^{policy_b} || p^{policy_a}); by the change-of-measure
/// identity this is E over policy_b rollouts of the control-difference energy
/// int 0.5 ||u_a - u_b||_R^2 dtau, discretized left-endpoint at the rollout
/// step. Per-rollout integrals are exported through `per_sample` when given
/// (for paired comparisons under common random numbers).
KlEstimate kl_girsanov(const EnvironmentSpec& env, const Policy& policy_a,
                       const Policy& policy_b, scalar_t t, const vector_t& s,
                       std::size_t samples, RngEngine& rng,
                       std::vector<scalar_t>* per_sample = nullptr);

struct BoundCell {
  scalar_t horizon = 0;
  scalar_t perturbation_norm = 0;  // L as reported to the bound
  scalar_t noise_scale = 0;
  scalar_t discount = 0;  // gamma in the bound formula
  scalar_t measured_kl = 0;
  scalar_t standard_error = 0;
  scalar_t bound = 0;
  bool pass = false;
};

/// Header H,L,lambda,gamma,measured_kl,stderr,bound,pass.
void write_bound_report_csv(const std::vector<BoundCell>& cells, std::ostream& os);

scalar_t horizon_error_bound(scalar_t perturbation_norm, scalar_t discount,
                             scalar_t horizon, scalar_t noise_scale);

struct HorizonBoundSetup {
  LqProblem problem;  // gamma = 1 instance with an exact stationary oracle
  std::vector<SinPerturbation> perturbations;
  std::vector<scalar_t> horizons;  // ascending
  scalar_t bound_discount = 0.9;
  scalar_t mpc_timestep = 0.01;
  scalar_t rollout_timestep = 0.01;
  std::size_t samples = 400;
  scalar_t start_time = 0;
  vector_t start_state;
};

struct HorizonBoundReport {
  std::vector<BoundCell> cells;  // horizons-major per perturbation level
  bool monotone_in_horizon = true;
  bool all_cells_pass() const;
  bool pass() const;
};

/// For each perturbation level L and horizon H, runs the receding-horizon
/// actor on a value source V* + L sin(.) as the sampling policy and measures
/// KL(p^pi || p*) against the oracle policy, comparing to the bound
/// 2 L gamma^H / (lambda (1 - gamma^H)). Cells at the same perturbation level
/// share random numbers, and monotonicity of the measured KL in H is checked
/// with a paired three-standard-error allowance.
HorizonBoundReport verify_theorem2(const HorizonBoundSetup& setup, std::uint64_t seed);

struct ForwardKlReport {
  scalar_t forward_kl = 0;
  scalar_t forward_se = 0;
  scalar_t reverse_kl = 0;
  scalar_t reverse_se = 0;
  scalar_t envelope = 0;  // empirical max of the control-difference energy
  scalar_t weight_variance = 0;
  scalar_t bound = 0;  // reverse + sqrt(envelope * reverse * variance)
  std::size_t samples = 0;
  bool pass = false;
};

/// Checks the forward-KL upper bound
///   KL(p* || p^pi) <= KL(p^pi || p*) + sqrt(E KL(p^pi || p*) Var[w])
/// on an LQ instance where both sides are estimable: the forward KL by rolling
/// out under the oracle policy, the envelope E as the empirical maximum of the
/// control-difference energy over the p^pi sample.
ForwardKlReport verify_theorem1(const LqProblem& problem, const Policy& sampling_policy,
                                scalar_t t, const vector_t& s, std::size_t samples,
                                scalar_t rollout_timestep, RngEngine& rng);

struct ActionProbe {
  scalar_t t = 0;
  vector_t state;
  scalar_t horizon = 0;
  vector_t mpc_control;
  vector_t oracle_control;
  scalar_t relative_error = 0;
};

struct EquivalenceReport {
  std::vector<ActionProbe> action_probes;
  scalar_t max_action_relative_error = 0;
  scalar_t max_identity_error = 0;
  std::size_t identity_probes = 0;
  scalar_t action_tolerance = 0;
  scalar_t identity_tolerance = 0;
  bool pass() const;
};

struct EquivalenceSetup {
  LqProblem problem;
  std::vector<scalar_t> horizons;
  int action_probes_per_horizon = 50;
  int identity_probes = 100;
  scalar_t mpc_timestep = 5e-4;
  scalar_t action_tolerance = 1e-3;     // relative
  scalar_t identity_tolerance = 1e-6;   // absolute
  scalar_t probe_state_min = 0.5;       // |x_i| sampled in [min, max]
  scalar_t probe_state_max = 2.0;
};

/// Stochastic-to-deterministic equivalence on an LQ instance: (a) the first
/// action of the receding-horizon problem built from the exact value source
/// matches the feedback -R^{-1} g' dV*/dx at every probe; (b) the derived
/// running cost equals q + (lambda/2) tr(Xi d2V*/dx2) at every probe.
EquivalenceReport verify_proposition1(const EquivalenceSetup& setup, RngEngine& rng);

}  // namespace dvmpc
