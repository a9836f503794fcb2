#pragma once

#include "dvmpc/dynamics.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dvmpc {

/// Scalar state cost with the derivatives the trajectory optimizer consumes.
/// Hessians are PSD by construction at every evaluation point.
struct CostField {
  std::function<scalar_t(scalar_t, const vector_t&)> value;
  std::function<vector_t(scalar_t, const vector_t&)> gradient;
  std::function<matrix_t(scalar_t, const vector_t&)> hessian;
};

CostField quadratic_cost_field(const matrix_t& Q);

struct AxisAlignedBox {
  vector_t lo;
  vector_t hi;
  /// Containment test on the listed state coordinates.
  bool contains(const vector_t& x, const std::vector<int>& dims) const;
};

struct EnvironmentSpec {
  std::string name;
  ControlAffineModel model;
  CostField running_cost;   // q(t, x)
  CostField terminal_cost;  // q_f(x), time argument ignored
  std::function<bool(const vector_t&)> terminated;  // checked on post-step state
  scalar_t termination_penalty = 20.0;
  std::function<vector_t(RngEngine&)> initial_state_sampler;
  scalar_t episode_length = 3.0;  // T, seconds
  scalar_t discount = 1.0;        // gamma per second, in [0, 1]
  scalar_t timestep = 0.02;       // dt, seconds

  vector_t goal;                // conditioning target for the value function
  scalar_t success_radius = 0.1;
  std::vector<int> position_dims;  // coordinates used for distance / heatmaps

  // Value-net conditioning hints: inputs are laid out [time-to-go, state, goal].
  // A positive output shift seeds fresh nets with a plausible cost-to-go level,
  // which keeps unexplored regions from looking cheaper than visited ones.
  vector_t net_input_shift;
  vector_t net_input_scale;
  scalar_t net_output_scale = 1.0;
  scalar_t net_output_shift = 0.0;

  std::vector<AxisAlignedBox> walls;
  std::vector<vector_t> eval_start_states;

  // Optional quadratic stabilization cost 0.5 (x - ref)' W (x - ref) added to
  // the planner's stage cost; empty when unused.
  matrix_t aux_state_weight;
  vector_t aux_state_ref;

  int steps_per_episode() const;
  void validate() const;
};

/// Planar double integrator reaching a goal behind a wall. Hitting a wall
/// terminates the episode with a fixed penalty; the running cost is the
/// Euclidean distance between the position and the goal.
EnvironmentSpec make_point_mass_walls();

/// Torque-limited-free pendulum swing-up around the upright equilibrium.
EnvironmentSpec make_pendulum();

/// One-dimensional linear-quadratic problem (A = 0, B = 1).
EnvironmentSpec make_scalar_lq(scalar_t noise_scale = 1.0);

/// One-dimensional double integrator with quadratic costs.
EnvironmentSpec make_double_integrator_lq(scalar_t noise_scale = 0.0);

EnvironmentSpec make_environment(const std::string& name);

/// One recorded interaction step for the critic. `cost` is the local
/// undiscounted step cost; discounting enters through the bootstrap.
struct TransitionTuple {
  scalar_t t = 0;
  vector_t state;
  vector_t control;
  scalar_t cost = 0;
  vector_t next_state;
  bool done = false;
  vector_t goal;
};

/// Simulates the environment from (t0, x0) under the policy until the episode
/// horizon or early termination. Per-step trajectory costs are recorded
/// discounted from t0 so that path_cost telescopes them exactly.
Trajectory rollout(const EnvironmentSpec& env, const Policy& policy,
                   const vector_t& x0, scalar_t t0, bool stochastic,
                   RngEngine& rng);

/// Total discounted path cost of a recorded trajectory, including the control
/// penalty, the control-noise cross term reconstructed from the recorded
/// increments, and the terminal cost (or the termination penalty in place of
/// the remaining tail).
scalar_t path_cost(const Trajectory& traj, const EnvironmentSpec& env);

/// Critic training tuples for a recorded trajectory. Local step costs carry
/// the termination penalty on early termination; the final step of a full
/// episode absorbs the discounted terminal cost and is marked done.
std::vector<TransitionTuple> collect_transitions(const EnvironmentSpec& env,
                                                 const Trajectory& traj,
                                                 scalar_t step_discount);

/// Header t,x0..x{n-1},u0..u{m-1},cost,terminated; one row per step.
void write_trajectory_csv(const Trajectory& traj, std::ostream& os);

}  // namespace dvmpc
