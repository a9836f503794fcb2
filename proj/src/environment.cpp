#include "dvmpc/environment.hpp"
#include "dvmpc/lq_oracle.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace dvmpc {

namespace {

constexpr scalar_t kPi = 3.14159265358979323846;

void append_formatted(std::string& out, scalar_t v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  out += buf;
}

}  // namespace

CostField quadratic_cost_field(const matrix_t& Q) {
  matrix_t Qs = symmetrized(Q);
  CostField field;
  field.value = [Qs](scalar_t, const vector_t& x) {
    return 0.5 * quadratic_form(Qs, x);
  };
  field.gradient = [Qs](scalar_t, const vector_t& x) -> vector_t {
    return Qs * x;
  };
  field.hessian = [Qs](scalar_t, const vector_t&) { return Qs; };
  return field;
}

bool AxisAlignedBox::contains(const vector_t& x,
                              const std::vector<int>& dims) const {
  for (size_t i = 0; i < dims.size(); ++i) {
    const scalar_t v = x[dims[i]];
    if (v < lo[static_cast<int>(i)] || v > hi[static_cast<int>(i)]) {
      return false;
    }
  }
  return true;
}

int EnvironmentSpec::steps_per_episode() const {
  return static_cast<int>(std::lround(episode_length / timestep));
}

void EnvironmentSpec::validate() const {
  if (timestep <= 0 || episode_length <= 0) {
    throw ContractViolation(name + ": timestep and episode_length must be positive");
  }
  if (discount <= 0 || discount > 1) {
    throw ContractViolation(name + ": discount must lie in (0, 1]");
  }
  const scalar_t steps = episode_length / timestep;
  if (std::abs(steps - std::lround(steps)) > 1e-9 * steps) {
    throw ContractViolation(name + ": timestep must divide episode_length");
  }
  if (!running_cost.value || !terminal_cost.value) {
    throw ContractViolation(name + ": cost fields are required");
  }
}

EnvironmentSpec make_point_mass_walls() {
  const int n = 4, m = 2;

  auto drift = [](scalar_t, const vector_t& x) -> vector_t {
    vector_t dx(4);
    dx << x[2], x[3], 0.0, 0.0;
    return dx;
  };
  matrix_t G = matrix_t::Zero(n, m);
  G(2, 0) = 1.0;
  G(3, 1) = 1.0;
  auto actuation = [G](scalar_t, const vector_t&) { return G; };
  matrix_t A = matrix_t::Zero(n, n);
  A(0, 2) = 1.0;
  A(1, 3) = 1.0;
  auto drift_jac = [A](scalar_t, const vector_t&) { return A; };

  // Control penalty sized so that transit-speed controls stay cheap while the
  // quadratic value-gradient term R^{-1} feeds into the planner stays tame;
  // noise scale gives the velocity a ~0.45 random-walk std over one second.
  const scalar_t r = 0.25;
  const scalar_t lambda = 0.1;
  EnvironmentSpec env;
  env.name = "point_mass_walls";
  env.model = ControlAffineModel::make(n, m, drift, actuation, lambda,
                                       r * matrix_t::Identity(m, m), drift_jac);

  vector_t goal(2);
  goal << 0.0, 1.5;
  env.goal = goal;
  env.position_dims = {0, 1};

  // Running cost: Euclidean distance between position and goal. The Hessian
  // is the tangential projector scaled by 1/d, clamped near the goal where
  // the distance is not twice differentiable.
  const scalar_t d_floor = 0.05;
  env.running_cost.value = [goal](scalar_t, const vector_t& x) {
    return std::hypot(x[0] - goal[0], x[1] - goal[1]);
  };
  env.running_cost.gradient = [goal](scalar_t, const vector_t& x) -> vector_t {
    vector_t g = vector_t::Zero(4);
    const scalar_t dx = x[0] - goal[0], dy = x[1] - goal[1];
    const scalar_t d = std::hypot(dx, dy);
    if (d > 1e-12) {
      g[0] = dx / d;
      g[1] = dy / d;
    }
    return g;
  };
  env.running_cost.hessian = [goal, d_floor](scalar_t,
                                             const vector_t& x) -> matrix_t {
    matrix_t H = matrix_t::Zero(4, 4);
    const scalar_t dx = x[0] - goal[0], dy = x[1] - goal[1];
    const scalar_t d = std::hypot(dx, dy);
    const scalar_t de = std::max(d, d_floor);
    if (d > 1e-12) {
      const scalar_t nx = dx / d, ny = dy / d;
      H(0, 0) = (1.0 - nx * nx) / de;
      H(0, 1) = (-nx * ny) / de;
      H(1, 0) = H(0, 1);
      H(1, 1) = (1.0 - ny * ny) / de;
    } else {
      H(0, 0) = 1.0 / de;
      H(1, 1) = 1.0 / de;
    }
    return H;
  };

  env.terminal_cost.value = [](scalar_t, const vector_t&) { return 0.0; };
  env.terminal_cost.gradient = [](scalar_t, const vector_t&) -> vector_t {
    return vector_t::Zero(4);
  };
  env.terminal_cost.hessian = [](scalar_t, const vector_t&) -> matrix_t {
    return matrix_t::Zero(4, 4);
  };

  // Interior wall between the start line and the goal, plus a rim that closes
  // the arena. The rim matters: without it the planner can drive off the field
  // into regions the value net never sees data for, where its extrapolation is
  // flat and cannot be corrected.
  auto make_box = [](scalar_t lx, scalar_t ly, scalar_t hx, scalar_t hy) {
    AxisAlignedBox box;
    box.lo = vector_t(2);
    box.hi = vector_t(2);
    box.lo << lx, ly;
    box.hi << hx, hy;
    return box;
  };
  env.walls = {make_box(-0.9, -0.05, 0.9, 0.15),    // interior wall
               make_box(-2.25, -2.5, -1.75, 2.5),   // west rim
               make_box(1.75, -2.5, 2.25, 2.5),     // east rim
               make_box(-2.25, -2.5, 2.25, -2.0),   // south rim
               make_box(-2.25, 2.0, 2.25, 2.5)};    // north rim
  auto walls = env.walls;
  auto dims = env.position_dims;
  env.terminated = [walls, dims](const vector_t& x) {
    for (const auto& w : walls) {
      if (w.contains(x, dims)) return true;
    }
    return false;
  };
  env.termination_penalty = 20.0;

  // Training episodes start anywhere in the arena (the task is reaching from
  // any initial position); evaluation uses the fixed line of starts below the
  // wall. Rejection keeps starts out of the walls.
  env.initial_state_sampler = [walls, dims](RngEngine& rng) -> vector_t {
    std::uniform_real_distribution<scalar_t> ux(-1.55, 1.55);
    std::uniform_real_distribution<scalar_t> uy(-1.8, 1.8);
    vector_t x0 = vector_t::Zero(4);
    bool blocked = true;
    while (blocked) {
      x0[0] = ux(rng);
      x0[1] = uy(rng);
      blocked = false;
      for (const auto& w : walls) blocked = blocked || w.contains(x0, dims);
    }
    return x0;
  };

  env.episode_length = 3.0;
  env.discount = 0.9;
  env.timestep = 0.02;
  env.success_radius = 0.1;

  for (int i = 0; i < 8; ++i) {
    vector_t s = vector_t::Zero(4);
    s[0] = -1.4 + 0.4 * i;
    s[1] = -1.5;
    env.eval_start_states.push_back(s);
  }

  // The remaining-time input is already in [0,1]; positions and velocities
  // are scaled by the arena half-extent.
  env.net_input_shift = vector_t::Zero(1 + n + 2);
  env.net_input_scale = vector_t::Ones(1 + n + 2);
  env.net_input_scale << 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0;
  env.net_output_scale = 10.0;
  // Prior level between the cost of a direct transit and of idling in place.
  env.net_output_shift = 5.0;
  return env;
}

EnvironmentSpec make_pendulum() {
  const int n = 2, m = 1;
  const scalar_t gravity = 5.0;   // g / length
  const scalar_t damping = 0.1;

  auto drift = [gravity, damping](scalar_t, const vector_t& x) -> vector_t {
    vector_t dx(2);
    dx << x[1], gravity * std::sin(x[0]) - damping * x[1];
    return dx;
  };
  matrix_t G = matrix_t::Zero(n, m);
  G(1, 0) = 1.0;
  auto actuation = [G](scalar_t, const vector_t&) { return G; };
  auto drift_jac = [gravity, damping](scalar_t, const vector_t& x) -> matrix_t {
    matrix_t A = matrix_t::Zero(2, 2);
    A(0, 1) = 1.0;
    A(1, 0) = gravity * std::cos(x[0]);
    A(1, 1) = -damping;
    return A;
  };

  EnvironmentSpec env;
  env.name = "pendulum";
  env.model = ControlAffineModel::make(n, m, drift, actuation, 0.01,
                                       0.2 * matrix_t::Identity(m, m), drift_jac);

  env.goal = vector_t::Zero(2);
  env.position_dims = {0, 1};

  // Upright regulation cost, smooth and periodic in the angle.
  env.running_cost.value = [](scalar_t, const vector_t& x) {
    return (1.0 - std::cos(x[0])) + 0.05 * x[1] * x[1];
  };
  env.running_cost.gradient = [](scalar_t, const vector_t& x) -> vector_t {
    vector_t g(2);
    g << std::sin(x[0]), 0.1 * x[1];
    return g;
  };
  env.running_cost.hessian = [](scalar_t, const vector_t& x) -> matrix_t {
    matrix_t H = matrix_t::Zero(2, 2);
    H(0, 0) = std::max(std::cos(x[0]), 0.0);
    H(1, 1) = 0.1;
    return H;
  };
  env.terminal_cost = env.running_cost;

  env.terminated = nullptr;
  env.initial_state_sampler = [](RngEngine& rng) -> vector_t {
    std::uniform_real_distribution<scalar_t> utheta(-kPi, kPi);
    std::uniform_real_distribution<scalar_t> uomega(-1.0, 1.0);
    vector_t x0(2);
    x0 << utheta(rng), uomega(rng);
    return x0;
  };

  env.episode_length = 3.0;
  env.discount = 0.95;
  env.timestep = 0.02;
  env.success_radius = 0.25;

  for (int i = 0; i < 8; ++i) {
    vector_t s(2);
    s << -kPi + (2.0 * kPi) * (i + 0.5) / 8.0, 0.0;
    env.eval_start_states.push_back(s);
  }

  env.net_input_shift = vector_t::Zero(1 + n + 2);
  env.net_input_scale = vector_t::Ones(1 + n + 2);
  env.net_input_scale << 1.0, kPi, 3.0, kPi, 3.0;
  env.net_output_scale = 10.0;
  return env;
}

EnvironmentSpec make_scalar_lq(scalar_t noise_scale) {
  return lq_environment(scalar_lq_problem(noise_scale), "scalar_lq");
}

EnvironmentSpec make_double_integrator_lq(scalar_t noise_scale) {
  return lq_environment(double_integrator_lq_problem(noise_scale),
                        "double_integrator_lq");
}

EnvironmentSpec make_environment(const std::string& name) {
  if (name == "point_mass_walls") return make_point_mass_walls();
  if (name == "pendulum") return make_pendulum();
  if (name == "scalar_lq") return make_scalar_lq();
  if (name == "double_integrator_lq") return make_double_integrator_lq();
  throw DomainError("unknown environment: " + name);
}

Trajectory rollout(const EnvironmentSpec& env, const Policy& policy,
                   const vector_t& x0, scalar_t t0, bool stochastic,
                   RngEngine& rng) {
  env.validate();
  if (x0.size() != env.model.state_dim) {
    throw ContractViolation("rollout initial state has wrong dimension");
  }
  const scalar_t T = env.episode_length;
  if (t0 < 0 || t0 >= T) {
    throw ContractViolation("rollout start time outside [0, T)");
  }
  const scalar_t dt = env.timestep;
  const int n_steps = static_cast<int>(std::lround((T - t0) / dt));

  Trajectory traj;
  traj.stochastic = stochastic;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.controls.reserve(n_steps);
  traj.noise_increments.reserve(n_steps);
  traj.step_costs.reserve(n_steps);

  vector_t x = x0;
  traj.times.push_back(t0);
  traj.states.push_back(x);

  const matrix_t& R = env.model.control_penalty;
  for (int i = 0; i < n_steps; ++i) {
    const scalar_t t = t0 + i * dt;
    vector_t u = policy(t, x);
    if (u.size() != env.model.control_dim) {
      throw ContractViolation("policy returned control of wrong dimension");
    }

    vector_t x_next;
    vector_t dB = vector_t::Zero(env.model.control_dim);
    if (stochastic) {
      StochasticStep step = step_stochastic(env.model, t, x, u, dt, rng);
      x_next = std::move(step.next_state);
      dB = std::move(step.noise_increment);
    } else {
      x_next = step_deterministic(env.model, t, x, u, dt);
    }

    const scalar_t w = std::pow(env.discount, t - t0);
    scalar_t cost = w * env.running_cost.value(t, x) * dt +
                    0.5 * u.dot(R * u) * dt;

    const bool hit = env.terminated && env.terminated(x_next);
    if (hit) {
      cost += w * env.termination_penalty;
      traj.terminated_early = true;
      traj.termination_index = i;
    }

    traj.controls.push_back(std::move(u));
    traj.noise_increments.push_back(std::move(dB));
    traj.step_costs.push_back(cost);
    traj.times.push_back(t0 + (i + 1) * dt);
    traj.states.push_back(x_next);
    x = std::move(x_next);
    if (hit) break;
  }
  traj.validate();
  return traj;
}

scalar_t path_cost(const Trajectory& traj, const EnvironmentSpec& env) {
  traj.validate();
  if (traj.stochastic && traj.noise_increments.empty() && !traj.controls.empty()) {
    throw ContractViolation("stochastic trajectory is missing noise increments");
  }
  const matrix_t& R = env.model.control_penalty;
  scalar_t total = 0;
  for (int i = 0; i < traj.num_steps(); ++i) {
    total += traj.step_costs[i];
    total += traj.controls[i].dot(R * traj.noise_increments[i]);
  }
  if (!traj.terminated_early) {
    const scalar_t w =
        std::pow(env.discount, traj.times.back() - traj.times.front());
    total += w * env.terminal_cost.value(traj.times.back(), traj.states.back());
  }
  return total;
}

std::vector<TransitionTuple> collect_transitions(const EnvironmentSpec& env,
                                                 const Trajectory& traj,
                                                 scalar_t step_discount) {
  traj.validate();
  const matrix_t& R = env.model.control_penalty;
  const scalar_t dt = env.timestep;
  const bool reaches_horizon =
      !traj.terminated_early &&
      traj.times.back() >= env.episode_length - 0.5 * dt;

  std::vector<TransitionTuple> tuples;
  tuples.reserve(traj.num_steps());
  for (int i = 0; i < traj.num_steps(); ++i) {
    TransitionTuple tr;
    tr.t = traj.times[i];
    tr.state = traj.states[i];
    tr.control = traj.controls[i];
    tr.next_state = traj.states[i + 1];
    tr.goal = env.goal;
    tr.cost = env.running_cost.value(tr.t, tr.state) * dt +
              0.5 * tr.control.dot(R * tr.control) * dt;
    tr.done = false;
    if (traj.terminated_early && i == traj.termination_index) {
      tr.cost += env.termination_penalty;
      tr.done = true;
    } else if (reaches_horizon && i == traj.num_steps() - 1) {
      tr.cost += step_discount *
                 env.terminal_cost.value(traj.times.back(), traj.states.back());
      tr.done = true;
    }
    tuples.push_back(std::move(tr));
  }
  return tuples;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
  traj.validate();
  const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states[0].size());
  const int m =
      traj.controls.empty() ? 0 : static_cast<int>(traj.controls[0].size());

  std::string line = "t";
  for (int j = 0; j < n; ++j) line += ",x" + std::to_string(j);
  for (int j = 0; j < m; ++j) line += ",u" + std::to_string(j);
  line += ",cost,terminated\n";
  os << line;

  for (int i = 0; i < traj.num_steps(); ++i) {
    line.clear();
    append_formatted(line, traj.times[i]);
    for (int j = 0; j < n; ++j) {
      line += ',';
      append_formatted(line, traj.states[i][j]);
    }
    for (int j = 0; j < m; ++j) {
      line += ',';
      append_formatted(line, traj.controls[i][j]);
    }
    line += ',';
    append_formatted(line, traj.step_costs[i]);
    line += ',';
    line += (traj.terminated_early && i == traj.termination_index) ? '1' : '0';
    line += '\n';
    os << line;
  }
}

}  // namespace dvmpc
