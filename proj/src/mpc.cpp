#include "dvmpc/mpc.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>

namespace dvmpc {

const char* cost_mode_name(CostMode mode) {
  switch (mode) {
    case CostMode::kHeuristicPlusRunning:
      return "heuristic_plus_running";
    case CostMode::kHeuristicOnly:
      return "heuristic_only";
  }
  throw ContractViolation("cost_mode_name: unknown mode");
}

CostMode parse_cost_mode(const std::string& name) {
  if (name == "heuristic_plus_running") return CostMode::kHeuristicPlusRunning;
  if (name == "heuristic_only") return CostMode::kHeuristicOnly;
  throw ContractViolation("parse_cost_mode: unknown cost mode '" + name + "'");
}

void MpcConfig::validate() const {
  if (horizon <= 0) throw ContractViolation("MpcConfig: horizon must be positive");
  if (timestep <= 0) throw ContractViolation("MpcConfig: timestep must be positive");
  if (max_iterations <= 0) {
    throw ContractViolation("MpcConfig: max_iterations must be positive");
  }
  if (cost_tolerance < 0) {
    throw ContractViolation("MpcConfig: cost_tolerance must be nonnegative");
  }
  if (reg_min <= 0 || reg_max < reg_min || reg_initial < reg_min ||
      reg_initial > reg_max) {
    throw ContractViolation("MpcConfig: regularization bounds are inconsistent");
  }
  if (reg_growth <= 1 || reg_shrink <= 0 || reg_shrink >= 1) {
    throw ContractViolation("MpcConfig: regularization factors are inconsistent");
  }
  if (line_search_factor <= 0 || line_search_factor >= 1) {
    throw ContractViolation("MpcConfig: line_search_factor must lie in (0, 1)");
  }
  if (line_search_min_step <= 0 || line_search_min_step > 1) {
    throw ContractViolation("MpcConfig: line_search_min_step must lie in (0, 1]");
  }
  if (psd_floor < 0) throw ContractViolation("MpcConfig: psd_floor must be nonnegative");
}

void ValueCostModel::validate(int state_dim) const {
  if (final_time <= 0) {
    throw ContractViolation("ValueCostModel: final_time must be positive");
  }
  if (discount <= 0 || discount > 1) {
    throw ContractViolation("ValueCostModel: discount must lie in (0, 1]");
  }
  if (value && value->state_dim() != state_dim) {
    throw ContractViolation("ValueCostModel: value source state dimension mismatch");
  }
  if (has_aux()) {
    if (aux_state_weight.rows() != state_dim || aux_state_weight.cols() != state_dim ||
        aux_state_ref.size() != state_dim) {
      throw ContractViolation("ValueCostModel: auxiliary cost dimension mismatch");
    }
  }
}

ValueCostModel ValueCostModel::from_environment(
    const EnvironmentSpec& env, std::shared_ptr<const ValueSource> value) {
  ValueCostModel cm;
  cm.value = std::move(value);
  cm.running_cost = env.running_cost;
  cm.terminal_cost = env.terminal_cost;
  cm.discount = env.discount;
  cm.final_time = env.episode_length;
  cm.aux_state_weight = env.aux_state_weight;
  cm.aux_state_ref = env.aux_state_ref;
  return cm;
}

namespace {

std::string describe_point(scalar_t tau, const vector_t& x) {
  std::ostringstream os;
  os << "t=" << tau << ", x=[" << x.transpose() << "]";
  return os.str();
}

void add_aux(const ValueCostModel& cm, const vector_t& x, scalar_t* value,
             vector_t* gradient, matrix_t* hessian) {
  if (!cm.has_aux()) return;
  const vector_t dx = x - cm.aux_state_ref;
  *value += 0.5 * dx.dot(cm.aux_state_weight * dx);
  if (gradient != nullptr) *gradient += cm.aux_state_weight * dx;
  if (hessian != nullptr) *hessian += cm.aux_state_weight;
}

bool uses_value_stage_cost(const ValueCostModel& cm, CostMode mode) {
  return cm.value != nullptr && mode == CostMode::kHeuristicPlusRunning;
}

}  // namespace

scalar_t running_cost(const ValueCostModel& cm, const ControlAffineModel& model,
                      CostMode mode, scalar_t tau, const vector_t& x) {
  scalar_t value = 0;
  if (uses_value_stage_cost(cm, mode)) {
    const ValueEval ev = cm.value->evaluate(tau, x);
    const vector_t f = model.drift(tau, x);
    const matrix_t xi = model.weighted_actuation(tau, x);
    value = -ev.time_partial - f.dot(ev.gradient) +
            0.5 * ev.gradient.dot(xi * ev.gradient);
  } else {
    if (!cm.running_cost.value) {
      throw ContractViolation("running_cost: running cost field is not set");
    }
    value = cm.running_cost.value(tau, x);
  }
  add_aux(cm, x, &value, nullptr, nullptr);
  return value;
}

StageQuadratic quadratize_running_cost(const ValueCostModel& cm,
                                       const ControlAffineModel& model, CostMode mode,
                                       scalar_t tau, const vector_t& x,
                                       scalar_t psd_floor) {
  StageQuadratic q;
  if (uses_value_stage_cost(cm, mode)) {
    const ValueEval ev = cm.value->evaluate(tau, x);
    const vector_t f = model.drift(tau, x);
    const matrix_t jf = model.drift_jac(tau, x);
    const matrix_t xi = model.weighted_actuation(tau, x);
    const vector_t xi_grad = xi * ev.gradient;
    q.value = -ev.time_partial - f.dot(ev.gradient) + 0.5 * ev.gradient.dot(xi_grad);
    q.gradient = -ev.gradient_time_partial - jf.transpose() * ev.gradient -
                 ev.hessian * f + ev.hessian * xi_grad;
    q.hessian = -ev.hessian_time_partial - ev.hessian * jf -
                jf.transpose() * ev.hessian + ev.hessian * xi * ev.hessian;
  } else {
    if (!cm.running_cost.value || !cm.running_cost.gradient || !cm.running_cost.hessian) {
      throw ContractViolation("quadratize_running_cost: running cost field is not set");
    }
    q.value = cm.running_cost.value(tau, x);
    q.gradient = cm.running_cost.gradient(tau, x);
    q.hessian = cm.running_cost.hessian(tau, x);
  }
  add_aux(cm, x, &q.value, &q.gradient, &q.hessian);
  q.hessian = clamp_psd(symmetrized(q.hessian), psd_floor);
  if (!std::isfinite(q.value) || !all_finite(q.gradient) || !all_finite(q.hessian)) {
    throw QuadratizationError("quadratize_running_cost: non-finite expansion at " +
                              describe_point(tau, x));
  }
  return q;
}

scalar_t heuristic_cost(const ValueCostModel& cm, scalar_t t_f, const vector_t& x_f) {
  if (cm.value) return cm.value->value(t_f, x_f);
  if (!cm.terminal_cost.value) {
    throw ContractViolation("heuristic_cost: terminal cost field is not set");
  }
  return cm.terminal_cost.value(t_f, x_f);
}

StageQuadratic quadratize_heuristic(const ValueCostModel& cm, scalar_t t_f,
                                    const vector_t& x_f, scalar_t psd_floor) {
  StageQuadratic q;
  if (cm.value) {
    const ValueEval ev = cm.value->evaluate(t_f, x_f);
    q.value = ev.value;
    q.gradient = ev.gradient;
    q.hessian = ev.hessian;
  } else {
    if (!cm.terminal_cost.value || !cm.terminal_cost.gradient ||
        !cm.terminal_cost.hessian) {
      throw ContractViolation("quadratize_heuristic: terminal cost field is not set");
    }
    q.value = cm.terminal_cost.value(t_f, x_f);
    q.gradient = cm.terminal_cost.gradient(t_f, x_f);
    q.hessian = cm.terminal_cost.hessian(t_f, x_f);
  }
  q.hessian = clamp_psd(symmetrized(q.hessian), psd_floor);
  if (!std::isfinite(q.value) || !all_finite(q.gradient) || !all_finite(q.hessian)) {
    throw QuadratizationError("quadratize_heuristic: non-finite expansion at " +
                              describe_point(t_f, x_f));
  }
  return q;
}

const vector_t& MpcSolution::first_control() const {
  if (controls.empty()) {
    throw ContractViolation("MpcSolution: empty control sequence");
  }
  return controls.front();
}

namespace {

struct HorizonGrid {
  std::vector<scalar_t> times;    // N+1
  std::vector<scalar_t> weights;  // N+1, gamma^{tau_i - t0}
  scalar_t h = 0;
  int steps = 0;
};

HorizonGrid make_grid(scalar_t t0, scalar_t h_eff, scalar_t timestep,
                      scalar_t discount) {
  HorizonGrid grid;
  grid.steps = static_cast<int>(std::max<long>(1, std::lround(h_eff / timestep)));
  grid.h = h_eff / grid.steps;
  grid.times.resize(grid.steps + 1);
  grid.weights.resize(grid.steps + 1);
  for (int i = 0; i <= grid.steps; ++i) {
    grid.times[i] = (i == grid.steps) ? t0 + h_eff : t0 + i * grid.h;
    grid.weights[i] = std::pow(discount, grid.times[i] - t0);
  }
  return grid;
}

struct RolloutResult {
  std::vector<vector_t> states;
  std::vector<vector_t> controls;
  scalar_t cost = 0;
};

// Closed-loop forward pass u_i = u_ref_i + alpha k_i + K_i (x_i - x_ref_i);
// with empty gain arrays it degenerates to an open-loop rollout of u_ref.
// Returns nullopt when the rollout or the cost leaves the finite domain.
std::optional<RolloutResult> forward_pass(
    const ControlAffineModel& model, const ValueCostModel& cm, CostMode mode,
    const HorizonGrid& grid, const vector_t& x0,
    const std::vector<vector_t>& u_ref, const std::vector<vector_t>& x_ref,
    const std::vector<vector_t>& feedforward, const std::vector<matrix_t>& feedback,
    scalar_t alpha) {
  RolloutResult out;
  out.states.reserve(grid.steps + 1);
  out.controls.reserve(grid.steps);
  out.states.push_back(x0);
  const bool closed_loop = !feedforward.empty();
  try {
    for (int i = 0; i < grid.steps; ++i) {
      vector_t u = u_ref[i];
      if (closed_loop) {
        u += alpha * feedforward[i] + feedback[i] * (out.states[i] - x_ref[i]);
      }
      if (!all_finite(u)) return std::nullopt;
      const scalar_t l = running_cost(cm, model, mode, grid.times[i], out.states[i]);
      out.cost += grid.h * (grid.weights[i] * l +
                            0.5 * u.dot(model.control_penalty * u));
      out.controls.push_back(u);
      out.states.push_back(
          step_deterministic(model, grid.times[i], out.states[i], u, grid.h));
    }
    out.cost += grid.weights[grid.steps] *
                heuristic_cost(cm, grid.times[grid.steps], out.states.back());
  } catch (const IntegrationDiverged&) {
    return std::nullopt;
  }
  if (!std::isfinite(out.cost)) return std::nullopt;
  return out;
}

// One Riccati-like sweep over the nominal; false when the regularized control
// Hessian is not positive definite at the current mu.
bool backward_pass(const ControlAffineModel& model, const ValueCostModel& cm,
                   CostMode mode, const MpcConfig& config, const HorizonGrid& grid,
                   const std::vector<vector_t>& states,
                   const std::vector<vector_t>& controls, scalar_t mu,
                   std::vector<vector_t>* feedforward,
                   std::vector<matrix_t>* feedback) {
  const int n = model.state_dim;
  const int m = model.control_dim;
  feedforward->assign(grid.steps, vector_t::Zero(m));
  feedback->assign(grid.steps, matrix_t::Zero(m, n));

  const StageQuadratic terminal = quadratize_heuristic(
      cm, grid.times[grid.steps], states[grid.steps], config.psd_floor);
  vector_t vx = grid.weights[grid.steps] * terminal.gradient;
  matrix_t vxx = grid.weights[grid.steps] * terminal.hessian;

  matrix_t a_d(n, n), b_d(n, m);
  for (int i = grid.steps - 1; i >= 0; --i) {
    linearize_step(model, grid.times[i], states[i], controls[i], grid.h, a_d, b_d);
    const StageQuadratic stage = quadratize_running_cost(
        cm, model, mode, grid.times[i], states[i], config.psd_floor);
    const scalar_t wh = grid.weights[i] * grid.h;

    const vector_t qx = wh * stage.gradient + a_d.transpose() * vx;
    const vector_t qu = grid.h * (model.control_penalty * controls[i]) +
                        b_d.transpose() * vx;
    const matrix_t vxx_a = vxx * a_d;
    const matrix_t qxx = wh * stage.hessian + a_d.transpose() * vxx_a;
    const matrix_t quu = grid.h * model.control_penalty +
                         b_d.transpose() * vxx * b_d;
    const matrix_t qux = b_d.transpose() * vxx_a;

    const matrix_t quu_reg = quu + mu * matrix_t::Identity(m, m);
    Eigen::LLT<matrix_t> llt(quu_reg);
    if (llt.info() != Eigen::Success) return false;

    const vector_t k = -llt.solve(qu);
    const matrix_t big_k = -llt.solve(qux);
    (*feedforward)[i] = k;
    (*feedback)[i] = big_k;

    vx = qx + big_k.transpose() * (quu * k + qu) + qux.transpose() * k;
    vxx = symmetrized(qxx + big_k.transpose() * (quu * big_k + qux) +
                      qux.transpose() * big_k);
  }
  return true;
}

}  // namespace

MpcSolution solve_mpc(const ControlAffineModel& model, const ValueCostModel& cm,
                      const vector_t& x0, scalar_t t0, const MpcConfig& config,
                      const std::vector<vector_t>* warm_start,
                      std::ostream* diagnostics) {
  config.validate();
  cm.validate(model.state_dim);
  if (x0.size() != model.state_dim || !all_finite(x0)) {
    throw ContractViolation("solve_mpc: initial state is invalid");
  }
  const scalar_t remaining = cm.final_time - t0;
  if (remaining <= 0) {
    throw ContractViolation("solve_mpc: start time is at or past final_time");
  }
  const scalar_t h_eff = std::min(config.horizon, remaining);
  const HorizonGrid grid = make_grid(t0, h_eff, config.timestep, cm.discount);
  const int m = model.control_dim;

  std::vector<vector_t> controls(grid.steps, vector_t::Zero(m));
  if (warm_start != nullptr && !warm_start->empty()) {
    for (int i = 0; i < grid.steps; ++i) {
      const vector_t& u =
          (*warm_start)[std::min<std::size_t>(i, warm_start->size() - 1)];
      if (u.size() != m) {
        throw ContractViolation("solve_mpc: warm start control dimension mismatch");
      }
      controls[i] = u;
    }
  }

  auto nominal = forward_pass(model, cm, config.cost_mode, grid, x0, controls, {},
                              {}, {}, 1.0);
  if (!nominal && warm_start != nullptr) {
    controls.assign(grid.steps, vector_t::Zero(m));
    nominal = forward_pass(model, cm, config.cost_mode, grid, x0, controls, {}, {},
                           {}, 1.0);
  }
  if (!nominal) {
    throw IntegrationDiverged("solve_mpc: initial rollout is not finite at t=" +
                              std::to_string(t0));
  }

  MpcSolution sol;
  sol.times = grid.times;
  sol.states = std::move(nominal->states);
  sol.controls = std::move(nominal->controls);
  sol.cost = nominal->cost;

  scalar_t mu = config.reg_initial;
  std::vector<vector_t> feedforward;
  std::vector<matrix_t> feedback;
  bool gains_valid = false;

  while (sol.iterations < config.max_iterations) {
    ++sol.iterations;

    bool backward_ok = backward_pass(model, cm, config.cost_mode, config, grid,
                                     sol.states, sol.controls, mu, &feedforward,
                                     &feedback);
    while (!backward_ok && mu * config.reg_growth <= config.reg_max) {
      mu *= config.reg_growth;
      backward_ok = backward_pass(model, cm, config.cost_mode, config, grid,
                                  sol.states, sol.controls, mu, &feedforward,
                                  &feedback);
    }
    if (!backward_ok) break;
    gains_valid = true;

    scalar_t alpha = 1.0;
    std::optional<RolloutResult> accepted;
    scalar_t best_rejected = std::numeric_limits<scalar_t>::infinity();
    while (alpha >= config.line_search_min_step) {
      auto candidate = forward_pass(model, cm, config.cost_mode, grid, x0,
                                    sol.controls, sol.states, feedforward,
                                    feedback, alpha);
      if (candidate) {
        if (candidate->cost < sol.cost) {
          accepted = std::move(candidate);
          break;
        }
        best_rejected = std::min(best_rejected, candidate->cost);
      }
      alpha *= config.line_search_factor;
    }

    if (diagnostics != nullptr) {
      (*diagnostics) << sol.iterations << ',' << (accepted ? accepted->cost : sol.cost)
                     << ',' << mu << ',' << (accepted ? alpha : 0.0) << '\n';
    }

    if (!accepted) {
      // No strict decrease anywhere on the search arc. When the best candidate
      // is within the stopping tolerance the nominal is already stationary;
      // otherwise stiffen the regularization and retry.
      if (best_rejected - sol.cost <=
          config.cost_tolerance * (1.0 + std::abs(sol.cost))) {
        sol.converged = true;
        break;
      }
      mu *= config.reg_growth;
      if (mu > config.reg_max) break;
      continue;
    }

    const scalar_t decrease = sol.cost - accepted->cost;
    sol.states = std::move(accepted->states);
    sol.controls = std::move(accepted->controls);
    sol.cost = accepted->cost;
    mu = std::max(config.reg_min, mu * config.reg_shrink);
    if (decrease <= config.cost_tolerance * (1.0 + std::abs(sol.cost))) {
      sol.converged = true;
      break;
    }
  }

  // Re-derive gains around the accepted nominal so the returned feedback
  // matches the returned trajectory.
  if (!backward_pass(model, cm, config.cost_mode, config, grid, sol.states,
                     sol.controls, mu, &feedforward, &feedback) &&
      !gains_valid) {
    feedforward.assign(grid.steps, vector_t::Zero(m));
    feedback.assign(grid.steps, matrix_t::Zero(m, model.state_dim));
  }
  sol.feedforward = std::move(feedforward);
  sol.feedback = std::move(feedback);
  return sol;
}

MpcSession::MpcSession(ControlAffineModel model, ValueCostModel cost_model,
                       MpcConfig config)
    : model_(std::move(model)),
      cost_model_(std::move(cost_model)),
      config_(std::move(config)) {
  config_.validate();
  cost_model_.validate(model_.state_dim);
}

vector_t MpcSession::policy_step(scalar_t t, const vector_t& x) {
  std::vector<vector_t> shifted;
  const std::vector<vector_t>* warm = nullptr;
  if (has_solution_) {
    const scalar_t elapsed = t - last_.times.front();
    const scalar_t h = last_.times[1] - last_.times[0];
    const long shift = std::lround(elapsed / h);
    if (shift >= 0 && shift < static_cast<long>(last_.controls.size())) {
      shifted.assign(last_.controls.begin() + shift, last_.controls.end());
      warm = &shifted;
    }
  }
  last_ = solve_mpc(model_, cost_model_, x, t, config_, warm);
  has_solution_ = true;
  return last_.first_control();
}

const MpcSolution& MpcSession::last_solution() const {
  if (!has_solution_) {
    throw ContractViolation("MpcSession: no solution computed yet");
  }
  return last_;
}

void MpcSession::reset() {
  has_solution_ = false;
  last_ = MpcSolution{};
}

Policy MpcSession::as_policy() {
  return [this](scalar_t t, const vector_t& x) { return policy_step(t, x); };
}

}  // namespace dvmpc
