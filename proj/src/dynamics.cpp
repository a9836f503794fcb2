#include "dvmpc/dynamics.hpp"

#include <cmath>
#include <string>

namespace dvmpc {

namespace {

std::string at_time(scalar_t t) { return " at t = " + std::to_string(t); }

void check_dims(const ControlAffineModel& model, const vector_t& x,
                const vector_t& u) {
  if (x.size() != model.state_dim) {
    throw ContractViolation("state dimension " + std::to_string(x.size()) +
                            " does not match model state_dim " +
                            std::to_string(model.state_dim));
  }
  if (u.size() != model.control_dim) {
    throw ContractViolation("control dimension " + std::to_string(u.size()) +
                            " does not match model control_dim " +
                            std::to_string(model.control_dim));
  }
}

}  // namespace

ControlAffineModel ControlAffineModel::make(int state_dim, int control_dim,
                                            DriftFn f, ActuationFn g,
                                            scalar_t noise_scale,
                                            matrix_t control_penalty,
                                            DriftJacobianFn drift_jacobian) {
  if (state_dim <= 0 || control_dim <= 0) {
    throw ContractViolation("model dimensions must be positive");
  }
  if (noise_scale < 0) {
    throw ContractViolation("noise_scale must be nonnegative");
  }
  if (control_penalty.rows() != control_dim ||
      control_penalty.cols() != control_dim) {
    throw ContractViolation("control_penalty must be control_dim square");
  }
  if ((control_penalty - control_penalty.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * (1.0 + control_penalty.cwiseAbs().maxCoeff())) {
    throw ContractViolation("control_penalty must be symmetric");
  }
  Eigen::LLT<matrix_t> llt(control_penalty);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("control_penalty must be positive definite");
  }

  ControlAffineModel model;
  model.state_dim = state_dim;
  model.control_dim = control_dim;
  model.drift = std::move(f);
  model.actuation = std::move(g);
  model.noise_scale = noise_scale;
  model.control_penalty = control_penalty;
  model.drift_jacobian = std::move(drift_jacobian);
  model.control_penalty_inv =
      llt.solve(matrix_t::Identity(control_dim, control_dim));
  model.noise_covariance =
      symmetrized(noise_scale * model.control_penalty_inv);
  if (noise_scale > 0) {
    Eigen::LLT<matrix_t> noise_llt(model.noise_covariance);
    if (noise_llt.info() != Eigen::Success) {
      throw ContractViolation("noise covariance is not positive definite");
    }
    model.noise_cholesky = noise_llt.matrixL();
  } else {
    model.noise_cholesky = matrix_t::Zero(control_dim, control_dim);
  }
  return model;
}

matrix_t ControlAffineModel::weighted_actuation(scalar_t t,
                                                const vector_t& x) const {
  matrix_t g = actuation(t, x);
  return symmetrized(g * control_penalty_inv * g.transpose());
}

matrix_t ControlAffineModel::drift_jac(scalar_t t, const vector_t& x) const {
  if (drift_jacobian) {
    return drift_jacobian(t, x);
  }
  const scalar_t h = 1e-6;
  matrix_t J(state_dim, state_dim);
  vector_t xp = x, xm = x;
  for (int j = 0; j < state_dim; ++j) {
    const scalar_t step = h * (1.0 + std::abs(x[j]));
    xp[j] += step;
    xm[j] -= step;
    J.col(j) = (drift(t, xp) - drift(t, xm)) / (2.0 * step);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return J;
}

StochasticStep step_stochastic(const ControlAffineModel& model, scalar_t t,
                               const vector_t& x, const vector_t& u,
                               scalar_t dt, RngEngine& rng) {
  check_dims(model, x, u);
  if (dt <= 0) throw ContractViolation("dt must be positive");

  vector_t z(model.control_dim);
  std::normal_distribution<scalar_t> normal(0.0, 1.0);
  for (int i = 0; i < model.control_dim; ++i) z[i] = normal(rng);

  StochasticStep step;
  step.noise_increment = model.noise_cholesky * (std::sqrt(dt) * z);
  const matrix_t g = model.actuation(t, x);
  step.next_state =
      x + (model.drift(t, x) + g * u) * dt + g * step.noise_increment;
  if (!all_finite(step.next_state)) {
    throw IntegrationDiverged("stochastic step produced non-finite state" +
                              at_time(t));
  }
  return step;
}

vector_t step_deterministic(const ControlAffineModel& model, scalar_t t,
                            const vector_t& x, const vector_t& u,
                            scalar_t dt) {
  check_dims(model, x, u);
  if (dt <= 0) throw ContractViolation("dt must be positive");

  auto rate = [&](scalar_t s, const vector_t& y) -> vector_t {
    return model.drift(s, y) + model.actuation(s, y) * u;
  };
  const vector_t k1 = rate(t, x);
  const vector_t k2 = rate(t + 0.5 * dt, x + 0.5 * dt * k1);
  const vector_t k3 = rate(t + 0.5 * dt, x + 0.5 * dt * k2);
  const vector_t k4 = rate(t + dt, x + dt * k3);
  vector_t next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!all_finite(next)) {
    throw IntegrationDiverged("deterministic step produced non-finite state" +
                              at_time(t));
  }
  return next;
}

void linearize_step(const ControlAffineModel& model, scalar_t t,
                    const vector_t& x, const vector_t& u, scalar_t dt,
                    matrix_t& A_d, matrix_t& B_d) {
  check_dims(model, x, u);
  const int n = model.state_dim;
  const int m = model.control_dim;

  auto rate = [&](scalar_t s, const vector_t& y) -> vector_t {
    return model.drift(s, y) + model.actuation(s, y) * u;
  };
  // d(rate)/dx at a stage point; the actuation term is control-affine so only
  // the drift contributes for state-independent g. State-dependent g falls
  // back to differencing the full rate.
  auto rate_jac_x = [&](scalar_t s, const vector_t& y) -> matrix_t {
    if (model.drift_jacobian) {
      return model.drift_jacobian(s, y);
    }
    const scalar_t h = 1e-6;
    matrix_t J(n, n);
    vector_t yp = y, ym = y;
    for (int j = 0; j < n; ++j) {
      const scalar_t step = h * (1.0 + std::abs(y[j]));
      yp[j] += step;
      ym[j] -= step;
      J.col(j) = (rate(s, yp) - rate(s, ym)) / (2.0 * step);
      yp[j] = y[j];
      ym[j] = y[j];
    }
    return J;
  };

  const vector_t k1 = rate(t, x);
  const vector_t x2 = x + 0.5 * dt * k1;
  const vector_t k2 = rate(t + 0.5 * dt, x2);
  const vector_t x3 = x + 0.5 * dt * k2;
  const vector_t k3 = rate(t + 0.5 * dt, x3);
  const vector_t x4 = x + dt * k3;

  const matrix_t F1 = rate_jac_x(t, x);
  const matrix_t F2 = rate_jac_x(t + 0.5 * dt, x2);
  const matrix_t F3 = rate_jac_x(t + 0.5 * dt, x3);
  const matrix_t F4 = rate_jac_x(t + dt, x4);

  const matrix_t I = matrix_t::Identity(n, n);
  const matrix_t dk1 = F1;
  const matrix_t dk2 = F2 * (I + 0.5 * dt * dk1);
  const matrix_t dk3 = F3 * (I + 0.5 * dt * dk2);
  const matrix_t dk4 = F4 * (I + dt * dk3);
  A_d = I + (dt / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4);

  const matrix_t G1 = model.actuation(t, x);
  const matrix_t G2 = model.actuation(t + 0.5 * dt, x2);
  const matrix_t G3 = model.actuation(t + 0.5 * dt, x3);
  const matrix_t G4 = model.actuation(t + dt, x4);

  matrix_t du1 = G1;
  matrix_t du2 = G2 + F2 * (0.5 * dt * du1);
  matrix_t du3 = G3 + F3 * (0.5 * dt * du2);
  matrix_t du4 = G4 + F4 * (dt * du3);
  B_d = (dt / 6.0) * (du1 + 2.0 * du2 + 2.0 * du3 + du4);
  (void)m;
}

void Trajectory::validate() const {
  const auto n_steps = controls.size();
  if (times.size() != n_steps + 1 || states.size() != n_steps + 1 ||
      step_costs.size() != n_steps || noise_increments.size() != n_steps) {
    throw ContractViolation("trajectory arrays have inconsistent lengths");
  }
  if (terminated_early &&
      (termination_index < 0 || termination_index >= static_cast<int>(n_steps))) {
    throw ContractViolation("termination index outside trajectory");
  }
}

}  // namespace dvmpc
