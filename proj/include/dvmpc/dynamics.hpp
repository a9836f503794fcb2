#pragma once

#include "dvmpc/types.hpp"

#include <vector>

namespace dvmpc {

/// Control-affine diffusion
///   dx = (f(t,x) + g(t,x) u) dt + g(t,x) dB,   Var[dB] = sigma dt,
/// with the noise covariance tied to the control penalty: sigma = lambda * R^{-1},
/// so sigma * R = lambda * I holds by construction for every instance.
struct ControlAffineModel {
  using DriftFn = std::function<vector_t(scalar_t, const vector_t&)>;
  using ActuationFn = std::function<matrix_t(scalar_t, const vector_t&)>;
  using DriftJacobianFn = std::function<matrix_t(scalar_t, const vector_t&)>;

  int state_dim = 0;
  int control_dim = 0;
  DriftFn drift;              // f(t, x), size n
  ActuationFn actuation;      // g(t, x), n x m
  scalar_t noise_scale = 0;   // lambda >= 0
  matrix_t control_penalty;   // R, m x m symmetric positive definite

  // Analytic d f / d x. Central differences are used when absent.
  DriftJacobianFn drift_jacobian;

  // Derived, filled by make().
  matrix_t control_penalty_inv;  // R^{-1}
  matrix_t noise_covariance;     // sigma = lambda * R^{-1}
  matrix_t noise_cholesky;       // lower Cholesky factor of sigma

  static ControlAffineModel make(int state_dim, int control_dim, DriftFn f,
                                 ActuationFn g, scalar_t noise_scale,
                                 matrix_t control_penalty,
                                 DriftJacobianFn drift_jacobian = nullptr);

  /// Xi(t, x) = g R^{-1} g^T, the control-weighted actuation outer product.
  matrix_t weighted_actuation(scalar_t t, const vector_t& x) const;

  matrix_t drift_jac(scalar_t t, const vector_t& x) const;
};

struct StochasticStep {
  vector_t next_state;
  vector_t noise_increment;  // dB, size m
};

/// One Euler-Maruyama step. Throws IntegrationDiverged (naming the time) on a
/// non-finite result.
StochasticStep step_stochastic(const ControlAffineModel& model, scalar_t t,
                               const vector_t& x, const vector_t& u,
                               scalar_t dt, RngEngine& rng);

/// One classical Runge-Kutta step of the noise-free dynamics xdot = f + g u,
/// control held constant over the step.
vector_t step_deterministic(const ControlAffineModel& model, scalar_t t,
                            const vector_t& x, const vector_t& u, scalar_t dt);

/// Exact Jacobians of the step_deterministic map, obtained by chaining the
/// Runge-Kutta stages. For linear dynamics these reproduce the zero-order-hold
/// discretization to the order of the integrator.
void linearize_step(const ControlAffineModel& model, scalar_t t,
                    const vector_t& x, const vector_t& u, scalar_t dt,
                    matrix_t& A_d, matrix_t& B_d);

struct Trajectory {
  std::vector<scalar_t> times;             // N+1
  std::vector<vector_t> states;            // N+1
  std::vector<vector_t> controls;          // N
  std::vector<vector_t> noise_increments;  // N, all-zero when deterministic
  std::vector<scalar_t> step_costs;        // N, discounted from times.front()
  bool stochastic = false;
  bool terminated_early = false;
  int termination_index = -1;

  int num_steps() const { return static_cast<int>(controls.size()); }
  void validate() const;  // throws ContractViolation on length mismatch
};

}  // namespace dvmpc
