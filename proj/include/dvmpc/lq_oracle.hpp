#pragma once

#include "dvmpc/environment.hpp"

#include <iosfwd>

namespace dvmpc {

/// Finite-horizon linear-quadratic problem
///   xdot = A x + B u,  cost 0.5 x'Qx + 0.5 u'Ru running, 0.5 x'Q_f x terminal,
/// with actuation noise of scale lambda (covariance lambda * R^{-1}).
struct LqProblem {
  matrix_t A;
  matrix_t B;
  matrix_t Q;
  matrix_t Q_f;
  matrix_t R;
  scalar_t noise_scale = 0;  // lambda
  scalar_t horizon = 1.0;    // T

  int state_dim() const { return static_cast<int>(A.rows()); }
  int control_dim() const { return static_cast<int>(B.cols()); }
  void validate() const;
  ControlAffineModel to_model() const;
};

LqProblem scalar_lq_problem(scalar_t noise_scale = 1.0);
LqProblem double_integrator_lq_problem(scalar_t noise_scale = 0.0);

/// Environment wrapper with quadratic cost fields, discount 1, no termination.
EnvironmentSpec lq_environment(const LqProblem& lq, const std::string& name,
                               scalar_t timestep = 0.01);

/// Backward solution of
///   -Pdot = Q + A'P + PA - P B R^{-1} B' P,        P(T) = Q_f,
///   -cdot = (lambda / 2) trace(B R^{-1} B' P),      c(T) = 0,
/// so the stochastic optimal value is V*(t, x) = 0.5 x'P(t)x + c(t) and the
/// optimal policy is u*(t, x) = -R^{-1} B' P(t) x (independent of lambda).
struct RiccatiSolution {
  LqProblem problem;
  scalar_t grid_dt = 0;
  std::vector<matrix_t> P;       // P[k] at t = k * grid_dt
  std::vector<scalar_t> offset;  // c[k]

  matrix_t P_at(scalar_t t) const;  // linear interpolation in t
  scalar_t offset_at(scalar_t t) const;
};

RiccatiSolution solve_riccati(const LqProblem& lq, scalar_t grid_dt = 1e-3);

scalar_t optimal_value(const RiccatiSolution& sol, scalar_t t, const vector_t& x);
vector_t optimal_policy_control(const RiccatiSolution& sol, scalar_t t,
                                const vector_t& x);
Policy optimal_policy(const RiccatiSolution& sol);

struct LqValueDerivatives {
  scalar_t time_partial = 0;  // 0.5 x'Pdot x + cdot
  vector_t gradient;          // P x
  matrix_t hessian;           // P
};
LqValueDerivatives value_derivatives(const RiccatiSolution& sol, scalar_t t,
                                     const vector_t& x);

/// Pdot(t) and cdot(t) evaluated from the Riccati right-hand side at the
/// interpolated P(t).
void riccati_rates(const RiccatiSolution& sol, scalar_t t, matrix_t& P_dot,
                   scalar_t& c_dot);

/// Exact dynamic-programming solution of the time-discretized problem a
/// trajectory optimizer works on: the same Runge-Kutta step map and the same
/// left-endpoint quadrature (stage cost 0.5 x'Qx dt + 0.5 u'Ru dt, terminal
/// 0.5 x'Q_f x). Used to check solver optimality at machine precision.
struct DiscreteLqrSolution {
  scalar_t dt = 0;
  std::vector<matrix_t> P;  // N+1 cost-to-go Hessians
  std::vector<matrix_t> K;  // N feedback gains, u_k = -K_k x_k

  scalar_t cost(const vector_t& x0) const { return 0.5 * quadratic_form(P[0], x0); }
  vector_t first_control(const vector_t& x0) const { return -K[0] * x0; }
};

DiscreteLqrSolution solve_discrete_lqr(const LqProblem& lq, scalar_t dt);

/// Debug dump: header t,p0..p{n-1} with the diagonal of P(t) per grid row.
void write_riccati_diagonal_csv(const RiccatiSolution& sol, std::ostream& os);

}  // namespace dvmpc
