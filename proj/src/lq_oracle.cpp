#include "dvmpc/lq_oracle.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace dvmpc {

namespace {

void check_square(const matrix_t& M, int n, const char* name) {
  if (M.rows() != n || M.cols() != n) {
    throw ContractViolation(std::string(name) + " has wrong shape");
  }
}

}  // namespace

void LqProblem::validate() const {
  const int n = state_dim();
  const int m = control_dim();
  if (n <= 0 || m <= 0) throw ContractViolation("LqProblem dimensions must be positive");
  check_square(A, n, "A");
  if (B.rows() != n) throw ContractViolation("B has wrong shape");
  check_square(Q, n, "Q");
  check_square(Q_f, n, "Q_f");
  check_square(R, m, "R");
  if (noise_scale < 0) throw ContractViolation("noise_scale must be nonnegative");
  if (horizon <= 0) throw ContractViolation("horizon must be positive");
  Eigen::LLT<matrix_t> llt(R);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("R must be positive definite");
  }
}

ControlAffineModel LqProblem::to_model() const {
  validate();
  matrix_t A_ = A, B_ = B;
  auto drift = [A_](scalar_t, const vector_t& x) -> vector_t { return A_ * x; };
  auto actuation = [B_](scalar_t, const vector_t&) { return B_; };
  auto jac = [A_](scalar_t, const vector_t&) { return A_; };
  return ControlAffineModel::make(state_dim(), control_dim(), drift, actuation,
                                  noise_scale, R, jac);
}

LqProblem scalar_lq_problem(scalar_t noise_scale) {
  LqProblem lq;
  lq.A = matrix_t::Zero(1, 1);
  lq.B = matrix_t::Ones(1, 1);
  lq.Q = matrix_t::Ones(1, 1);
  lq.Q_f = matrix_t::Ones(1, 1);
  lq.R = matrix_t::Ones(1, 1);
  lq.noise_scale = noise_scale;
  lq.horizon = 1.0;
  return lq;
}

LqProblem double_integrator_lq_problem(scalar_t noise_scale) {
  LqProblem lq;
  lq.A = matrix_t::Zero(2, 2);
  lq.A(0, 1) = 1.0;
  lq.B = matrix_t::Zero(2, 1);
  lq.B(1, 0) = 1.0;
  lq.Q = matrix_t::Zero(2, 2);
  lq.Q(0, 0) = 1.0;
  lq.Q(1, 1) = 0.1;
  lq.Q_f = matrix_t::Zero(2, 2);
  lq.Q_f(0, 0) = 2.0;
  lq.Q_f(1, 1) = 0.5;
  lq.R = 0.5 * matrix_t::Ones(1, 1);
  lq.noise_scale = noise_scale;
  lq.horizon = 3.0;
  return lq;
}

EnvironmentSpec lq_environment(const LqProblem& lq, const std::string& name,
                               scalar_t timestep) {
  lq.validate();
  const int n = lq.state_dim();

  EnvironmentSpec env;
  env.name = name;
  env.model = lq.to_model();
  env.running_cost = quadratic_cost_field(lq.Q);
  env.terminal_cost = quadratic_cost_field(lq.Q_f);
  env.terminated = nullptr;
  env.termination_penalty = 0.0;
  env.episode_length = lq.horizon;
  env.discount = 1.0;
  env.timestep = timestep;
  env.goal = vector_t::Zero(n);
  env.success_radius = 0.1;
  env.position_dims.resize(n);
  for (int i = 0; i < n; ++i) env.position_dims[i] = i;
  env.initial_state_sampler = [n](RngEngine& rng) -> vector_t {
    std::uniform_real_distribution<scalar_t> u(-1.0, 1.0);
    vector_t x(n);
    for (int i = 0; i < n; ++i) x[i] = u(rng);
    return x;
  };
  for (int i = 0; i < 8; ++i) {
    vector_t s = vector_t::Zero(n);
    s[0] = -1.4 + 0.4 * i;
    if (n > 1) s[1] = (i % 2 == 0) ? 0.5 : -0.5;
    env.eval_start_states.push_back(s);
  }
  env.net_input_shift = vector_t::Zero(1 + 2 * n);
  env.net_input_scale = vector_t::Ones(1 + 2 * n);
  env.net_output_scale = 2.0;
  return env;
}

namespace {

// Backward Riccati right-hand sides in reversed time s = T - t.
struct RiccatiRhs {
  const LqProblem& lq;
  matrix_t Xi;  // B R^{-1} B'

  explicit RiccatiRhs(const LqProblem& problem) : lq(problem) {
    Eigen::LLT<matrix_t> llt(lq.R);
    Xi = symmetrized(lq.B * llt.solve(lq.B.transpose()));
  }

  matrix_t dP(const matrix_t& P) const {
    return symmetrized(lq.Q + lq.A.transpose() * P + P * lq.A - P * Xi * P);
  }
  scalar_t dc(const matrix_t& P) const {
    return 0.5 * lq.noise_scale * (Xi * P).trace();
  }
};

void check_riccati_bounded(const matrix_t& P, scalar_t s) {
  if (!all_finite(P) || P.cwiseAbs().maxCoeff() > 1e12) {
    throw OracleFailure("riccati integration diverged " +
                        std::to_string(s) + " seconds before the horizon");
  }
}

int grid_index(const RiccatiSolution& sol, scalar_t t, scalar_t* alpha) {
  const scalar_t T = sol.problem.horizon;
  if (t < -1e-12 || t > T + 1e-12) {
    throw DomainError("riccati solution queried outside [0, T]");
  }
  const scalar_t clamped = std::min(std::max(t, scalar_t(0)), T);
  const scalar_t pos = clamped / sol.grid_dt;
  int k = static_cast<int>(pos);
  if (k >= static_cast<int>(sol.P.size()) - 1) {
    k = static_cast<int>(sol.P.size()) - 2;
  }
  *alpha = pos - k;
  return k;
}

}  // namespace

RiccatiSolution solve_riccati(const LqProblem& lq, scalar_t grid_dt) {
  lq.validate();
  if (grid_dt <= 0) throw ContractViolation("grid_dt must be positive");

  const int steps = std::max(1, static_cast<int>(std::lround(lq.horizon / grid_dt)));
  const scalar_t h = lq.horizon / steps;
  RiccatiRhs rhs(lq);

  RiccatiSolution sol;
  sol.problem = lq;
  sol.grid_dt = h;
  sol.P.resize(steps + 1);
  sol.offset.resize(steps + 1);
  sol.P[steps] = symmetrized(lq.Q_f);
  sol.offset[steps] = 0;

  matrix_t P = sol.P[steps];
  scalar_t c = 0;
  for (int k = steps; k > 0; --k) {
    // Classical Runge-Kutta on the pair (P, c), marching away from the horizon.
    const matrix_t k1 = rhs.dP(P);
    const scalar_t l1 = rhs.dc(P);
    const matrix_t k2 = rhs.dP(P + 0.5 * h * k1);
    const scalar_t l2 = rhs.dc(P + 0.5 * h * k1);
    const matrix_t k3 = rhs.dP(P + 0.5 * h * k2);
    const scalar_t l3 = rhs.dc(P + 0.5 * h * k2);
    const matrix_t k4 = rhs.dP(P + h * k3);
    const scalar_t l4 = rhs.dc(P + h * k3);
    P = symmetrized(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    c += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    check_riccati_bounded(P, lq.horizon - (k - 1) * h);
    sol.P[k - 1] = P;
    sol.offset[k - 1] = c;
  }
  return sol;
}

matrix_t RiccatiSolution::P_at(scalar_t t) const {
  scalar_t alpha = 0;
  const int k = grid_index(*this, t, &alpha);
  return (1.0 - alpha) * P[k] + alpha * P[k + 1];
}

scalar_t RiccatiSolution::offset_at(scalar_t t) const {
  scalar_t alpha = 0;
  const int k = grid_index(*this, t, &alpha);
  return (1.0 - alpha) * offset[k] + alpha * offset[k + 1];
}

scalar_t optimal_value(const RiccatiSolution& sol, scalar_t t, const vector_t& x) {
  return 0.5 * quadratic_form(sol.P_at(t), x) + sol.offset_at(t);
}

vector_t optimal_policy_control(const RiccatiSolution& sol, scalar_t t,
                                const vector_t& x) {
  Eigen::LLT<matrix_t> llt(sol.problem.R);
  return -llt.solve(sol.problem.B.transpose() * (sol.P_at(t) * x));
}

Policy optimal_policy(const RiccatiSolution& sol) {
  Eigen::LLT<matrix_t> llt(sol.problem.R);
  const matrix_t RinvBt = llt.solve(sol.problem.B.transpose());
  return [sol, RinvBt](scalar_t t, const vector_t& x) -> vector_t {
    return -RinvBt * (sol.P_at(t) * x);
  };
}

void riccati_rates(const RiccatiSolution& sol, scalar_t t, matrix_t& P_dot,
                   scalar_t& c_dot) {
  RiccatiRhs rhs(sol.problem);
  const matrix_t P = sol.P_at(t);
  // Forward-time rates: P decreases toward the horizon boundary condition.
  P_dot = -rhs.dP(P);
  c_dot = -rhs.dc(P);
}

LqValueDerivatives value_derivatives(const RiccatiSolution& sol, scalar_t t,
                                     const vector_t& x) {
  matrix_t P_dot;
  scalar_t c_dot = 0;
  riccati_rates(sol, t, P_dot, c_dot);
  LqValueDerivatives d;
  d.hessian = sol.P_at(t);
  d.gradient = d.hessian * x;
  d.time_partial = 0.5 * quadratic_form(P_dot, x) + c_dot;
  return d;
}

DiscreteLqrSolution solve_discrete_lqr(const LqProblem& lq, scalar_t dt) {
  lq.validate();
  if (dt <= 0) throw ContractViolation("dt must be positive");
  const int N = std::max(1, static_cast<int>(std::lround(lq.horizon / dt)));
  const scalar_t h = lq.horizon / N;
  const int n = lq.state_dim();

  ControlAffineModel model = lq.to_model();
  matrix_t Ad, Bd;
  linearize_step(model, 0.0, vector_t::Zero(n), vector_t::Zero(lq.control_dim()),
                 h, Ad, Bd);

  DiscreteLqrSolution sol;
  sol.dt = h;
  sol.P.resize(N + 1);
  sol.K.resize(N);
  sol.P[N] = symmetrized(lq.Q_f);
  const matrix_t Qh = h * lq.Q;
  const matrix_t Rh = h * lq.R;
  for (int k = N - 1; k >= 0; --k) {
    const matrix_t& Pn = sol.P[k + 1];
    const matrix_t Huu = Rh + Bd.transpose() * Pn * Bd;
    const matrix_t Hux = Bd.transpose() * Pn * Ad;
    Eigen::LLT<matrix_t> llt(Huu);
    if (llt.info() != Eigen::Success) {
      throw OracleFailure("discrete Riccati recursion lost positive definiteness");
    }
    sol.K[k] = llt.solve(Hux);
    sol.P[k] = symmetrized(Qh + Ad.transpose() * Pn * Ad -
                           Hux.transpose() * sol.K[k]);
  }
  return sol;
}

void write_riccati_diagonal_csv(const RiccatiSolution& sol, std::ostream& os) {
  const int n = sol.problem.state_dim();
  std::string header = "t";
  for (int j = 0; j < n; ++j) header += ",p" + std::to_string(j);
  os << header << "\n";
  char buf[40];
  for (size_t k = 0; k < sol.P.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.12g", k * sol.grid_dt);
    os << buf;
    for (int j = 0; j < n; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.12g", sol.P[k](j, j));
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace dvmpc
