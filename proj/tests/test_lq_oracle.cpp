#include "dvmpc/lq_oracle.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace dvmpc;

TEST_CASE("stationary scalar problem has constant riccati solution") {
  // A = 0, B = 1, Q = R = Q_f = 1: P' = P^2 - Q with P(T) = 1 stays at 1, and
  // the stochastic offset integrates c(t) = lambda (T - t) / 2.
  const LqProblem lq = scalar_lq_problem(1.0);
  const RiccatiSolution sol = solve_riccati(lq);

  for (scalar_t t : {0.0, 0.3, 0.77, 1.0}) {
    CHECK(sol.P_at(t)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(sol.offset_at(0.0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(sol.offset_at(0.6) == doctest::Approx(0.2).epsilon(1e-10));
  CHECK(sol.offset_at(1.0) == doctest::Approx(0.0));

  vector_t x = vector_t::Constant(1, 1.3);
  CHECK(optimal_value(sol, 0.0, x) ==
        doctest::Approx(0.5 * 1.3 * 1.3 + 0.5).epsilon(1e-10));
}

TEST_CASE("zero terminal weight yields the tanh solution") {
  // Q = R = 1, Q_f = 0, T = 1: P(t) = tanh(T - t); frozen reference value
  // tanh(1) = 0.76159415595576485.
  LqProblem lq = scalar_lq_problem(0.0);
  lq.Q_f.setZero();
  const RiccatiSolution sol = solve_riccati(lq);

  CHECK(sol.P_at(0.0)(0, 0) == doctest::Approx(0.76159415595576485).epsilon(1e-9));
  CHECK(sol.P_at(0.5)(0, 0) == doctest::Approx(std::tanh(0.5)).epsilon(1e-9));
  CHECK(sol.P_at(1.0)(0, 0) == doctest::Approx(0.0));
  // lambda = 0: no stochastic offset.
  CHECK(sol.offset_at(0.0) == doctest::Approx(0.0));
}

TEST_CASE("riccati rates match finite differences of the interpolant") {
  const LqProblem lq = double_integrator_lq_problem(0.7);
  const RiccatiSolution sol = solve_riccati(lq);

  for (scalar_t t : {0.4, 1.1, 2.3}) {
    matrix_t P_dot;
    scalar_t c_dot = 0;
    riccati_rates(sol, t, P_dot, c_dot);

    const scalar_t h = 1e-4;
    const matrix_t P_fd = (sol.P_at(t + h) - sol.P_at(t - h)) / (2.0 * h);
    const scalar_t c_fd = (sol.offset_at(t + h) - sol.offset_at(t - h)) / (2.0 * h);
    CHECK((P_dot - P_fd).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(c_dot == doctest::Approx(c_fd).epsilon(1e-4));
  }
}

TEST_CASE("double integrator riccati solves the dense-grid reference") {
  const LqProblem lq = double_integrator_lq_problem(0.0);
  const RiccatiSolution sol = solve_riccati(lq);

  // Independent reference: integrate vec(P) backbackward in reversed time on a
  // fine grid with the generic integrator.
  const matrix_t Xi = lq.B * lq.R.inverse() * lq.B.transpose();
  const auto rhs = [&](scalar_t, const vector_t& v) -> vector_t {
    matrix_t P(2, 2);
    P << v[0], v[1], v[2], v[3];
    const matrix_t Pdot = lq.Q + lq.A.transpose() * P + P * lq.A - P * Xi * P;
    vector_t out(4);
    out << Pdot(0, 0), Pdot(0, 1), Pdot(1, 0), Pdot(1, 1);
    return out;
  };
  vector_t vT(4);
  vT << lq.Q_f(0, 0), lq.Q_f(0, 1), lq.Q_f(1, 0), lq.Q_f(1, 1);
  const vector_t v0 = test_oracles::integrate_rk4(rhs, vT, 0.0, lq.horizon, 30000);
  matrix_t P0(2, 2);
  P0 << v0[0], v0[1], v0[2], v0[3];

  CHECK((sol.P_at(0.0) - P0).cwiseAbs().maxCoeff() < 1e-8);
  Eigen::SelfAdjointEigenSolver<matrix_t> eig(sol.P_at(0.0));
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("optimal gains are independent of the noise scale") {
  const RiccatiSolution quiet = solve_riccati(double_integrator_lq_problem(0.0));
  const RiccatiSolution noisy = solve_riccati(double_integrator_lq_problem(2.0));
  vector_t x(2);
  x << 0.8, -1.1;
  for (scalar_t t : {0.0, 1.7}) {
    CHECK((optimal_policy_control(quiet, t, x) - optimal_policy_control(noisy, t, x))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
  // The offsets differ: noise is charged through the value constant.
  CHECK(noisy.offset_at(0.0) > quiet.offset_at(0.0));

  const Policy pi = optimal_policy(noisy);
  CHECK((pi(0.5, x) + noisy.problem.R.inverse() * noisy.problem.B.transpose() *
                          noisy.P_at(0.5) * x)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("value derivatives are consistent with the value itself") {
  const LqProblem lq = double_integrator_lq_problem(0.9);
  const RiccatiSolution sol = solve_riccati(lq);
  vector_t x(2);
  x << -0.4, 1.2;
  const scalar_t t = 0.8;

  const LqValueDerivatives d = value_derivatives(sol, t, x);
  CHECK((d.gradient - sol.P_at(t) * x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d.hessian - sol.P_at(t)).cwiseAbs().maxCoeff() < 1e-12);

  const scalar_t dv_fd = test_oracles::fd_time_partial(
      [&](scalar_t s) { return optimal_value(sol, s, x); }, t, 1e-5);
  CHECK(d.time_partial == doctest::Approx(dv_fd).epsilon(1e-5));
}

TEST_CASE("discrete dynamic programming approaches the continuous solution") {
  const LqProblem lq = scalar_lq_problem(0.0);
  const RiccatiSolution cont = solve_riccati(lq);
  const DiscreteLqrSolution coarse = solve_discrete_lqr(lq, 0.05);
  const DiscreteLqrSolution fine = solve_discrete_lqr(lq, 0.005);

  // Left-endpoint quadrature is first order in dt, so halving dt ten times
  // over should shrink the gap to the continuous solution about tenfold.
  const scalar_t exact = cont.P_at(0.0)(0, 0);
  const scalar_t err_coarse = std::abs(coarse.P[0](0, 0) - exact);
  const scalar_t err_fine = std::abs(fine.P[0](0, 0) - exact);
  CHECK(err_fine < err_coarse / 5.0);
  CHECK(err_fine < 5e-3);

  vector_t x0 = vector_t::Constant(1, 1.0);
  CHECK(fine.cost(x0) == doctest::Approx(0.5 * fine.P[0](0, 0)));
  CHECK(fine.first_control(x0)[0] == doctest::Approx(-fine.K[0](0, 0)));
}

TEST_CASE("problem validation rejects malformed instances") {
  LqProblem lq = scalar_lq_problem(1.0);
  lq.R = -matrix_t::Identity(1, 1);
  CHECK_THROWS_AS(solve_riccati(lq), ContractViolation);

  LqProblem bad_dims = scalar_lq_problem(1.0);
  bad_dims.Q = matrix_t::Identity(2, 2);
  CHECK_THROWS_AS(solve_riccati(bad_dims), ContractViolation);
}

TEST_CASE("lq environment wraps the problem faithfully") {
  const LqProblem lq = scalar_lq_problem(1.0);
  const EnvironmentSpec env = lq_environment(lq, "wrapped", 0.01);
  env.validate();

  CHECK(env.discount == 1.0);
  CHECK(env.episode_length == lq.horizon);
  CHECK(env.terminated == nullptr);
  CHECK(env.eval_start_states.size() == 8);

  vector_t x = vector_t::Constant(1, 2.0);
  CHECK(env.running_cost.value(0.0, x) == doctest::Approx(0.5 * lq.Q(0, 0) * 4.0));
  CHECK(env.terminal_cost.value(0.0, x) == doctest::Approx(0.5 * lq.Q_f(0, 0) * 4.0));
  CHECK(env.model.noise_scale == lq.noise_scale);
}
