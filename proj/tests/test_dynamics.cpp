#include "dvmpc/dynamics.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace dvmpc;

namespace {

ControlAffineModel linear_model(const matrix_t& A, const matrix_t& B,
                                scalar_t noise_scale, const matrix_t& R,
                                bool analytic_jacobian = true) {
  ControlAffineModel::DriftJacobianFn jac;
  if (analytic_jacobian) {
    jac = [A](scalar_t, const vector_t&) { return A; };
  }
  return ControlAffineModel::make(
      static_cast<int>(A.rows()), static_cast<int>(B.cols()),
      [A](scalar_t, const vector_t& x) -> vector_t { return A * x; },
      [B](scalar_t, const vector_t&) -> matrix_t { return B; }, noise_scale, R,
      jac);
}

ControlAffineModel pendulum_like_model() {
  matrix_t R = 0.2 * matrix_t::Identity(1, 1);
  return ControlAffineModel::make(
      2, 1,
      [](scalar_t, const vector_t& x) -> vector_t {
        vector_t f(2);
        f << x[1], std::sin(x[0]) - 0.1 * x[1];
        return f;
      },
      [](scalar_t, const vector_t& x) -> matrix_t {
        matrix_t g(2, 1);
        g << 0.0, 2.0 + 0.5 * std::cos(x[0]);
        return g;
      },
      0.5, R);
}

}  // namespace

TEST_CASE("make derives noise covariance tied to the control penalty") {
  matrix_t R(2, 2);
  R << 2.0, 0.3, 0.3, 1.0;
  matrix_t A = matrix_t::Zero(3, 3);
  matrix_t B = matrix_t::Ones(3, 2);
  const scalar_t lambda = 0.7;
  const ControlAffineModel model = linear_model(A, B, lambda, R);

  // sigma * R = lambda * I by construction.
  const matrix_t product = model.noise_covariance * R;
  CHECK((product - lambda * matrix_t::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-12);
  const matrix_t chol = model.noise_cholesky;
  CHECK((chol * chol.transpose() - model.noise_covariance).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((model.control_penalty_inv * R - matrix_t::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("make rejects invalid inputs") {
  matrix_t R = matrix_t::Identity(1, 1);
  auto f = [](scalar_t, const vector_t& x) -> vector_t { return x; };
  auto g = [](scalar_t, const vector_t&) -> matrix_t {
    return matrix_t::Ones(1, 1);
  };
  CHECK_THROWS_AS(ControlAffineModel::make(0, 1, f, g, 0.0, R),
                  ContractViolation);
  CHECK_THROWS_AS(ControlAffineModel::make(1, 1, f, g, -1.0, R),
                  ContractViolation);
  CHECK_THROWS_AS(ControlAffineModel::make(1, 1, f, g, 0.0, -R),
                  ContractViolation);
  matrix_t asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  auto g2 = [](scalar_t, const vector_t&) -> matrix_t {
    return matrix_t::Ones(1, 2);
  };
  CHECK_THROWS_AS(ControlAffineModel::make(1, 2, f, g2, 0.0, asym),
                  ContractViolation);
}

TEST_CASE("weighted actuation equals g R^{-1} g'") {
  const ControlAffineModel model = pendulum_like_model();
  vector_t x(2);
  x << 0.4, -1.2;
  const matrix_t g = model.actuation(0.0, x);
  const matrix_t expected = g * model.control_penalty.inverse() * g.transpose();
  CHECK((model.weighted_actuation(0.0, x) - expected).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("deterministic step reproduces the matrix exponential on LTI dynamics") {
  matrix_t A(2, 2);
  A << 0.0, 1.0, -2.0, -0.4;
  matrix_t B(2, 1);
  B << 0.0, 1.0;
  const ControlAffineModel model = linear_model(A, B, 0.0, matrix_t::Identity(1, 1));

  vector_t x(2);
  x << 1.0, -0.5;
  const vector_t u = vector_t::Constant(1, 0.8);
  const scalar_t dt = 0.01;

  // Augmented exact solution [x; u] with constant u.
  matrix_t aug = matrix_t::Zero(3, 3);
  aug.topLeftCorner(2, 2) = A;
  aug.topRightCorner(2, 1) = B;
  const matrix_t Phi = test_oracles::expm(aug * dt);
  vector_t xu(3);
  xu << x, u;
  const vector_t exact = (Phi * xu).head(2);

  const vector_t stepped = step_deterministic(model, 0.0, x, u, dt);
  // Classical Runge-Kutta: local error O(dt^5).
  CHECK((stepped - exact).norm() < 1e-11);
}

TEST_CASE("deterministic step converges at fourth order on nonlinear dynamics") {
  const ControlAffineModel model = pendulum_like_model();
  vector_t x(2);
  x << 0.9, 0.3;
  const vector_t u = vector_t::Constant(1, -0.4);

  const auto rhs = [&](scalar_t t, const vector_t& y) -> vector_t {
    return model.drift(t, y) + model.actuation(t, y) * u;
  };
  const vector_t reference = test_oracles::integrate_rk4(rhs, x, 0.0, 0.2, 4096);

  const scalar_t err_coarse =
      (step_deterministic(model, 0.0, x, u, 0.2) - reference).norm();
  vector_t half = step_deterministic(model, 0.0, x, u, 0.1);
  half = step_deterministic(model, 0.1, half, u, 0.1);
  const scalar_t err_fine = (half - reference).norm();
  CHECK(err_coarse / err_fine > 12.0);  // fourth order gives ~16
  CHECK(err_fine < 1e-6);
}

TEST_CASE("step linearization matches finite differences") {
  const ControlAffineModel model = pendulum_like_model();
  vector_t x(2);
  x << -0.7, 0.25;
  vector_t u = vector_t::Constant(1, 0.6);
  const scalar_t dt = 0.05;

  matrix_t A_d, B_d;
  linearize_step(model, 0.0, x, u, dt, A_d, B_d);

  const matrix_t A_fd = test_oracles::fd_jacobian(
      [&](const vector_t& y) { return step_deterministic(model, 0.0, y, u, dt); },
      x);
  const matrix_t B_fd = test_oracles::fd_jacobian(
      [&](const vector_t& v) { return step_deterministic(model, 0.0, x, v, dt); },
      u);
  CHECK((A_d - A_fd).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((B_d - B_fd).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("drift jacobian falls back to finite differences") {
  matrix_t A(2, 2);
  A << 0.0, 1.0, -1.5, -0.2;
  matrix_t B(2, 1);
  B << 0.0, 1.0;
  const ControlAffineModel with_fd =
      linear_model(A, B, 0.0, matrix_t::Identity(1, 1), false);
  vector_t x(2);
  x << 0.3, -0.9;
  CHECK((with_fd.drift_jac(0.0, x) - A).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("stochastic step is deterministic given the engine state") {
  const ControlAffineModel model = pendulum_like_model();
  vector_t x(2);
  x << 0.1, 0.0;
  const vector_t u = vector_t::Constant(1, 0.2);

  RngEngine rng_a = make_rng(7, 1);
  RngEngine rng_b = make_rng(7, 1);
  const StochasticStep a = step_stochastic(model, 0.0, x, u, 0.02, rng_a);
  const StochasticStep b = step_stochastic(model, 0.0, x, u, 0.02, rng_b);
  CHECK(a.next_state == b.next_state);
  CHECK(a.noise_increment == b.noise_increment);

  RngEngine rng_c = make_rng(7, 2);
  const StochasticStep c = step_stochastic(model, 0.0, x, u, 0.02, rng_c);
  CHECK(a.next_state != c.next_state);
}

TEST_CASE("zero noise scale reduces the stochastic step to explicit Euler") {
  matrix_t A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  matrix_t B(2, 1);
  B << 0.0, 1.0;
  const ControlAffineModel model = linear_model(A, B, 0.0, matrix_t::Identity(1, 1));
  vector_t x(2);
  x << 0.5, -0.25;
  const vector_t u = vector_t::Constant(1, 1.5);
  RngEngine rng = make_rng(3, 1);

  const StochasticStep step = step_stochastic(model, 0.0, x, u, 0.1, rng);
  const vector_t euler = x + 0.1 * (A * x + B * u);
  CHECK(step.noise_increment.cwiseAbs().maxCoeff() == 0.0);
  CHECK((step.next_state - euler).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("noise increments have covariance sigma dt") {
  matrix_t R(2, 2);
  R << 1.0, 0.2, 0.2, 0.5;
  matrix_t A = matrix_t::Zero(2, 2);
  matrix_t B = matrix_t::Identity(2, 2);
  const scalar_t lambda = 0.8, dt = 0.04;
  const ControlAffineModel model = linear_model(A, B, lambda, R);

  RngEngine rng = make_rng(11, 1);
  const vector_t x = vector_t::Zero(2);
  const vector_t u = vector_t::Zero(2);
  const int samples = 20000;
  matrix_t cov = matrix_t::Zero(2, 2);
  for (int i = 0; i < samples; ++i) {
    const StochasticStep step = step_stochastic(model, 0.0, x, u, dt, rng);
    cov += step.noise_increment * step.noise_increment.transpose();
  }
  cov /= samples;
  const matrix_t expected = model.noise_covariance * dt;
  // Sample covariance standard error ~ sqrt(2/M) relative.
  CHECK((cov - expected).cwiseAbs().maxCoeff() < 5.0 * expected.norm() / std::sqrt(samples));
}

TEST_CASE("dimension mismatches and divergence are reported") {
  const ControlAffineModel model = pendulum_like_model();
  RngEngine rng = make_rng(1, 1);
  vector_t x2(2), u1(1);
  x2 << 0.0, 0.0;
  u1 << 0.0;
  CHECK_THROWS_AS(step_stochastic(model, 0.0, vector_t::Zero(3), u1, 0.01, rng),
                  ContractViolation);
  CHECK_THROWS_AS(step_stochastic(model, 0.0, x2, vector_t::Zero(2), 0.01, rng),
                  ContractViolation);
  CHECK_THROWS_AS(step_deterministic(model, 0.0, x2, u1, 0.0), ContractViolation);

  const ControlAffineModel bad = ControlAffineModel::make(
      1, 1,
      [](scalar_t, const vector_t& x) -> vector_t {
        return vector_t::Constant(1, 1.0 / x[0]);
      },
      [](scalar_t, const vector_t&) -> matrix_t { return matrix_t::Ones(1, 1); },
      0.0, matrix_t::Identity(1, 1));
  CHECK_THROWS_AS(
      step_deterministic(bad, 0.0, vector_t::Zero(1), vector_t::Zero(1), 0.01),
      IntegrationDiverged);
}

TEST_CASE("trajectory length invariants are enforced") {
  Trajectory traj;
  traj.times = {0.0, 0.1, 0.2};
  traj.states = {vector_t::Zero(1), vector_t::Zero(1), vector_t::Zero(1)};
  traj.controls = {vector_t::Zero(1), vector_t::Zero(1)};
  traj.noise_increments = {vector_t::Zero(1), vector_t::Zero(1)};
  traj.step_costs = {0.0, 0.0};
  CHECK_NOTHROW(traj.validate());
  CHECK(traj.num_steps() == 2);

  traj.controls.pop_back();
  CHECK_THROWS_AS(traj.validate(), ContractViolation);
}
