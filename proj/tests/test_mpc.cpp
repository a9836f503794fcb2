#include "dvmpc/mpc.hpp"

#include "dvmpc/lq_oracle.hpp"

#include <doctest.h>

#include <sstream>

using namespace dvmpc;

namespace {

ValueCostModel plain_cost_model(const LqProblem& lq) {
  ValueCostModel cm;
  cm.running_cost = quadratic_cost_field(lq.Q);
  cm.terminal_cost = quadratic_cost_field(lq.Q_f);
  cm.discount = 1.0;
  cm.final_time = lq.horizon;
  return cm;
}

ControlAffineModel single_integrator(int n, scalar_t control_penalty) {
  auto drift = [n](scalar_t, const vector_t&) { return vector_t::Zero(n).eval(); };
  auto actuation = [n](scalar_t, const vector_t&) {
    return matrix_t::Identity(n, n).eval();
  };
  auto jac = [n](scalar_t, const vector_t&) { return matrix_t::Zero(n, n).eval(); };
  return ControlAffineModel::make(n, n, drift, actuation, 0.0,
                                  control_penalty * matrix_t::Identity(n, n), jac);
}

}  // namespace

TEST_CASE("solver reproduces the discrete dynamic-programming optimum") {
  const LqProblem lq = double_integrator_lq_problem(0.0);
  const scalar_t dt = 0.02;
  const DiscreteLqrSolution dp = solve_discrete_lqr(lq, dt);

  MpcConfig cfg;
  cfg.horizon = lq.horizon;
  cfg.timestep = dt;

  vector_t x0(2);
  x0 << 1.0, 0.5;
  const MpcSolution sol =
      solve_mpc(lq.to_model(), plain_cost_model(lq), x0, 0.0, cfg);

  CHECK(sol.converged);
  CHECK(sol.cost == doctest::Approx(dp.cost(x0)).epsilon(1e-10));
  CHECK((sol.first_control() - dp.first_control(x0)).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(sol.times.front() == 0.0);
  CHECK(sol.times.back() == doctest::Approx(lq.horizon));
  CHECK(sol.controls.size() + 1 == sol.states.size());
}

TEST_CASE("zero value source and zero costs leave the controls at zero") {
  const int n = 2;
  ValueCostModel cm;
  cm.value = std::make_shared<ZeroValueSource>(n);
  cm.running_cost = quadratic_cost_field(matrix_t::Zero(n, n));
  cm.terminal_cost = quadratic_cost_field(matrix_t::Zero(n, n));
  cm.final_time = 1.0;

  MpcConfig cfg;
  cfg.horizon = 0.5;
  cfg.timestep = 0.05;
  cfg.cost_mode = CostMode::kHeuristicPlusRunning;

  vector_t x0(2);
  x0 << 0.7, -0.4;
  const MpcSolution sol = solve_mpc(single_integrator(n, 1.0), cm, x0, 0.0, cfg);
  CHECK(sol.converged);
  for (const auto& u : sol.controls) {
    CHECK(u.cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(sol.cost < 1e-12);
}

TEST_CASE("running cost composition depends on the mode") {
  const LqProblem lq = scalar_lq_problem(1.0);
  const RiccatiSolution riccati = solve_riccati(lq);
  ValueCostModel cm = plain_cost_model(lq);
  cm.value = std::make_shared<OracleValueSource>(riccati);
  const ControlAffineModel model = lq.to_model();

  vector_t x = vector_t::Constant(1, 1.2);
  const scalar_t t = 0.4;

  // Environment composition: the raw quadratic state cost.
  CHECK(running_cost(cm, model, CostMode::kHeuristicOnly, t, x) ==
        doctest::Approx(0.5 * 1.2 * 1.2));

  // Value composition: -dV/dt - f'dV/dx + 0.5 dV/dx' g R^{-1} g' dV/dx, which
  // for the exact stationary solution equals q + (lambda/2) tr(Xi P) = q + 0.5.
  const scalar_t l_value =
      running_cost(cm, model, CostMode::kHeuristicPlusRunning, t, x);
  CHECK(l_value == doctest::Approx(0.5 * 1.2 * 1.2 + 0.5).epsilon(1e-9));

  const StageQuadratic quad = quadratize_running_cost(
      cm, model, CostMode::kHeuristicPlusRunning, t, x, 1e-6);
  CHECK(quad.value == doctest::Approx(l_value));
  Eigen::SelfAdjointEigenSolver<matrix_t> eig(quad.hessian);
  CHECK(eig.eigenvalues().minCoeff() >= 1e-6 - 1e-12);

  // Terminal heuristic is the oracle value itself.
  CHECK(heuristic_cost(cm, 0.8, x) ==
        doctest::Approx(optimal_value(riccati, 0.8, x)));
}

TEST_CASE("planning horizon is clipped to the final time") {
  const LqProblem lq = double_integrator_lq_problem(0.0);
  ValueCostModel cm = plain_cost_model(lq);

  MpcConfig cfg;
  cfg.horizon = 1.0;
  cfg.timestep = 0.05;

  vector_t x0(2);
  x0 << 0.5, 0.0;
  const scalar_t t0 = lq.horizon - 0.3;
  const MpcSolution sol = solve_mpc(lq.to_model(), cm, x0, t0, cfg);
  CHECK(sol.times.back() == doctest::Approx(lq.horizon).epsilon(1e-12));
  CHECK(sol.controls.size() == 6);  // 0.3 s at 0.05 s steps
}

TEST_CASE("auxiliary stabilization cost pulls the state toward its reference") {
  const int n = 1;
  ValueCostModel cm;
  cm.running_cost = quadratic_cost_field(matrix_t::Zero(n, n));
  cm.terminal_cost = quadratic_cost_field(matrix_t::Zero(n, n));
  cm.final_time = 1.0;

  MpcConfig cfg;
  cfg.horizon = 1.0;
  cfg.timestep = 0.05;

  vector_t x0 = vector_t::Constant(1, 1.0);
  const ControlAffineModel model = single_integrator(n, 0.1);

  const MpcSolution without = solve_mpc(model, cm, x0, 0.0, cfg);
  CHECK(without.states.back()[0] == doctest::Approx(1.0).epsilon(1e-9));

  cm.aux_state_weight = 5.0 * matrix_t::Identity(n, n);
  cm.aux_state_ref = vector_t::Zero(n);
  const MpcSolution with_aux = solve_mpc(model, cm, x0, 0.0, cfg);
  CHECK(with_aux.states.back()[0] < 0.35);
}

TEST_CASE("iteration cap stops the solver before convergence") {
  // Nonlinear drift so one sweep cannot reach the stationary point.
  const int n = 1;
  auto drift = [](scalar_t, const vector_t& x) {
    return vector_t::Constant(1, std::sin(x[0])).eval();
  };
  auto actuation = [](scalar_t, const vector_t&) {
    return matrix_t::Identity(1, 1).eval();
  };
  const ControlAffineModel model =
      ControlAffineModel::make(n, n, drift, actuation, 0.0,
                               matrix_t::Identity(1, 1));

  ValueCostModel cm;
  cm.running_cost = quadratic_cost_field(matrix_t::Identity(1, 1));
  cm.terminal_cost = quadratic_cost_field(matrix_t::Identity(1, 1));
  cm.final_time = 1.0;

  MpcConfig capped;
  capped.horizon = 1.0;
  capped.timestep = 0.02;
  capped.max_iterations = 1;

  vector_t x0 = vector_t::Constant(1, 1.4);
  const MpcSolution one = solve_mpc(model, cm, x0, 0.0, capped);
  CHECK(one.iterations == 1);
  CHECK(!one.converged);

  MpcConfig full = capped;
  full.max_iterations = 200;
  const MpcSolution done = solve_mpc(model, cm, x0, 0.0, full);
  CHECK(done.converged);
  CHECK(done.cost <= one.cost + 1e-12);
}

TEST_CASE("warm-started resolves take fewer iterations than cold starts") {
  const LqProblem lq = double_integrator_lq_problem(0.0);
  ValueCostModel cm = plain_cost_model(lq);

  MpcConfig cfg;
  cfg.horizon = 1.0;
  cfg.timestep = 0.02;

  MpcSession session(lq.to_model(), cm, cfg);
  vector_t x(2);
  x << 1.0, 0.0;
  session.policy_step(0.0, x);
  const int cold_iters = session.last_solution().iterations;

  // Advance along the planned trajectory and re-solve nearby.
  const vector_t x_next = session.last_solution().states[1];
  session.policy_step(0.02, x_next);
  const int warm_iters = session.last_solution().iterations;
  CHECK(warm_iters <= cold_iters);
  CHECK(session.has_solution());

  session.reset();
  CHECK(!session.has_solution());
}

TEST_CASE("line-searched iterates never increase the accepted cost") {
  const int n = 1;
  auto drift = [](scalar_t, const vector_t& x) {
    return vector_t::Constant(1, -0.5 * x[0] * x[0] * x[0]).eval();
  };
  auto actuation = [](scalar_t, const vector_t&) {
    return matrix_t::Identity(1, 1).eval();
  };
  const ControlAffineModel model =
      ControlAffineModel::make(n, n, drift, actuation, 0.0,
                               0.5 * matrix_t::Identity(1, 1));

  ValueCostModel cm;
  cm.running_cost = quadratic_cost_field(2.0 * matrix_t::Identity(1, 1));
  cm.terminal_cost = quadratic_cost_field(matrix_t::Identity(1, 1));
  cm.final_time = 2.0;

  MpcConfig cfg;
  cfg.horizon = 2.0;
  cfg.timestep = 0.04;

  std::ostringstream diag;
  const MpcSolution sol =
      solve_mpc(model, cm, vector_t::Constant(1, 1.5), 0.0, cfg, nullptr, &diag);
  CHECK(sol.converged);

  // Diagnostics rows are "iteration,cost,regularization,step"; the accepted
  // cost column never increases.
  std::istringstream in(diag.str());
  std::string line;
  scalar_t prev = std::numeric_limits<scalar_t>::infinity();
  int rows = 0;
  while (std::getline(in, line)) {
    int it = 0;
    scalar_t c = 0, mu = 0, alpha = 0;
    REQUIRE(std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &it, &c, &mu, &alpha) == 4);
    CHECK(c <= prev + 1e-12);
    prev = c;
    ++rows;
  }
  CHECK(rows >= sol.iterations);
  CHECK(rows >= 1);
}

TEST_CASE("contract violations surface as exceptions") {
  const LqProblem lq = scalar_lq_problem(0.0);
  ValueCostModel cm = plain_cost_model(lq);

  MpcSolution empty;
  CHECK_THROWS_AS(empty.first_control(), ContractViolation);

  MpcConfig bad;
  bad.horizon = -1.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);

  MpcConfig cfg;
  vector_t x0 = vector_t::Constant(1, 1.0);
  CHECK_THROWS_AS(
      solve_mpc(lq.to_model(), cm, x0, lq.horizon + 0.1, cfg),
      ContractViolation);

  CHECK(parse_cost_mode("heuristic_plus_running") ==
        CostMode::kHeuristicPlusRunning);
  CHECK(parse_cost_mode("heuristic_only") == CostMode::kHeuristicOnly);
  CHECK_THROWS_AS(parse_cost_mode("nonsense"), ContractViolation);
  CHECK(std::string(cost_mode_name(CostMode::kHeuristicOnly)) ==
        "heuristic_only");
}
