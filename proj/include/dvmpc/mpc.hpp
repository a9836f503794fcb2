#pragma once

#include "dvmpc/dynamics.hpp"
#include "dvmpc/environment.hpp"
#include "dvmpc/value_source.hpp"

#include <iosfwd>
#include <memory>

namespace dvmpc {

/// Stage-cost composition of the receding-horizon objective.
///  - kHeuristicPlusRunning: stage cost derived from the value source, terminal
///    heuristic from the value source.
///  - kHeuristicOnly: stage cost is the environment running cost, terminal
///    heuristic from the value source (the "terminal value only" baseline).
/// With no value source both modes plan on the raw environment costs.
enum class CostMode { kHeuristicPlusRunning, kHeuristicOnly };

const char* cost_mode_name(CostMode mode);
CostMode parse_cost_mode(const std::string& name);

struct MpcConfig {
  scalar_t horizon = 1.0;    // seconds, clipped to final_time - t0
  scalar_t timestep = 0.02;  // transcription step
  int max_iterations = 100;
  scalar_t cost_tolerance = 1e-9;  // relative cost-decrease stopping rule
  scalar_t reg_initial = 1e-6;
  scalar_t reg_min = 1e-6;
  scalar_t reg_max = 1e6;
  scalar_t reg_growth = 10.0;
  scalar_t reg_shrink = 0.5;
  scalar_t line_search_factor = 0.5;
  scalar_t line_search_min_step = 0.0009765625;  // 2^-10
  scalar_t psd_floor = 1e-6;
  CostMode cost_mode = CostMode::kHeuristicPlusRunning;

  void validate() const;
};

/// Cost ingredients of one receding-horizon problem. The value source is
/// optional; without it the solver is a plain trajectory optimizer on the
/// declared running/terminal cost fields.
struct ValueCostModel {
  std::shared_ptr<const ValueSource> value;
  CostField running_cost;   // environment q, stage cost in kHeuristicOnly
  CostField terminal_cost;  // environment q_f, terminal fallback without value
  scalar_t discount = 1.0;  // per-second gamma inside the horizon
  scalar_t final_time = 0;  // episode end; horizons are clipped to it
  matrix_t aux_state_weight;  // optional quadratic stabilization, 0x0 if unused
  vector_t aux_state_ref;

  bool has_aux() const { return aux_state_weight.size() > 0; }
  void validate(int state_dim) const;

  static ValueCostModel from_environment(const EnvironmentSpec& env,
                                         std::shared_ptr<const ValueSource> value);
};

struct StageQuadratic {
  scalar_t value = 0;
  vector_t gradient;
  matrix_t hessian;
};

/// State-cost rate l(tau, x) for the given mode (control penalty excluded).
scalar_t running_cost(const ValueCostModel& cost_model, const ControlAffineModel& model,
                      CostMode mode, scalar_t tau, const vector_t& x);

/// Local quadratic model of l(tau, x). Curvature terms involving third
/// derivatives of the value source (and second derivatives of the drift) are
/// dropped; the result is projected to be positive semi-definite.
StageQuadratic quadratize_running_cost(const ValueCostModel& cost_model,
                                       const ControlAffineModel& model, CostMode mode,
                                       scalar_t tau, const vector_t& x,
                                       scalar_t psd_floor);

/// Terminal heuristic phi(t_f, x_f): the value source when present, otherwise
/// the terminal cost field.
scalar_t heuristic_cost(const ValueCostModel& cost_model, scalar_t t_f,
                        const vector_t& x_f);

StageQuadratic quadratize_heuristic(const ValueCostModel& cost_model, scalar_t t_f,
                                    const vector_t& x_f, scalar_t psd_floor);

struct MpcSolution {
  std::vector<scalar_t> times;        // N+1 nodes
  std::vector<vector_t> states;       // N+1
  std::vector<vector_t> controls;     // N
  std::vector<matrix_t> feedback;     // N, of the final backward pass
  std::vector<vector_t> feedforward;  // N
  scalar_t cost = 0;
  int iterations = 0;
  bool converged = false;

  const vector_t& first_control() const;
};

/// Levenberg-regularized iLQR with backtracking line search. The objective is
/// gamma^{H} * phi(t0+H, x_N) + sum_i h * (gamma^{tau_i - t0} * l(tau_i, x_i)
/// + 0.5 u_i' R u_i); the control penalty is left undiscounted. When no
/// cost-decreasing step exists at maximum regularization the best iterate is
/// returned with converged = false.
MpcSolution solve_mpc(const ControlAffineModel& model, const ValueCostModel& cost_model,
                      const vector_t& x0, scalar_t t0, const MpcConfig& config,
                      const std::vector<vector_t>* warm_start = nullptr,
                      std::ostream* diagnostics = nullptr);

/// Receding-horizon driver: each policy_step re-solves from the current
/// (t, x), warm-started from the previous solution shifted by the elapsed
/// time, and returns the first control.
class MpcSession {
 public:
  MpcSession(ControlAffineModel model, ValueCostModel cost_model, MpcConfig config);

  vector_t policy_step(scalar_t t, const vector_t& x);
  const MpcSolution& last_solution() const;
  bool has_solution() const { return has_solution_; }
  void reset();

  /// Policy closure bound to this session (which must outlive it).
  Policy as_policy();

 private:
  ControlAffineModel model_;
  ValueCostModel cost_model_;
  MpcConfig config_;
  MpcSolution last_;
  bool has_solution_ = false;
};

}  // namespace dvmpc
