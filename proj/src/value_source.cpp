#include "dvmpc/value_source.hpp"

#include <cmath>

namespace dvmpc {

ValueEval ZeroValueSource::evaluate(scalar_t, const vector_t&) const {
  ValueEval e;
  e.gradient = vector_t::Zero(n_);
  e.hessian = matrix_t::Zero(n_, n_);
  e.gradient_time_partial = vector_t::Zero(n_);
  e.hessian_time_partial = matrix_t::Zero(n_, n_);
  return e;
}

ValueEval OracleValueSource::evaluate(scalar_t t, const vector_t& x) const {
  matrix_t P_dot;
  scalar_t c_dot = 0;
  riccati_rates(sol_, t, P_dot, c_dot);
  const matrix_t P = sol_.P_at(t);

  ValueEval e;
  e.value = 0.5 * quadratic_form(P, x) + sol_.offset_at(t);
  e.gradient = P * x;
  e.hessian = P;
  e.time_partial = 0.5 * quadratic_form(P_dot, x) + c_dot;
  e.gradient_time_partial = P_dot * x;
  e.hessian_time_partial = P_dot;
  return e;
}

scalar_t OracleValueSource::value(scalar_t t, const vector_t& x) const {
  return optimal_value(sol_, t, x);
}

ValueEval NetValueSource::evaluate(scalar_t t, const vector_t& x) const {
  const ValueNet::EvalBundle b = net_->evaluate(t, x, goal_);
  const int n = net_->arch.state_dim;
  ValueEval e;
  e.value = b.value;
  e.time_partial = b.time_partial;
  e.gradient = b.state_gradient;
  e.hessian = b.state_hessian;
  e.gradient_time_partial = b.mixed_time_state;
  e.hessian_time_partial = matrix_t::Zero(n, n);
  return e;
}

scalar_t NetValueSource::value(scalar_t t, const vector_t& x) const {
  return net_->forward(t, x, goal_);
}

PerturbedValueSource::PerturbedValueSource(
    std::shared_ptr<const ValueSource> base, SinPerturbation perturbation)
    : base_(std::move(base)), pert_(std::move(perturbation)) {
  if (pert_.w.size() != base_->state_dim()) {
    throw ContractViolation("perturbation direction has wrong dimension");
  }
}

ValueEval PerturbedValueSource::evaluate(scalar_t t, const vector_t& x) const {
  ValueEval e = base_->evaluate(t, x);
  const scalar_t arg = pert_.w.dot(x) + pert_.phase;
  const scalar_t s = std::sin(arg);
  const scalar_t c = std::cos(arg);
  e.value += pert_.amplitude * s;
  e.gradient += pert_.amplitude * c * pert_.w;
  e.hessian -= pert_.amplitude * s * pert_.w * pert_.w.transpose();
  return e;
}

scalar_t PerturbedValueSource::value(scalar_t t, const vector_t& x) const {
  return base_->value(t, x) + pert_.amplitude * std::sin(pert_.w.dot(x) + pert_.phase);
}

}  // namespace dvmpc
