#pragma once

#include "dvmpc/lq_oracle.hpp"
#include "dvmpc/value_function.hpp"

#include <memory>

namespace dvmpc {

/// Value estimate together with the derivatives the trajectory optimizer
/// consumes. hessian_time_partial is the mixed third derivative d^3V/dt dx^2;
/// sources leave it zero when it is not available analytically.
struct ValueEval {
  scalar_t value = 0;
  scalar_t time_partial = 0;
  vector_t gradient;
  matrix_t hessian;
  vector_t gradient_time_partial;
  matrix_t hessian_time_partial;
};

/// Immutable snapshot of a value estimate. Implementations must be pure
/// functions of (t, x) so solves and rollouts can share one instance.
class ValueSource {
 public:
  virtual ~ValueSource() = default;
  virtual int state_dim() const = 0;
  virtual ValueEval evaluate(scalar_t t, const vector_t& x) const = 0;
  virtual scalar_t value(scalar_t t, const vector_t& x) const {
    return evaluate(t, x).value;
  }
};

/// V = 0 everywhere.
class ZeroValueSource final : public ValueSource {
 public:
  explicit ZeroValueSource(int state_dim) : n_(state_dim) {}
  int state_dim() const override { return n_; }
  ValueEval evaluate(scalar_t, const vector_t&) const override;

 private:
  int n_;
};

/// Wraps the Riccati solution; all derivatives including the mixed third
/// derivative are exact.
class OracleValueSource final : public ValueSource {
 public:
  explicit OracleValueSource(RiccatiSolution sol) : sol_(std::move(sol)) {}
  int state_dim() const override { return sol_.problem.state_dim(); }
  ValueEval evaluate(scalar_t t, const vector_t& x) const override;
  scalar_t value(scalar_t t, const vector_t& x) const override;
  const RiccatiSolution& solution() const { return sol_; }

 private:
  RiccatiSolution sol_;
};

/// Wraps a value network evaluated at a fixed goal.
class NetValueSource final : public ValueSource {
 public:
  NetValueSource(std::shared_ptr<const ValueNet> net, vector_t goal)
      : net_(std::move(net)), goal_(std::move(goal)) {}
  int state_dim() const override { return net_->arch.state_dim; }
  ValueEval evaluate(scalar_t t, const vector_t& x) const override;
  scalar_t value(scalar_t t, const vector_t& x) const override;

 private:
  std::shared_ptr<const ValueNet> net_;
  vector_t goal_;
};

/// Time-independent sinusoidal field amplitude * sin(w'x + phase), with exact
/// sup-norm equal to |amplitude|. bound_norm is the norm reported to bound
/// formulas; it defaults to the actual amplitude and can be set lower to
/// exercise negative controls.
struct SinPerturbation {
  scalar_t amplitude = 0;
  vector_t w;
  scalar_t phase = 0;
  scalar_t bound_norm = -1;  // negative: use |amplitude|

  scalar_t reported_norm() const {
    return bound_norm >= 0 ? bound_norm : std::abs(amplitude);
  }
};

/// Base source plus a sinusoidal perturbation.
class PerturbedValueSource final : public ValueSource {
 public:
  PerturbedValueSource(std::shared_ptr<const ValueSource> base,
                       SinPerturbation perturbation);
  int state_dim() const override { return base_->state_dim(); }
  ValueEval evaluate(scalar_t t, const vector_t& x) const override;
  scalar_t value(scalar_t t, const vector_t& x) const override;

 private:
  std::shared_ptr<const ValueSource> base_;
  SinPerturbation pert_;
};

}  // namespace dvmpc
