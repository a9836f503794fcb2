#pragma once

#include "dvmpc/types.hpp"

#include <iosfwd>
#include <vector>

namespace dvmpc {

/// Inputs are laid out [time-to-go, state, goal] where the first feature is
/// (T - t) / T, then normalized elementwise as (v - shift) / scale.
struct NetArchitecture {
  int state_dim = 0;
  int goal_dim = 0;
  std::vector<int> hidden = {12, 12, 12};
  scalar_t horizon = 1.0;  // T, for the time-to-go feature
  vector_t input_shift;    // size input_dim(), zero when empty
  vector_t input_scale;    // size input_dim(), one when empty
  scalar_t output_scale = 1.0;
  scalar_t output_shift = 0.0;

  int input_dim() const { return 1 + state_dim + goal_dim; }
  void validate() const;
};

/// Fully-connected value approximator with tanh hidden activations and a
/// linear output. All derivatives are computed analytically; instances are
/// immutable during evaluation and safe to share across threads once built.
class ValueNet {
 public:
  NetArchitecture arch;
  std::vector<matrix_t> weights;  // layer l maps width[l] -> width[l+1]
  std::vector<vector_t> biases;

  static ValueNet init(const NetArchitecture& arch, std::uint64_t seed);

  int num_layers() const { return static_cast<int>(weights.size()); }
  int num_parameters() const;

  scalar_t forward(scalar_t t, const vector_t& state, const vector_t& goal) const;

  struct InputGradient {
    scalar_t time_partial = 0;
    vector_t state_gradient;
  };
  InputGradient input_gradient(scalar_t t, const vector_t& state,
                               const vector_t& goal) const;

  /// Exact Hessian with respect to the state inputs, symmetric by construction.
  matrix_t input_hessian(scalar_t t, const vector_t& state,
                         const vector_t& goal) const;

  struct EvalBundle {
    scalar_t value = 0;
    scalar_t time_partial = 0;
    vector_t state_gradient;
    matrix_t state_hessian;
    vector_t mixed_time_state;  // d^2 V / dt dx
  };
  EvalBundle evaluate(scalar_t t, const vector_t& state,
                      const vector_t& goal) const;

  struct ParameterGradient {
    std::vector<matrix_t> weight_grads;
    std::vector<vector_t> bias_grads;
  };
};

struct TrainingSample {
  scalar_t t = 0;
  vector_t state;
  vector_t goal;
  scalar_t target = 0;
};

/// Mean-squared-error gradient over the batch with optional L2 decay on the
/// weight matrices (biases are not decayed). Returns the mean squared error.
scalar_t parameter_gradient(const ValueNet& net,
                            const std::vector<TrainingSample>& batch,
                            scalar_t weight_decay,
                            ValueNet::ParameterGradient& grad);

/// target <- (1 - tau) * target + tau * net
void polyak_update(ValueNet& target, const ValueNet& net, scalar_t tau);

struct Checkpoint {
  ValueNet net;
  ValueNet target;
  scalar_t tau_polyak = 0.05;
};

/// Plain-text serialization: header (layer sizes, activation, normalization
/// constants, tau_polyak) followed by row-major parameters with 17 significant
/// digits, which round-trips doubles exactly.
void save_checkpoint(const Checkpoint& ckpt, std::ostream& os);
Checkpoint load_checkpoint(std::istream& is);
void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace dvmpc
