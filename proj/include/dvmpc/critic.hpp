#pragma once

#include "dvmpc/environment.hpp"
#include "dvmpc/value_function.hpp"

#include <optional>

namespace dvmpc {

/// Fixed-capacity ring buffer with oldest-first eviction and uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(TransitionTuple tuple);
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t total_inserted() const { return total_inserted_; }
  const TransitionTuple& at(std::size_t i) const { return storage_[i]; }

  const TransitionTuple& sample(RngEngine& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::size_t total_inserted_ = 0;
  std::vector<TransitionTuple> storage_;
};

enum class DiscountMode { kPerSecond, kPerStepRaw };

struct CriticConfig {
  int minibatches_per_update = 40;  // K
  int batch_size = 64;              // N
  scalar_t step_size = 1e-3;
  scalar_t weight_decay = 1e-4;
  scalar_t tau_polyak = 0.05;
  scalar_t discount = 0.95;  // gamma, per second unless kPerStepRaw
  scalar_t timestep = 0.02;  // dt between tuple times
  DiscountMode discount_mode = DiscountMode::kPerSecond;

  /// Per-transition bootstrap factor gamma_step.
  scalar_t step_discount() const;
  void validate() const;
};

/// y = c + gamma_step * V_target(t + dt, s_next, goal), or y = c on done
/// transitions (penalties and terminal costs are folded into c there).
scalar_t bellman_target(const ValueNet& target_net, const TransitionTuple& tuple,
                        const CriticConfig& config);

struct AdamState {
  std::vector<matrix_t> m_w, v_w;
  std::vector<vector_t> m_b, v_b;
  long step = 0;
  scalar_t beta1 = 0.9;
  scalar_t beta2 = 0.999;
  scalar_t epsilon = 1e-8;

  static AdamState like(const ValueNet& net);
  void apply(ValueNet& net, const ValueNet::ParameterGradient& grad,
             scalar_t step_size);
};

struct CriticUpdateStats {
  scalar_t mean_loss = 0;
  scalar_t mean_target = 0;
};

/// One critic update: K minibatches of N uniformly sampled transitions, each
/// regressed toward targets computed from the frozen target net (semi-gradient),
/// followed by a single Polyak step of the target net. Returns nullopt when the
/// buffer holds fewer than one batch.
std::optional<CriticUpdateStats> critic_update(ValueNet& net, ValueNet& target_net,
                                               const ReplayBuffer& buffer,
                                               const CriticConfig& config,
                                               AdamState& adam, RngEngine& rng);

}  // namespace dvmpc
