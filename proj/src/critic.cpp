#include "dvmpc/critic.hpp"

#include <cmath>

namespace dvmpc {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw ContractViolation("ReplayBuffer: capacity must be positive");
  }
  storage_.reserve(capacity_);
}

void ReplayBuffer::push(TransitionTuple tuple) {
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(tuple));
  } else {
    storage_[next_] = std::move(tuple);
  }
  next_ = (next_ + 1) % capacity_;
  ++total_inserted_;
}

const TransitionTuple& ReplayBuffer::sample(RngEngine& rng) const {
  if (storage_.empty()) {
    throw ContractViolation("ReplayBuffer: cannot sample from empty buffer");
  }
  std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
  return storage_[pick(rng)];
}

scalar_t CriticConfig::step_discount() const {
  switch (discount_mode) {
    case DiscountMode::kPerSecond:
      return std::pow(discount, timestep);
    case DiscountMode::kPerStepRaw:
      return discount;
  }
  throw ContractViolation("CriticConfig: unknown discount mode");
}

void CriticConfig::validate() const {
  if (minibatches_per_update <= 0) {
    throw ContractViolation("CriticConfig: minibatches_per_update must be positive");
  }
  if (batch_size <= 0) {
    throw ContractViolation("CriticConfig: batch_size must be positive");
  }
  if (step_size <= 0) {
    throw ContractViolation("CriticConfig: step_size must be positive");
  }
  if (weight_decay < 0) {
    throw ContractViolation("CriticConfig: weight_decay must be nonnegative");
  }
  if (tau_polyak <= 0 || tau_polyak > 1) {
    throw ContractViolation("CriticConfig: tau_polyak must lie in (0, 1]");
  }
  if (discount <= 0 || discount > 1) {
    throw ContractViolation("CriticConfig: discount must lie in (0, 1]");
  }
  if (timestep <= 0) {
    throw ContractViolation("CriticConfig: timestep must be positive");
  }
}

scalar_t bellman_target(const ValueNet& target_net, const TransitionTuple& tuple,
                        const CriticConfig& config) {
  if (tuple.done) {
    return tuple.cost;
  }
  const scalar_t bootstrap = target_net.forward(
      tuple.t + config.timestep, tuple.next_state, tuple.goal);
  return tuple.cost + config.step_discount() * bootstrap;
}

AdamState AdamState::like(const ValueNet& net) {
  AdamState state;
  state.m_w.reserve(net.weights.size());
  state.v_w.reserve(net.weights.size());
  state.m_b.reserve(net.biases.size());
  state.v_b.reserve(net.biases.size());
  for (const matrix_t& w : net.weights) {
    state.m_w.push_back(matrix_t::Zero(w.rows(), w.cols()));
    state.v_w.push_back(matrix_t::Zero(w.rows(), w.cols()));
  }
  for (const vector_t& b : net.biases) {
    state.m_b.push_back(vector_t::Zero(b.size()));
    state.v_b.push_back(vector_t::Zero(b.size()));
  }
  return state;
}

void AdamState::apply(ValueNet& net, const ValueNet::ParameterGradient& grad,
                      scalar_t step_size) {
  if (grad.weight_grads.size() != net.weights.size() ||
      grad.bias_grads.size() != net.biases.size()) {
    throw ContractViolation("AdamState: gradient shape does not match net");
  }
  ++step;
  const scalar_t correction1 = 1.0 - std::pow(beta1, static_cast<scalar_t>(step));
  const scalar_t correction2 = 1.0 - std::pow(beta2, static_cast<scalar_t>(step));
  const scalar_t alpha = step_size * std::sqrt(correction2) / correction1;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    m_w[l] = beta1 * m_w[l] + (1.0 - beta1) * grad.weight_grads[l];
    v_w[l] = beta2 * v_w[l] +
             (1.0 - beta2) * grad.weight_grads[l].cwiseProduct(grad.weight_grads[l]);
    net.weights[l].array() -=
        alpha * m_w[l].array() / (v_w[l].array().sqrt() + epsilon);

    m_b[l] = beta1 * m_b[l] + (1.0 - beta1) * grad.bias_grads[l];
    v_b[l] = beta2 * v_b[l] +
             (1.0 - beta2) * grad.bias_grads[l].cwiseProduct(grad.bias_grads[l]);
    net.biases[l].array() -=
        alpha * m_b[l].array() / (v_b[l].array().sqrt() + epsilon);
  }
}

std::optional<CriticUpdateStats> critic_update(ValueNet& net, ValueNet& target_net,
                                               const ReplayBuffer& buffer,
                                               const CriticConfig& config,
                                               AdamState& adam, RngEngine& rng) {
  config.validate();
  if (buffer.size() < static_cast<std::size_t>(config.batch_size)) {
    return std::nullopt;
  }

  CriticUpdateStats stats;
  std::vector<TrainingSample> batch(static_cast<std::size_t>(config.batch_size));
  ValueNet::ParameterGradient grad;
  for (int k = 0; k < config.minibatches_per_update; ++k) {
    scalar_t target_sum = 0;
    for (auto& sample : batch) {
      const TransitionTuple& tuple = buffer.sample(rng);
      sample.t = tuple.t;
      sample.state = tuple.state;
      sample.goal = tuple.goal;
      sample.target = bellman_target(target_net, tuple, config);
      target_sum += sample.target;
    }
    const scalar_t loss = parameter_gradient(net, batch, config.weight_decay, grad);
    adam.apply(net, grad, config.step_size);
    stats.mean_loss += loss;
    stats.mean_target += target_sum / static_cast<scalar_t>(batch.size());
  }
  const scalar_t inv_k = 1.0 / static_cast<scalar_t>(config.minibatches_per_update);
  stats.mean_loss *= inv_k;
  stats.mean_target *= inv_k;

  polyak_update(target_net, net, config.tau_polyak);
  return stats;
}

}  // namespace dvmpc
