#include "dvmpc/value_function.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dvmpc {

namespace {

struct ForwardPass {
  std::vector<vector_t> activations;      // a[0] = normalized input, a[l] post-tanh
  std::vector<vector_t> pre_activations;  // z[l] for hidden layers, 0-based
  scalar_t raw_output = 0;
};

vector_t assemble_input(const NetArchitecture& arch, scalar_t t,
                        const vector_t& state, const vector_t& goal) {
  if (state.size() != arch.state_dim) {
    throw ContractViolation("value net state input has wrong dimension");
  }
  if (goal.size() != arch.goal_dim) {
    throw ContractViolation("value net goal input has wrong dimension");
  }
  vector_t in(arch.input_dim());
  in[0] = (arch.horizon - t) / arch.horizon;
  in.segment(1, arch.state_dim) = state;
  if (arch.goal_dim > 0) in.tail(arch.goal_dim) = goal;
  return in;
}

ForwardPass run_forward(const ValueNet& net, const vector_t& raw_input) {
  const auto& arch = net.arch;
  ForwardPass fp;
  vector_t a = raw_input;
  if (arch.input_shift.size() > 0) a -= arch.input_shift;
  if (arch.input_scale.size() > 0) a = a.cwiseQuotient(arch.input_scale);

  const int hidden_layers = net.num_layers() - 1;
  fp.activations.reserve(hidden_layers + 1);
  fp.pre_activations.reserve(hidden_layers);
  fp.activations.push_back(a);
  for (int l = 0; l < hidden_layers; ++l) {
    vector_t z = net.weights[l] * fp.activations.back() + net.biases[l];
    fp.pre_activations.push_back(z);
    fp.activations.push_back(z.array().tanh().matrix());
  }
  fp.raw_output =
      (net.weights.back() * fp.activations.back() + net.biases.back())[0];
  return fp;
}

void format_value(std::ostream& os, scalar_t v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

void NetArchitecture::validate() const {
  if (state_dim <= 0 || goal_dim < 0) {
    throw ContractViolation("net architecture dimensions invalid");
  }
  if (horizon <= 0) throw ContractViolation("net horizon must be positive");
  for (int w : hidden) {
    if (w <= 0) throw ContractViolation("hidden widths must be positive");
  }
  if (input_shift.size() != 0 && input_shift.size() != input_dim()) {
    throw ContractViolation("input_shift has wrong dimension");
  }
  if (input_scale.size() != 0 && input_scale.size() != input_dim()) {
    throw ContractViolation("input_scale has wrong dimension");
  }
  if (input_scale.size() > 0 && (input_scale.array() <= 0).any()) {
    throw ContractViolation("input_scale entries must be positive");
  }
  if (output_scale == 0) throw ContractViolation("output_scale must be nonzero");
}

ValueNet ValueNet::init(const NetArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  ValueNet net;
  net.arch = arch;
  std::vector<int> widths;
  widths.push_back(arch.input_dim());
  for (int w : arch.hidden) widths.push_back(w);
  widths.push_back(1);

  RngEngine rng = make_rng(seed, 0x76616c75);  // value-net stream tag
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const scalar_t bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<scalar_t> u(-bound, bound);
    matrix_t W(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) W(i, j) = u(rng);
    }
    net.weights.push_back(std::move(W));
    net.biases.push_back(vector_t::Zero(fan_out));
  }
  return net;
}

int ValueNet::num_parameters() const {
  int count = 0;
  for (int l = 0; l < num_layers(); ++l) {
    count += static_cast<int>(weights[l].size() + biases[l].size());
  }
  return count;
}

scalar_t ValueNet::forward(scalar_t t, const vector_t& state,
                           const vector_t& goal) const {
  const ForwardPass fp = run_forward(*this, assemble_input(arch, t, state, goal));
  return arch.output_scale * fp.raw_output + arch.output_shift;
}

ValueNet::EvalBundle ValueNet::evaluate(scalar_t t, const vector_t& state,
                                        const vector_t& goal) const {
  const int D = arch.input_dim();
  const int n = arch.state_dim;
  const ForwardPass fp = run_forward(*this, assemble_input(arch, t, state, goal));
  const int hidden_layers = num_layers() - 1;

  // Backward sensitivities s[l] = d y_raw / d a[l] (rows), l = 0..hidden_layers.
  std::vector<row_vector_t> sens(hidden_layers + 1);
  sens[hidden_layers] = weights.back();
  for (int l = hidden_layers; l >= 1; --l) {
    const vector_t dtanh =
        (1.0 - fp.activations[l].array().square()).matrix();
    sens[l - 1] =
        (sens[l].transpose().cwiseProduct(dtanh)).transpose() * weights[l - 1];
  }

  // Forward Jacobians J[l] = d z[l] / d normalized-input, built incrementally,
  // and the layerwise curvature sum, symmetric term by term.
  matrix_t H_norm = matrix_t::Zero(D, D);
  matrix_t J;  // current d z[l] / d input
  for (int l = 0; l < hidden_layers; ++l) {
    if (l == 0) {
      J = weights[0];
    } else {
      const vector_t dtanh =
          (1.0 - fp.activations[l].array().square()).matrix();
      J = weights[l] * dtanh.asDiagonal() * J;
    }
    const auto& a = fp.activations[l + 1];
    // tanh'' (z) = -2 tanh(z) (1 - tanh(z)^2), expressed through a = tanh(z)
    vector_t curv(a.size());
    for (int i = 0; i < a.size(); ++i) {
      curv[i] = sens[l + 1][i] * (-2.0 * a[i] * (1.0 - a[i] * a[i]));
    }
    H_norm.noalias() += J.transpose() * curv.asDiagonal() * J;
  }

  // Gradient with respect to the normalized input.
  const row_vector_t& g_norm = sens[0];

  // Undo input normalization and apply the output affine map.
  vector_t scale = arch.input_scale.size() > 0 ? arch.input_scale
                                               : vector_t::Ones(D);
  vector_t g_raw(D);
  for (int i = 0; i < D; ++i) {
    g_raw[i] = arch.output_scale * g_norm[i] / scale[i];
  }
  matrix_t H_raw(D, D);
  for (int i = 0; i < D; ++i) {
    for (int j = 0; j < D; ++j) {
      H_raw(i, j) = arch.output_scale * H_norm(i, j) / (scale[i] * scale[j]);
    }
  }

  const scalar_t dfeature_dt = -1.0 / arch.horizon;
  EvalBundle out;
  out.value = arch.output_scale * fp.raw_output + arch.output_shift;
  out.time_partial = g_raw[0] * dfeature_dt;
  out.state_gradient = g_raw.segment(1, n);
  // Symmetrize away matrix-product rounding so callers can rely on H = H'.
  const matrix_t H_state = H_raw.block(1, 1, n, n);
  out.state_hessian = 0.5 * (H_state + H_state.transpose());
  out.mixed_time_state = H_raw.block(0, 1, 1, n).transpose() * dfeature_dt;
  return out;
}

ValueNet::InputGradient ValueNet::input_gradient(scalar_t t, const vector_t& state,
                                                 const vector_t& goal) const {
  const EvalBundle b = evaluate(t, state, goal);
  return {b.time_partial, b.state_gradient};
}

matrix_t ValueNet::input_hessian(scalar_t t, const vector_t& state,
                                 const vector_t& goal) const {
  return evaluate(t, state, goal).state_hessian;
}

scalar_t parameter_gradient(const ValueNet& net,
                            const std::vector<TrainingSample>& batch,
                            scalar_t weight_decay,
                            ValueNet::ParameterGradient& grad) {
  if (batch.empty()) throw ContractViolation("parameter_gradient needs samples");
  const int L = net.num_layers();
  grad.weight_grads.assign(L, matrix_t());
  grad.bias_grads.assign(L, vector_t());
  for (int l = 0; l < L; ++l) {
    grad.weight_grads[l] = matrix_t::Zero(net.weights[l].rows(), net.weights[l].cols());
    grad.bias_grads[l] = vector_t::Zero(net.biases[l].size());
  }

  const scalar_t inv_n = 1.0 / static_cast<scalar_t>(batch.size());
  scalar_t mse = 0;
  for (const auto& sample : batch) {
    const ForwardPass fp = run_forward(
        net, assemble_input(net.arch, sample.t, sample.state, sample.goal));
    const scalar_t value =
        net.arch.output_scale * fp.raw_output + net.arch.output_shift;
    const scalar_t err = value - sample.target;
    mse += err * err * inv_n;

    // d loss / d y_raw for this sample
    scalar_t delta_out = 2.0 * err * inv_n * net.arch.output_scale;
    grad.weight_grads[L - 1].noalias() +=
        delta_out * fp.activations.back().transpose();
    grad.bias_grads[L - 1][0] += delta_out;

    vector_t delta = delta_out * net.weights[L - 1].transpose();
    for (int l = L - 2; l >= 0; --l) {
      delta = delta.cwiseProduct(
          (1.0 - fp.activations[l + 1].array().square()).matrix());
      grad.weight_grads[l].noalias() += delta * fp.activations[l].transpose();
      grad.bias_grads[l] += delta;
      if (l > 0) delta = net.weights[l].transpose() * delta;
    }
  }
  if (weight_decay > 0) {
    for (int l = 0; l < L; ++l) {
      grad.weight_grads[l] += weight_decay * net.weights[l];
    }
  }
  return mse;
}

void polyak_update(ValueNet& target, const ValueNet& net, scalar_t tau) {
  if (tau < 0 || tau > 1) throw ContractViolation("polyak tau must be in [0, 1]");
  if (target.num_layers() != net.num_layers()) {
    throw ContractViolation("polyak_update on mismatched architectures");
  }
  for (int l = 0; l < net.num_layers(); ++l) {
    if (target.weights[l].rows() != net.weights[l].rows() ||
        target.weights[l].cols() != net.weights[l].cols()) {
      throw ContractViolation("polyak_update on mismatched layer shapes");
    }
    target.weights[l] = (1.0 - tau) * target.weights[l] + tau * net.weights[l];
    target.biases[l] = (1.0 - tau) * target.biases[l] + tau * net.biases[l];
  }
}

namespace {

void write_vector(std::ostream& os, const char* key, const vector_t& v) {
  os << key;
  for (int i = 0; i < v.size(); ++i) {
    os << ' ';
    format_value(os, v[i]);
  }
  os << '\n';
}

void write_params(std::ostream& os, const ValueNet& net) {
  os << "params " << net.num_parameters() << '\n';
  for (int l = 0; l < net.num_layers(); ++l) {
    for (int i = 0; i < net.weights[l].rows(); ++i) {
      for (int j = 0; j < net.weights[l].cols(); ++j) {
        format_value(os, net.weights[l](i, j));
        os << '\n';
      }
    }
    for (int i = 0; i < net.biases[l].size(); ++i) {
      format_value(os, net.biases[l][i]);
      os << '\n';
    }
  }
}

void read_params(std::istream& is, ValueNet& net) {
  std::string key;
  int count = 0;
  is >> key >> count;
  if (key != "params" || count != net.num_parameters()) {
    throw ContractViolation("checkpoint parameter block mismatch");
  }
  for (int l = 0; l < net.num_layers(); ++l) {
    for (int i = 0; i < net.weights[l].rows(); ++i) {
      for (int j = 0; j < net.weights[l].cols(); ++j) is >> net.weights[l](i, j);
    }
    for (int i = 0; i < net.biases[l].size(); ++i) is >> net.biases[l][i];
  }
  if (!is) throw ContractViolation("checkpoint truncated inside parameters");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, std::ostream& os) {
  const auto& arch = ckpt.net.arch;
  os << "valuenet 1\n";
  os << "state_dim " << arch.state_dim << '\n';
  os << "goal_dim " << arch.goal_dim << '\n';
  os << "hidden";
  for (int w : arch.hidden) os << ' ' << w;
  os << '\n';
  os << "activation tanh\n";
  os << "horizon ";
  format_value(os, arch.horizon);
  os << '\n';
  write_vector(os, "input_shift",
               arch.input_shift.size() ? arch.input_shift
                                       : vector_t::Zero(arch.input_dim()));
  write_vector(os, "input_scale",
               arch.input_scale.size() ? arch.input_scale
                                       : vector_t::Ones(arch.input_dim()));
  os << "output_scale ";
  format_value(os, arch.output_scale);
  os << '\n';
  os << "output_shift ";
  format_value(os, arch.output_shift);
  os << '\n';
  os << "tau_polyak ";
  format_value(os, ckpt.tau_polyak);
  os << '\n';
  write_params(os, ckpt.net);
  os << "target\n";
  write_params(os, ckpt.target);
}

Checkpoint load_checkpoint(std::istream& is) {
  std::string key, magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "valuenet" || version != 1) {
    throw ContractViolation("unrecognized checkpoint header");
  }
  NetArchitecture arch;
  scalar_t tau = 0.05;

  is >> key >> arch.state_dim;
  if (key != "state_dim") throw ContractViolation("checkpoint missing state_dim");
  is >> key >> arch.goal_dim;
  if (key != "goal_dim") throw ContractViolation("checkpoint missing goal_dim");

  is >> key;
  if (key != "hidden") throw ContractViolation("checkpoint missing hidden");
  arch.hidden.clear();
  {
    std::string rest;
    std::getline(is, rest);
    std::istringstream hs(rest);
    int w;
    while (hs >> w) arch.hidden.push_back(w);
  }
  is >> key >> magic;  // activation name
  if (key != "activation" || magic != "tanh") {
    throw ContractViolation("unsupported activation in checkpoint");
  }
  is >> key >> arch.horizon;
  if (key != "horizon") throw ContractViolation("checkpoint missing horizon");

  const int D = arch.input_dim();
  arch.input_shift.resize(D);
  arch.input_scale.resize(D);
  is >> key;
  if (key != "input_shift") throw ContractViolation("checkpoint missing input_shift");
  for (int i = 0; i < D; ++i) is >> arch.input_shift[i];
  is >> key;
  if (key != "input_scale") throw ContractViolation("checkpoint missing input_scale");
  for (int i = 0; i < D; ++i) is >> arch.input_scale[i];
  is >> key >> arch.output_scale;
  if (key != "output_scale") throw ContractViolation("checkpoint missing output_scale");
  is >> key >> arch.output_shift;
  if (key != "output_shift") throw ContractViolation("checkpoint missing output_shift");
  is >> key >> tau;
  if (key != "tau_polyak") throw ContractViolation("checkpoint missing tau_polyak");
  if (!is) throw ContractViolation("checkpoint header truncated");

  Checkpoint ckpt;
  ckpt.tau_polyak = tau;
  ckpt.net = ValueNet::init(arch, 0);
  read_params(is, ckpt.net);
  is >> key;
  if (key != "target") throw ContractViolation("checkpoint missing target block");
  ckpt.target = ValueNet::init(arch, 0);
  read_params(is, ckpt.target);
  return ckpt;
}

void save_checkpoint_file(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ContractViolation("cannot open checkpoint file for writing: " + path);
  save_checkpoint(ckpt, os);
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ContractViolation("cannot open checkpoint file: " + path);
  return load_checkpoint(is);
}

}  // namespace dvmpc
