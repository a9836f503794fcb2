#pragma once

// Independent reference implementations used to produce test expectations:
// dense-grid ODE integration, finite differences, matrix exponentials, linear
// SDE moments, and a naive network forward pass. Deliberately written without
// the library's own solvers so the two sides cannot share a bug.

#include "dvmpc/types.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <vector>

namespace test_oracles {

using dvmpc::matrix_t;
using dvmpc::scalar_t;
using dvmpc::vector_t;

using OdeRhs = std::function<vector_t(scalar_t, const vector_t&)>;

inline vector_t integrate_rk4(const OdeRhs& rhs, vector_t y, scalar_t t0,
                              scalar_t t1, int steps) {
  const scalar_t h = (t1 - t0) / steps;
  scalar_t t = t0;
  for (int i = 0; i < steps; ++i) {
    const vector_t k1 = rhs(t, y);
    const vector_t k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
    const vector_t k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
    const vector_t k4 = rhs(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
  }
  return y;
}

inline matrix_t expm(const matrix_t& A) { return A.exp(); }

inline vector_t fd_gradient(const std::function<scalar_t(const vector_t&)>& f,
                            const vector_t& x, scalar_t h = 1e-5) {
  vector_t g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    vector_t xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline matrix_t fd_jacobian(const std::function<vector_t(const vector_t&)>& F,
                            const vector_t& x, scalar_t h = 1e-5) {
  const vector_t f0 = F(x);
  matrix_t J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    vector_t xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (F(xp) - F(xm)) / (2.0 * h);
  }
  return J;
}

inline matrix_t fd_hessian(const std::function<scalar_t(const vector_t&)>& f,
                           const vector_t& x, scalar_t h = 1e-4) {
  const int n = static_cast<int>(x.size());
  matrix_t H(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      vector_t xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h, xpp[j] += h;
      xpm[i] += h, xpm[j] -= h;
      xmp[i] -= h, xmp[j] += h;
      xmm[i] -= h, xmm[j] -= h;
      H(i, j) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h);
    }
  }
  return H;
}

inline scalar_t fd_time_partial(const std::function<scalar_t(scalar_t)>& f,
                                scalar_t t, scalar_t h = 1e-6) {
  return (f(t + h) - f(t - h)) / (2.0 * h);
}

/// KL between two linear state-feedback policies u = -k x on the scalar
/// diffusion dx = (a x + g u) dt + g dB, Var[dB] = sigma dt, rolling out under
/// gain_b: integrates the second moment ODE m' = 2 (a - g gain_b) m + g^2 sigma
/// on a dense grid and accumulates 0.5 R (gain_a - gain_b)^2 m(t).
inline scalar_t feedback_kl_ode(scalar_t a, scalar_t g, scalar_t sigma, scalar_t R,
                                scalar_t gain_a, scalar_t gain_b, scalar_t x0,
                                scalar_t T, int steps = 20000) {
  const scalar_t h = T / steps;
  scalar_t m = x0 * x0;
  scalar_t kl = 0;
  const scalar_t rate = 2.0 * (a - g * gain_b);
  const scalar_t diff = g * g * sigma;
  const scalar_t weight = 0.5 * R * (gain_a - gain_b) * (gain_a - gain_b);
  for (int i = 0; i < steps; ++i) {
    const auto mdot = [&](scalar_t mm) { return rate * mm + diff; };
    // Trapezoid on the KL integrand around an RK4 moment step.
    const scalar_t k1 = mdot(m);
    const scalar_t k2 = mdot(m + 0.5 * h * k1);
    const scalar_t k3 = mdot(m + 0.5 * h * k2);
    const scalar_t k4 = mdot(m + h * k3);
    const scalar_t m_next = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    kl += weight * 0.5 * (m + m_next) * h;
    m = m_next;
  }
  return kl;
}

/// Plain loops-and-indices MLP forward pass: tanh hidden layers, linear
/// output, input [ (T - t)/T, state, goal ] normalized as (v - shift)/scale,
/// output scaled and shifted.
inline scalar_t naive_mlp_forward(const std::vector<matrix_t>& weights,
                                  const std::vector<vector_t>& biases,
                                  const vector_t& shift, const vector_t& scale,
                                  scalar_t output_scale, scalar_t output_shift,
                                  scalar_t horizon, scalar_t t, const vector_t& state,
                                  const vector_t& goal) {
  std::vector<scalar_t> layer(1 + state.size() + goal.size());
  layer[0] = (horizon - t) / horizon;
  for (int i = 0; i < state.size(); ++i) layer[1 + i] = state[i];
  for (int i = 0; i < goal.size(); ++i) layer[1 + state.size() + i] = goal[i];
  for (std::size_t i = 0; i < layer.size(); ++i) {
    layer[i] = (layer[i] - shift[static_cast<int>(i)]) / scale[static_cast<int>(i)];
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::vector<scalar_t> next(weights[l].rows());
    for (int r = 0; r < weights[l].rows(); ++r) {
      scalar_t acc = biases[l][r];
      for (int c = 0; c < weights[l].cols(); ++c) {
        acc += weights[l](r, c) * layer[c];
      }
      next[r] = (l + 1 == weights.size()) ? acc : std::tanh(acc);
    }
    layer = std::move(next);
  }
  return output_scale * layer[0] + output_shift;
}

}  // namespace test_oracles
