#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace dvmpc {

using scalar_t = double;
using vector_t = Eigen::Matrix<scalar_t, Eigen::Dynamic, 1>;
using matrix_t = Eigen::Matrix<scalar_t, Eigen::Dynamic, Eigen::Dynamic>;
using row_vector_t = Eigen::Matrix<scalar_t, 1, Eigen::Dynamic>;

/// State-feedback policy u = pi(t, x).
using Policy = std::function<vector_t(scalar_t, const vector_t&)>;

using RngEngine = std::mt19937_64;

/// Independent engine derived from a master seed and stream tags. Streams with
/// distinct tags are statistically independent; identical tags reproduce the
/// same draw sequence.
inline RngEngine make_rng(std::uint64_t master_seed, std::uint64_t stream_id,
                          std::uint64_t substream_id = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32),
                    static_cast<std::uint32_t>(substream_id),
                    static_cast<std::uint32_t>(substream_id >> 32)};
  return RngEngine(seq);
}

struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrationDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct QuadratizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OracleFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateEstimate : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Derived>
scalar_t quadratic_form(const Eigen::MatrixBase<Derived>& M, const vector_t& x) {
  return x.dot(M * x);
}

template <typename Derived>
matrix_t symmetrized(const Eigen::MatrixBase<Derived>& M) {
  return scalar_t(0.5) * (M + M.transpose());
}

/// Eigenvalue clamp: every eigenvalue of the returned matrix is >= floor.
inline matrix_t clamp_psd(const matrix_t& M, scalar_t floor) {
  Eigen::SelfAdjointEigenSolver<matrix_t> eig(symmetrized(M));
  vector_t d = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

inline bool all_finite(const vector_t& v) { return v.allFinite(); }
inline bool all_finite(const matrix_t& m) { return m.allFinite(); }

}  // namespace dvmpc
