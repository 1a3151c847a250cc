#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>

#include "ibnn/errors.hpp"

namespace ibnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Jitter levels tried in order, as multiples of the mean diagonal of the
/// matrix being factored.
struct JitterPolicy {
  std::array<double, 4> ladder{0.0, 1e-10, 1e-8, 1e-6};

  static JitterPolicy none() {
    JitterPolicy p;
    p.ladder = {0.0, 0.0, 0.0, 0.0};
    return p;
  }
};

/// Lower-triangular L with L·Lᵀ = A + jitter·I.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(Matrix lower, double jitter);

  const Matrix& lower() const { return lower_; }
  /// Absolute jitter added to the diagonal (0 when the first attempt succeeded).
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return lower_.rows(); }

  Matrix reconstruct() const;
  double log_determinant() const;

  /// Solves L·x = b.
  Vector solve_lower(const Vector& b) const;
  /// Solves Lᵀ·x = b.
  Vector solve_upper(const Vector& b) const;

 private:
  Matrix lower_;
  double jitter_ = 0.0;
};

/// Factors a symmetric matrix, walking the jitter ladder until the
/// factorization succeeds.
///
/// Throws NotSymmetric when |A - Aᵀ| exceeds 1e-10·‖A‖ and
/// NotPositiveDefinite when every jitter level fails.
CholeskyFactor cholesky(const Matrix& a, const JitterPolicy& policy = {});

/// Solves (L·Lᵀ)·x = b.
Vector solve_cholesky(const CholeskyFactor& factor, const Vector& b);

/// Smallest eigenvalue of a symmetric matrix via a full self-adjoint
/// eigensolve (Eigen's tridiagonal QR).
double min_eigenvalue_symmetric(const Matrix& a);

/// Packs the lower triangle row by row: (0,0), (1,0), (1,1), (2,0), ...
std::vector<double> pack_lower(const Matrix& lower);
Matrix unpack_lower(std::span<const double> packed, Eigen::Index n);

/// xoshiro256** seeded through splitmix64. Normals use the Marsaglia polar
/// method so that streams are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  Vector normal_vector(Eigen::Index n);
  void fill_normal(Eigen::Ref<Matrix> out);

  /// Independent child stream; deterministic in (seed, stream_id).
  Rng split(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ibnn
