#include "ibnn/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ibnn {

CholeskyFactor::CholeskyFactor(Matrix lower, double jitter)
    : lower_(std::move(lower)), jitter_(jitter) {}

Matrix CholeskyFactor::reconstruct() const {
  return lower_ * lower_.transpose();
}

double CholeskyFactor::log_determinant() const {
  return 2.0 * lower_.diagonal().array().log().sum();
}

Vector CholeskyFactor::solve_lower(const Vector& b) const {
  if (b.size() != lower_.rows()) {
    throw DimensionMismatch("solve_lower: factor is " +
                            std::to_string(lower_.rows()) + ", rhs is " +
                            std::to_string(b.size()));
  }
  return lower_.triangularView<Eigen::Lower>().solve(b);
}

Vector CholeskyFactor::solve_upper(const Vector& b) const {
  if (b.size() != lower_.rows()) {
    throw DimensionMismatch("solve_upper: factor is " +
                            std::to_string(lower_.rows()) + ", rhs is " +
                            std::to_string(b.size()));
  }
  return lower_.transpose().triangularView<Eigen::Upper>().solve(b);
}

CholeskyFactor cholesky(const Matrix& a, const JitterPolicy& policy) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("cholesky: matrix is " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()));
  }
  const Eigen::Index n = a.rows();
  if (n == 0) return CholeskyFactor(Matrix(0, 0), 0.0);
  if (!a.allFinite()) throw NotPositiveDefinite("cholesky: non-finite entries");

  const double scale = a.cwiseAbs().maxCoeff();
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream msg;
    msg << "cholesky: asymmetry " << asym << " exceeds 1e-10 * " << scale;
    throw NotSymmetric(msg.str());
  }

  const double mean_diag = a.diagonal().mean();
  Matrix shifted = a;
  double last_jitter = -1.0;
  for (double rel : policy.ladder) {
    const double jitter = rel * std::abs(mean_diag);
    if (jitter == last_jitter) continue;
    last_jitter = jitter;
    shifted = a;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix, Eigen::Lower> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Matrix lower = llt.matrixL();
    const auto diag = lower.diagonal();
    if (!lower.allFinite() || (diag.array() <= 0.0).any()) continue;
    return CholeskyFactor(std::move(lower), jitter);
  }
  throw NotPositiveDefinite("cholesky: factorization failed at every jitter level (n=" +
                            std::to_string(n) + ")");
}

Vector solve_cholesky(const CholeskyFactor& factor, const Vector& b) {
  return factor.solve_upper(factor.solve_lower(b));
}

double min_eigenvalue_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("min_eigenvalue_symmetric: not square");
  if (a.rows() == 0) throw DimensionMismatch("min_eigenvalue_symmetric: empty matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NonConvergence("min_eigenvalue_symmetric: eigensolver did not converge");
  }
  return solver.eigenvalues().minCoeff();
}

std::vector<double> pack_lower(const Matrix& lower) {
  const Eigen::Index n = lower.rows();
  std::vector<double> packed;
  packed.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) packed.push_back(lower(i, j));
  }
  return packed;
}

Matrix unpack_lower(std::span<const double> packed, Eigen::Index n) {
  if (static_cast<Eigen::Index>(packed.size()) != n * (n + 1) / 2) {
    throw DimensionMismatch("unpack_lower: packed length " + std::to_string(packed.size()) +
                            " does not match n=" + std::to_string(n));
  }
  Matrix lower = Matrix::Zero(n, n);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) lower(i, j) = packed[k++];
  }
  return lower;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw ConfigError("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  // Reject draws from the biased tail.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t draw;
  do {
    draw = next_u64();
  } while (draw >= limit);
  return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

Vector Rng::normal_vector(Eigen::Index n) {
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

void Rng::fill_normal(Eigen::Ref<Matrix> out) {
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal();
  }
}

Rng Rng::split(std::uint64_t stream_id) const {
  std::uint64_t mix = seed_ ^ (0xd1b54a32d192ed03ULL * (stream_id + 1));
  return Rng(splitmix64(mix));
}

}  // namespace ibnn
