#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace hlmi {

/// Seeded random source. A (seed, stream) pair names an independent
/// sub-stream; every concurrent worker owns its own handle.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::mt19937_64& engine() noexcept { return engine_; }

  /// Uniform on [0, 1).
  double uniform();
  double standard_normal();
  /// Gamma with the given shape and unit scale.
  double standard_gamma(double shape);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

/// Symmetric positive-definite matrix with its Cholesky factor cached.
/// Construction fails with DomainError unless the input is symmetric
/// (1e-12 relative) and the factorization succeeds.
class SpdMatrix {
 public:
  explicit SpdMatrix(Eigen::MatrixXd m);
  static SpdMatrix identity(Eigen::Index dim);

  Eigen::Index dim() const noexcept { return m_.rows(); }
  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  Eigen::MatrixXd inverse() const;
  double log_determinant() const;

 private:
  Eigen::MatrixXd m_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

double sample_normal(double mean, double variance, Rng& rng);

Eigen::VectorXd sample_mvnormal(const Eigen::VectorXd& mean, const SpdMatrix& cov, Rng& rng);

/// X ~ IG(shape, s) means 1/X ~ Gamma(shape, scale s). The second argument
/// is the reciprocal of the usual inverse-gamma scale, so the conditional
/// IG(a, [b]^-1) is sampled as sample_inverse_gamma(a, 1/b).
double sample_inverse_gamma(double shape, double scale_of_reciprocal, Rng& rng);

/// X ~ IW(dof, scale_inverse): X^-1 ~ Wishart(dof, scale_inverse), so
/// E[X] = inverse(scale_inverse) / (dof - dim - 1). Requires dof > dim + 1.
SpdMatrix sample_inverse_wishart(double dof, const SpdMatrix& scale_inverse, Rng& rng);

Eigen::VectorXd sample_dirichlet(std::span<const double> alphas, Rng& rng);

/// Index drawn with probability probs[i]; probs must lie on the simplex (1e-9).
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

}  // namespace hlmi
