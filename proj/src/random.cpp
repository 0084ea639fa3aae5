#include "hlmi/random.hpp"

#include <cmath>
#include <string>

#include "hlmi/errors.hpp"

namespace hlmi {

namespace {

// splitmix64 finalizer; spreads (seed, stream) before seeding the engine.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = mix64(seed);
  const std::uint64_t b = mix64(stream ^ 0x5851f42d4c957f2dULL);
  const std::uint64_t c = mix64(a ^ mix64(b));
  return std::seed_seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                       static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                       static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  auto seq = make_seed_seq(seed, stream);
  engine_.seed(seq);
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::standard_normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

double Rng::standard_gamma(double shape) {
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.rows() != m_.cols()) {
    throw DomainError("SpdMatrix: matrix must be square and non-empty");
  }
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("SpdMatrix: matrix is not symmetric");
  }
  m_ = 0.5 * (m_ + m_.transpose());
  llt_.compute(m_);
  if (llt_.info() != Eigen::Success) {
    throw DomainError("SpdMatrix: matrix is not positive definite");
  }
}

SpdMatrix SpdMatrix::identity(Eigen::Index dim) {
  return SpdMatrix(Eigen::MatrixXd::Identity(dim, dim));
}

Eigen::MatrixXd SpdMatrix::inverse() const {
  Eigen::MatrixXd inv = llt_.solve(Eigen::MatrixXd::Identity(dim(), dim()));
  return 0.5 * (inv + inv.transpose());
}

double SpdMatrix::log_determinant() const {
  return 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double sample_normal(double mean, double variance, Rng& rng) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw DomainError("sample_normal: variance must be positive, got " + std::to_string(variance));
  }
  return mean + std::sqrt(variance) * rng.standard_normal();
}

Eigen::VectorXd sample_mvnormal(const Eigen::VectorXd& mean, const SpdMatrix& cov, Rng& rng) {
  if (mean.size() != cov.dim()) {
    throw DomainError("sample_mvnormal: mean has dimension " + std::to_string(mean.size()) +
                      " but covariance has " + std::to_string(cov.dim()));
  }
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.standard_normal();
  return mean + cov.llt().matrixL() * z;
}

double sample_inverse_gamma(double shape, double scale_of_reciprocal, Rng& rng) {
  if (!(shape > 0.0) || !(scale_of_reciprocal > 0.0)) {
    throw DomainError("sample_inverse_gamma: shape and scale must be positive");
  }
  const double g = rng.standard_gamma(shape) * scale_of_reciprocal;
  if (!(g > 0.0)) throw NumericalError("sample_inverse_gamma: gamma draw underflowed");
  return 1.0 / g;
}

SpdMatrix sample_inverse_wishart(double dof, const SpdMatrix& scale_inverse, Rng& rng) {
  const Eigen::Index p = scale_inverse.dim();
  if (!(dof > static_cast<double>(p) + 1.0)) {
    throw DomainError("sample_inverse_wishart: dof must exceed dim + 1");
  }
  // Bartlett decomposition of W ~ Wishart(dof, scale_inverse); return W^-1.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(2.0 * rng.standard_gamma(0.5 * (dof - static_cast<double>(i))));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.standard_normal();
  }
  const Eigen::MatrixXd la = scale_inverse.llt().matrixL() * a;
  // W = (LA)(LA)^T, so W^-1 = (LA)^-T (LA)^-1.
  const Eigen::MatrixXd la_inv =
      la.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd x = la_inv.transpose() * la_inv;
  x = 0.5 * (x + x.transpose());
  return SpdMatrix(std::move(x));
}

Eigen::VectorXd sample_dirichlet(std::span<const double> alphas, Rng& rng) {
  if (alphas.empty()) throw DomainError("sample_dirichlet: empty parameter vector");
  Eigen::VectorXd g(static_cast<Eigen::Index>(alphas.size()));
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0)) throw DomainError("sample_dirichlet: all alphas must be positive");
    g[static_cast<Eigen::Index>(i)] = rng.standard_gamma(alphas[i]);
  }
  const double total = g.sum();
  if (!(total > 0.0)) throw NumericalError("sample_dirichlet: all gamma draws underflowed");
  return g / total;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  if (probs.empty()) throw DomainError("sample_categorical: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw DomainError("sample_categorical: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("sample_categorical: probabilities sum to " + std::to_string(total));
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

}  // namespace hlmi
