#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlmi/model.hpp"
#include "hlmi/random.hpp"

namespace hlmi {

// Full conditional distributions of the compatible Gibbs sampler. Every
// function is a pure function of its arguments; the sampler composes them.

struct NormalParams {
  double mean;
  double variance;
};

struct MvNormalParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// IG(shape, s): 1/X ~ Gamma(shape, scale s). See sample_inverse_gamma.
struct InverseGammaParams {
  double shape;
  double scale_of_reciprocal;
};

/// IW(dof, scale_inverse). See sample_inverse_wishart.
struct InverseWishartParams {
  double dof;
  Eigen::MatrixXd scale_inverse;
};

/// Gaussian conditional of C_k given the other continuous covariates.
struct ConditionalMoments {
  double m_cond;
  double t_cond;
};

/// Conditional mean of Y_ij split as mu1_ij + mu2 * C_kj. mu1 carries every
/// term constant in C_kj (including beta_D^T dummy(D_j) and u_j).
struct CSlopeSplit {
  Eigen::VectorXd mu1;
  double mu2;
};

struct CPosterior {
  double mean;
  double precision;

  double variance() const { return 1.0 / precision; }
};

struct CellPosterior {
  std::vector<int> cells;
  std::vector<double> log_h;
  std::vector<double> probs;
};

/// Schur-complement conditional of component k of N(mean, t) given the other
/// components of `c` (entry k of `c` is ignored).
ConditionalMoments conditional_c_moments(int k, const Eigen::VectorXd& c, const Eigen::VectorXd& mean,
                                         const Eigen::MatrixXd& t);

/// Same, with the mean taken from the covariate model W_j alpha.
ConditionalMoments conditional_c_moments(int k, const Eigen::VectorXd& c, std::span<const int> d,
                                         const Eigen::VectorXd& alpha, const Eigen::MatrixXd& t,
                                         const ModelSpec& spec);

/// Fixed-effect part X_ij^T beta for every observation of a cluster.
Eigen::VectorXd linear_predictor(const Eigen::VectorXd& c, std::span<const int> d, const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& beta, const ModelSpec& spec);

CSlopeSplit split_mean_for_ck(int k, const Eigen::VectorXd& c, std::span<const int> d,
                              const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double u,
                              const ModelSpec& spec);

/// Posterior of a missing C_kj: prior conditional N(m, t) times the n_j
/// outcome likelihoods, each linear in C_kj with slope mu2.
CPosterior c_full_conditional(const ConditionalMoments& moments, const CSlopeSplit& split,
                              std::span<const double> y, double sigma2);

/// Log of the unnormalized cell mass h(d) for one complete categorical vector:
/// sum_i log f(Y_ij|.) + log f(C_j | D_j, alpha, T) + log pi_d.
double log_cell_mass(std::span<const int> d, int cell, std::span<const double> y, const Eigen::VectorXd& c,
                     const Eigen::MatrixXd& x, double u, const ParamState& state, const SpdMatrix& t,
                     const ModelSpec& spec);

/// Posterior over the admissible cells of cluster j under the current state.
/// Throws NumericalError if every cell has zero mass.
CellPosterior d_cell_posterior(const ModelSpec& spec, const CellCodec& codec, const Cluster& cluster,
                               std::size_t j, const ParamState& state, const SpdMatrix& t);

/// u_j | . ~ N(Delta^-1 sigma^-2 sum_i r_ij, Delta^-1), Delta = n_j / sigma^2 + 1 / tau,
/// with r_ij = Y_ij - X_ij^T beta.
NormalParams u_full_conditional(double residual_sum, std::size_t n_j, double sigma2, double tau);

InverseGammaParams tau_full_conditional(std::span<const double> u, const ResolvedPriors& priors);

/// Flat-prior regression conditional from the Gram matrix sum X X^T and
/// sum X (Y - u). Throws RankDeficientError naming dependent columns.
MvNormalParams beta_full_conditional(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                                     double sigma2, const std::vector<std::string>& names);

/// Accumulates the Gram matrix over the completed data in `state`.
MvNormalParams beta_full_conditional(const ModelSpec& spec, const Dataset& data, const ParamState& state);

InverseGammaParams sigma2_full_conditional(double sum_sq_residuals, std::size_t n_obs,
                                           const ResolvedPriors& priors);

/// Residual e_ij = Y_ij - X_ij^T beta - u_j summed over the completed data.
double sum_sq_residuals(const ModelSpec& spec, const Dataset& data, const ParamState& state);

/// Y_ij = X_ij^T beta + u_j + e_ij with e_ij ~ N(0, sigma^2).
double impute_y(const ModelSpec& spec, const Cluster& cluster, std::size_t j, std::size_t i,
                const ParamState& state, Rng& rng);

/// Flat-prior GLS conditional of alpha given completed C, D and T.
MvNormalParams alpha_full_conditional(const ModelSpec& spec, const std::vector<Eigen::VectorXd>& c,
                                      const std::vector<std::vector<int>>& d, const Eigen::MatrixXd& t);

InverseWishartParams t_full_conditional(const ModelSpec& spec, const std::vector<Eigen::VectorXd>& c,
                                        const std::vector<std::vector<int>>& d, const Eigen::VectorXd& alpha,
                                        const ResolvedPriors& priors);

/// Dirichlet parameters: prior a plus cell counts.
std::vector<double> pi_full_conditional(std::span<const int> cells, const ResolvedPriors& priors);

}  // namespace hlmi
