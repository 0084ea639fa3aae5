#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hlmi/model.hpp"

namespace hlmi {

/// Complete-data maximum likelihood fit of the random-intercept model
/// Y_j ~ N(X_j beta, sigma^2 I + tau 1 1^T). Plain ML, not REML.
struct MlFit {
  Eigen::VectorXd beta_hat;
  double tau_hat = 0.0;
  double sigma2_hat = 0.0;
  double ratio_hat = 0.0;  // tau / sigma^2
  Eigen::VectorXd se_beta;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;  // profile evaluations
};

struct ProfilePoint {
  double loglik;
  Eigen::VectorXd beta_gls;
  double sigma2;
  Eigen::MatrixXd gls_information;  // sum_j X_j^T (I - c_j 1 1^T) X_j, unscaled
};

/// Cached per-cluster sufficient statistics; evaluating the profile costs
/// O(J k^2) per ratio and never forms an N x N matrix.
class ProfileLikelihood {
 public:
  /// Throws InputError if the dataset has any missing entry.
  ProfileLikelihood(const Dataset& data, const ModelSpec& spec);

  /// For a fixed ratio tau/sigma^2 >= 0: GLS beta, closed-form sigma^2, and
  /// the profiled log-likelihood. Throws RankDeficientError for a singular
  /// GLS system.
  ProfilePoint evaluate(double ratio) const;

  std::size_t n_clusters() const noexcept { return clusters_.size(); }
  std::size_t n_obs() const noexcept { return n_obs_; }

 private:
  struct Stats {
    Eigen::MatrixXd xtx;
    Eigen::VectorXd xt1;
    Eigen::VectorXd xty;
    double sum_y;
    double yty;
    double n;
  };
  std::vector<Stats> clusters_;
  std::vector<std::string> names_;
  std::size_t n_obs_ = 0;
  int k_ = 0;
};

ProfilePoint profile_loglik(double ratio, const Dataset& data, const ModelSpec& spec);

/// Maximizes the profile over ratio by a coarse grid on s = log(1 + ratio)
/// followed by golden-section refinement (tolerance 1e-8 on s, at most 500
/// evaluations). A single cluster leaves the ratio unidentified and is
/// reported as not converged.
MlFit fit_ml(const Dataset& data, const ModelSpec& spec);

}  // namespace hlmi
