#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlmi/random.hpp"

namespace hlmi {

/// Prior hyperparameters. Unset optionals resolve against the data in
/// resolve_priors(): iw_dof -> p + 2, iw_scale -> complete-case covariance
/// of C, dirichlet -> all ones.
struct PriorSpec {
  double ig_shape = 1.0;  // alpha_0, shared by tau and sigma^2
  double ig_scale = 0.5;  // beta_0; the conditional rate adds 1/beta_0
  std::optional<double> iw_dof;
  std::optional<Eigen::MatrixXd> iw_scale;
  std::optional<std::vector<double>> dirichlet;
};

/// PriorSpec with every default filled in.
struct ResolvedPriors {
  double ig_shape = 1.0;
  double ig_scale = 0.5;
  double iw_dof = 0.0;
  Eigen::MatrixXd iw_scale;
  std::vector<double> dirichlet;
};

/// One interaction column: dummy `dummy` (global dummy index, belonging to
/// categorical variable `categorical`) times continuous covariate `continuous`.
struct InteractionTerm {
  int dummy;
  int categorical;
  int level;
  int continuous;
};

/// Model dimensions and interaction structure.
///
/// Categorical variable k with L_k levels enters the regression as L_k - 1
/// reference-coded dummies (level 0 is the reference). The regression row is
///   [1, C^T, dummy(D)^T, X^T, dummy(D)^T (x) C^T]
/// with interaction columns whose (continuous, categorical) pair is false in
/// `interaction` removed. The covariate model uses W_j = I_p (x) [1 dummy(D_j)^T].
struct ModelSpec {
  int p = 0;
  int q = 0;
  std::vector<int> levels;
  int x_dim = 0;
  /// p x q; true where the C_k x D_l interaction block is free.
  std::vector<std::vector<bool>> interaction;
  PriorSpec priors;

  std::vector<std::string> c_names;
  std::vector<std::string> d_names;
  std::vector<std::vector<std::string>> level_labels;
  std::vector<std::string> x_names;

  /// Throws InputError if dimensions, levels or names are inconsistent.
  /// Fills default names and labels when empty.
  void validate();

  int n_cells() const;
  int n_dummies() const;
  /// First dummy index of categorical variable k.
  int dummy_offset(int k) const;
  std::vector<InteractionTerm> interaction_terms() const;

  int beta_dim() const;
  int beta_c_offset() const { return 1; }
  int beta_d_offset() const { return 1 + p; }
  int beta_x_offset() const { return 1 + p + n_dummies(); }
  int beta_cd_offset() const { return 1 + p + n_dummies() + x_dim; }

  /// Per-continuous-covariate width of alpha: 1 + n_dummies().
  int alpha_block() const { return 1 + n_dummies(); }
  int alpha_dim() const { return p * alpha_block(); }

  std::vector<std::string> beta_names() const;
  std::vector<std::string> dummy_names() const;
  std::vector<std::string> alpha_names() const;
};

/// Mixed-radix codec between level vectors and flat cell indices of the
/// q-way contingency table (last variable varies fastest).
class CellCodec {
 public:
  explicit CellCodec(std::vector<int> levels);

  int n_cells() const noexcept { return n_cells_; }
  const std::vector<int>& levels() const noexcept { return levels_; }

  int encode(std::span<const int> d) const;
  std::vector<int> decode(int cell) const;

  /// Flat indices consistent with the observed entries of `d`; entries
  /// flagged in `missing` are free. Returned in increasing order.
  std::vector<int> admissible(std::span<const int> d, const std::vector<bool>& missing) const;

 private:
  std::vector<int> levels_;
  std::vector<int> strides_;
  int n_cells_;
};

int encode_cell(std::span<const int> d, const ModelSpec& spec);
std::vector<int> admissible_cells(std::span<const int> d, const std::vector<bool>& missing,
                                  const ModelSpec& spec);

/// Level-2 unit: cluster-level covariates and its level-1 observations.
/// Missing entries keep a placeholder value (NaN for reals, -1 for levels)
/// and are flagged in the matching mask.
struct Cluster {
  std::string id;
  std::vector<double> y;
  std::vector<bool> y_missing;
  Eigen::MatrixXd x;  // n_j x x_dim, fully observed
  Eigen::VectorXd c;
  std::vector<bool> c_missing;
  std::vector<int> d;
  std::vector<bool> d_missing;

  std::size_t size() const noexcept { return y.size(); }
};

struct Dataset {
  std::vector<Cluster> clusters;

  std::size_t n_clusters() const noexcept { return clusters.size(); }
  std::size_t n_obs() const;
  std::size_t n_observed_y() const;
  bool complete() const;

  /// Throws InputError if the data do not fit the spec: shapes, level ranges,
  /// NaN in X or in observed entries, or no observed outcome at all.
  void validate(const ModelSpec& spec) const;
};

/// Dummy-coded categorical levels, length spec.n_dummies().
Eigen::VectorXd dummy_code(std::span<const int> d, const ModelSpec& spec);

/// Regression row for one observation with complete covariates.
Eigen::VectorXd build_design_row(const Eigen::VectorXd& c, std::span<const int> d,
                                 const Eigen::VectorXd& x, const ModelSpec& spec);

/// Fills `row` (length beta_dim) in place; `dummies` is dummy_code(d).
void fill_design_row(const Eigen::VectorXd& c, const Eigen::VectorXd& dummies,
                     const Eigen::Ref<const Eigen::RowVectorXd>& x, const ModelSpec& spec,
                     Eigen::Ref<Eigen::VectorXd> row);

/// Interaction coefficients as a p x n_dummies matrix B_CD; masked pairs are
/// exactly zero.
Eigen::MatrixXd interaction_matrix(const Eigen::VectorXd& beta, const ModelSpec& spec);

/// Mean of C_j under the covariate model: W_j alpha with W_j = I_p (x) [1 dummy(D_j)^T].
Eigen::VectorXd covariate_mean(std::span<const int> d, const Eigen::VectorXd& alpha,
                               const ModelSpec& spec);

/// W_j as an explicit p x alpha_dim matrix.
Eigen::MatrixXd covariate_design(std::span<const int> d, const ModelSpec& spec);

/// One Gibbs state: parameters, random effects, and the completed data
/// (observed values plus current imputations).
struct ParamState {
  Eigen::VectorXd beta;
  double tau = 1.0;
  double sigma2 = 1.0;
  Eigen::VectorXd alpha;
  Eigen::MatrixXd t;  // covariate-model covariance T, SPD
  Eigen::VectorXd pi;
  Eigen::VectorXd u;

  std::vector<std::vector<double>> y;
  std::vector<Eigen::VectorXd> c;
  std::vector<std::vector<int>> d;
  std::vector<int> cell;

  /// Throws DomainError if an invariant is broken (simplex, positivity, SPD,
  /// masked interaction entries non-zero).
  void check(const ModelSpec& spec) const;
};

/// Fill unset prior fields. The IW scale defaults to the covariance of C over
/// clusters with every C observed, or the identity with fewer than p + 2 such
/// clusters.
ResolvedPriors resolve_priors(const ModelSpec& spec, const Dataset& data);

}  // namespace hlmi
