#include "hlmi/posteriors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hlmi/errors.hpp"

namespace hlmi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<std::string> pick(const std::vector<std::string>& names, const std::vector<Eigen::Index>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(i < static_cast<Eigen::Index>(names.size()) ? names[i] : std::to_string(i));
  return out;
}

// Columns that a pivoted QR leaves outside the leading rank-r block.
std::vector<Eigen::Index> dependent_columns(const Eigen::MatrixXd& gram) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  qr.setThreshold(1e-10);
  std::vector<Eigen::Index> out;
  const auto& perm = qr.colsPermutation().indices();
  Eigen::Index rank = qr.rank();
  // Near-singular systems can pass the QR threshold; blame the last pivot.
  if (rank == gram.cols() && rank > 0) rank -= 1;
  for (Eigen::Index r = rank; r < gram.cols(); ++r) out.push_back(perm[r]);
  std::sort(out.begin(), out.end());
  return out;
}

std::string join(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
  return s;
}

}  // namespace

ConditionalMoments conditional_c_moments(int k, const Eigen::VectorXd& c, const Eigen::VectorXd& mean,
                                         const Eigen::MatrixXd& t) {
  const Eigen::Index p = t.rows();
  if (k < 0 || k >= p) throw DomainError("conditional_c_moments: index out of range");
  if (p == 1) {
    if (!(t(0, 0) > 0.0)) throw NumericalError("conditional_c_moments: non-positive variance");
    return {mean[0], t(0, 0)};
  }
  std::vector<Eigen::Index> rest;
  for (Eigen::Index i = 0; i < p; ++i) if (i != k) rest.push_back(i);
  const auto r = static_cast<Eigen::Index>(rest.size());
  Eigen::MatrixXd t_rr(r, r);
  Eigen::VectorXd t_kr(r), dev(r);
  for (Eigen::Index a = 0; a < r; ++a) {
    t_kr[a] = t(k, rest[a]);
    dev[a] = c[rest[a]] - mean[rest[a]];
    for (Eigen::Index b = 0; b < r; ++b) t_rr(a, b) = t(rest[a], rest[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(t_rr);
  if (llt.info() != Eigen::Success) throw NumericalError("conditional_c_moments: singular covariance sub-block");
  const Eigen::VectorXd w = llt.solve(t_kr);
  const double t_cond = t(k, k) - t_kr.dot(w);
  if (!(t_cond > 0.0)) throw NumericalError("conditional_c_moments: non-positive conditional variance");
  return {mean[k] + w.dot(dev), t_cond};
}

ConditionalMoments conditional_c_moments(int k, const Eigen::VectorXd& c, std::span<const int> d,
                                         const Eigen::VectorXd& alpha, const Eigen::MatrixXd& t,
                                         const ModelSpec& spec) {
  return conditional_c_moments(k, c, covariate_mean(d, alpha, spec), t);
}

Eigen::VectorXd linear_predictor(const Eigen::VectorXd& c, std::span<const int> d, const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& beta, const ModelSpec& spec) {
  const Eigen::VectorXd dummies = dummy_code(d, spec);
  Eigen::VectorXd zero_x = Eigen::VectorXd::Zero(spec.x_dim);
  Eigen::VectorXd row(spec.beta_dim());
  fill_design_row(c, dummies, zero_x.transpose(), spec, row);
  const double cluster_part = row.dot(beta);
  Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), cluster_part);
  if (spec.x_dim > 0) out += x * beta.segment(spec.beta_x_offset(), spec.x_dim);
  return out;
}

CSlopeSplit split_mean_for_ck(int k, const Eigen::VectorXd& c, std::span<const int> d,
                              const Eigen::MatrixXd& x, const Eigen::VectorXd& beta, double u,
                              const ModelSpec& spec) {
  if (k < 0 || k >= spec.p) throw DomainError("split_mean_for_ck: index out of range");
  const Eigen::VectorXd dummies = dummy_code(d, spec);
  const Eigen::MatrixXd b_cd = interaction_matrix(beta, spec);
  const double mu2 = beta[spec.beta_c_offset() + k] + b_cd.row(k).dot(dummies);
  Eigen::VectorXd c_without = c;
  c_without[k] = 0.0;
  Eigen::VectorXd mu1 = linear_predictor(c_without, d, x, beta, spec);
  mu1.array() += u;
  return {std::move(mu1), mu2};
}

CPosterior c_full_conditional(const ConditionalMoments& moments, const CSlopeSplit& split,
                              std::span<const double> y, double sigma2) {
  if (!(moments.t_cond > 0.0) || !(sigma2 > 0.0)) {
    throw DomainError("c_full_conditional: variances must be positive");
  }
  if (static_cast<Eigen::Index>(y.size()) != split.mu1.size()) {
    throw DomainError("c_full_conditional: outcome and mean lengths differ");
  }
  const double n = static_cast<double>(y.size());
  const double precision = 1.0 / moments.t_cond + n * split.mu2 * split.mu2 / sigma2;
  double resid = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    resid += y[i] - (split.mu1[static_cast<Eigen::Index>(i)] + split.mu2 * moments.m_cond);
  }
  const double mean = moments.m_cond + split.mu2 * resid / (sigma2 * precision);
  return {mean, precision};
}

double log_cell_mass(std::span<const int> d, int cell, std::span<const double> y, const Eigen::VectorXd& c,
                     const Eigen::MatrixXd& x, double u, const ParamState& state, const SpdMatrix& t,
                     const ModelSpec& spec) {
  const double pi_d = state.pi[cell];
  if (!(pi_d > 0.0)) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd eta = linear_predictor(c, d, x, state.beta, spec);
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - eta[static_cast<Eigen::Index>(i)] - u;
    ss += r * r;
  }
  const double n = static_cast<double>(y.size());
  double log_h = -0.5 * n * (kLog2Pi + std::log(state.sigma2)) - 0.5 * ss / state.sigma2;
  const Eigen::VectorXd dev = c - covariate_mean(d, state.alpha, spec);
  const Eigen::VectorXd z = t.llt().matrixL().solve(dev);
  log_h += -0.5 * (static_cast<double>(spec.p) * kLog2Pi + t.log_determinant()) - 0.5 * z.squaredNorm();
  log_h += std::log(pi_d);
  return log_h;
}

CellPosterior d_cell_posterior(const ModelSpec& spec, const CellCodec& codec, const Cluster& cluster,
                               std::size_t j, const ParamState& state, const SpdMatrix& t) {
  CellPosterior out;
  out.cells = codec.admissible(state.d[j], cluster.d_missing);
  out.log_h.reserve(out.cells.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (int cell : out.cells) {
    const auto d = codec.decode(cell);
    const double lh = log_cell_mass(d, cell, state.y[j], state.c[j], cluster.x, state.u[static_cast<Eigen::Index>(j)],
                                    state, t, spec);
    out.log_h.push_back(lh);
    max_log = std::max(max_log, lh);
  }
  if (!std::isfinite(max_log)) throw NumericalError("d_cell_posterior: every admissible cell has zero mass");
  double total = 0.0;
  out.probs.resize(out.cells.size());
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    out.probs[i] = std::exp(out.log_h[i] - max_log);
    total += out.probs[i];
  }
  for (double& pr : out.probs) pr /= total;
  return out;
}

NormalParams u_full_conditional(double residual_sum, std::size_t n_j, double sigma2, double tau) {
  if (!(sigma2 > 0.0) || !(tau > 0.0)) throw DomainError("u_full_conditional: variances must be positive");
  const double delta = static_cast<double>(n_j) / sigma2 + 1.0 / tau;
  return {residual_sum / (sigma2 * delta), 1.0 / delta};
}

InverseGammaParams tau_full_conditional(std::span<const double> u, const ResolvedPriors& priors) {
  if (u.empty()) throw DomainError("tau_full_conditional: need at least one cluster");
  double ss = 0.0;
  for (double v : u) ss += v * v;
  return {0.5 * static_cast<double>(u.size()) + priors.ig_shape, 1.0 / (0.5 * ss + 1.0 / priors.ig_scale)};
}

MvNormalParams beta_full_conditional(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                                     double sigma2, const std::vector<std::string>& names) {
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
    auto cols = pick(names, dependent_columns(gram));
    const std::string msg = "regression design is rank deficient; dependent columns: " + join(cols);
    throw RankDeficientError(msg, std::move(cols));
  }
  const Eigen::Index k = gram.rows();
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
  inv = 0.5 * (inv + inv.transpose());
  return {llt.solve(xty), sigma2 * inv};
}

MvNormalParams beta_full_conditional(const ModelSpec& spec, const Dataset& data, const ParamState& state) {
  const int k = spec.beta_dim();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd row(k);
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const auto& cl = data.clusters[j];
    const Eigen::VectorXd dummies = dummy_code(state.d[j], spec);
    const double u = state.u[static_cast<Eigen::Index>(j)];
    for (std::size_t i = 0; i < cl.size(); ++i) {
      fill_design_row(state.c[j], dummies, cl.x.row(static_cast<Eigen::Index>(i)), spec, row);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
      xty += row * (state.y[j][i] - u);
    }
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  return beta_full_conditional(gram, xty, state.sigma2, spec.beta_names());
}

InverseGammaParams sigma2_full_conditional(double sum_sq_residuals, std::size_t n_obs,
                                           const ResolvedPriors& priors) {
  if (n_obs == 0) throw DomainError("sigma2_full_conditional: need at least one observation");
  return {0.5 * static_cast<double>(n_obs) + priors.ig_shape,
          1.0 / (0.5 * sum_sq_residuals + 1.0 / priors.ig_scale)};
}

double sum_sq_residuals(const ModelSpec& spec, const Dataset& data, const ParamState& state) {
  double ss = 0.0;
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const auto& cl = data.clusters[j];
    const Eigen::VectorXd eta = linear_predictor(state.c[j], state.d[j], cl.x, state.beta, spec);
    const double u = state.u[static_cast<Eigen::Index>(j)];
    for (std::size_t i = 0; i < cl.size(); ++i) {
      const double e = state.y[j][i] - eta[static_cast<Eigen::Index>(i)] - u;
      ss += e * e;
    }
  }
  return ss;
}

double impute_y(const ModelSpec& spec, const Cluster& cluster, std::size_t j, std::size_t i,
                const ParamState& state, Rng& rng) {
  const Eigen::VectorXd row = build_design_row(state.c[j], state.d[j],
                                               cluster.x.row(static_cast<Eigen::Index>(i)).transpose(), spec);
  return row.dot(state.beta) + state.u[static_cast<Eigen::Index>(j)] + sample_normal(0.0, state.sigma2, rng);
}

MvNormalParams alpha_full_conditional(const ModelSpec& spec, const std::vector<Eigen::VectorXd>& c,
                                      const std::vector<std::vector<int>>& d, const Eigen::MatrixXd& t) {
  // With W_j = I_p (x) r_j^T the information sum_j W_j^T T^-1 W_j equals
  // T^-1 (x) R for R = sum_j r_j r_j^T, so the conditional is per-covariate
  // least squares on the shared design with covariance T (x) R^-1.
  const int m = spec.alpha_block();
  const int p = spec.p;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd rc = Eigen::MatrixXd::Zero(m, p);
  Eigen::VectorXd rj(m);
  for (std::size_t j = 0; j < c.size(); ++j) {
    rj[0] = 1.0;
    rj.tail(m - 1) = dummy_code(d[j], spec);
    r += rj * rj.transpose();
    rc += rj * c[j].transpose();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (c.empty() || llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
    std::vector<std::string> block_names{"(Intercept)"};
    for (const auto& n : spec.dummy_names()) block_names.push_back(n);
    auto cols = c.empty() ? block_names : pick(block_names, dependent_columns(r));
    const std::string msg = "covariate-model design is rank deficient; dependent columns: " + join(cols);
    throw RankDeficientError(msg, std::move(cols));
  }
  const Eigen::MatrixXd coef = llt.solve(rc);  // m x p
  Eigen::MatrixXd r_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  r_inv = 0.5 * (r_inv + r_inv.transpose());
  MvNormalParams out;
  out.mean.resize(spec.alpha_dim());
  out.cov.resize(spec.alpha_dim(), spec.alpha_dim());
  for (int k = 0; k < p; ++k) {
    out.mean.segment(k * m, m) = coef.col(k);
    for (int l = 0; l < p; ++l) out.cov.block(k * m, l * m, m, m) = t(k, l) * r_inv;
  }
  return out;
}

InverseWishartParams t_full_conditional(const ModelSpec& spec, const std::vector<Eigen::VectorXd>& c,
                                        const std::vector<std::vector<int>>& d, const Eigen::VectorXd& alpha,
                                        const ResolvedPriors& priors) {
  Eigen::MatrixXd scale = priors.iw_scale;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const Eigen::VectorXd e = c[j] - covariate_mean(d[j], alpha, spec);
    scale.noalias() += e * e.transpose();
  }
  scale = 0.5 * (scale + scale.transpose());
  SpdMatrix s(scale);
  return {priors.iw_dof + static_cast<double>(c.size()), s.inverse()};
}

std::vector<double> pi_full_conditional(std::span<const int> cells, const ResolvedPriors& priors) {
  std::vector<double> a = priors.dirichlet;
  for (int cell : cells) {
    if (cell < 0 || cell >= static_cast<int>(a.size())) throw DomainError("pi_full_conditional: cell out of range");
    a[static_cast<std::size_t>(cell)] += 1.0;
  }
  return a;
}

}  // namespace hlmi
