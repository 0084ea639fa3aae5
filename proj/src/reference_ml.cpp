#include "hlmi/reference_ml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hlmi/errors.hpp"

namespace hlmi {

ProfileLikelihood::ProfileLikelihood(const Dataset& data, const ModelSpec& spec)
    : names_(spec.beta_names()), k_(spec.beta_dim()) {
  if (!data.complete()) throw InputError("complete-data ML requires a dataset without missing values");
  data.validate(spec);
  Eigen::VectorXd row(k_);
  for (const auto& cl : data.clusters) {
    Stats s{Eigen::MatrixXd::Zero(k_, k_), Eigen::VectorXd::Zero(k_), Eigen::VectorXd::Zero(k_), 0.0, 0.0,
            static_cast<double>(cl.size())};
    const Eigen::VectorXd dummies = dummy_code(cl.d, spec);
    for (std::size_t i = 0; i < cl.size(); ++i) {
      fill_design_row(cl.c, dummies, cl.x.row(static_cast<Eigen::Index>(i)), spec, row);
      s.xtx.selfadjointView<Eigen::Lower>().rankUpdate(row);
      s.xt1 += row;
      s.xty += row * cl.y[i];
      s.sum_y += cl.y[i];
      s.yty += cl.y[i] * cl.y[i];
    }
    s.xtx = s.xtx.selfadjointView<Eigen::Lower>();
    n_obs_ += cl.size();
    clusters_.push_back(std::move(s));
  }
}

ProfilePoint ProfileLikelihood::evaluate(double ratio) const {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw DomainError("profile_loglik: ratio must be finite and >= 0");
  // V_j^-1 = (I - c_j 1 1^T) / sigma^2 with c_j = ratio / (1 + n_j ratio).
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k_, k_);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k_);
  double yay = 0.0;
  double log_det = 0.0;
  for (const auto& s : clusters_) {
    const double c = ratio / (1.0 + s.n * ratio);
    g += s.xtx - c * s.xt1 * s.xt1.transpose();
    b += s.xty - c * s.sum_y * s.xt1;
    yay += s.yty - c * s.sum_y * s.sum_y;
    log_det += std::log1p(s.n * ratio);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) {
    throw RankDeficientError("profile_loglik: GLS system is singular", names_);
  }
  ProfilePoint out;
  out.beta_gls = llt.solve(b);
  const double n = static_cast<double>(n_obs_);
  out.sigma2 = std::max((yay - b.dot(out.beta_gls)) / n, 1e-300);
  out.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi) + std::log(out.sigma2) + 1.0) - 0.5 * log_det;
  out.gls_information = std::move(g);
  return out;
}

ProfilePoint profile_loglik(double ratio, const Dataset& data, const ModelSpec& spec) {
  return ProfileLikelihood(data, spec).evaluate(ratio);
}

MlFit fit_ml(const Dataset& data, const ModelSpec& spec) {
  const ProfileLikelihood prof(data, spec);
  constexpr double kSMax = 14.0;  // ratio up to ~1.2e6
  constexpr int kGrid = 120;
  constexpr int kMaxEvals = 500;
  constexpr double kTol = 1e-8;

  int evals = 0;
  auto f = [&](double s) {
    ++evals;
    return prof.evaluate(std::expm1(s)).loglik;
  };

  const double step = kSMax / kGrid;
  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = f(i * step);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }

  double lo = std::max(0, best - 1) * step;
  double hi = std::min(kGrid, best + 1) * step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > kTol && evals < kMaxEvals) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    }
  }

  // Best of the refined interval and its endpoints (the optimum may sit at s = 0).
  double s_hat = 0.5 * (lo + hi);
  double val = f(s_hat);
  for (double cand : {lo, hi}) {
    const double v = f(cand);
    if (v > val) {
      val = v;
      s_hat = cand;
    }
  }
  if (best_val > val) {
    val = best_val;
    s_hat = best * step;
  }

  MlFit fit;
  fit.ratio_hat = std::expm1(s_hat);
  const ProfilePoint pt = prof.evaluate(fit.ratio_hat);
  fit.beta_hat = pt.beta_gls;
  fit.sigma2_hat = pt.sigma2;
  fit.tau_hat = fit.ratio_hat * pt.sigma2;
  fit.loglik = pt.loglik;
  const Eigen::MatrixXd cov = pt.sigma2 * pt.gls_information.llt().solve(
                                              Eigen::MatrixXd::Identity(pt.gls_information.rows(), pt.gls_information.cols()));
  fit.se_beta = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.iterations = evals;
  fit.converged = (hi - lo <= kTol) && evals <= kMaxEvals && prof.n_clusters() >= 2 && best < kGrid;
  return fit;
}

}  // namespace hlmi
