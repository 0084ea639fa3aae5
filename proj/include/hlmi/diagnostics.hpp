#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlmi/gibbs.hpp"

namespace hlmi {

/// Posterior summary of one scalar parameter. `sd` is the posterior standard
/// deviation, reported as the estimate's SE.
struct SummaryRow {
  std::string name;
  double mean;
  double sd;
  double ci_lo;  // 2.5th percentile
  double ci_hi;  // 97.5th percentile
  double psrf;   // NaN with a single chain
};

/// Gelman-Rubin potential scale reduction factor
///   sqrt(((n - 1)/n W + B/n) / W)
/// over m >= 2 chains of equal length n >= 2, with B the between-chain and W
/// the mean within-chain variance. Returns +inf when W = 0 and B > 0, and
/// throws DomainError with fewer than two chains.
double psrf(const std::vector<Eigen::VectorXd>& chains);

/// Empirical quantile with linear interpolation between order statistics
/// x_(floor(h)) and x_(ceil(h)), h = (n - 1) * prob (0-based, inclusive).
double percentile(std::span<const double> values, double prob);

/// Pools all chains per parameter. PSRF is NaN when only one chain exists or
/// chains are shorter than 10 records.
std::vector<SummaryRow> summarize(const ChainStore& store);

}  // namespace hlmi
