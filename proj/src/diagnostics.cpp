#include "hlmi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hlmi/errors.hpp"

namespace hlmi {

double psrf(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw DomainError("psrf: at least two chains are required");
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DomainError("psrf: chains must have equal length");
  }
  if (n < 2) throw DomainError("psrf: chains must have at least 2 draws");
  const auto m = static_cast<double>(chains.size());
  const auto nd = static_cast<double>(n);

  Eigen::VectorXd means(static_cast<Eigen::Index>(chains.size()));
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const double mu = chains[c].mean();
    means[static_cast<Eigen::Index>(c)] = mu;
    w += (chains[c].array() - mu).square().sum() / (nd - 1.0);
  }
  w /= m;
  const double grand = means.mean();
  const double b = nd / (m - 1.0) * (means.array() - grand).square().sum();
  if (w <= 0.0) {
    return b > 0.0 ? std::numeric_limits<double>::infinity() : std::numeric_limits<double>::quiet_NaN();
  }
  return std::sqrt((nd - 1.0) / nd + b / (nd * w));
}

namespace {

double sorted_percentile(const std::vector<double>& v, double prob) {
  const double h = static_cast<double>(v.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double percentile(std::span<const double> values, double prob) {
  if (values.empty()) throw DomainError("percentile: no values");
  if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("percentile: probability outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return sorted_percentile(v, prob);
}

std::vector<SummaryRow> summarize(const ChainStore& store) {
  if (store.chains.empty() || store.chains.front().draws.rows() == 0) {
    throw DomainError("summarize: empty chain store");
  }
  std::vector<SummaryRow> rows;
  rows.reserve(store.n_params());
  for (std::size_t k = 0; k < store.n_params(); ++k) {
    const auto series = store.series(k);
    std::vector<double> pooled;
    for (const auto& s : series) pooled.insert(pooled.end(), s.data(), s.data() + s.size());
    // Sorted before accumulating so pooling order cannot change any digit.
    std::sort(pooled.begin(), pooled.end());
    const double n = static_cast<double>(pooled.size());
    double mean = pooled.front();
    double sd = 0.0;
    if (pooled.front() != pooled.back()) {
      mean = 0.0;
      for (double v : pooled) mean += v;
      mean /= n;
      double ss = 0.0;
      for (double v : pooled) ss += (v - mean) * (v - mean);
      sd = std::sqrt(ss / (n - 1.0));
    }

    double r = std::numeric_limits<double>::quiet_NaN();
    bool equal_lengths = series.size() >= 2;
    for (const auto& s : series) equal_lengths = equal_lengths && s.size() == series.front().size();
    if (equal_lengths && series.front().size() >= 10) r = psrf(series);

    rows.push_back({store.names[k], mean, sd, sorted_percentile(pooled, 0.025), sorted_percentile(pooled, 0.975), r});
  }
  return rows;
}

}  // namespace hlmi
