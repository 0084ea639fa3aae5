#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlmi/model.hpp"
#include "hlmi/random.hpp"

namespace hlmi {

struct SamplerConfig {
  int burn_in = 2500;
  int post_burn = 2500;
  int n_chains = 2;
  int thin = 1;
  std::uint64_t seed = 0;
  /// Chain c draws from Rng(seed, stream_base + c).
  std::uint64_t stream_base = 0;
  /// Worker threads for running chains concurrently.
  int threads = 1;
  /// Keep u and the imputed values with every record.
  bool store_latent = false;
  /// Hold tau at this value instead of sampling it.
  std::optional<double> fixed_tau;

  void validate() const;
};

struct Chain {
  Eigen::MatrixXd draws;   // records x parameters
  Eigen::MatrixXd latent;  // records x latent values; empty unless store_latent
};

/// Post-burn-in records of theta = (beta, tau, sigma^2, alpha, T, pi) per chain.
struct ChainStore {
  std::vector<std::string> names;
  std::vector<std::string> latent_names;
  std::vector<Chain> chains;

  std::size_t n_params() const noexcept { return names.size(); }
  /// Column index of a parameter by name; throws std::out_of_range.
  std::size_t index_of(const std::string& name) const;
  /// Per-chain series of one parameter.
  std::vector<Eigen::VectorXd> series(std::size_t param) const;
};

/// Names of the flattened theta vector: beta[...], tau, sigma2, alpha[...],
/// T[i,j] for i <= j, pi[cell].
std::vector<std::string> parameter_names(const ModelSpec& spec);
Eigen::VectorXd flatten_parameters(const ParamState& state, const ModelSpec& spec);

/// Compatible Gibbs sampler for the random-intercept model with missing Y, C
/// and D. Each sweep runs, in order: u, tau, beta, sigma^2, missing Y, alpha,
/// T, pi, missing C (k = 1..p, using already-updated components), missing D.
class GibbsSampler {
 public:
  /// `spec` must be validated; `data` is validated against it here.
  GibbsSampler(ModelSpec spec, Dataset data);
  GibbsSampler(ModelSpec spec, Dataset data, ResolvedPriors priors);

  const ModelSpec& spec() const noexcept { return spec_; }
  const Dataset& data() const noexcept { return data_; }
  const ResolvedPriors& priors() const noexcept { return priors_; }

  void set_fixed_tau(std::optional<double> tau) { fixed_tau_ = tau; }

  /// Starting state. Chain 0 is the deterministic base start (apart from
  /// missing D draws); later chains jitter beta and the variances.
  ParamState init_state(Rng& rng, int chain_index = 0) const;

  /// One full cycle over every unknown.
  void sweep(ParamState& state, Rng& rng) const;

  ChainStore run(const SamplerConfig& config) const;

  std::vector<std::string> latent_names() const;
  Eigen::VectorXd flatten_latent(const ParamState& state) const;

 private:
  Chain run_chain(const SamplerConfig& config, int chain_index) const;

  ModelSpec spec_;
  Dataset data_;
  ResolvedPriors priors_;
  CellCodec codec_;
  std::optional<double> fixed_tau_;
};

ParamState init_state(const Dataset& data, const ModelSpec& spec, Rng& rng);
void sweep(ParamState& state, const Dataset& data, const ModelSpec& spec, Rng& rng);
ChainStore run(const Dataset& data, const ModelSpec& spec, const SamplerConfig& config);

}  // namespace hlmi
