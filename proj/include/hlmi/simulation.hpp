#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hlmi/gibbs.hpp"
#include "hlmi/model.hpp"
#include "hlmi/random.hpp"

namespace hlmi {

// Monte Carlo harness for the two-covariate scenario: C1 (amputable), C2
// (always observed, drives missingness), binary D, and the interaction C1 x D.
// In the generators the covariate that predicts C1 is C2.

enum class Mechanism { GeneralLocation, LatentNormal };

std::string to_string(Mechanism m);
Mechanism mechanism_from_string(const std::string& s);

/// logit(p_j) ~ N(c0 + c1 * C2_j, delta), delta a variance (0: deterministic).
struct MarCoefficients {
  double c0 = 0.0;
  double c1 = 0.0;
  double delta = 0.0;
};

struct MarSpec {
  MarCoefficients y{-1.9, 0.1, 1.0};
  MarCoefficients c1{-2.2, -1.5, 0.0};
  MarCoefficients d{-2.0, 1.5, 0.0};
};

/// Generating values. beta is ordered as the fitted model's layout:
/// (intercept, C1, C2, D, C1 x D).
struct TrueParameters {
  Eigen::VectorXd beta = Eigen::VectorXd::Ones(5);
  double tau = 4.0;
  double sigma2 = 16.0;
};

struct SimScenario {
  Mechanism mechanism = Mechanism::GeneralLocation;
  int n_clusters = 200;
  int cluster_size = 4;
  TrueParameters truth;
  MarSpec mar;
  bool ampute = true;
  double p_d = 0.3;    // general-location P(D = 1)
  double kappa = 2.2;  // latent-normal threshold
  int replications = 200;
  SamplerConfig sampler{1000, 1000, 2, 1, 0, 0, 1, false, std::nullopt};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Model fitted in the study: p = 2 (C1, C2), q = 1 binary D, interaction C1 x D only.
ModelSpec simulation_model_spec();

/// D ~ Bern(p_d); C2 ~ N(-0.5 + D, 1); C1 ~ N(0.5 - 0.5 C2 + 1.2 D, 1);
/// Y_ij = X_ij^T beta + u_j + e_ij with u_j ~ N(0, tau), e_ij ~ N(0, sigma^2).
Dataset gen_general_location(int n_clusters, int cluster_size, Rng& rng, const TrueParameters& truth = {},
                             double p_d = 0.3);

/// C2 ~ N(2, 1); (C1, D*) | C2 ~ N((0.75 + 0.7 C2, -0.5 + C2), [[1.25, -0.5], [-0.5, 1]]);
/// D = 1 iff D* > kappa; Y as in gen_general_location.
Dataset gen_latent_normal(int n_clusters, int cluster_size, Rng& rng, const TrueParameters& truth = {},
                          double kappa = 2.2);

/// Deletes values by the logistic MAR mechanism driven by the observed C2:
/// one logit draw per cluster and variable, then an independent Bernoulli per
/// slot (each observation for Y, once per cluster for C1 and D).
Dataset ampute_mar(const Dataset& complete, const MarSpec& mar, Rng& rng);

/// Complete and amputed data of replication `index`, drawn from the same
/// streams run_replication uses.
struct SimulatedData {
  Dataset complete;
  Dataset observed;
};
SimulatedData generate_replication(const SimScenario& scenario, int index);

/// Scalar parameters tracked by the study, with their display labels.
struct StudyParameter {
  std::string name;   // name in the chain store
  std::string label;  // table label
  double truth;
};
std::vector<StudyParameter> study_parameters(const TrueParameters& truth);

struct ParameterEstimate {
  double estimate;
  double se;  // NaN when the estimator reports none
  double ci_lo;
  double ci_hi;
};

struct ReplicationResult {
  int index = 0;
  bool ok = false;
  std::string error;
  std::vector<ParameterEstimate> cdml;   // aligned with study_parameters()
  std::vector<ParameterEstimate> gibbs;
  double psrf_pass_fraction = 0.0;  // share of theta entries with PSRF <= 1.1
  double max_psrf = 0.0;
  std::vector<double> missing_rates;  // y, C1, D
};

struct MetricRow {
  std::string label;
  double truth;
  double pct_bias;
  double pct_bias_mcse;
  double ase;  // NaN if no SEs
  double ese;
  double coverage;  // NaN if no intervals
  int n;
};

struct MetricsTable {
  std::string estimator;
  std::vector<MetricRow> rows;
};

struct StudyResult {
  std::vector<ReplicationResult> replications;
  MetricsTable cdml;
  MetricsTable gibbs;
  int n_failed = 0;
};

/// Optional persistence of finished replications (checkpoint/resume).
class ReplicationCache {
 public:
  virtual ~ReplicationCache() = default;
  virtual std::optional<ReplicationResult> load(int index) = 0;
  virtual void save(const ReplicationResult& result) = 0;
};

/// One replication: generate, fit complete-data ML, ampute, run the sampler.
/// Never throws; failures are returned with ok = false.
ReplicationResult run_replication(const SimScenario& scenario, int index);

/// Metrics over successful replications. Accumulation is in replication-index
/// order, so the input order does not matter.
MetricsTable compute_metrics(const std::vector<ReplicationResult>& reps, const std::vector<StudyParameter>& params,
                             bool gibbs, const std::string& estimator);

/// Runs every replication on `threads` workers. Throws NumericalError when more
/// than 2% of replications fail.
StudyResult run_study(const SimScenario& scenario, int threads = 1, ReplicationCache* cache = nullptr);

}  // namespace hlmi
