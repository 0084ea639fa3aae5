#include "hlmi/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "hlmi/diagnostics.hpp"
#include "hlmi/errors.hpp"
#include "hlmi/reference_ml.hpp"

namespace hlmi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Indices in the simulation layout.
constexpr int kC1 = 0;
constexpr int kC2 = 1;

double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Cluster make_cluster(int j, int n, double c1, double c2, int d, Rng& rng, const TrueParameters& truth) {
  Cluster cl;
  cl.id = std::to_string(j + 1);
  cl.c = Eigen::Vector2d(c1, c2);
  cl.c_missing.assign(2, false);
  cl.d = {d};
  cl.d_missing = {false};
  cl.x.resize(n, 0);
  const auto& b = truth.beta;
  const double mean = b[0] + b[1] * c1 + b[2] * c2 + b[3] * d + b[4] * c1 * d;
  const double u = sample_normal(0.0, truth.tau, rng);
  cl.y.resize(static_cast<std::size_t>(n));
  cl.y_missing.assign(static_cast<std::size_t>(n), false);
  for (auto& y : cl.y) y = mean + u + sample_normal(0.0, truth.sigma2, rng);
  return cl;
}

double missing_probability(const MarCoefficients& m, double driver, Rng& rng) {
  double z = m.c0 + m.c1 * driver;
  if (m.delta > 0.0) z += std::sqrt(m.delta) * rng.standard_normal();
  return expit(z);
}

}  // namespace

std::string to_string(Mechanism m) {
  return m == Mechanism::GeneralLocation ? "general-location" : "latent-normal";
}

Mechanism mechanism_from_string(const std::string& s) {
  if (s == "general-location") return Mechanism::GeneralLocation;
  if (s == "latent-normal") return Mechanism::LatentNormal;
  throw InputError("unknown mechanism '" + s + "' (expected general-location or latent-normal)");
}

void SimScenario::validate() const {
  if (n_clusters < 2) throw InputError("scenario needs at least 2 clusters");
  if (cluster_size < 1) throw InputError("cluster size must be >= 1");
  if (replications < 1) throw InputError("replications must be >= 1");
  if (truth.beta.size() != 5) throw InputError("true beta must have 5 entries");
  if (!(truth.tau > 0.0) || !(truth.sigma2 > 0.0)) throw InputError("true variances must be positive");
  if (!(p_d > 0.0 && p_d < 1.0)) throw InputError("p_d must lie in (0, 1)");
  for (const auto* m : {&mar.y, &mar.c1, &mar.d}) {
    if (!(m->delta >= 0.0)) throw InputError("MAR delta is a variance and must be >= 0");
  }
  sampler.validate();
}

ModelSpec simulation_model_spec() {
  ModelSpec spec;
  spec.p = 2;
  spec.q = 1;
  spec.levels = {2};
  spec.x_dim = 0;
  spec.interaction = {{true}, {false}};
  spec.c_names = {"C1", "C2"};
  spec.d_names = {"D"};
  spec.validate();
  return spec;
}

Dataset gen_general_location(int n_clusters, int cluster_size, Rng& rng, const TrueParameters& truth, double p_d) {
  Dataset data;
  data.clusters.reserve(static_cast<std::size_t>(n_clusters));
  for (int j = 0; j < n_clusters; ++j) {
    const int d = rng.uniform() < p_d ? 1 : 0;
    const double c2 = sample_normal(-0.5 + d, 1.0, rng);
    const double c1 = sample_normal(0.5 - 0.5 * c2 + 1.2 * d, 1.0, rng);
    data.clusters.push_back(make_cluster(j, cluster_size, c1, c2, d, rng, truth));
  }
  return data;
}

Dataset gen_latent_normal(int n_clusters, int cluster_size, Rng& rng, const TrueParameters& truth, double kappa) {
  // (C1, D*) | C2 with variances 1.25, 1 and covariance -0.5.
  const double s11 = std::sqrt(1.25);
  const double s21 = -0.5 / s11;
  const double s22 = std::sqrt(1.0 - s21 * s21);
  Dataset data;
  data.clusters.reserve(static_cast<std::size_t>(n_clusters));
  for (int j = 0; j < n_clusters; ++j) {
    const double c2 = sample_normal(2.0, 1.0, rng);
    const double z1 = rng.standard_normal();
    const double z2 = rng.standard_normal();
    const double c1 = 0.75 + 0.7 * c2 + s11 * z1;
    const double d_star = -0.5 + c2 + s21 * z1 + s22 * z2;
    const int d = d_star > kappa ? 1 : 0;
    data.clusters.push_back(make_cluster(j, cluster_size, c1, c2, d, rng, truth));
  }
  return data;
}

Dataset ampute_mar(const Dataset& complete, const MarSpec& mar, Rng& rng) {
  Dataset out = complete;
  for (auto& cl : out.clusters) {
    if (cl.c.size() <= kC2 || cl.c_missing[kC2]) throw InputError("ampute_mar: C2 must be fully observed");
    const double driver = cl.c[kC2];
    double p = missing_probability(mar.y, driver, rng);
    for (std::size_t i = 0; i < cl.size(); ++i) {
      if (rng.uniform() < p) {
        cl.y_missing[i] = true;
        cl.y[i] = kNaN;
      }
    }
    p = missing_probability(mar.c1, driver, rng);
    if (rng.uniform() < p) {
      cl.c_missing[kC1] = true;
      cl.c[kC1] = kNaN;
    }
    p = missing_probability(mar.d, driver, rng);
    if (!cl.d.empty() && rng.uniform() < p) {
      cl.d_missing[0] = true;
      cl.d[0] = -1;
    }
  }
  return out;
}

std::vector<StudyParameter> study_parameters(const TrueParameters& truth) {
  const auto& b = truth.beta;
  return {{"tau", "tau", truth.tau},
          {"sigma2", "sigma2", truth.sigma2},
          {"beta[(Intercept)]", "beta0 (Intercept)", b[0]},
          {"beta[C1]", "beta1 (C1)", b[1]},
          {"beta[D=1]", "beta2 (D)", b[3]},
          {"beta[C2]", "beta3 (C2)", b[2]},
          {"beta[C1:D=1]", "beta4 (C1 x D)", b[4]}};
}

namespace {

std::uint64_t replication_stream(const SimScenario& scenario, int index) {
  return static_cast<std::uint64_t>(index) * (2 + static_cast<std::uint64_t>(scenario.sampler.n_chains));
}

}  // namespace

SimulatedData generate_replication(const SimScenario& scenario, int index) {
  const std::uint64_t base = replication_stream(scenario, index);
  SimulatedData out;
  Rng gen_rng(scenario.seed, base);
  out.complete =
      scenario.mechanism == Mechanism::GeneralLocation
          ? gen_general_location(scenario.n_clusters, scenario.cluster_size, gen_rng, scenario.truth, scenario.p_d)
          : gen_latent_normal(scenario.n_clusters, scenario.cluster_size, gen_rng, scenario.truth, scenario.kappa);
  Rng amp_rng(scenario.seed, base + 1);
  out.observed = scenario.ampute ? ampute_mar(out.complete, scenario.mar, amp_rng) : out.complete;
  return out;
}

ReplicationResult run_replication(const SimScenario& scenario, int index) {
  ReplicationResult res;
  res.index = index;
  const std::uint64_t base = replication_stream(scenario, index);
  try {
    const ModelSpec spec = simulation_model_spec();
    const auto params = study_parameters(scenario.truth);

    const SimulatedData sim = generate_replication(scenario, index);
    const Dataset& complete = sim.complete;

    const MlFit ml = fit_ml(complete, spec);
    const auto beta_names = spec.beta_names();
    for (const auto& prm : params) {
      if (prm.name == "tau") {
        res.cdml.push_back({ml.tau_hat, kNaN, kNaN, kNaN});
      } else if (prm.name == "sigma2") {
        res.cdml.push_back({ml.sigma2_hat, kNaN, kNaN, kNaN});
      } else {
        const auto it = std::find(beta_names.begin(), beta_names.end(), prm.name.substr(5, prm.name.size() - 6));
        const auto k = static_cast<Eigen::Index>(it - beta_names.begin());
        const double est = ml.beta_hat[k];
        const double se = ml.se_beta[k];
        res.cdml.push_back({est, se, est - 1.959963984540054 * se, est + 1.959963984540054 * se});
      }
    }

    const Dataset& observed = sim.observed;
    {
      double y_miss = 0, y_n = 0, c_miss = 0, d_miss = 0;
      for (const auto& cl : observed.clusters) {
        for (bool m : cl.y_missing) {
          y_miss += m;
          y_n += 1;
        }
        c_miss += cl.c_missing[kC1];
        d_miss += cl.d_missing[0];
      }
      const double jn = static_cast<double>(observed.n_clusters());
      res.missing_rates = {y_miss / y_n, c_miss / jn, d_miss / jn};
    }

    SamplerConfig cfg = scenario.sampler;
    cfg.seed = scenario.seed;
    cfg.stream_base = base + 2;
    cfg.threads = 1;
    cfg.store_latent = false;
    const GibbsSampler sampler(spec, observed);
    const ChainStore store = sampler.run(cfg);
    const auto summary = summarize(store);
    for (const auto& prm : params) {
      const auto& row = summary[store.index_of(prm.name)];
      res.gibbs.push_back({row.mean, row.sd, row.ci_lo, row.ci_hi});
    }
    int pass = 0;
    double max_r = 0.0;
    for (const auto& row : summary) {
      if (row.psrf <= 1.1) ++pass;
      if (std::isnan(row.psrf)) {
        max_r = std::numeric_limits<double>::infinity();
      } else {
        max_r = std::max(max_r, row.psrf);
      }
    }
    res.psrf_pass_fraction = static_cast<double>(pass) / static_cast<double>(summary.size());
    res.max_psrf = max_r;
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

MetricsTable compute_metrics(const std::vector<ReplicationResult>& reps, const std::vector<StudyParameter>& params,
                             bool gibbs, const std::string& estimator) {
  std::vector<const ReplicationResult*> ok;
  for (const auto& r : reps) if (r.ok) ok.push_back(&r);
  std::sort(ok.begin(), ok.end(), [](const auto* a, const auto* b) { return a->index < b->index; });

  MetricsTable table;
  table.estimator = estimator;
  const double n = static_cast<double>(ok.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    MetricRow row{params[k].label, params[k].truth, kNaN, kNaN, kNaN, kNaN, kNaN, static_cast<int>(ok.size())};
    if (!ok.empty()) {
      double sum = 0.0, se_sum = 0.0, covered = 0.0;
      bool has_se = true, has_ci = true;
      for (const auto* r : ok) {
        const auto& e = gibbs ? r->gibbs[k] : r->cdml[k];
        sum += e.estimate;
        se_sum += e.se;
        has_se = has_se && !std::isnan(e.se);
        has_ci = has_ci && !std::isnan(e.ci_lo);
        covered += (e.ci_lo <= params[k].truth && params[k].truth <= e.ci_hi) ? 1.0 : 0.0;
      }
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto* r : ok) {
        const double v = (gibbs ? r->gibbs[k] : r->cdml[k]).estimate - mean;
        ss += v * v;
      }
      row.ese = ok.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      row.pct_bias = 100.0 * (mean - params[k].truth) / params[k].truth;
      row.pct_bias_mcse = 100.0 * row.ese / std::sqrt(n) / std::abs(params[k].truth);
      row.ase = has_se ? se_sum / n : kNaN;
      row.coverage = has_ci ? covered / n : kNaN;
    }
    table.rows.push_back(row);
  }
  return table;
}

StudyResult run_study(const SimScenario& scenario, int threads, ReplicationCache* cache) {
  scenario.validate();
  const int reps = scenario.replications;
  StudyResult out;
  out.replications.resize(static_cast<std::size_t>(reps));
  std::vector<bool> done(static_cast<std::size_t>(reps), false);
  if (cache) {
    for (int r = 0; r < reps; ++r) {
      if (auto hit = cache->load(r)) {
        out.replications[static_cast<std::size_t>(r)] = std::move(*hit);
        done[static_cast<std::size_t>(r)] = true;
      }
    }
  }

  std::atomic<int> next{0};
  std::mutex cache_mutex;
  auto worker = [&] {
    for (int r = next++; r < reps; r = next++) {
      if (done[static_cast<std::size_t>(r)]) continue;
      ReplicationResult res = run_replication(scenario, r);
      if (cache) {
        std::lock_guard<std::mutex> lock(cache_mutex);
        cache->save(res);
      }
      out.replications[static_cast<std::size_t>(r)] = std::move(res);
    }
  };
  const int workers = std::max(1, std::min(threads, reps));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& r : out.replications) out.n_failed += r.ok ? 0 : 1;
  if (out.n_failed > 0.02 * reps) {
    std::string first;
    for (const auto& r : out.replications) {
      if (!r.ok) {
        first = r.error;
        break;
      }
    }
    throw NumericalError("study failed: " + std::to_string(out.n_failed) + " of " + std::to_string(reps) +
                         " replications failed (first error: " + first + ")");
  }
  const auto params = study_parameters(scenario.truth);
  out.cdml = compute_metrics(out.replications, params, false, "cdml");
  out.gibbs = compute_metrics(out.replications, params, true, "gibbs");
  return out;
}

}  // namespace hlmi
