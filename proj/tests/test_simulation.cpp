#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "hlmi/errors.hpp"
#include "hlmi/simulation.hpp"
#include "test_util.hpp"

using namespace hlmi;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Fixed replications served from memory so run_study never runs the sampler.
class FakeCache : public ReplicationCache {
 public:
  explicit FakeCache(std::vector<ReplicationResult> reps) : reps_(std::move(reps)) {}
  std::optional<ReplicationResult> load(int index) override { return reps_.at(static_cast<std::size_t>(index)); }
  void save(const ReplicationResult&) override { ++saves; }
  int saves = 0;

 private:
  std::vector<ReplicationResult> reps_;
};

ReplicationResult synthetic_rep(int index, const std::vector<StudyParameter>& params, double shift, bool ok = true) {
  ReplicationResult r;
  r.index = index;
  r.ok = ok;
  if (!ok) {
    r.error = "synthetic failure";
    return r;
  }
  for (const auto& p : params) {
    const double est = p.truth + shift;
    r.cdml.push_back({est, 0.5, est - 1.0, est + 1.0});
    r.gibbs.push_back({est, 0.5, est - 0.25, est + 0.25});
  }
  r.psrf_pass_fraction = 1.0;
  r.max_psrf = 1.01;
  r.missing_rates = {0.2, 0.2, 0.2};
  return r;
}

}  // namespace

TEST_CASE("general-location generator moments") {
  Rng rng(101);
  TrueParameters truth;
  const Dataset data = gen_general_location(100000, 1, rng, truth, 0.3);
  double n1 = 0, c2_d1 = 0, resid_ss = 0, c1_resid = 0;
  for (const auto& cl : data.clusters) {
    const int d = cl.d[0];
    const double c1 = cl.c[0], c2 = cl.c[1];
    n1 += d;
    if (d == 1) c2_d1 += c2;
    c1_resid += c1 - (0.5 - 0.5 * c2 + 1.2 * d);
    const double mean = 1.0 + c1 + c2 + d + c1 * d;
    resid_ss += (cl.y[0] - mean) * (cl.y[0] - mean);
    CHECK(!cl.c_missing[0]);
    CHECK(!cl.y_missing[0]);
  }
  const double j = 100000.0;
  CHECK(std::abs(n1 / j - 0.3) < 4.0 * std::sqrt(0.21 / j));
  CHECK(std::abs(c2_d1 / n1 - 0.5) < 4.0 / std::sqrt(n1));
  CHECK(std::abs(c1_resid / j) < 4.0 / std::sqrt(j));
  // Var(Y | covariates) = tau + sigma^2 = 20; the SE of a variance is about var * sqrt(2 / n).
  CHECK(std::abs(resid_ss / j - 20.0) < 4.0 * 20.0 * std::sqrt(2.0 / j));
}

TEST_CASE("latent-normal generator moments") {
  Rng rng(202);
  const Dataset data = gen_latent_normal(100000, 1, rng, {}, 2.2);
  const double j = 100000.0;
  double n1 = 0, c2_sum = 0, e1_d = 0, e1_ss = 0;
  for (const auto& cl : data.clusters) {
    const double e1 = cl.c[0] - 0.75 - 0.7 * cl.c[1];
    n1 += cl.d[0];
    c2_sum += cl.c[1];
    e1_d += e1 * cl.d[0];
    e1_ss += e1 * e1;
  }
  // D* ~ N(1.5, 2) marginally.
  const double p1 = 1.0 - normal_cdf(0.7 / std::sqrt(2.0));
  CHECK(std::abs(p1 - 0.3103) < 1e-3);
  CHECK(std::abs(n1 / j - p1) < 4.0 * std::sqrt(p1 * (1 - p1) / j));
  CHECK(std::abs(c2_sum / j - 2.0) < 4.0 / std::sqrt(j));
  CHECK(std::abs(e1_ss / j - 1.25) < 4.0 * 1.25 * std::sqrt(2.0 / j));
  // E[e1 1{D* > kappa}] = cov(e1, D* | C2) * E[phi(kappa - m(C2))], and the
  // expectation is the N(2, 2) density at kappa + 0.5.
  const double dens = std::exp(-0.49 / 4.0) / std::sqrt(2.0 * std::numbers::pi * 2.0);
  const double expected = -0.5 * dens;
  CHECK(std::abs(e1_d / j - expected) < 4.0 * std::sqrt(1.25 * p1 / j));

  Rng rng2(203);
  const Dataset none = gen_latent_normal(500, 2, rng2, {}, std::numeric_limits<double>::infinity());
  for (const auto& cl : none.clusters) CHECK(cl.d[0] == 0);
}

TEST_CASE("ampute_mar") {
  Rng g(7);
  Dataset complete = gen_general_location(20000, 4, g);
  for (auto& cl : complete.clusters) cl.x = Eigen::MatrixXd::Constant(4, 1, 2.5);

  SUBCASE("zero coefficients delete half") {
    MarSpec mar{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    Rng rng(8);
    const Dataset out = ampute_mar(complete, mar, rng);
    double y = 0, c = 0, d = 0;
    for (const auto& cl : out.clusters) {
      for (bool m : cl.y_missing) y += m;
      c += cl.c_missing[0];
      d += cl.d_missing[0];
      CHECK(!cl.c_missing[1]);
      CHECK(cl.x(0, 0) == 2.5);
      if (cl.c_missing[0]) CHECK(std::isnan(cl.c[0]));
      if (cl.d_missing[0]) CHECK(cl.d[0] == -1);
    }
    CHECK(std::abs(y / 80000.0 - 0.5) < 0.01);
    CHECK(std::abs(c / 20000.0 - 0.5) < 0.02);
    CHECK(std::abs(d / 20000.0 - 0.5) < 0.02);
  }

  SUBCASE("rates increase with the intercept") {
    double prev = -1.0;
    for (double c0 : {-3.0, -1.0, 0.0, 1.0}) {
      MarSpec mar{{c0, 0.3, 0.5}, {c0, 0.3, 0}, {c0, 0.3, 0}};
      Rng rng(9);
      const Dataset out = ampute_mar(complete, mar, rng);
      double c = 0;
      for (const auto& cl : out.clusters) c += cl.c_missing[0];
      CHECK(c > prev);
      prev = c;
    }
  }

  SUBCASE("observed entries are untouched and results are reproducible") {
    MarSpec mar;
    Rng a(10), b(10);
    const Dataset x = ampute_mar(complete, mar, a), y = ampute_mar(complete, mar, b);
    for (std::size_t j = 0; j < complete.clusters.size(); ++j) {
      const auto &cx = x.clusters[j], &cy = y.clusters[j], &c0 = complete.clusters[j];
      CHECK(cx.c_missing == cy.c_missing);
      CHECK(cx.y_missing == cy.y_missing);
      CHECK(cx.c[1] == c0.c[1]);
      for (std::size_t i = 0; i < c0.size(); ++i)
        if (!cx.y_missing[i]) CHECK(cx.y[i] == c0.y[i]);
    }
  }

  SUBCASE("C2 must be observed") {
    Dataset bad = complete;
    bad.clusters[0].c_missing[1] = true;
    Rng rng(1);
    CHECK_THROWS_AS(ampute_mar(bad, MarSpec{}, rng), InputError);
  }
}

TEST_CASE("generate_replication is a pure function of seed and index") {
  SimScenario s;
  s.n_clusters = 30;
  const auto a = generate_replication(s, 3), b = generate_replication(s, 3), c = generate_replication(s, 4);
  CHECK(a.complete.clusters[5].y == b.complete.clusters[5].y);
  CHECK(a.observed.clusters[5].y_missing == b.observed.clusters[5].y_missing);
  CHECK(a.complete.clusters[5].y != c.complete.clusters[5].y);
  s.ampute = false;
  const auto d = generate_replication(s, 3);
  CHECK(d.observed.complete());
  CHECK(d.complete.clusters[0].y == a.complete.clusters[0].y);
}

TEST_CASE("compute_metrics") {
  TrueParameters truth;
  const auto params = study_parameters(truth);
  REQUIRE(params.size() == 7);
  CHECK(params[0].name == "tau");
  CHECK(params[4].name == "beta[D=1]");
  CHECK(params[5].name == "beta[C2]");

  std::vector<ReplicationResult> reps;
  const std::vector<double> shifts{0.1, -0.3, 0.5, 2.0, 0.0};
  for (int r = 0; r < 5; ++r) reps.push_back(synthetic_rep(r, params, shifts[static_cast<std::size_t>(r)]));
  reps.push_back(synthetic_rep(5, params, 0.0, false));

  const MetricsTable t = compute_metrics(reps, params, true, "gibbs");
  REQUIRE(t.rows.size() == 7);
  const auto& tau = t.rows[0];
  CHECK(tau.n == 5);
  const double mean_shift = 2.3 / 5.0;
  CHECK(tau.pct_bias == doctest::Approx(100.0 * mean_shift / 4.0));
  double ss = 0.0;
  for (double s : shifts) ss += (s - mean_shift) * (s - mean_shift);
  CHECK(tau.ese == doctest::Approx(std::sqrt(ss / 4.0)));
  CHECK(tau.pct_bias_mcse == doctest::Approx(100.0 * std::sqrt(ss / 4.0) / std::sqrt(5.0) / 4.0));
  CHECK(tau.ase == doctest::Approx(0.5));
  CHECK(tau.coverage == doctest::Approx(0.4));  // |shift| <= 0.25 for 0.1 and 0.0
  CHECK(compute_metrics(reps, params, false, "cdml").rows[0].coverage == doctest::Approx(0.8));

  auto shuffled = reps;
  std::mt19937 eng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), eng);
  const MetricsTable u = compute_metrics(shuffled, params, true, "gibbs");
  for (std::size_t k = 0; k < 7; ++k) {
    CHECK(u.rows[k].pct_bias == t.rows[k].pct_bias);
    CHECK(u.rows[k].ese == t.rows[k].ese);
    CHECK(u.rows[k].coverage == t.rows[k].coverage);
  }
}

TEST_CASE("run_study failure threshold") {
  SimScenario s;
  s.replications = 50;
  const auto params = study_parameters(s.truth);
  std::vector<ReplicationResult> reps;
  for (int r = 0; r < 50; ++r) reps.push_back(synthetic_rep(r, params, 0.0, r != 7));

  FakeCache one(reps);
  const StudyResult res = run_study(s, 1, &one);
  CHECK(res.n_failed == 1);
  CHECK(res.gibbs.rows[0].n == 49);
  CHECK(res.gibbs.rows[2].pct_bias == doctest::Approx(0.0));
  CHECK(one.saves == 0);

  reps[11].ok = false;
  FakeCache two(reps);
  CHECK_THROWS_AS(run_study(s, 1, &two), NumericalError);
}

TEST_CASE("noiseless scenario is recovered without bias") {
  SimScenario s;
  s.n_clusters = 40;
  s.replications = 2;
  s.truth.tau = 1e-8;
  s.truth.sigma2 = 1e-8;
  s.sampler.burn_in = 50;
  s.sampler.post_burn = 50;
  const StudyResult res = run_study(s, 2);
  CHECK(res.n_failed == 0);
  for (std::size_t k = 2; k < 7; ++k) CHECK(std::abs(res.cdml.rows[k].pct_bias) < 1e-2);
  for (const auto& r : res.replications) {
    CHECK(r.missing_rates.size() == 3);
    CHECK(r.psrf_pass_fraction >= 0.0);
  }
}
