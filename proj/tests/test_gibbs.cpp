#include <doctest.h>

#include <cmath>
#include <string>

#include "hlmi/errors.hpp"
#include "hlmi/gibbs.hpp"
#include "hlmi/simulation.hpp"
#include "test_util.hpp"

using namespace hlmi;

namespace {

Dataset small_data(std::uint64_t seed, int clusters = 30) {
  Rng rng(seed);
  return gen_general_location(clusters, 3, rng);
}

bool same_store(const ChainStore& a, const ChainStore& b) {
  if (a.chains.size() != b.chains.size()) return false;
  for (std::size_t c = 0; c < a.chains.size(); ++c) {
    if (a.chains[c].draws != b.chains[c].draws) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("run record counts and reproducibility") {
  const ModelSpec spec = simulation_model_spec();
  Rng amp(5);
  const Dataset data = ampute_mar(small_data(1), MarSpec{}, amp);
  const GibbsSampler sampler(spec, data);

  SamplerConfig cfg;
  cfg.burn_in = 10;
  cfg.post_burn = 10;
  cfg.n_chains = 2;
  cfg.seed = 3;
  const ChainStore a = sampler.run(cfg);
  CHECK(a.chains.size() == 2);
  CHECK(a.chains[0].draws.rows() == 10);
  CHECK(a.chains[0].draws.cols() == static_cast<Eigen::Index>(a.names.size()));
  CHECK(a.names == parameter_names(spec));

  CHECK(same_store(a, sampler.run(cfg)));
  cfg.threads = 2;
  CHECK(same_store(a, sampler.run(cfg)));
  CHECK(a.chains[0].draws != a.chains[1].draws);

  cfg.seed = 4;
  CHECK(!same_store(a, sampler.run(cfg)));

  cfg.thin = 3;
  cfg.store_latent = true;
  const ChainStore thinned = sampler.run(cfg);
  CHECK(thinned.chains[0].draws.rows() == 3);
  CHECK(thinned.chains[0].latent.rows() == 3);
  CHECK(thinned.chains[0].latent.cols() == static_cast<Eigen::Index>(thinned.latent_names.size()));
  CHECK(thinned.latent_names.size() >= data.n_clusters());

  cfg.post_burn = 0;
  CHECK_THROWS_AS(sampler.run(cfg), InputError);
}

TEST_CASE("parameter names") {
  const auto names = parameter_names(simulation_model_spec());
  const std::vector<std::string> expect{
      "beta[(Intercept)]", "beta[C1]", "beta[C2]", "beta[D=1]", "beta[C1:D=1]", "tau", "sigma2",
      "alpha[C1~(Intercept)]", "alpha[C1~D=1]", "alpha[C2~(Intercept)]", "alpha[C2~D=1]",
      "T[C1,C1]", "T[C1,C2]", "T[C2,C2]", "pi[D=0]", "pi[D=1]"};
  CHECK(names == expect);
}

TEST_CASE("init_state rules") {
  const ModelSpec spec = simulation_model_spec();
  const Dataset complete = small_data(2);
  const GibbsSampler s(spec, complete);
  Rng rng(1);
  const ParamState st = s.init_state(rng);
  // Complete data: cells are observed and pi is the prior-smoothed frequency.
  double ones = 0;
  for (const auto& cl : complete.clusters) ones += cl.d[0];
  const double j = static_cast<double>(complete.n_clusters());
  CHECK(st.pi[1] == doctest::Approx((ones + 1.0) / (j + 2.0)).epsilon(1e-14));
  for (std::size_t k = 0; k < complete.n_clusters(); ++k) {
    CHECK(st.y[k] == complete.clusters[k].y);
    CHECK(st.c[k] == complete.clusters[k].c);
  }
  CHECK_NOTHROW(st.check(spec));

  Dataset no_c1 = complete;
  for (auto& cl : no_c1.clusters) {
    cl.c_missing[0] = true;
    cl.c[0] = std::nan("");
  }
  const GibbsSampler s2(spec, no_c1);
  Rng r1(7), r2(7);
  const ParamState a = s2.init_state(r1), b = s2.init_state(r2);
  // Starting every C1 at 0 zeroes a design column, so the start is redrawn
  // around 0 with unit spread.
  double spread = 0.0;
  for (const auto& c : a.c) spread += c[0] * c[0];
  CHECK(spread > 0.0);
  CHECK(a.c == b.c);
  CHECK(a.d == b.d);
  CHECK(a.beta == b.beta);

  // One observed cluster at D = 1 and the rest of D missing: a start with
  // every missing D at 0 would make D and C1:D proportional.
  Dataset sparse = complete;
  bool kept = false;
  for (auto& cl : sparse.clusters) {
    if (cl.d[0] == 1 && !kept) {
      kept = true;
      continue;
    }
    if (cl.d[0] == 1) {
      cl.d_missing[0] = true;
      cl.d[0] = -1;
    }
  }
  REQUIRE(kept);
  const GibbsSampler s3(spec, sparse);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    const ParamState st3 = s3.init_state(r);
    int ones3 = 0;
    for (const auto& d : st3.d) ones3 += d[0];
    CHECK(ones3 >= 2);
  }

  Dataset no_y = complete;
  for (auto& cl : no_y.clusters) cl.y_missing.assign(cl.size(), true);
  CHECK_THROWS_AS(GibbsSampler(spec, no_y), InputError);
}

TEST_CASE("sweep touches only parameters and missing slots") {
  const ModelSpec spec = simulation_model_spec();
  const Dataset complete = small_data(3);
  const GibbsSampler full(spec, complete);
  Rng rng(2);
  ParamState st = full.init_state(rng);
  const auto y0 = st.y;
  const auto c0 = st.c;
  const auto d0 = st.d;
  const auto theta0 = flatten_parameters(st, spec);
  full.sweep(st, rng);
  CHECK(st.y == y0);
  CHECK(st.c == c0);
  CHECK(st.d == d0);
  CHECK(flatten_parameters(st, spec) != theta0);

  Dataset one = complete;
  one.clusters[4].c_missing[0] = true;
  one.clusters[4].c[0] = std::nan("");
  const GibbsSampler part(spec, one);
  Rng r2(9);
  st = part.init_state(r2);
  const auto before = st;
  part.sweep(st, r2);
  for (std::size_t j = 0; j < one.n_clusters(); ++j) {
    CHECK(st.y[j] == before.y[j]);
    CHECK(st.d[j] == before.d[j]);
    CHECK(st.c[j][1] == before.c[j][1]);
    if (j != 4) CHECK(st.c[j][0] == before.c[j][0]);
  }
  CHECK(st.c[4][0] != before.c[4][0]);

  // Same state and same generator state give the same sweep.
  ParamState x = before, y = before;
  Rng g1(11), g2(11);
  part.sweep(x, g1);
  part.sweep(y, g2);
  CHECK(flatten_parameters(x, spec) == flatten_parameters(y, spec));
  CHECK(x.c == y.c);
}

TEST_CASE("masked interactions stay zero") {
  const ModelSpec spec = simulation_model_spec();
  Rng amp(4);
  const Dataset data = ampute_mar(small_data(4), MarSpec{}, amp);
  const GibbsSampler s(spec, data);
  Rng rng(3);
  ParamState st = s.init_state(rng, 1);
  for (int it = 0; it < 50; ++it) {
    s.sweep(st, rng);
    const Eigen::MatrixXd b = interaction_matrix(st.beta, spec);
    CHECK(b(1, 0) == 0.0);
    CHECK_NOTHROW(st.check(spec));
  }
}

TEST_CASE("stationarity: regression coefficients match the least-squares posterior mean") {
  // Complete data with tau held near zero: the model is a linear regression
  // with flat prior on beta, so E[beta | y] is the OLS estimate exactly.
  const ModelSpec spec = testutil::small_spec(1, 1, 1, true);
  Rng gen(17);
  Dataset data;
  for (int j = 0; j < 40; ++j) {
    const int d = gen.uniform() < 0.4 ? 1 : 0;
    const double c = gen.standard_normal() + d;
    std::vector<double> y;
    Eigen::MatrixXd x(2, 1);
    for (int i = 0; i < 2; ++i) {
      x(i, 0) = gen.standard_normal();
      y.push_back(1.0 + 0.5 * c - 1.0 * d + 0.7 * x(i, 0) + 0.3 * c * d + gen.standard_normal());
    }
    Cluster cl = testutil::make_cluster(y, Eigen::VectorXd::Constant(1, c), {d}, 1);
    cl.x = x;
    data.clusters.push_back(cl);
  }
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(5, 5);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(5);
  for (const auto& cl : data.clusters) {
    for (int i = 0; i < 2; ++i) {
      const Eigen::VectorXd row = build_design_row(cl.c, cl.d, cl.x.row(i).transpose(), spec);
      xtx += row * row.transpose();
      xty += row * cl.y[static_cast<std::size_t>(i)];
    }
  }
  const Eigen::VectorXd ols = xtx.ldlt().solve(xty);

  GibbsSampler s(spec, data);
  s.set_fixed_tau(1e-8);
  Rng rng(23);
  ParamState st = s.init_state(rng);
  st.beta << 1.0, 0.5, -1.0, 0.7, 0.3;
  st.sigma2 = 1.0;
  const int sweeps = 5000, batches = 50, per = sweeps / batches;
  Eigen::MatrixXd batch_means = Eigen::MatrixXd::Zero(batches, 5);
  for (int it = 0; it < sweeps; ++it) {
    s.sweep(st, rng);
    batch_means.row(it / per) += st.beta.transpose() / per;
  }
  const Eigen::VectorXd mean = batch_means.colwise().mean();
  for (int k = 0; k < 5; ++k) {
    const double sd = std::sqrt((batch_means.col(k).array() - mean[k]).square().sum() / (batches - 1));
    const double mcse = sd / std::sqrt(double(batches));
    CHECK(std::abs(mean[k] - ols[k]) < 3.0 * mcse);
  }
}

TEST_CASE("errors carry chain and iteration context") {
  // Every cluster has the same C, so C is collinear with the intercept.
  const ModelSpec spec = testutil::small_spec(1, 0);
  Dataset data;
  for (int j = 0; j < 5; ++j) data.clusters.push_back(testutil::make_cluster({double(j), 1.0}, Eigen::VectorXd::Constant(1, 2.0), {}));
  SamplerConfig cfg;
  cfg.burn_in = 1;
  cfg.post_burn = 1;
  try {
    GibbsSampler(spec, data).run(cfg);
    FAIL("expected a rank-deficiency failure");
  } catch (const RankDeficientError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("chain 0, iteration 1") != std::string::npos);
    CHECK(!e.columns().empty());
  }
}

TEST_CASE("model without categorical covariates runs") {
  const ModelSpec spec = testutil::small_spec(2, 0);
  Rng gen(3);
  Dataset data;
  for (int j = 0; j < 20; ++j) {
    const Eigen::Vector2d c(gen.standard_normal(), gen.standard_normal());
    data.clusters.push_back(testutil::make_cluster({gen.standard_normal() + c[0], gen.standard_normal()}, c, {}));
  }
  data.clusters[3].c_missing[1] = true;
  data.clusters[3].c[1] = std::nan("");
  SamplerConfig cfg;
  cfg.burn_in = 20;
  cfg.post_burn = 20;
  const ChainStore store = GibbsSampler(spec, data).run(cfg);
  CHECK(store.names.back() == "T[C2,C2]");
  CHECK(store.chains[1].draws.allFinite());
}
