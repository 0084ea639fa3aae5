#include <doctest.h>

#include <cmath>

#include "hlmi/diagnostics.hpp"
#include "hlmi/errors.hpp"
#include "hlmi/random.hpp"

using namespace hlmi;

namespace {

ChainStore store_of(const std::vector<Eigen::VectorXd>& chains, const std::string& name = "x") {
  ChainStore s;
  s.names = {name};
  for (const auto& c : chains) {
    Chain ch;
    ch.draws = c;
    s.chains.push_back(ch);
  }
  return s;
}

}  // namespace

TEST_CASE("psrf edge cases and hand example") {
  const Eigen::VectorXd a = (Eigen::VectorXd(4) << 1.0, 3.0, 2.0, 5.0).finished();
  CHECK(psrf({a, a}) == doctest::Approx(std::sqrt(3.0 / 4.0)).epsilon(1e-14));

  const double r = psrf({Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(4)});
  CHECK(std::isinf(r));
  CHECK(r > 0);

  // Chains (1,2,3,4) and (3,4,5,6): means 2.5 and 4.5, within variances 5/3,
  // so W = 5/3; B = n/(m-1) * sum (mean - 3.5)^2 = 4 * 2 = 8.
  const Eigen::VectorXd c1 = (Eigen::VectorXd(4) << 1, 2, 3, 4).finished();
  const Eigen::VectorXd c2 = (Eigen::VectorXd(4) << 3, 4, 5, 6).finished();
  const double w = 5.0 / 3.0, b = 8.0;
  CHECK(psrf({c1, c2}) == doctest::Approx(std::sqrt((0.75 * w + b / 4.0) / w)).epsilon(1e-14));

  CHECK_THROWS_AS(psrf({c1}), DomainError);
  CHECK_THROWS_AS(psrf({c1, Eigen::VectorXd::Zero(3)}), DomainError);
}

TEST_CASE("psrf of independent standard normal chains") {
  int below = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed, 77);
    std::vector<Eigen::VectorXd> chains(2, Eigen::VectorXd(2500));
    for (auto& c : chains)
      for (auto& v : c) v = rng.standard_normal();
    below += psrf(chains) < 1.02 ? 1 : 0;
  }
  CHECK(below >= 99);
}

TEST_CASE("percentile interpolation") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = 100 - i;  // unsorted input
  CHECK(percentile(v, 0.025) == doctest::Approx(3.475).epsilon(1e-14));
  CHECK(percentile(v, 0.975) == doctest::Approx(97.525).epsilon(1e-14));
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 100.0);
  CHECK(percentile(std::vector<double>{4.0}, 0.3) == 4.0);
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 0.5), DomainError);
  CHECK_THROWS_AS(percentile(v, 1.5), DomainError);
}

TEST_CASE("summarize") {
  const auto constant = summarize(store_of({Eigen::VectorXd::Constant(20, 0.1), Eigen::VectorXd::Constant(20, 0.1)}));
  CHECK(constant[0].mean == 0.1);
  CHECK(constant[0].sd == 0.0);
  CHECK(constant[0].ci_lo == 0.1);
  CHECK(constant[0].ci_hi == 0.1);

  Rng rng(3);
  Eigen::VectorXd a(50), b(50);
  for (auto& v : a) v = rng.standard_normal();
  for (auto& v : b) v = 2.0 + rng.standard_normal();
  const auto ab = summarize(store_of({a, b}));
  const auto ba = summarize(store_of({b, a}));
  CHECK(ab[0].mean == ba[0].mean);
  CHECK(ab[0].sd == ba[0].sd);
  CHECK(ab[0].ci_lo == ba[0].ci_lo);
  CHECK(ab[0].ci_hi == ba[0].ci_hi);
  CHECK(ab[0].psrf == doctest::Approx(ba[0].psrf).epsilon(1e-14));
  CHECK(ab[0].psrf == doctest::Approx(psrf({a, b})).epsilon(1e-14));
  CHECK(ab[0].ci_lo <= ab[0].ci_hi);

  Eigen::VectorXd a_rev = a.reverse();
  const auto permuted = summarize(store_of({a_rev, b}));
  CHECK(permuted[0].mean == ab[0].mean);
  CHECK(permuted[0].sd == ab[0].sd);

  std::vector<double> pooled(a.data(), a.data() + 50);
  pooled.insert(pooled.end(), b.data(), b.data() + 50);
  CHECK(ab[0].ci_lo == doctest::Approx(percentile(pooled, 0.025)).epsilon(1e-14));

  const auto single = summarize(store_of({a}));
  CHECK(std::isnan(single[0].psrf));
  CHECK_THROWS_AS(summarize(ChainStore{}), DomainError);
}
