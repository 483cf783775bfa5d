#include "oracles.hpp"

#include "hmmt/errors.hpp"
#include "hmmt/simulate.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace hmmt;
using doctest::Approx;

namespace {

struct Moments
{
  double mean, var;
};

Moments
moments(const std::vector<double>& v)
{
  double m = 0;
  for (double x : v)
    m += x;
  m /= v.size();
  double s = 0;
  for (double x : v)
    s += (x - m) * (x - m);
  return { m, s / (v.size() - 1) };
}

} // namespace

TEST_CASE("chain spends the stationary fraction in state 1")
{
  const TransitionMatrix t(0.95, 0.8);
  const auto theta = sample_chain(t, 1000000, 1);
  double ones = 0, n0 = 0, n00 = 0, n1 = 0, n11 = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    ones += theta[i];
    if (i + 1 < theta.size()) {
      if (theta[i] == 0) {
        ++n0;
        n00 += theta[i + 1] == 0;
      } else {
        ++n1;
        n11 += theta[i + 1] == 1;
      }
    }
  }
  CHECK(std::abs(ones / theta.size() - 0.2) < 0.005);
  CHECK(std::abs(n00 / n0 - 0.95) < 0.005);
  CHECK(std::abs(n11 / n1 - 0.8) < 0.005);
}

TEST_CASE("a chain that almost never leaves state 0 stays there")
{
  const TransitionMatrix t(1.0 - 1e-9, 1e-9);
  int all_zero = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto theta = sample_chain(t, 1000, seed);
    all_zero += std::all_of(theta.begin(), theta.end(), [](int s) { return s == 0; });
  }
  CHECK(all_zero == 100);
}

TEST_CASE("chain is deterministic given the seed")
{
  const TransitionMatrix t(0.9, 0.4);
  CHECK(sample_chain(t, 500, 3) == sample_chain(t, 500, 3));
  CHECK(sample_chain(t, 500, 3) != sample_chain(t, 500, 4));
  CHECK_THROWS_AS(sample_chain(t, 0, 3), std::invalid_argument);
}

TEST_CASE("uniform prior moments")
{
  const auto d = sample_prior(Prior(UniformPrior{ -9, 9 }), 1000000, 1);
  const auto m = moments(d);
  CHECK(std::abs(m.mean) < 0.02);
  CHECK(m.var == Approx(27.0).epsilon(0.01));
}

TEST_CASE("weibull prior mean")
{
  const auto m = moments(sample_prior(Prior(WeibullPrior{ 2, 5 }), 1000000, 2));
  CHECK(m.mean == Approx(5.0 * std::tgamma(1.5)).epsilon(0.01));
  CHECK(5.0 * std::tgamma(1.5) == Approx(4.43113).epsilon(1e-6));
}

TEST_CASE("noncentral chi-squared prior mean")
{
  const auto m = moments(sample_prior(Prior(NoncentralChiSquaredPrior{ 3, 2 }), 1000000, 3));
  CHECK(m.mean == Approx(5.0).epsilon(0.01));
  CHECK(m.var == Approx(2 * (3 + 2 * 2)).epsilon(0.02));
}

TEST_CASE("triangle prior moments")
{
  const auto m = moments(sample_prior(Prior(TrianglePrior{ -30, 30, 6 }), 1000000, 4));
  CHECK(m.mean == Approx((-30.0 + 30.0 + 6.0) / 3.0).epsilon(0.01));
  const double var = (900.0 + 900.0 + 36.0 - (-900.0) - (-180.0) - 180.0) / 18.0;
  CHECK(m.var == Approx(var).epsilon(0.01));
}

TEST_CASE("levy prior median")
{
  // median of c / Z^2 is c / (Phi^-1(3/4))^2
  auto d = sample_prior(Prior(LevyPrior{ 7 }), 200001, 5);
  std::nth_element(d.begin(), d.begin() + 100000, d.end());
  CHECK(d[100000] == Approx(7.0 / (0.6744897501960817 * 0.6744897501960817)).epsilon(0.02));
}

TEST_CASE("burr prior median")
{
  // F(m) = 1 - (1 + (m/s)^c)^-k = 1/2  =>  m = s (2^(1/k) - 1)^(1/c)
  auto d = sample_prior(Prior(BurrPrior{ 2, 0.5, 2 }), 200001, 6);
  std::nth_element(d.begin(), d.begin() + 100000, d.end());
  CHECK(d[100000] == Approx(2.0 * std::sqrt(3.0)).epsilon(0.02));
}

TEST_CASE("prior mixture draws from each part")
{
  const Prior mix({ { 0.5, UniformPrior{ 3, 8 } }, { 0.5, UniformPrior{ -8, -3 } } });
  const auto d = sample_prior(mix, 100000, 7);
  double pos = 0;
  for (double v : d) {
    CHECK(((v >= 3 && v <= 8) || (v >= -8 && v <= -3)));
    pos += v > 0;
  }
  CHECK(pos / d.size() == Approx(0.5).epsilon(0.02));
}

TEST_CASE("prior validation")
{
  CHECK_THROWS_AS(validate(Prior(UniformPrior{ 2, 1 })), std::invalid_argument);
  CHECK_THROWS_AS(validate(Prior({ { 0.5, UniformPrior{ 0, 1 } }, { 0.4, UniformPrior{ 0, 1 } } })),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(Prior(LevyPrior{ -1 })), std::invalid_argument);
  CHECK_NOTHROW(validate(Prior(BurrPrior{ 2, 0.5, 2 })));
}

TEST_CASE("prior densities integrate to one")
{
  for (const auto& name : scenario_names()) {
    const auto spec = scenario(name, 0.2);
    const auto shape = prior_shape(spec.g1);
    const double lo = std::isfinite(shape.lower) ? shape.lower : -200.0;
    const double hi = std::isfinite(shape.upper) ? shape.upper : 200.0;
    double mass = 0;
    std::vector<double> cuts{ lo };
    for (double b : shape.breakpoints)
      if (b > lo && b < hi)
        cuts.push_back(b);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    // stay just inside each piece, the density jumps at a uniform edge
    const double eps = 1e-9;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      mass += oracle::simpson(shape.pdf, cuts[k] + eps, cuts[k + 1] - eps, 200000);
    // heavy right tails (Levy, Burr) lose a little mass beyond 200
    CHECK_MESSAGE(mass == Approx(1.0).epsilon(0.25), name);
    CHECK_MESSAGE(mass <= 1.0 + 1e-6, name);
  }
}

TEST_CASE("scenario table")
{
  CHECK(scenario_names().size() == 12);
  const auto s = scenario("I", 0.4);
  CHECK(s.a00 == 0.95);
  CHECK(s.a11 == 0.4);
  CHECK(s.n == 2000);
  CHECK(std::holds_alternative<UniformPrior>(s.g1.parts.at(0).second));
  CHECK(scenario("III", 0.2, 500).n == 500);
  CHECK_THROWS_AS(scenario("XIII", 0.2), std::invalid_argument);
}

TEST_CASE("generate with zero noise returns the means")
{
  auto spec = scenario("I", 0.8, 300);
  spec.sigma = 0.0;
  const auto run = generate(spec, 11);
  CHECK(run.x == run.mu);
  for (std::size_t i = 0; i < run.theta.size(); ++i)
    if (run.theta[i] == 0)
      CHECK(run.mu[i] == 0.0);
}

TEST_CASE("generate is deterministic and matches the state structure")
{
  const auto spec = scenario("V", 0.6, 1000);
  const auto a = generate(spec, 99);
  const auto b = generate(spec, 99);
  CHECK(a.theta == b.theta);
  CHECK(a.mu == b.mu);
  CHECK(a.x == b.x);
  CHECK(a.seed == 99);
  CHECK(generate(spec, 100).x != a.x);
  REQUIRE(a.x.size() == 1000);
  for (std::size_t i = 0; i < a.theta.size(); ++i)
    if (a.theta[i] == 0)
      CHECK(a.mu[i] == 0.0);
}

TEST_CASE("fraction of signals follows the stationary probability")
{
  const auto spec = scenario("I", 0.001, 200000);
  const auto run = generate(spec, 5);
  double nonzero = 0;
  for (double m : run.mu)
    nonzero += m != 0.0;
  const double pi1 = stationary_distribution(TransitionMatrix(0.95, 0.001)).p1();
  CHECK(nonzero / run.mu.size() == Approx(pi1).epsilon(0.05));
}

TEST_CASE("mse")
{
  const std::vector<double> mu{ 1.0, -2.0, 0.5 };
  CHECK(mse(mu, mu) == 0.0);
  const std::vector<double> shifted{ 2.0, -1.0, 1.5 };
  CHECK(mse(shifted, mu) == Approx(1.0).epsilon(1e-15));
  const std::vector<double> hand{ 1.5, -2.0, -0.5 };
  CHECK(mse(hand, mu) == Approx((0.25 + 0.0 + 1.0) / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(mse(std::vector<double>{ 1.0 }, mu), LengthMismatch);
}

TEST_CASE("true marginal integrates to one and gives posterior means")
{
  for (const char* name : { "I", "II", "V", "VIII" }) {
    const auto spec = scenario(name, 0.2);
    const auto f1 = marginal_density(spec.g1, 1.0);
    const auto shape = prior_shape(spec.g1);
    const double lo = std::isfinite(shape.lower) ? shape.lower - 15 : -60;
    const double hi = std::isfinite(shape.upper) ? shape.upper + 15 : 60;
    CHECK_MESSAGE(oracle::simpson([&](double t) { return f1.pdf(t); }, lo, hi, 20000) ==
                    Approx(1.0).epsilon(1e-6),
                  name);
  }
  const auto spec = scenario("I", 0.2);
  const auto f1 = marginal_density(spec.g1, 1.0);
  for (double x : { -8.0, -2.0, 0.5, 4.0, 9.5 }) {
    const double num = oracle::simpson([&](double m) { return m * oracle::phi(x - m); }, -9, 9, 20000);
    const double den = oracle::simpson([&](double m) { return oracle::phi(x - m); }, -9, 9, 20000);
    CHECK(std::abs(x + hmmt::score(f1, x) - num / den) < 1e-3);
  }
}

TEST_CASE("true parameters")
{
  const auto spec = scenario("II", 0.6);
  const auto p = true_params(spec);
  CHECK(p.transitions.a00() == 0.95);
  CHECK(p.transitions.a11() == 0.6);
  CHECK(p.initial.p1() == Approx(0.05 / 0.45).epsilon(1e-12));
  CHECK(std::get<GaussianDensity>(p.f0).scale() == 1.0);
}

TEST_CASE("estimator names round trip")
{
  for (auto e : all_estimators())
    CHECK(parse_estimator(to_string(e)) == e);
  CHECK_THROWS_AS(parse_estimator("nope"), std::invalid_argument);
}

TEST_CASE("benchmark is deterministic and writes the csv layout")
{
  const auto spec = scenario("I", 0.2, 300);
  const std::vector<Estimator> est{ Estimator::oracle, Estimator::bayes, Estimator::tnd };
  BenchmarkOptions opts;
  opts.fit.bandwidth_grid = { 0.3, 0.8 };
  const auto a = run_benchmark(spec, est, 2, 7, opts);
  opts.threads = 2;
  const auto b = run_benchmark(spec, est, 2, 7, opts);
  REQUIRE(a.rows.size() == 3);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].mean_mse == b.rows[k].mean_mse);
    CHECK(a.rows[k].replications == 2);
    CHECK(a.rows[k].mse_by_replication == b.rows[k].mse_by_replication);
  }
  // the oracle knows the states and densities, so it beats the other rules on average
  CHECK(a.rows[0].mean_mse <= a.rows[2].mean_mse);
  std::ostringstream csv;
  const std::vector<BenchmarkTable> tables{ a };
  write_benchmark_csv(csv, tables);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "scenario,a11,estimator,mean_mse,se,replications");
  int rows = 0;
  while (std::getline(lines, line))
    ++rows;
  CHECK(rows == 3);
}

TEST_CASE("oracle benchmark value comes from the exact marginals")
{
  const auto spec = scenario("I", 0.2, 500);
  const std::vector<Estimator> est{ Estimator::oracle };
  const auto t = run_benchmark(spec, est, 1, 3);
  const auto run = generate(spec, derive_seed(3, { 0 }));
  const auto f1 = marginal_density(spec.g1, 1.0);
  const auto r = oracle_rule(run.x, run.theta, GaussianDensity(0, 1), f1, 1.0);
  CHECK(t.rows[0].mean_mse == Approx(mse(r.estimates, run.mu)).epsilon(1e-14));
}
