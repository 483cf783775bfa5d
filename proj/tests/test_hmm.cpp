#include "oracles.hpp"

#include "hmmt/errors.hpp"
#include "hmmt/hmm.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <random>

using namespace hmmt;
using doctest::Approx;

namespace {

std::vector<double>
values(const Density& f, const std::vector<double>& x)
{
  std::vector<double> out;
  for (double v : x)
    out.push_back(hmmt::pdf(f, v));
  return out;
}

void
check_against_enumeration(const HmmParams& params, const std::vector<double>& x, const PosteriorState& got, double tol)
{
  const auto ref = oracle::enumerate(params.initial.p1(), params.transitions.a00(), params.transitions.a11(),
                                     values(params.f0, x), values(params.f1, x));
  REQUIRE(got.p.size() == x.size());
  REQUIRE(got.xi.size() == x.size() - 1);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(got.p[i] - ref.p[i]) <= tol);
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(got.xi[i][j][k] - ref.xi[i][j][k]) <= tol);
  CHECK(std::abs(got.loglik - ref.loglik) <= tol * std::max(1.0, std::abs(ref.loglik)));
}

HmmParams
random_params(std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> prob(0.02, 0.98);
  std::normal_distribution<double> n01;
  std::vector<double> pts(1 + rng() % 6), w(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = 3.0 * n01(rng);
    w[i] = prob(rng);
  }
  return HmmParams{ TransitionMatrix(prob(rng), prob(rng)), StateProbabilities(prob(rng)),
                    GaussianDensity(0.5 * n01(rng), 0.5 + prob(rng)),
                    WeightedKde(pts, w, 0.3 + prob(rng)) };
}

} // namespace

TEST_CASE("transition matrix rows sum to one and entries are clamped")
{
  const TransitionMatrix t(0.95, 0.2);
  CHECK(t.a00() + t.a01() == Approx(1.0).epsilon(1e-12));
  CHECK(t.a10() + t.a11() == Approx(1.0).epsilon(1e-12));
  const TransitionMatrix edge(1.0, 0.0);
  CHECK(edge.a01() > 0.0);
  CHECK(edge.a11() > 0.0);
  CHECK(edge.a01() == Approx(kMinProbability));
  CHECK(t(0, 1) == t.a01());
  CHECK(t(1, 0) == t.a10());
}

TEST_CASE("stationary distribution")
{
  CHECK(stationary_distribution(TransitionMatrix(0.95, 0.8)).p1() == Approx(0.2).epsilon(1e-12));
  CHECK(stationary_distribution(TransitionMatrix(0.5, 0.5)).p1() == Approx(0.5).epsilon(1e-12));
  CHECK(stationary_distribution(TransitionMatrix(0.95, 0.2)).p1() == Approx(0.0588235).epsilon(1e-6));
  const TransitionMatrix t(0.7, 0.35);
  const double pi1 = stationary_distribution(t).p1();
  CHECK((1.0 - pi1) * t.a01() + pi1 * t.a11() == Approx(pi1).epsilon(1e-12));
}

TEST_CASE("one observation with identical emissions gives one half")
{
  const HmmParams params{ TransitionMatrix(0.9, 0.6), StateProbabilities(0.5), GaussianDensity(0, 1),
                          GaussianDensity(0, 1) };
  const std::vector<double> x{ 0.37 };
  const auto post = forward_backward(params, x);
  CHECK(post.p[0] == Approx(0.5).epsilon(1e-14));
  CHECK(post.xi.empty());
  const auto brute = brute_force_posterior(params, x);
  CHECK(brute.p[0] == Approx(post.p[0]).epsilon(1e-14));
  CHECK(brute.loglik == Approx(post.loglik).epsilon(1e-14));
}

TEST_CASE("identical emissions give the chain marginals")
{
  const TransitionMatrix t(0.83, 0.41);
  const double psi1 = 0.3;
  const HmmParams params{ t, StateProbabilities(psi1), GaussianDensity(1, 2), GaussianDensity(1, 2) };
  const std::vector<double> x{ -1.0, 0.4, 3.0 };
  const auto post = forward_backward(params, x);
  double q = psi1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(post.p[i] == Approx(q).epsilon(1e-12));
    q = (1.0 - q) * t.a01() + q * t.a11();
  }
}

TEST_CASE("eight observations match enumeration")
{
  const HmmParams params{ TransitionMatrix(0.9, 0.7), StateProbabilities(0.25), GaussianDensity(0, 1),
                          WeightedKde({ -2.0, 2.5, 4.0 }, { 0.2, 0.5, 0.3 }, 0.8) };
  const std::vector<double> x{ 0.1, -0.4, 2.2, 3.9, 0.3, -2.1, 1.2, 2.6 };
  check_against_enumeration(params, x, forward_backward(params, x), 1e-10);
  check_against_enumeration(params, x, brute_force_posterior(params, x), 1e-10);
}

TEST_CASE("near-degenerate transitions concentrate on the constant paths")
{
  const HmmParams params{ TransitionMatrix(1.0, 1.0), StateProbabilities(0.5), GaussianDensity(0, 1),
                          GaussianDensity(2, 1) };
  const std::vector<double> x{ 0.5, 1.8 };
  const auto post = brute_force_posterior(params, x);
  const double w0 = oracle::normal_pdf(0.5, 0, 1) * oracle::normal_pdf(1.8, 0, 1);
  const double w1 = oracle::normal_pdf(0.5, 2, 1) * oracle::normal_pdf(1.8, 2, 1);
  const double p1 = w1 / (w0 + w1);
  CHECK(post.p[0] == Approx(p1).epsilon(1e-7));
  CHECK(post.p[1] == Approx(p1).epsilon(1e-7));
  CHECK(post.xi[0][0][1] < 1e-8);
  CHECK(post.xi[0][1][0] < 1e-8);
  CHECK(post.loglik == Approx(std::log(0.5 * (w0 + w1))).epsilon(1e-7));
}

TEST_CASE("brute force and forward-backward agree on a random ten-point instance")
{
  std::mt19937_64 rng(10);
  const auto params = random_params(rng);
  std::normal_distribution<double> n01;
  std::vector<double> x(10);
  for (auto& v : x)
    v = 2.0 * n01(rng);
  const auto a = forward_backward(params, x);
  const auto b = brute_force_posterior(params, x);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(a.p[i] - b.p[i]) <= 1e-10);
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(a.xi[i][j][k] - b.xi[i][j][k]) <= 1e-10);
  CHECK(a.loglik == Approx(b.loglik).epsilon(1e-10));
}

TEST_CASE("forward-backward matches enumeration on random instances")
{
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 100; ++trial) {
    const auto params = random_params(rng);
    std::vector<double> x(1 + rng() % 12);
    for (auto& v : x)
      v = 2.5 * n01(rng);
    check_against_enumeration(params, x, forward_backward(params, x), 1e-10);
  }
}

TEST_CASE("pair posteriors marginalize to the point posteriors")
{
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const auto params = random_params(rng);
  std::vector<double> x(400);
  for (auto& v : x)
    v = 2.0 * n01(rng);
  const auto post = forward_backward(params, x);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const auto& t = post.xi[i];
    CHECK(t[0][0] + t[0][1] + t[1][0] + t[1][1] == Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(t[1][0] + t[1][1] - post.p[i]) <= 1e-10);
    CHECK(std::abs(t[0][1] + t[1][1] - post.p[i + 1]) <= 1e-10);
    CHECK(std::abs(t[0][0] + t[0][1] - (1.0 - post.p[i])) <= 1e-10);
  }
  for (double p : post.p) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("log-likelihood is invariant under reversal at stationarity")
{
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 10; ++trial) {
    auto params = random_params(rng);
    params.initial = stationary_distribution(params.transitions);
    std::vector<double> x(50);
    for (auto& v : x)
      v = 2.0 * n01(rng);
    const double forward = forward_backward(params, x).loglik;
    std::reverse(x.begin(), x.end());
    const double backward = forward_backward(params, x).loglik;
    CHECK(std::abs(forward - backward) <= 1e-8);
  }
}

TEST_CASE("scaling the emissions shifts only the log-likelihood")
{
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  std::vector<double> l0(60), l1(60);
  for (std::size_t i = 0; i < l0.size(); ++i) {
    l0[i] = -0.5 * std::pow(n01(rng), 2);
    l1[i] = -0.5 * std::pow(n01(rng) - 1.0, 2) - 0.3;
  }
  const TransitionMatrix t(0.9, 0.6);
  const StateProbabilities init(0.2);
  const auto base = forward_backward(t, init, l0, l1);
  const double c = std::log(37.5);
  auto s0 = l0, s1 = l1;
  for (std::size_t i = 0; i < l0.size(); ++i) {
    s0[i] += c;
    s1[i] += c;
  }
  const auto scaled = forward_backward(t, init, s0, s1);
  for (std::size_t i = 0; i < l0.size(); ++i)
    CHECK(std::abs(scaled.p[i] - base.p[i]) <= 1e-12);
  for (std::size_t i = 0; i + 1 < l0.size(); ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(scaled.xi[i][j][k] - base.xi[i][j][k]) <= 1e-12);
  CHECK(scaled.loglik - base.loglik == Approx(60 * c).epsilon(1e-10));
}

TEST_CASE("an observation outside both supports raises EmissionUnderflow")
{
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::vector<double> l0{ -1.0, ninf, -2.0 };
  const std::vector<double> l1{ -1.5, ninf, -0.5 };
  try {
    forward_backward(TransitionMatrix(0.9, 0.5), StateProbabilities(0.3), l0, l1);
    FAIL("expected EmissionUnderflow");
  } catch (const EmissionUnderflow& e) {
    CHECK(e.index() == 1);
  }
  // only one state impossible is fine
  const std::vector<double> l0b{ -1.0, -2.0, -2.0 };
  const std::vector<double> l1b{ -1.5, -3.0, ninf };
  const auto post = forward_backward(TransitionMatrix(0.9, 0.5), StateProbabilities(0.3), l0b, l1b);
  CHECK(post.p[2] == 0.0);
}

TEST_CASE("brute force refuses long sequences")
{
  const HmmParams params{ TransitionMatrix(0.9, 0.5), StateProbabilities(0.3), GaussianDensity(0, 1),
                          GaussianDensity(1, 1) };
  std::vector<double> x(kBruteForceMaxLength + 1, 0.0);
  CHECK_THROWS_AS(brute_force_posterior(params, x), InstanceTooLarge);
}

TEST_CASE("a million observations stay finite")
{
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  std::vector<double> x(1000000);
  for (auto& v : x)
    v = n01(rng) + ((rng() % 10 == 0) ? 3.0 : 0.0);
  const HmmParams params{ TransitionMatrix(0.95, 0.4), StateProbabilities(0.1), GaussianDensity(0, 1),
                          GaussianDensity(3, 1) };
  const auto post = forward_backward(params, x);
  CHECK(std::isfinite(post.loglik));
  CHECK(post.loglik < 0.0);
  bool all_ok = true;
  for (double p : post.p)
    all_ok = all_ok && std::isfinite(p) && p >= 0.0 && p <= 1.0;
  CHECK(all_ok);
}
