#include "hmmt/hmm.hpp"

#include "hmmt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hmmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double
clamp_probability(double p)
{
  if (!std::isfinite(p))
    throw std::invalid_argument("probability must be finite");
  return std::clamp(p, kMinProbability, 1.0 - kMinProbability);
}

inline double
log_add(double a, double b)
{
  if (a == kNegInf)
    return b;
  if (b == kNegInf)
    return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

} // namespace

TransitionMatrix::TransitionMatrix(double a00, double a11)
  : a00_(clamp_probability(a00))
  , a11_(clamp_probability(a11))
{}

double
TransitionMatrix::operator()(int from, int to) const
{
  if (from == 0)
    return to == 0 ? a00() : a01();
  return to == 0 ? a10() : a11();
}

StateProbabilities::StateProbabilities(double p1)
  : p1_(clamp_probability(p1))
{}

StateProbabilities
stationary_distribution(const TransitionMatrix& t)
{
  return StateProbabilities(t.a01() / (t.a01() + t.a10()));
}

PosteriorState
forward_backward(const TransitionMatrix& transitions,
                 const StateProbabilities& initial,
                 std::span<const double> log_f0,
                 std::span<const double> log_f1)
{
  const std::size_t n = log_f0.size();
  if (n == 0)
    throw std::invalid_argument("forward_backward: empty sequence");
  if (log_f1.size() != n)
    throw LengthMismatch(n, log_f1.size());

  double log_a[2][2];
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      log_a[j][k] = std::log(transitions(j, k));

  auto emission = [&](std::size_t i, int k) { return k == 0 ? log_f0[i] : log_f1[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(log_f0[i]) || std::isnan(log_f1[i]))
      throw std::invalid_argument("forward_backward: NaN emission density");
    if (log_f0[i] == kNegInf && log_f1[i] == kNegInf)
      throw EmissionUnderflow(i);
  }

  std::vector<std::array<double, 2>> fwd(n), bwd(n);
  fwd[0] = { std::log(initial.p0()) + emission(0, 0), std::log(initial.p1()) + emission(0, 1) };
  for (std::size_t i = 1; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      fwd[i][k] = log_add(fwd[i - 1][0] + log_a[0][k], fwd[i - 1][1] + log_a[1][k]) + emission(i, k);
    }
  }
  bwd[n - 1] = { 0.0, 0.0 };
  for (std::size_t i = n - 1; i-- > 0;) {
    const double next0 = emission(i + 1, 0) + bwd[i + 1][0];
    const double next1 = emission(i + 1, 1) + bwd[i + 1][1];
    for (int j = 0; j < 2; ++j)
      bwd[i][j] = log_add(log_a[j][0] + next0, log_a[j][1] + next1);
  }

  PosteriorState out;
  out.loglik = log_add(fwd[n - 1][0], fwd[n - 1][1]);
  out.p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double l0 = fwd[i][0] + bwd[i][0];
    const double l1 = fwd[i][1] + bwd[i][1];
    // 1 / (1 + exp(l0 - l1)), written to stay finite for either sign.
    if (l1 == kNegInf)
      out.p[i] = 0.0;
    else if (l0 == kNegInf)
      out.p[i] = 1.0;
    else if (l1 >= l0)
      out.p[i] = 1.0 / (1.0 + std::exp(l0 - l1));
    else {
      const double e = std::exp(l1 - l0);
      out.p[i] = e / (1.0 + e);
    }
  }

  out.xi.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double terms[2][2];
    double total = kNegInf;
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        terms[j][k] = fwd[i][j] + log_a[j][k] + emission(i + 1, k) + bwd[i + 1][k];
        total = log_add(total, terms[j][k]);
      }
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        out.xi[i][j][k] = terms[j][k] == kNegInf ? 0.0 : std::exp(terms[j][k] - total);
  }
  return out;
}

PosteriorState
forward_backward(const HmmParams& params, std::span<const double> x)
{
  std::vector<double> log_f0(x.size()), log_f1(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    log_f0[i] = log_pdf(params.f0, x[i]);
    log_f1[i] = log_pdf(params.f1, x[i]);
  }
  return forward_backward(params.transitions, params.initial, log_f0, log_f1);
}

PosteriorState
brute_force_posterior(const HmmParams& params, std::span<const double> x)
{
  const std::size_t n = x.size();
  if (n == 0)
    throw std::invalid_argument("brute_force_posterior: empty sequence");
  if (n > kBruteForceMaxLength)
    throw InstanceTooLarge("brute_force_posterior: n = " + std::to_string(n) + " exceeds " +
                           std::to_string(kBruteForceMaxLength));

  std::vector<std::array<double, 2>> log_f(n);
  for (std::size_t i = 0; i < n; ++i)
    log_f[i] = { log_pdf(params.f0, x[i]), log_pdf(params.f1, x[i]) };

  const std::size_t paths = std::size_t{ 1 } << n;
  std::vector<double> log_joint(paths);
  double total = kNegInf;
  for (std::size_t path = 0; path < paths; ++path) {
    auto state = [&](std::size_t i) { return static_cast<int>((path >> i) & 1U); };
    double lp = std::log(params.initial[state(0)]) + log_f[0][state(0)];
    for (std::size_t i = 1; i < n; ++i)
      lp += std::log(params.transitions(state(i - 1), state(i))) + log_f[i][state(i)];
    log_joint[path] = lp;
    total = log_add(total, lp);
  }
  if (total == kNegInf)
    throw EmissionUnderflow(0);

  PosteriorState out;
  out.loglik = total;
  out.p.assign(n, 0.0);
  out.xi.assign(n - 1, PairTable{});
  for (std::size_t path = 0; path < paths; ++path) {
    const double w = std::exp(log_joint[path] - total);
    for (std::size_t i = 0; i < n; ++i) {
      const int s = static_cast<int>((path >> i) & 1U);
      out.p[i] += s * w;
      if (i + 1 < n)
        out.xi[i][s][(path >> (i + 1)) & 1U] += w;
    }
  }
  return out;
}

} // namespace hmmt
