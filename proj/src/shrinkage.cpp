#include "hmmt/shrinkage.hpp"

#include "hmmt/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace hmmt {

namespace {

void
require_sigma(double sigma)
{
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("sigma must be positive");
}

double
tweedie_at(const Density& f, double x, double sigma)
{
  return x + sigma * sigma * score(f, x);
}

// Per-state estimates, tolerating an f1 underflow only where the state has
// negligible posterior mass.
PointComponents
mixed_components(std::span<const double> x,
                 std::span<const double> p,
                 const Density& f0,
                 const Density& f1,
                 double sigma)
{
  PointComponents c;
  c.p.assign(p.begin(), p.end());
  c.in_control.resize(x.size());
  c.out_of_control.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    try {
      c.in_control[i] = tweedie_at(f0, x[i], sigma);
    } catch (const DensityUnderflow&) {
      if (1.0 - p[i] >= kNegligiblePosterior)
        throw;
      c.in_control[i] = x[i];
    }
    try {
      c.out_of_control[i] = tweedie_at(f1, x[i], sigma);
    } catch (const DensityUnderflow&) {
      if (p[i] >= kNegligiblePosterior)
        throw;
      c.out_of_control[i] = x[i];
    }
  }
  return c;
}

} // namespace

std::string_view
to_string(RuleTag tag)
{
  switch (tag) {
    case RuleTag::independent_tweedie:
      return "independent_tweedie";
    case RuleTag::oracle:
      return "oracle";
    case RuleTag::bayes:
      return "bayes";
    case RuleTag::td:
      return "td";
    case RuleTag::truncated:
      return "truncated";
  }
  return "unknown";
}

ShrinkageResult
tweedie_independent(std::span<const double> x, const Density& f, double sigma)
{
  require_sigma(sigma);
  ShrinkageResult r{ std::vector<double>(x.size()), RuleTag::independent_tweedie, std::nullopt };
  for (std::size_t i = 0; i < x.size(); ++i)
    r.estimates[i] = tweedie_at(f, x[i], sigma);
  return r;
}

ShrinkageResult
oracle_rule(std::span<const double> x,
            std::span<const int> theta,
            const Density& f0,
            const Density& f1,
            double sigma)
{
  require_sigma(sigma);
  if (theta.size() != x.size())
    throw LengthMismatch(x.size(), theta.size());
  ShrinkageResult r{ std::vector<double>(x.size()), RuleTag::oracle, std::nullopt };
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (theta[i] != 0 && theta[i] != 1)
      throw std::invalid_argument("oracle_rule: states must be 0 or 1");
    r.estimates[i] = tweedie_at(theta[i] == 0 ? f0 : f1, x[i], sigma);
  }
  return r;
}

ShrinkageResult
td_rule(std::span<const double> x,
        const PosteriorState& posterior,
        const Density& f0,
        const Density& f1,
        double sigma)
{
  require_sigma(sigma);
  if (posterior.size() != x.size())
    throw LengthMismatch(x.size(), posterior.size());
  auto c = mixed_components(x, posterior.p, f0, f1, sigma);
  ShrinkageResult r{ std::vector<double>(x.size()), RuleTag::td, std::nullopt };
  for (std::size_t i = 0; i < x.size(); ++i)
    r.estimates[i] = c.p[i] * c.out_of_control[i] + (1.0 - c.p[i]) * c.in_control[i];
  r.components = std::move(c);
  return r;
}

ShrinkageResult
bayes_rule(std::span<const double> x, const HmmParams& params, double sigma)
{
  const PosteriorState posterior = forward_backward(params, x);
  ShrinkageResult r = td_rule(x, posterior, params.f0, params.f1, sigma);
  r.rule = RuleTag::bayes;
  return r;
}

double
truncation_threshold(std::size_t n)
{
  if (n < 2)
    throw std::invalid_argument("truncation_threshold: n must be at least 2");
  return std::sqrt(3.0 * std::log(static_cast<double>(n)));
}

ShrinkageResult
truncated_rule(std::span<const double> x,
               const PosteriorState& posterior,
               const Density& f0,
               const Density& f1,
               double sigma,
               std::size_t n,
               TruncationMode mode)
{
  require_sigma(sigma);
  if (posterior.size() != x.size())
    throw LengthMismatch(x.size(), posterior.size());
  const double threshold = truncation_threshold(n);
  const double nu = density_mode(f0);

  auto c = mixed_components(x, posterior.p, f0, f1, sigma);
  ShrinkageResult r{ std::vector<double>(x.size()), RuleTag::truncated, std::nullopt };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double oc = c.out_of_control[i];
    const double magnitude = mode == TruncationMode::clamp ? std::min(std::abs(oc), threshold)
                                                           : std::max(std::abs(oc), threshold);
    const double sign = static_cast<double>((oc > 0.0) - (oc < 0.0));
    c.in_control[i] = nu;
    c.out_of_control[i] = sign * magnitude;
    r.estimates[i] = (1.0 - c.p[i]) * nu + c.p[i] * c.out_of_control[i];
  }
  r.components = std::move(c);
  return r;
}

} // namespace hmmt
