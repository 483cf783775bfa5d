#include "hmmt/densities.hpp"

#include "hmmt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

namespace hmmt {

namespace {

constexpr double kLogInvSqrt2Pi = -0.91893853320467274178;
constexpr double kAbsoluteFloor = 1e-300;
constexpr double kRelativeFloor = 1e-12;

double
log_sum_exp(std::span<const double> values)
{
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m))
    return m;
  double s = 0.0;
  for (double v : values)
    s += std::exp(v - m);
  return m + std::log(s);
}

// Maximize a unimodal-near-the-peak function: coarse grid, then golden
// section on the bracketing cell.
template<typename F>
double
argmax_on(F&& f, double lo, double hi)
{
  constexpr int kGrid = 4001;
  const double step = (hi - lo) / (kGrid - 1);
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double v = f(lo + i * step);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  double a = lo + std::max(best - 1, 0) * step;
  double b = lo + std::min(best + 1, kGrid - 1) * step;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 100 && b - a > 1e-12 * (1.0 + std::abs(a)); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

} // namespace

// ---------------------------------------------------------------- Gaussian

GaussianDensity::GaussianDensity(double location, double scale)
  : location_(location)
  , scale_(scale)
{
  if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(location))
    throw std::invalid_argument("GaussianDensity: scale must be positive and finite");
}

double
GaussianDensity::pdf(double x) const
{
  return standard_normal_pdf((x - location_) / scale_) / scale_;
}

double
GaussianDensity::log_pdf(double x) const
{
  const double t = (x - location_) / scale_;
  return kLogInvSqrt2Pi - std::log(scale_) - 0.5 * t * t;
}

double
GaussianDensity::derivative(double x) const
{
  return pdf(x) * score(x);
}

double
GaussianDensity::score(double x) const
{
  return -(x - location_) / (scale_ * scale_);
}

// ---------------------------------------------------------------- KDE

WeightedKde::WeightedKde(std::vector<double> points, std::vector<double> weights, double bandwidth)
  : bandwidth_(bandwidth)
{
  if (points.empty())
    throw std::invalid_argument("WeightedKde: no support points");
  if (points.size() != weights.size())
    throw LengthMismatch(points.size(), weights.size());
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw std::invalid_argument("WeightedKde: bandwidth must be positive");

  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("WeightedKde: weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0))
    throw std::invalid_argument("WeightedKde: weights sum to zero");

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a] < points[b];
  });
  points_.resize(points.size());
  weights_.resize(points.size());
  double max_weight = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    points_[k] = points[order[k]];
    weights_[k] = weights[order[k]] / total;
    max_weight = std::max(max_weight, weights_[k]);
  }
  floor_ = std::max(kAbsoluteFloor, kRelativeFloor * max_weight * kInvSqrt2Pi / bandwidth_);
}

WeightedKde
WeightedKde::uniform(std::vector<double> points, double bandwidth)
{
  std::vector<double> weights(points.size(), 1.0);
  return WeightedKde(std::move(points), std::move(weights), bandwidth);
}

WeightedKde::Sums
WeightedKde::sums(double x) const
{
  const double reach = kKernelCutoff * bandwidth_;
  const auto first = std::lower_bound(points_.begin(), points_.end(), x - reach);
  const auto last = std::upper_bound(first, points_.end(), x + reach);
  Sums s;
  for (auto it = first; it != last; ++it) {
    const std::size_t k = static_cast<std::size_t>(it - points_.begin());
    const double d = points_[k] - x;
    const double t = d / bandwidth_;
    const double kw = weights_[k] * standard_normal_pdf(t);
    s.density += kw;
    s.moment += kw * d;
  }
  return s;
}

double
WeightedKde::pdf(double x) const
{
  return sums(x).density / bandwidth_;
}

double
WeightedKde::log_pdf(double x) const
{
  return std::log(pdf(x));
}

double
WeightedKde::derivative(double x) const
{
  return sums(x).moment / (bandwidth_ * bandwidth_ * bandwidth_);
}

double
WeightedKde::score(double x) const
{
  const Sums s = sums(x);
  const double value = s.density / bandwidth_;
  if (!(value >= floor_))
    throw DensityUnderflow(x, value);
  return s.moment / (bandwidth_ * bandwidth_ * s.density);
}

// ---------------------------------------------------------------- mixture

GaussianMixture::GaussianMixture(std::vector<MixtureComponent> components)
  : components_(std::move(components))
{
  if (components_.empty())
    throw std::invalid_argument("GaussianMixture: no components");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0) || !(c.sd > 0.0) || !std::isfinite(c.mean) || !std::isfinite(c.sd))
      throw std::invalid_argument("GaussianMixture: invalid component");
    total += c.weight;
  }
  if (!(total > 0.0))
    throw std::invalid_argument("GaussianMixture: weights sum to zero");
  for (auto& c : components_)
    c.weight /= total;
}

namespace {

std::vector<double>
component_log_terms(const std::vector<MixtureComponent>& components, double x)
{
  std::vector<double> terms(components.size());
  for (std::size_t c = 0; c < components.size(); ++c) {
    const auto& m = components[c];
    const double t = (x - m.mean) / m.sd;
    terms[c] = std::log(m.weight) + kLogInvSqrt2Pi - std::log(m.sd) - 0.5 * t * t;
  }
  return terms;
}

} // namespace

double
GaussianMixture::log_pdf(double x) const
{
  return log_sum_exp(component_log_terms(components_, x));
}

double
GaussianMixture::pdf(double x) const
{
  return std::exp(log_pdf(x));
}

std::vector<double>
GaussianMixture::responsibilities(double x) const
{
  auto terms = component_log_terms(components_, x);
  const double total = log_sum_exp(terms);
  for (auto& t : terms)
    t = std::exp(t - total);
  return terms;
}

double
GaussianMixture::score(double x) const
{
  const auto r = responsibilities(x);
  double s = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& m = components_[c];
    s -= r[c] * (x - m.mean) / (m.sd * m.sd);
  }
  return s;
}

double
GaussianMixture::derivative(double x) const
{
  return pdf(x) * score(x);
}

// ---------------------------------------------------------------- convolution

ConvolvedDensity::ConvolvedDensity(PriorShape prior, double noise_sd)
  : noise_sd_(noise_sd)
{
  if (!(noise_sd > 0.0))
    throw std::invalid_argument("ConvolvedDensity: noise sd must be positive");
  if (!prior.pdf || !(prior.lower < prior.upper))
    throw std::invalid_argument("ConvolvedDensity: invalid prior");
  std::sort(prior.breakpoints.begin(), prior.breakpoints.end());
  prior_ = std::make_shared<const PriorShape>(std::move(prior));
}

ConvolvedDensity::Evaluation
ConvolvedDensity::evaluate(double x) const
{
  using Rule = boost::math::quadrature::gauss<double, 15>;
  constexpr double kHalfWindow = 12.0;
  constexpr double kPanel = 1.0;

  const double lo = std::max(prior_->lower, x - kHalfWindow * noise_sd_);
  const double hi = std::min(prior_->upper, x + kHalfWindow * noise_sd_);
  Evaluation out{ 0.0, 0.0, 0.0 };
  if (!(lo < hi))
    return out;

  std::vector<double> cuts{ lo };
  for (double b : prior_->breakpoints)
    if (b > lo && b < hi)
      cuts.push_back(b);
  cuts.push_back(hi);

  const auto& nodes = Rule::abscissa();
  const auto& weights = Rule::weights();
  const double var = noise_sd_ * noise_sd_;

  auto accumulate = [&](double mu, double w) {
    const double g = prior_->pdf(mu);
    if (g == 0.0)
      return;
    const double phi = standard_normal_pdf((x - mu) / noise_sd_) / noise_sd_;
    const double term = w * g * phi;
    out.value += term;
    out.derivative += term * (mu - x) / var;
    out.first_moment += term * mu;
  };

  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s];
    const double b = cuts[s + 1];
    const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / (kPanel * noise_sd_))));
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double left = a + p * width;
      const double half = 0.5 * width;
      const double mid = left + half;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k] == 0.0) {
          accumulate(mid, half * weights[k]);
        } else {
          accumulate(mid - half * nodes[k], half * weights[k]);
          accumulate(mid + half * nodes[k], half * weights[k]);
        }
      }
    }
  }
  return out;
}

double
ConvolvedDensity::log_pdf(double x) const
{
  return std::log(pdf(x));
}

double
ConvolvedDensity::score(double x) const
{
  const auto e = evaluate(x);
  if (!(e.value >= kAbsoluteFloor))
    throw DensityUnderflow(x, e.value);
  return e.derivative / e.value;
}

double
ConvolvedDensity::posterior_mean(double x) const
{
  const auto e = evaluate(x);
  if (!(e.value >= kAbsoluteFloor))
    throw DensityUnderflow(x, e.value);
  return e.first_moment / e.value;
}

// ---------------------------------------------------------------- dispatch

double
pdf(const Density& f, double x)
{
  return std::visit([x](const auto& d) { return d.pdf(x); }, f);
}

double
log_pdf(const Density& f, double x)
{
  return std::visit([x](const auto& d) { return d.log_pdf(x); }, f);
}

double
score(const Density& f, double x)
{
  return std::visit([x](const auto& d) { return d.score(x); }, f);
}

double
density_mode(const Density& f)
{
  if (const auto* g = std::get_if<GaussianDensity>(&f))
    return g->location();

  double lo = 0.0, hi = 0.0;
  if (const auto* m = std::get_if<GaussianMixture>(&f)) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const auto& c : m->components()) {
      lo = std::min(lo, c.mean - 4.0 * c.sd);
      hi = std::max(hi, c.mean + 4.0 * c.sd);
    }
  } else if (const auto* k = std::get_if<WeightedKde>(&f)) {
    lo = k->points().front() - 3.0 * k->bandwidth();
    hi = k->points().back() + 3.0 * k->bandwidth();
  } else {
    const auto& c = std::get<ConvolvedDensity>(f);
    const double pad = 5.0 * c.noise_sd();
    if (!std::isfinite(c.prior().lower) || !std::isfinite(c.prior().upper))
      throw std::invalid_argument("density_mode: unbounded prior support");
    lo = c.prior().lower - pad;
    hi = c.prior().upper + pad;
  }
  return argmax_on([&](double x) { return pdf(f, x); }, lo, hi);
}

double
silverman_bandwidth(std::span<const double> values)
{
  const std::size_t n = values.size();
  if (n < 2)
    return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - i;
    return i + 1 < n ? sorted[i] + frac * (sorted[i + 1] - sorted[i]) : sorted[i];
  };
  const double iqr = (quantile(0.75) - quantile(0.25)) / 1.34;

  double spread = 0.0;
  if (sd > 0.0 && iqr > 0.0)
    spread = std::min(sd, iqr);
  else
    spread = std::max(sd, iqr);
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

} // namespace hmmt
