#include "hmmt/baselines.hpp"

#include "hmmt/errors.hpp"
#include "hmmt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hmmt {

namespace {

double
relative_change(double before, double after)
{
  return std::abs(after - before) / std::max(std::abs(before), 1.0);
}

double
parameter_change(const HmmParams& before, const HmmParams& after)
{
  double change = std::max({ relative_change(before.transitions.a00(), after.transitions.a00()),
                             relative_change(before.transitions.a11(), after.transitions.a11()),
                             relative_change(before.initial.p1(), after.initial.p1()) });
  const auto* g0 = std::get_if<GaussianDensity>(&before.f0);
  const auto* g1 = std::get_if<GaussianDensity>(&after.f0);
  if (g0 && g1)
    change = std::max({ change, relative_change(g0->location(), g1->location()),
                        relative_change(g0->scale(), g1->scale()) });
  const auto& m0 = std::get<GaussianMixture>(before.f1).components();
  const auto& m1 = std::get<GaussianMixture>(after.f1).components();
  if (m0.size() != m1.size())
    return std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < m0.size(); ++k)
    change = std::max({ change, relative_change(m0[k].weight, m1[k].weight),
                        relative_change(m0[k].mean, m1[k].mean), relative_change(m0[k].sd, m1[k].sd) });
  return change;
}

GaussianMixture
without_component(const GaussianMixture& mixture, std::size_t drop)
{
  std::vector<MixtureComponent> kept;
  for (std::size_t k = 0; k < mixture.size(); ++k)
    if (k != drop)
      kept.push_back(mixture.components()[k]);
  if (kept.empty())
    throw ComponentCollapse(drop, "no components left");
  return GaussianMixture(std::move(kept));
}

FitResult
run_gmm_em(HmmParams params, std::span<const double> x, double sigma, const FitConfig& config)
{
  const std::size_t n = x.size();
  std::vector<double> log_f0(n), log_f1(n);
  std::vector<double> trace;
  double last_param_change = std::numeric_limits<double>::infinity();
  double last_change = std::numeric_limits<double>::infinity();

  for (int it = 0;; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      log_f0[i] = log_pdf(params.f0, x[i]);
      log_f1[i] = log_pdf(params.f1, x[i]);
    }
    PosteriorState posterior = forward_backward(params.transitions, params.initial, log_f0, log_f1);
    trace.push_back(posterior.loglik);

    bool converged = false;
    if (trace.size() > 1) {
      const double prev = trace[trace.size() - 2];
      last_change = std::abs(posterior.loglik - prev) / std::max(std::abs(prev), 1e-300);
      converged = last_change < config.convergence_tol && last_param_change < config.parameter_tol;
    }
    if (converged || it + 1 >= config.max_iterations) {
      FitResult result{ std::move(params), std::move(posterior), std::numeric_limits<double>::quiet_NaN(),
                        {}, it + 1, std::move(trace), converged };
      if (!converged && last_change > 10.0 * config.convergence_tol)
        throw NonConvergence(std::move(result), last_change);
      return result;
    }

    HmmParams next = m_step_chain_f0(posterior, x, sigma, config, params);
    try {
      next.f1 = mixture_m_step(std::get<GaussianMixture>(params.f1), posterior.p, x, sigma);
      last_param_change = parameter_change(params, next);
    } catch (const ComponentCollapse& e) {
      next.f1 = without_component(std::get<GaussianMixture>(params.f1), e.component());
      last_param_change = std::numeric_limits<double>::infinity();
    }
    params = std::move(next);
  }
}

} // namespace

// ---------------------------------------------------------------- T.ND

std::vector<double>
tnd_bandwidth_grid(std::span<const double> u, double sigma_u)
{
  if (!(sigma_u > 0.0))
    throw std::invalid_argument("tnd_bandwidth_grid: working scale must be positive");
  double hs = silverman_bandwidth(u) / sigma_u;
  if (!(hs > 0.0))
    hs = 1.0;
  const double lo = 0.05 * hs, hi = 2.0 * hs;
  std::vector<double> grid(kDefaultGridSize);
  for (std::size_t k = 0; k < kDefaultGridSize; ++k)
    grid[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (kDefaultGridSize - 1));
  return grid;
}

TndResult
tnd_estimate(std::span<const double> x, double sigma, const FitConfig& config)
{
  validate(config);
  if (x.size() < 20)
    throw std::invalid_argument("tnd_estimate: need at least 20 observations");
  const SplitSample split = split_sample(x, config.alpha, sigma, config.rng_seed);
  const std::vector<double> grid = config.bandwidth_grid.empty()
                                     ? tnd_bandwidth_grid(split.u, split.sigma_u)
                                     : config.bandwidth_grid;

  std::vector<BandwidthScore> scores(grid.size());
  parallel_for(grid.size(), config.threads, [&](std::size_t k) {
    scores[k].h = grid[k];
    try {
      const WeightedKde f = WeightedKde::uniform(split.u, grid[k] * split.sigma_u);
      const auto pred = tweedie_independent(split.u, f, split.sigma_u);
      scores[k].mse = prediction_error(pred.estimates, split.v);
      if (!std::isfinite(scores[k].mse))
        scores[k].error = "non-finite prediction error";
    } catch (const Error& e) {
      scores[k].error = e.what();
    }
  });
  const std::size_t best = select_bandwidth(scores);
  const double h = scores[best].h;

  const WeightedKde f = WeightedKde::uniform(std::vector<double>(x.begin(), x.end()), h * sigma);
  return TndResult{ tweedie_independent(x, f, sigma), h, std::move(scores) };
}

// ---------------------------------------------------------------- GMM

GaussianMixture
initial_mixture(std::span<const double> x, double sigma, std::size_t m)
{
  if (m < 1)
    throw std::invalid_argument("initial_mixture: need at least one component");
  const auto labels = provisional_labels(x, sigma);
  std::vector<double> pts;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (labels[i] == 1)
      pts.push_back(x[i]);
  if (pts.size() < m)
    throw DegenerateInput("initial_mixture: fewer provisional points than components");
  std::sort(pts.begin(), pts.end());

  std::vector<MixtureComponent> components;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t begin = k * pts.size() / m, end = (k + 1) * pts.size() / m;
    const double count = static_cast<double>(end - begin);
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i)
      mean += pts[i];
    mean /= count;
    double var = 0.0;
    for (std::size_t i = begin; i < end; ++i)
      var += (pts[i] - mean) * (pts[i] - mean);
    var /= count;
    components.push_back({ count, mean, std::max(std::sqrt(var), sigma) });
  }
  return GaussianMixture(std::move(components));
}

GaussianMixture
mixture_m_step(const GaussianMixture& current,
               std::span<const double> p,
               std::span<const double> x,
               double sigma)
{
  if (p.size() != x.size())
    throw LengthMismatch(x.size(), p.size());
  const std::size_t m = current.size();
  std::vector<double> mass(m, 0.0), first(m, 0.0);
  std::vector<std::vector<double>> weight(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    weight[i] = current.responsibilities(x[i]);
    for (std::size_t k = 0; k < m; ++k) {
      weight[i][k] *= p[i];
      mass[k] += weight[i][k];
      first[k] += weight[i][k] * x[i];
    }
    total += p[i];
  }
  if (!(total > 0.0))
    throw WeightCollapse("mixture_m_step: no out-of-control posterior mass");

  std::vector<MixtureComponent> next(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (mass[k] / total < kMinComponentWeight)
      throw ComponentCollapse(k, "weight " + std::to_string(mass[k] / total));
    next[k].weight = mass[k] / total;
    next[k].mean = first[k] / mass[k];
  }
  std::vector<double> second(m, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k < m; ++k)
      second[k] += weight[i][k] * (x[i] - next[k].mean) * (x[i] - next[k].mean);
  for (std::size_t k = 0; k < m; ++k) {
    next[k].sd = std::sqrt(second[k] / mass[k]);
    if (!(next[k].sd >= kMinComponentSd * sigma))
      throw ComponentCollapse(k, "sd " + std::to_string(next[k].sd));
  }
  return GaussianMixture(std::move(next));
}

HmmParams
gmm_em_step(const HmmParams& params, std::span<const double> x, double sigma, const FitConfig& config)
{
  const auto* mixture = std::get_if<GaussianMixture>(&params.f1);
  if (!mixture)
    throw std::invalid_argument("gmm_em_step: f1 must be a Gaussian mixture");
  const PosteriorState posterior = forward_backward(params, x);
  HmmParams next = m_step_chain_f0(posterior, x, sigma, config, params);
  next.f1 = mixture_m_step(*mixture, posterior.p, x, sigma);
  return next;
}

std::size_t
gmm_parameter_count(std::size_t m, const FitConfig& config)
{
  const std::size_t chain = 2;
  const std::size_t f0 = config.f0_mode == F0Mode::fit_location_scale ? 2 : 0;
  return chain + f0 + 3 * m - 1;
}

GmmFit
gmm_fit(std::span<const double> x, double sigma, MixtureOrder order, const FitConfig& config)
{
  validate(config);
  if (!(sigma > 0.0))
    throw std::invalid_argument("gmm_fit: sigma must be positive");
  std::vector<std::size_t> orders;
  if (order.automatic) {
    if (order.max_components < 1)
      throw std::invalid_argument("gmm_fit: max_components must be positive");
    for (std::size_t m = 1; m <= order.max_components; ++m)
      orders.push_back(m);
  } else {
    if (order.components < 1)
      throw std::invalid_argument("gmm_fit: need at least one component");
    orders.push_back(order.components);
  }

  const HmmParams start = initialize(x, sigma, config);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::optional<FitResult>> fits(orders.size());
  std::vector<double> bic(orders.size(), nan);
  std::vector<std::string> errors(orders.size());

  parallel_for(orders.size(), config.threads, [&](std::size_t j) {
    try {
      HmmParams params = start;
      params.f1 = initial_mixture(x, sigma, orders[j]);
      FitResult fit = run_gmm_em(std::move(params), x, sigma, config);
      const std::size_t m = std::get<GaussianMixture>(fit.params.f1).size();
      bic[j] = -2.0 * fit.posterior.loglik +
               static_cast<double>(gmm_parameter_count(m, config)) * std::log(static_cast<double>(x.size()));
      fits[j] = std::move(fit);
    } catch (const Error& e) {
      errors[j] = e.what();
    }
  });

  std::size_t best = orders.size();
  for (std::size_t j = 0; j < orders.size(); ++j)
    if (fits[j] && (best == orders.size() || bic[j] < bic[best]))
      best = j;
  if (best == orders.size())
    throw Error("gmm_fit: every mixture order failed (" + errors.front() + ")");

  GmmFit out{ std::move(*fits[best]), ShrinkageResult{ {}, RuleTag::td, std::nullopt }, 0, bic[best], {} };
  for (std::size_t j = 0; j < orders.size(); ++j)
    out.bic_by_order.emplace_back(orders[j], bic[j]);
  out.components = std::get<GaussianMixture>(out.fit.params.f1).size();
  out.estimate = td_rule(x, out.fit.posterior, out.fit.params.f0, out.fit.params.f1, sigma);
  return out;
}

} // namespace hmmt
