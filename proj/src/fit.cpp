#include "hmmt/fit.hpp"

#include "hmmt/parallel.hpp"
#include "hmmt/random.hpp"
#include "kernel_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hmmt {

namespace {

double
median_of(std::vector<double> values)
{
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1)
    return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

struct RobustCenter
{
  double nu;
  double tau;
};

RobustCenter
robust_center(std::span<const double> u, double sigma_u)
{
  const double nu = median_of(std::vector<double>(u.begin(), u.end()));
  std::vector<double> dev(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    dev[i] = std::abs(u[i] - nu);
  const double mad = 1.4826 * median_of(std::move(dev));
  return { nu, std::max(mad, sigma_u) };
}

void
require_initializable(std::span<const double> u, double sigma_u)
{
  if (u.size() < 20)
    throw std::invalid_argument("initialize: need at least 20 observations");
  if (!(sigma_u > 0.0))
    throw std::invalid_argument("initialize: working scale must be positive");
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  if (*lo == *hi)
    throw DegenerateInput("initialize: all observations are identical");
}

std::vector<double>
labeled_points(std::span<const double> u, const std::vector<int>& labels)
{
  std::vector<double> pts;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (labels[i] == 1)
      pts.push_back(u[i]);
  return pts;
}

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
  if (g0 && g1) {
    change = std::max({ change,
                        relative_change(g0->location(), g1->location()),
                        relative_change(g0->scale(), g1->scale()) });
  }
  return change;
}

// Stable ascending order, matching WeightedKde's internal sort.
std::vector<std::size_t>
sort_order(std::span<const double> u)
{
  std::vector<std::size_t> order(u.size());
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  return order;
}

} // namespace

void
validate(const FitConfig& config)
{
  if (!(config.alpha > 0.0 && config.alpha <= 1.0))
    throw std::invalid_argument("FitConfig: alpha must lie in (0, 1]");
  if (config.max_iterations < 1)
    throw std::invalid_argument("FitConfig: max_iterations must be positive");
  if (!(config.convergence_tol > 0.0) || !(config.parameter_tol > 0.0))
    throw std::invalid_argument("FitConfig: tolerances must be positive");
  for (std::size_t i = 0; i < config.bandwidth_grid.size(); ++i) {
    if (!(config.bandwidth_grid[i] > 0.0) || !std::isfinite(config.bandwidth_grid[i]))
      throw std::invalid_argument("FitConfig: bandwidths must be positive");
    if (i > 0 && !(config.bandwidth_grid[i] > config.bandwidth_grid[i - 1]))
      throw std::invalid_argument("FitConfig: bandwidth grid must be strictly increasing");
  }
  if (config.f0_mode == F0Mode::fixed_known && !config.known_f0)
    throw std::invalid_argument("FitConfig: fixed_known f0 mode needs known_f0");
}

// ---------------------------------------------------------------- split

SplitSample
split_sample(std::span<const double> x, double alpha, double sigma, std::span<const double> z)
{
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("split_sample: alpha must lie in (0, 1]");
  if (!(sigma > 0.0))
    throw std::invalid_argument("split_sample: sigma must be positive");
  if (z.size() != x.size())
    throw LengthMismatch(x.size(), z.size());
  SplitSample s{ {}, {}, std::vector<double>(z.begin(), z.end()), alpha, sigma,
                 sigma * std::sqrt(1.0 + alpha * alpha),
                 sigma * std::sqrt(1.0 + 1.0 / (alpha * alpha)) };
  s.u.resize(x.size());
  s.v.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.u[i] = x[i] + alpha * z[i];
    s.v[i] = x[i] - z[i] / alpha;
  }
  return s;
}

SplitSample
split_sample(std::span<const double> x, double alpha, double sigma, std::uint64_t seed)
{
  Rng rng = make_rng(seed, { 0x5b11 });
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> z(x.size());
  for (auto& zi : z)
    zi = noise(rng);
  return split_sample(x, alpha, sigma, z);
}

// ---------------------------------------------------------------- init

std::vector<int>
provisional_labels(std::span<const double> u, double sigma_u)
{
  const auto [nu, tau] = robust_center(u, sigma_u);
  std::vector<int> labels(u.size(), 0);
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (std::abs(u[i] - nu) > 2.0 * tau) {
      labels[i] = 1;
      ++flagged;
    }
  }
  if (flagged < kMinInitLabels) {
    std::vector<std::size_t> order(u.size());
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    const std::size_t take = std::min(kMinInitLabels, u.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&, nu = nu](std::size_t a, std::size_t b) {
                        const double da = std::abs(u[a] - nu), db = std::abs(u[b] - nu);
                        return da != db ? da > db : a < b;
                      });
    for (std::size_t k = 0; k < take; ++k)
      labels[order[k]] = 1;
  }
  return labels;
}

HmmParams
initialize(std::span<const double> u, double sigma_u, const FitConfig& config)
{
  require_initializable(u, sigma_u);
  const auto [nu, tau] = robust_center(u, sigma_u);
  const auto labels = provisional_labels(u, sigma_u);

  double counts[2][2] = { { 1.0, 1.0 }, { 1.0, 1.0 } };
  for (std::size_t i = 1; i < u.size(); ++i)
    counts[labels[i - 1]][labels[i]] += 1.0;
  const TransitionMatrix transitions(counts[0][0] / (counts[0][0] + counts[0][1]),
                                     counts[1][1] / (counts[1][0] + counts[1][1]));

  auto pts = labeled_points(u, labels);
  double h = silverman_bandwidth(pts);
  if (!(h > 0.0))
    h = sigma_u;

  Density f0 = config.f0_mode == F0Mode::fixed_known ? *config.known_f0
                                                     : Density(GaussianDensity(nu, tau));
  return HmmParams{ transitions, stationary_distribution(transitions), std::move(f0),
                    WeightedKde::uniform(std::move(pts), h) };
}

std::vector<double>
default_bandwidth_grid(std::span<const double> u, double sigma_u)
{
  require_initializable(u, sigma_u);
  const auto labels = provisional_labels(u, sigma_u);
  double hs = silverman_bandwidth(labeled_points(u, labels)) / sigma_u;
  if (!(hs > 0.0))
    hs = 1.0;
  const double lo = 0.05 * hs, hi = 2.0 * hs;
  std::vector<double> grid(kDefaultGridSize);
  for (std::size_t k = 0; k < kDefaultGridSize; ++k)
    grid[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (kDefaultGridSize - 1));
  return grid;
}

// ---------------------------------------------------------------- EM

HmmParams
m_step_chain_f0(const PosteriorState& posterior,
                std::span<const double> u,
                double sigma_u,
                const FitConfig& config,
                const HmmParams& previous)
{
  const std::size_t n = u.size();
  if (posterior.size() != n)
    throw LengthMismatch(n, posterior.size());
  if (!(sigma_u > 0.0))
    throw std::invalid_argument("m_step: working scale must be positive");

  double mass1 = 0.0;
  for (double p : posterior.p)
    mass1 += p;
  const double mass0 = static_cast<double>(n) - mass1;
  if (mass1 < kWeightCollapse)
    throw WeightCollapse("m_step: posterior mass of the out-of-control state is " +
                         std::to_string(mass1));
  if (config.f0_mode == F0Mode::fit_location_scale && mass0 < kWeightCollapse)
    throw WeightCollapse("m_step: posterior mass of the in-control state is " +
                         std::to_string(mass0));

  // Transitions: sum_i xi_i(j,k) / sum_i p_i(j) over i < n.
  TransitionMatrix transitions = previous.transitions;
  if (n > 1) {
    double stay[2] = { 0.0, 0.0 }, from[2] = { 0.0, 0.0 };
    for (const auto& xi : posterior.xi) {
      stay[0] += xi[0][0];
      stay[1] += xi[1][1];
      from[0] += xi[0][0] + xi[0][1];
      from[1] += xi[1][0] + xi[1][1];
    }
    const double a00 = from[0] > 0.0 ? stay[0] / from[0] : previous.transitions.a00();
    const double a11 = from[1] > 0.0 ? stay[1] / from[1] : previous.transitions.a11();
    transitions = TransitionMatrix(a00, a11);
  }

  const StateProbabilities initial(mass1 / static_cast<double>(n));

  Density f0 = previous.f0;
  if (config.f0_mode == F0Mode::fit_location_scale) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      mean += (1.0 - posterior.p[i]) * u[i];
    mean /= mass0;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      var += (1.0 - posterior.p[i]) * (u[i] - mean) * (u[i] - mean);
    var /= mass0;
    f0 = GaussianDensity(mean, std::max(std::sqrt(var), kTauFloor * sigma_u));
  }
  return HmmParams{ transitions, initial, std::move(f0), previous.f1 };
}

HmmParams
m_step(const PosteriorState& posterior,
       std::span<const double> u,
       double h,
       double sigma_u,
       const FitConfig& config,
       const HmmParams& previous)
{
  if (!(h > 0.0))
    throw std::invalid_argument("m_step: bandwidth must be positive");
  HmmParams next = m_step_chain_f0(posterior, u, sigma_u, config, previous);
  std::vector<double> weights(posterior.p.begin(), posterior.p.end());
  next.f1 = WeightedKde(std::vector<double>(u.begin(), u.end()), std::move(weights), h * sigma_u);
  return next;
}

HmmParams
em_step(const HmmParams& params,
        std::span<const double> u,
        double h,
        double sigma_u,
        const FitConfig& config)
{
  return m_step(forward_backward(params, u), u, h, sigma_u, config, params);
}

NonConvergence::NonConvergence(FitResult last, double last_change)
  : Error("EM did not converge within " + std::to_string(last.iterations_used) +
          " iterations (last relative log-likelihood change " + std::to_string(last_change) + ")")
  , last_(std::move(last))
{}

FitResult
fit_from(HmmParams start,
         std::span<const double> u,
         double h,
         double sigma_u,
         const FitConfig& config)
{
  validate(config);
  const std::size_t n = u.size();
  if (n == 0)
    throw std::invalid_argument("fit_from: empty sequence");

  const double bandwidth = h * sigma_u;
  const auto order = sort_order(u);
  std::vector<double> sorted(n);
  for (std::size_t k = 0; k < n; ++k)
    sorted[k] = u[order[k]];
  const detail::KernelMatrix kernel(sorted, bandwidth);

  std::vector<double> log_f0(n), log_f1(n), f1_sorted(n);
  HmmParams params = std::move(start);
  bool f1_on_support = false;
  double last_param_change = std::numeric_limits<double>::infinity();
  double last_change = std::numeric_limits<double>::infinity();
  std::vector<double> trace;

  for (int it = 0;; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      log_f0[i] = log_pdf(params.f0, u[i]);
    if (f1_on_support) {
      kernel.densities(std::get<WeightedKde>(params.f1).weights(), f1_sorted);
      for (std::size_t k = 0; k < n; ++k)
        log_f1[order[k]] = std::log(f1_sorted[k]);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        log_f1[i] = log_pdf(params.f1, u[i]);
    }
    PosteriorState posterior =
      forward_backward(params.transitions, params.initial, log_f0, log_f1);
    trace.push_back(posterior.loglik);

    bool converged = false;
    if (trace.size() > 1) {
      const double prev = trace[trace.size() - 2];
      last_change = std::abs(posterior.loglik - prev) / std::max(std::abs(prev), 1e-300);
      converged = last_change < config.convergence_tol && last_param_change < config.parameter_tol;
    }
    if (converged || it + 1 >= config.max_iterations) {
      FitResult result{ std::move(params), std::move(posterior), std::numeric_limits<double>::quiet_NaN(),
                        {}, it + 1, {}, false };
      result.loglik_trace = std::move(trace);
      result.converged = converged;
      if (!converged && last_change > 10.0 * config.convergence_tol)
        throw NonConvergence(std::move(result), last_change);
      return result;
    }

    HmmParams next = m_step(posterior, u, h, sigma_u, config, params);
    last_param_change = parameter_change(params, next);
    params = std::move(next);
    f1_on_support = true;
  }
}

FitResult
fit_at_bandwidth(std::span<const double> u, double h, double sigma_u, const FitConfig& config)
{
  if (!(h > 0.0))
    throw std::invalid_argument("fit_at_bandwidth: bandwidth must be positive");
  return fit_from(initialize(u, sigma_u, config), u, h, sigma_u, config);
}

// ---------------------------------------------------------------- selection

double
prediction_error(std::span<const double> predictions, std::span<const double> v)
{
  if (predictions.size() != v.size())
    throw LengthMismatch(v.size(), predictions.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    total += (predictions[i] - v[i]) * (predictions[i] - v[i]);
  return total;
}

double
bandwidth_mse(const SplitSample& split, const FitResult& fit)
{
  const auto predicted = td_rule(split.u, fit.posterior, fit.params.f0, fit.params.f1, split.sigma_u);
  return prediction_error(predicted.estimates, split.v);
}

std::size_t
select_bandwidth(std::span<const BandwidthScore> scores)
{
  std::size_t best = scores.size();
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!scores[k].ok() || !std::isfinite(scores[k].mse))
      continue;
    if (best == scores.size() || scores[k].mse < scores[best].mse)
      best = k;
  }
  if (best == scores.size()) {
    std::string why = "bandwidth selection failed at every grid point";
    if (!scores.empty())
      why += " (first error: " + scores.front().error + ")";
    throw Error(why);
  }
  return best;
}

Density
widen(const Density& f, double extra_sd)
{
  if (extra_sd == 0.0)
    return f;
  if (const auto* g = std::get_if<GaussianDensity>(&f))
    return GaussianDensity(g->location(), std::hypot(g->scale(), extra_sd));
  if (const auto* m = std::get_if<GaussianMixture>(&f)) {
    auto components = m->components();
    for (auto& c : components)
      c.sd = std::hypot(c.sd, extra_sd);
    return GaussianMixture(std::move(components));
  }
  throw std::invalid_argument("widen: only Gaussian and Gaussian-mixture densities are supported");
}

BandwidthScan
bandwidth_scan(std::span<const double> x, double sigma, const FitConfig& config)
{
  validate(config);
  SplitSample split = split_sample(x, config.alpha, sigma, config.rng_seed);

  FitConfig on_u = config;
  if (config.f0_mode == F0Mode::fixed_known)
    on_u.known_f0 = widen(*config.known_f0, config.alpha * sigma);

  const std::vector<double> grid = config.bandwidth_grid.empty()
                                     ? default_bandwidth_grid(split.u, split.sigma_u)
                                     : config.bandwidth_grid;

  std::vector<BandwidthScore> scores(grid.size());
  parallel_for(grid.size(), config.threads, [&](std::size_t k) {
    scores[k].h = grid[k];
    try {
      const FitResult fit = fit_at_bandwidth(split.u, grid[k], split.sigma_u, on_u);
      scores[k].mse = bandwidth_mse(split, fit);
      if (!std::isfinite(scores[k].mse))
        scores[k].error = "non-finite prediction error";
    } catch (const Error& e) {
      scores[k].error = e.what();
    }
  });
  const std::size_t best = select_bandwidth(scores);
  return BandwidthScan{ std::move(split), std::move(scores), best };
}

HmmtFit
fit_hmmt(std::span<const double> x, double sigma, const FitConfig& config)
{
  BandwidthScan scan = bandwidth_scan(x, sigma, config);
  const double h = scan.scores[scan.best].h;

  FitResult fit = fit_at_bandwidth(x, h, sigma, config);
  fit.chosen_h = h;
  fit.mse_by_h = std::move(scan.scores);

  ShrinkageResult estimate = td_rule(x, fit.posterior, fit.params.f0, fit.params.f1, sigma);
  ShrinkageResult truncated = truncated_rule(x, fit.posterior, fit.params.f0, fit.params.f1, sigma,
                                             x.size(), config.truncation_mode);
  return HmmtFit{ std::move(fit), std::move(estimate), std::move(truncated) };
}

WeightedKde
oracle_kde(std::span<const double> x, std::span<const int> theta, double h)
{
  if (theta.size() != x.size())
    throw LengthMismatch(x.size(), theta.size());
  std::vector<double> weights(theta.size());
  double count = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    weights[i] = theta[i] != 0 ? 1.0 : 0.0;
    count += weights[i];
  }
  if (count == 0.0)
    throw NoSignalPoints("oracle_kde: no out-of-control positions");
  return WeightedKde(std::vector<double>(x.begin(), x.end()), std::move(weights), h);
}

} // namespace hmmt
