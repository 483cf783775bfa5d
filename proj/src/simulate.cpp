#include "hmmt/simulate.hpp"

#include "hmmt/baselines.hpp"
#include "hmmt/errors.hpp"
#include "hmmt/parallel.hpp"
#include "hmmt/random.hpp"

#include <boost/math/distributions/non_central_chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hmmt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template<class... Ts>
struct overloaded : Ts...
{
  using Ts::operator()...;
};

void
validate_family(const PriorFamily& family)
{
  auto bad = [](const char* what) { throw std::invalid_argument(std::string("prior: ") + what); };
  std::visit(overloaded{
               [&](const UniformPrior& p) {
                 if (!(p.lower < p.upper))
                   bad("uniform needs lower < upper");
               },
               [&](const TrianglePrior& p) {
                 if (!(p.lower < p.upper) || !(p.mode >= p.lower && p.mode <= p.upper))
                   bad("triangle needs lower <= mode <= upper and lower < upper");
               },
               [&](const LevyPrior& p) {
                 if (!(p.scale > 0.0))
                   bad("levy scale must be positive");
               },
               [&](const NoncentralChiSquaredPrior& p) {
                 if (!(p.df >= 1.0) || !(p.ncp >= 0.0))
                   bad("noncentral chi-squared needs df >= 1 and ncp >= 0");
               },
               [&](const WeibullPrior& p) {
                 if (!(p.shape > 0.0) || !(p.scale > 0.0))
                   bad("weibull parameters must be positive");
               },
               [&](const BurrPrior& p) {
                 if (!(p.c > 0.0) || !(p.k > 0.0) || !(p.scale > 0.0))
                   bad("burr parameters must be positive");
               },
             },
             family);
}

double
family_pdf(const PriorFamily& family, double m)
{
  return std::visit(
    overloaded{
      [m](const UniformPrior& p) {
        return (m >= p.lower && m <= p.upper) ? 1.0 / (p.upper - p.lower) : 0.0;
      },
      [m](const TrianglePrior& p) {
        if (m < p.lower || m > p.upper)
          return 0.0;
        const double width = p.upper - p.lower;
        if (m <= p.mode)
          return p.mode == p.lower ? 2.0 / width : 2.0 * (m - p.lower) / (width * (p.mode - p.lower));
        return p.mode == p.upper ? 2.0 / width : 2.0 * (p.upper - m) / (width * (p.upper - p.mode));
      },
      [m](const LevyPrior& p) {
        if (m <= 0.0)
          return 0.0;
        return std::sqrt(p.scale / (2.0 * std::numbers::pi)) * std::exp(-p.scale / (2.0 * m)) /
               (m * std::sqrt(m));
      },
      [m](const NoncentralChiSquaredPrior& p) {
        if (m <= 0.0)
          return 0.0;
        return boost::math::pdf(boost::math::non_central_chi_squared(p.df, p.ncp), m);
      },
      [m](const WeibullPrior& p) {
        if (m < 0.0)
          return 0.0;
        const double t = m / p.scale;
        return p.shape / p.scale * std::pow(t, p.shape - 1.0) * std::exp(-std::pow(t, p.shape));
      },
      [m](const BurrPrior& p) {
        if (m <= 0.0)
          return 0.0;
        const double t = m / p.scale;
        const double tc = std::pow(t, p.c);
        return p.c * p.k / p.scale * std::pow(t, p.c - 1.0) * std::pow(1.0 + tc, -p.k - 1.0);
      },
    },
    family);
}

struct Support
{
  double lower;
  double upper;
  std::vector<double> breakpoints;
};

Support
family_support(const PriorFamily& family)
{
  return std::visit(overloaded{
                      [](const UniformPrior& p) {
                        return Support{ p.lower, p.upper, { p.lower, p.upper } };
                      },
                      [](const TrianglePrior& p) {
                        return Support{ p.lower, p.upper, { p.lower, p.mode, p.upper } };
                      },
                      [](const LevyPrior&) { return Support{ 0.0, kInf, { 0.0 } }; },
                      [](const NoncentralChiSquaredPrior&) { return Support{ 0.0, kInf, { 0.0 } }; },
                      [](const WeibullPrior&) { return Support{ 0.0, kInf, { 0.0 } }; },
                      [](const BurrPrior&) { return Support{ 0.0, kInf, { 0.0 } }; },
                    },
                    family);
}

double
sample_family(const PriorFamily& family, Rng& rng)
{
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  return std::visit(
    overloaded{
      [&](const UniformPrior& p) { return p.lower + (p.upper - p.lower) * unif(rng); },
      [&](const TrianglePrior& p) {
        const double width = p.upper - p.lower;
        const double u = unif(rng);
        const double cut = (p.mode - p.lower) / width;
        if (u < cut)
          return p.lower + std::sqrt(u * width * (p.mode - p.lower));
        return p.upper - std::sqrt((1.0 - u) * width * (p.upper - p.mode));
      },
      [&](const LevyPrior& p) {
        double z = 0.0;
        while (z == 0.0)
          z = normal(rng);
        return p.scale / (z * z);
      },
      [&](const NoncentralChiSquaredPrior& p) {
        double central = 0.0;
        if (p.df > 1.0) {
          std::chi_squared_distribution<double> chi(p.df - 1.0);
          central = chi(rng);
        }
        const double shifted = normal(rng) + std::sqrt(p.ncp);
        return central + shifted * shifted;
      },
      [&](const WeibullPrior& p) {
        return p.scale * std::pow(-std::log1p(-unif(rng)), 1.0 / p.shape);
      },
      [&](const BurrPrior& p) {
        const double u = unif(rng);
        return p.scale * std::pow(std::pow(1.0 - u, -1.0 / p.k) - 1.0, 1.0 / p.c);
      },
    },
    family);
}

std::string
describe_family(const PriorFamily& family)
{
  std::ostringstream s;
  std::visit(overloaded{
               [&](const UniformPrior& p) { s << "Unif[" << p.lower << "," << p.upper << "]"; },
               [&](const TrianglePrior& p) {
                 s << "Triangle[" << p.lower << "," << p.upper << "; mode " << p.mode << "]";
               },
               [&](const LevyPrior& p) { s << "Levy(" << p.scale << ")"; },
               [&](const NoncentralChiSquaredPrior& p) {
                 s << "NcChiSq(" << p.df << "," << p.ncp << ")";
               },
               [&](const WeibullPrior& p) { s << "Weibull(" << p.shape << "," << p.scale << ")"; },
               [&](const BurrPrior& p) { s << "Burr(" << p.c << "," << p.k << "," << p.scale << ")"; },
             },
             family);
  return s.str();
}

} // namespace

// ---------------------------------------------------------------- priors

void
validate(const Prior& prior)
{
  if (prior.parts.empty())
    throw std::invalid_argument("prior: no components");
  double total = 0.0;
  for (const auto& [w, family] : prior.parts) {
    if (!(w > 0.0))
      throw std::invalid_argument("prior: mixture weights must be positive");
    validate_family(family);
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("prior: mixture weights must sum to 1");
}

std::string
describe(const Prior& prior)
{
  if (prior.parts.size() == 1)
    return describe_family(prior.parts.front().second);
  std::string out;
  for (const auto& [w, family] : prior.parts) {
    if (!out.empty())
      out += " + ";
    std::ostringstream s;
    s << w << " " << describe_family(family);
    out += s.str();
  }
  return out;
}

PriorShape
prior_shape(const Prior& prior)
{
  validate(prior);
  PriorShape shape{ nullptr, kInf, -kInf, {} };
  for (const auto& [w, family] : prior.parts) {
    const Support s = family_support(family);
    shape.lower = std::min(shape.lower, s.lower);
    shape.upper = std::max(shape.upper, s.upper);
    shape.breakpoints.insert(shape.breakpoints.end(), s.breakpoints.begin(), s.breakpoints.end());
  }
  std::sort(shape.breakpoints.begin(), shape.breakpoints.end());
  shape.breakpoints.erase(std::unique(shape.breakpoints.begin(), shape.breakpoints.end()),
                          shape.breakpoints.end());
  shape.pdf = [parts = prior.parts](double m) {
    double total = 0.0;
    for (const auto& [w, family] : parts)
      total += w * family_pdf(family, m);
    return total;
  };
  return shape;
}

std::vector<double>
sample_prior(const Prior& prior, std::size_t count, Rng& rng)
{
  validate(prior);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> draws(count);
  for (auto& d : draws) {
    std::size_t part = 0;
    if (prior.parts.size() > 1) {
      const double u = unif(rng);
      double cumulative = 0.0;
      part = prior.parts.size() - 1;
      for (std::size_t k = 0; k + 1 < prior.parts.size(); ++k) {
        cumulative += prior.parts[k].first;
        if (u < cumulative) {
          part = k;
          break;
        }
      }
    }
    d = sample_family(prior.parts[part].second, rng);
  }
  return draws;
}

std::vector<double>
sample_prior(const Prior& prior, std::size_t count, std::uint64_t seed)
{
  Rng rng = make_rng(seed);
  return sample_prior(prior, count, rng);
}

// ---------------------------------------------------------------- scenarios

void
validate(const ScenarioSpec& spec)
{
  validate(spec.g1);
  if (!(spec.a00 > 0.0 && spec.a00 < 1.0) || !(spec.a11 > 0.0 && spec.a11 < 1.0))
    throw std::invalid_argument("scenario: transition probabilities must lie in (0, 1)");
  if (spec.n < 1)
    throw std::invalid_argument("scenario: n must be positive");
  if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma))
    throw std::invalid_argument("scenario: sigma must be non-negative");
}

const std::vector<std::string>&
scenario_names()
{
  static const std::vector<std::string> names{ "I",   "II", "III", "IV", "V",  "VI",
                                               "VII", "VIII", "IX", "X", "XI", "XII" };
  return names;
}

ScenarioSpec
scenario(std::string_view name, double a11, std::size_t n)
{
  const PriorFamily uniform_wide = UniformPrior{ -9.0, 9.0 };
  const PriorFamily uniform_narrow = UniformPrior{ 3.0, 8.0 };
  const PriorFamily triangle = TrianglePrior{ -30.0, 30.0, 6.0 };
  const PriorFamily levy = LevyPrior{ 7.0 };
  const PriorFamily ncchisq = NoncentralChiSquaredPrior{ 3.0, 2.0 };
  const PriorFamily weibull = WeibullPrior{ 2.0, 5.0 };
  const PriorFamily burr = BurrPrior{ 2.0, 0.5, 2.0 };

  Prior g1;
  if (name == "I")
    g1 = uniform_wide;
  else if (name == "II")
    g1 = triangle;
  else if (name == "III")
    g1 = levy;
  else if (name == "IV")
    g1 = ncchisq;
  else if (name == "V")
    g1 = weibull;
  else if (name == "VI")
    g1 = burr;
  else if (name == "VII")
    g1 = Prior({ { 0.4, uniform_narrow }, { 0.6, levy } });
  else if (name == "VIII")
    g1 = Prior({ { 0.4, ncchisq }, { 0.6, triangle } });
  else if (name == "IX")
    g1 = Prior({ { 0.4, uniform_narrow }, { 0.6, weibull } });
  else if (name == "X")
    g1 = Prior({ { 0.5, weibull }, { 0.5, levy } });
  else if (name == "XI")
    g1 = Prior({ { 0.5, ncchisq }, { 0.5, burr } });
  else if (name == "XII")
    g1 = Prior({ { 0.6, ncchisq }, { 0.4, uniform_narrow } });
  else
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");

  ScenarioSpec spec{ std::string(name), std::move(g1), 0.95, a11, n, 1.0 };
  validate(spec);
  return spec;
}

std::vector<int>
sample_chain(const TransitionMatrix& t, std::size_t n, std::uint64_t seed)
{
  if (n < 1)
    throw std::invalid_argument("sample_chain: n must be positive");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> theta(n);
  theta[0] = unif(rng) < stationary_distribution(t).p1() ? 1 : 0;
  for (std::size_t i = 1; i < n; ++i)
    theta[i] = unif(rng) < t(theta[i - 1], 1) ? 1 : 0;
  return theta;
}

SimulationRun
generate(const ScenarioSpec& spec, std::uint64_t seed)
{
  validate(spec);
  SimulationRun run;
  run.seed = seed;
  run.theta = sample_chain(TransitionMatrix(spec.a00, spec.a11), spec.n, derive_seed(seed, { 1 }));

  const auto signals =
    static_cast<std::size_t>(std::count(run.theta.begin(), run.theta.end(), 1));
  const std::vector<double> draws = sample_prior(spec.g1, signals, derive_seed(seed, { 2 }));
  run.mu.assign(spec.n, 0.0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < spec.n; ++i)
    if (run.theta[i] == 1)
      run.mu[i] = draws[next++];

  Rng rng = make_rng(seed, { 3 });
  std::normal_distribution<double> noise(0.0, 1.0);
  run.x.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i)
    run.x[i] = run.mu[i] + spec.sigma * noise(rng);
  return run;
}

double
mse(std::span<const double> estimates, std::span<const double> truth)
{
  if (estimates.size() != truth.size())
    throw LengthMismatch(truth.size(), estimates.size());
  if (truth.empty())
    throw std::invalid_argument("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    total += (estimates[i] - truth[i]) * (estimates[i] - truth[i]);
  return total / static_cast<double>(truth.size());
}

ConvolvedDensity
marginal_density(const Prior& prior, double sigma)
{
  return ConvolvedDensity(prior_shape(prior), sigma);
}

HmmParams
true_params(const ScenarioSpec& spec)
{
  if (!(spec.sigma > 0.0))
    throw std::invalid_argument("true_params: sigma must be positive");
  const TransitionMatrix t(spec.a00, spec.a11);
  return HmmParams{ t, stationary_distribution(t), GaussianDensity(0.0, spec.sigma),
                    marginal_density(spec.g1, spec.sigma) };
}

// ---------------------------------------------------------------- benchmark

std::string_view
to_string(Estimator e)
{
  switch (e) {
    case Estimator::hmmt:
      return "hmmt";
    case Estimator::hmmt_truncated:
      return "hmmt_truncated";
    case Estimator::tnd:
      return "tnd";
    case Estimator::gmm3:
      return "gmm3";
    case Estimator::gmm_auto:
      return "gmm_auto";
    case Estimator::oracle:
      return "oracle";
    case Estimator::bayes:
      return "bayes";
  }
  return "unknown";
}

const std::vector<Estimator>&
all_estimators()
{
  static const std::vector<Estimator> all{ Estimator::tnd,    Estimator::gmm3,
                                           Estimator::gmm_auto, Estimator::hmmt,
                                           Estimator::hmmt_truncated, Estimator::oracle,
                                           Estimator::bayes };
  return all;
}

Estimator
parse_estimator(std::string_view name)
{
  for (Estimator e : all_estimators())
    if (to_string(e) == name)
      return e;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

BenchmarkTable
run_benchmark(const ScenarioSpec& spec,
              std::span<const Estimator> estimators,
              std::size_t replications,
              std::uint64_t seed,
              const BenchmarkOptions& options)
{
  validate(spec);
  validate(options.fit);
  if (replications < 1)
    throw std::invalid_argument("run_benchmark: need at least one replication");
  if (estimators.empty())
    throw std::invalid_argument("run_benchmark: no estimators requested");

  const HmmParams truth = true_params(spec);
  const std::size_t m = estimators.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> scores(m, std::vector<double>(replications, nan));
  std::vector<std::vector<std::string>> errors(m, std::vector<std::string>(replications));

  parallel_for(replications, options.threads, [&](std::size_t r) {
    const SimulationRun run = generate(spec, derive_seed(seed, { r }));
    FitConfig config = options.fit;
    config.rng_seed = derive_seed(seed, { r, 1 });

    std::optional<HmmtFit> hmmt_fit;
    std::string hmmt_error;
    auto ensure_hmmt = [&]() -> const HmmtFit& {
      if (!hmmt_fit && hmmt_error.empty()) {
        try {
          hmmt_fit = fit_hmmt(run.x, spec.sigma, config);
        } catch (const Error& e) {
          hmmt_error = e.what();
        }
      }
      if (!hmmt_fit)
        throw Error(hmmt_error);
      return *hmmt_fit;
    };

    for (std::size_t k = 0; k < m; ++k) {
      try {
        std::vector<double> est;
        switch (estimators[k]) {
          case Estimator::hmmt:
            est = ensure_hmmt().estimate.estimates;
            break;
          case Estimator::hmmt_truncated:
            est = ensure_hmmt().truncated.estimates;
            break;
          case Estimator::tnd:
            est = tnd_estimate(run.x, spec.sigma, config).estimate.estimates;
            break;
          case Estimator::gmm3:
            est = gmm_fit(run.x, spec.sigma, MixtureOrder::fixed(3), config).estimate.estimates;
            break;
          case Estimator::gmm_auto:
            est = gmm_fit(run.x, spec.sigma, MixtureOrder::automatic_bic(), config).estimate.estimates;
            break;
          case Estimator::oracle:
            est = oracle_rule(run.x, run.theta, truth.f0, truth.f1, spec.sigma).estimates;
            break;
          case Estimator::bayes:
            est = bayes_rule(run.x, truth, spec.sigma).estimates;
            break;
        }
        scores[k][r] = mse(est, run.mu);
      } catch (const std::exception& e) {
        errors[k][r] = e.what();
      }
    }
  });

  BenchmarkTable table{ spec.name, spec.a11, {} };
  for (std::size_t k = 0; k < m; ++k) {
    EstimatorSummary row{ estimators[k], 0.0, 0.0, 0, scores[k], {} };
    double sum = 0.0;
    for (std::size_t r = 0; r < replications; ++r) {
      if (!errors[k][r].empty()) {
        row.failures.push_back("replication " + std::to_string(r) + ": " + errors[k][r]);
        continue;
      }
      sum += scores[k][r];
      ++row.replications;
    }
    if (row.replications == 0)
      throw Error("run_benchmark: estimator " + std::string(to_string(estimators[k])) +
                  " failed on every replication (" + row.failures.front() + ")");
    row.mean_mse = sum / static_cast<double>(row.replications);
    if (row.replications > 1) {
      double ss = 0.0;
      for (std::size_t r = 0; r < replications; ++r)
        if (errors[k][r].empty())
          ss += (scores[k][r] - row.mean_mse) * (scores[k][r] - row.mean_mse);
      const double count = static_cast<double>(row.replications);
      row.se = std::sqrt(ss / (count - 1.0) / count);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void
write_benchmark_csv(std::ostream& out, std::span<const BenchmarkTable> tables)
{
  out << "scenario,a11,estimator,mean_mse,se,replications\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& table : tables)
    for (const auto& row : table.rows)
      out << table.scenario << ',' << num(table.a11) << ',' << to_string(row.estimator) << ','
          << num(row.mean_mse) << ',' << num(row.se) << ',' << row.replications << '\n';
}

} // namespace hmmt
