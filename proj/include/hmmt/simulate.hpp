#pragma once

#include "hmmt/densities.hpp"
#include "hmmt/fit.hpp"
#include "hmmt/hmm.hpp"
#include "hmmt/random.hpp"
#include "hmmt/shrinkage.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace hmmt {

struct UniformPrior
{
  double lower;
  double upper;
};

struct TrianglePrior
{
  double lower;
  double upper;
  double mode;
};

/// Levy with location 0: density sqrt(c / 2 pi) m^(-3/2) exp(-c / 2m) on m > 0.
struct LevyPrior
{
  double scale;
};

struct NoncentralChiSquaredPrior
{
  double df;
  double ncp;
};

struct WeibullPrior
{
  double shape;
  double scale;
};

/// Burr type XII: F(m) = 1 - (1 + (m/s)^c)^(-k) on m > 0.
struct BurrPrior
{
  double c;
  double k;
  double scale;
};

using PriorFamily = std::variant<UniformPrior,
                                 TrianglePrior,
                                 LevyPrior,
                                 NoncentralChiSquaredPrior,
                                 WeibullPrior,
                                 BurrPrior>;

/// Finite mixture of families; a single family has one part with weight 1.
struct Prior
{
  std::vector<std::pair<double, PriorFamily>> parts;

  Prior() = default;
  Prior(PriorFamily family) : parts{ { 1.0, std::move(family) } } {}
  Prior(std::vector<std::pair<double, PriorFamily>> mixture) : parts(std::move(mixture)) {}
};

void validate(const Prior& prior);
std::string describe(const Prior& prior);

/// Density of the prior with its support and kinks, for quadrature.
PriorShape prior_shape(const Prior& prior);

std::vector<double> sample_prior(const Prior& prior, std::size_t count, std::uint64_t seed);
std::vector<double> sample_prior(const Prior& prior, std::size_t count, Rng& rng);

struct ScenarioSpec
{
  std::string name;
  Prior g1;
  double a00 = 0.95;
  double a11 = 0.2;
  std::size_t n = 2000;
  double sigma = 1.0; // 0 is allowed here only to check the generator
};

void validate(const ScenarioSpec& spec);

/// Scenario I to XII; throws std::invalid_argument for an unknown name.
ScenarioSpec scenario(std::string_view name, double a11, std::size_t n = 2000);
const std::vector<std::string>& scenario_names();

struct SimulationRun
{
  std::vector<int> theta;
  std::vector<double> mu;
  std::vector<double> x;
  std::uint64_t seed;
};

/// theta_1 from the stationary distribution, then the chain.
std::vector<int> sample_chain(const TransitionMatrix& t, std::size_t n, std::uint64_t seed);

SimulationRun generate(const ScenarioSpec& spec, std::uint64_t seed);

double mse(std::span<const double> estimates, std::span<const double> truth);

/// Exact per-state marginals: f0 = N(0, sigma), f1 = g1 convolved with N(0, sigma^2).
ConvolvedDensity marginal_density(const Prior& prior, double sigma);
HmmParams true_params(const ScenarioSpec& spec);

enum class Estimator
{
  hmmt,
  hmmt_truncated,
  tnd,
  gmm3,
  gmm_auto,
  oracle,
  bayes
};

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);
const std::vector<Estimator>& all_estimators();

struct BenchmarkOptions
{
  FitConfig fit;     // rng_seed is replaced per replication
  unsigned threads = 1; // workers across replications; 0 uses hardware concurrency
};

struct EstimatorSummary
{
  Estimator estimator;
  double mean_mse = 0.0;
  double se = 0.0;
  std::size_t replications = 0; // successful ones
  std::vector<double> mse_by_replication; // NaN where the replication failed
  std::vector<std::string> failures;
};

struct BenchmarkTable
{
  std::string scenario;
  double a11;
  std::vector<EstimatorSummary> rows;
};

/// Runs every estimator on `replications` generated sequences. A failing
/// replication is recorded; the call throws only when an estimator fails
/// on every replication.
BenchmarkTable run_benchmark(const ScenarioSpec& spec,
                             std::span<const Estimator> estimators,
                             std::size_t replications,
                             std::uint64_t seed,
                             const BenchmarkOptions& options = {});

/// Header plus one row per estimator; 17 significant digits.
void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkTable> tables);

} // namespace hmmt
