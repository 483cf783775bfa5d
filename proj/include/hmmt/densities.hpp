#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace hmmt {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Kernel terms further than this many bandwidths from a support point are
// treated as exactly zero (phi(8) < 1e-14).
inline constexpr double kKernelCutoff = 8.0;

// Standard normal density.
inline double standard_normal_pdf(double t);

/// Normal density N(location, scale^2).
class GaussianDensity
{
public:
  GaussianDensity(double location, double scale);

  double location() const { return location_; }
  double scale() const { return scale_; }

  double pdf(double x) const;
  double log_pdf(double x) const;
  double derivative(double x) const;
  /// f'(x)/f(x) = -(x - location)/scale^2.
  double score(double x) const;

private:
  double location_;
  double scale_;
};

/// Weighted Gaussian-kernel density estimate
///
///     f(x) = sum_i (w_i / h) K((x_i - x) / h),   sum_i w_i = 1.
///
/// Support points are stored sorted so that a query only touches the points
/// within kKernelCutoff bandwidths. Weights are normalized on construction.
class WeightedKde
{
public:
  WeightedKde(std::vector<double> points, std::vector<double> weights, double bandwidth);

  static WeightedKde uniform(std::vector<double> points, double bandwidth);

  double pdf(double x) const;
  double log_pdf(double x) const;
  double derivative(double x) const;

  /// Analytic f'(x)/f(x). Throws DensityUnderflow when f(x) falls below
  /// underflow_floor().
  double score(double x) const;

  /// max(1e-300, 1e-12 * tallest weighted kernel bump).
  double underflow_floor() const { return floor_; }

  std::span<const double> points() const { return points_; }
  std::span<const double> weights() const { return weights_; }
  double bandwidth() const { return bandwidth_; }
  std::size_t size() const { return points_.size(); }

private:
  struct Sums
  {
    double density = 0.0;   // sum w K
    double moment = 0.0;    // sum w (x_i - x) K
  };
  Sums sums(double x) const;

  std::vector<double> points_;
  std::vector<double> weights_;
  double bandwidth_;
  double floor_;
};

struct MixtureComponent
{
  double weight;
  double mean;
  double sd;
};

/// Finite Gaussian mixture; scores are computed from log-space
/// responsibilities so they stay finite far in the tails.
class GaussianMixture
{
public:
  explicit GaussianMixture(std::vector<MixtureComponent> components);

  double pdf(double x) const;
  double log_pdf(double x) const;
  double derivative(double x) const;
  double score(double x) const;

  /// Posterior component probabilities at x.
  std::vector<double> responsibilities(double x) const;

  const std::vector<MixtureComponent>& components() const { return components_; }
  std::size_t size() const { return components_.size(); }

private:
  std::vector<MixtureComponent> components_;
};

/// Continuous prior on [lower, upper] (bounds may be infinite). Breakpoints
/// mark kinks or edges so quadrature panels never straddle them.
struct PriorShape
{
  std::function<double(double)> pdf;
  double lower;
  double upper;
  std::vector<double> breakpoints;
};

/// Marginal density of X = mu + N(0, noise_sd^2) with mu ~ prior:
///
///     f(x) = int phi_sigma(x - mu) g(mu) dmu
///
/// evaluated by piecewise Gauss-Legendre quadrature over mu within
/// 12 noise_sd of x.
class ConvolvedDensity
{
public:
  ConvolvedDensity(PriorShape prior, double noise_sd);

  struct Evaluation
  {
    double value;
    double derivative;
    double first_moment; // int mu phi(x - mu) g(mu) dmu
  };
  Evaluation evaluate(double x) const;

  double pdf(double x) const { return evaluate(x).value; }
  double log_pdf(double x) const;
  double derivative(double x) const { return evaluate(x).derivative; }
  double score(double x) const;
  /// E[mu | x] computed directly from the first moment.
  double posterior_mean(double x) const;

  double noise_sd() const { return noise_sd_; }
  const PriorShape& prior() const { return *prior_; }

private:
  std::shared_ptr<const PriorShape> prior_;
  double noise_sd_;
};

using Density = std::variant<GaussianDensity, WeightedKde, GaussianMixture, ConvolvedDensity>;

double pdf(const Density& f, double x);
double log_pdf(const Density& f, double x);
double score(const Density& f, double x);

/// Location of the global maximum. Exact for a Gaussian; grid search plus
/// golden-section refinement otherwise.
double density_mode(const Density& f);

/// Silverman's rule of thumb 0.9 min(sd, IQR/1.34) n^(-1/5). Falls back to
/// whichever spread measure is nonzero; returns 0 for constant data.
double silverman_bandwidth(std::span<const double> values);

inline double
standard_normal_pdf(double t)
{
  return kInvSqrt2Pi * std::exp(-0.5 * t * t);
}

} // namespace hmmt
