#pragma once

#include "hmmt/densities.hpp"
#include "hmmt/errors.hpp"
#include "hmmt/hmm.hpp"
#include "hmmt/shrinkage.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hmmt {

enum class F0Mode
{
  fit_location_scale, // f0 = N(nu, tau) re-estimated every iteration
  fixed_known         // f0 = FitConfig::known_f0, never updated
};

struct FitConfig
{
  // Bandwidths in units of the working noise scale. Empty selects the
  // data-driven default grid.
  std::vector<double> bandwidth_grid;
  double alpha = 0.1;
  int max_iterations = 500;
  double convergence_tol = 1e-6; // relative change in log-likelihood
  double parameter_tol = 1e-4;   // max relative change in (A, psi, nu, tau)
  std::uint64_t rng_seed = 0;
  TruncationMode truncation_mode = TruncationMode::clamp;
  F0Mode f0_mode = F0Mode::fit_location_scale;
  // In-control density of X (noise sd sigma). Required for fixed_known.
  std::optional<Density> known_f0;
  // Workers for the per-bandwidth fits; 0 uses hardware concurrency.
  unsigned threads = 1;
};

void validate(const FitConfig& config);

inline constexpr double kTauFloor = 0.05;        // times the working noise scale
inline constexpr double kWeightCollapse = 1e-8;  // minimum total posterior mass per state
inline constexpr std::size_t kMinInitLabels = 5;
inline constexpr std::size_t kDefaultGridSize = 16;

/// U = X + alpha Z and V = X - Z / alpha with Z ~ N(0, sigma^2 I). Given the
/// means, U and V are independent.
struct SplitSample
{
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> z;
  double alpha;
  double sigma;
  double sigma_u; // sqrt(1 + alpha^2) sigma
  double sigma_v; // sqrt(1 + alpha^-2) sigma
};

SplitSample split_sample(std::span<const double> x, double alpha, double sigma, std::uint64_t seed);
SplitSample split_sample(std::span<const double> x,
                         double alpha,
                         double sigma,
                         std::span<const double> z);

/// Provisional labels 1{|u_i - median| > 2 tau0}, tau0 = max(1.4826 MAD,
/// sigma_u); the kMinInitLabels largest deviations when fewer are flagged.
std::vector<int> provisional_labels(std::span<const double> u, double sigma_u);

/// Deterministic robust-threshold starting point: f0 = N(median, tau0),
/// transitions from add-one-smoothed counts of the provisional labels, psi
/// stationary, f1 a uniform KDE on the labeled points with Silverman
/// bandwidth. Throws DegenerateInput for constant u.
HmmParams initialize(std::span<const double> u, double sigma_u, const FitConfig& config);

/// 16 geometric points from 0.05 h_S to 2 h_S (h_S: Silverman bandwidth of
/// the provisional out-of-control points), in units of sigma_u.
std::vector<double> default_bandwidth_grid(std::span<const double> u, double sigma_u);

/// Chain and f0 part of the M-step: psi, transitions and the weighted
/// Gaussian MLE for f0 (unless fixed). f1 is copied from `previous`.
HmmParams m_step_chain_f0(const PosteriorState& posterior,
                          std::span<const double> u,
                          double sigma_u,
                          const FitConfig& config,
                          const HmmParams& previous);

/// M-step given posteriors: psi, transitions, KDE weights p_i / sum p, f1 on
/// support u with bandwidth h * sigma_u, and the weighted Gaussian MLE for
/// f0 unless it is fixed.
HmmParams m_step(const PosteriorState& posterior,
                 std::span<const double> u,
                 double h,
                 double sigma_u,
                 const FitConfig& config,
                 const HmmParams& previous);

/// forward_backward followed by m_step.
HmmParams em_step(const HmmParams& params,
                  std::span<const double> u,
                  double h,
                  double sigma_u,
                  const FitConfig& config);

struct BandwidthScore
{
  double h;
  double mse = std::numeric_limits<double>::quiet_NaN();
  std::string error; // empty when the fit at h succeeded

  bool ok() const { return error.empty(); }
};

struct FitResult
{
  HmmParams params;
  PosteriorState posterior; // computed under params
  double chosen_h = std::numeric_limits<double>::quiet_NaN();
  std::vector<BandwidthScore> mse_by_h;
  int iterations_used = 0;
  std::vector<double> loglik_trace;
  bool converged = false;
};

/// Iteration cap reached while the log-likelihood still moved by more than
/// ten times the tolerance. Carries the last iterate.
class NonConvergence : public Error
{
public:
  NonConvergence(FitResult last, double last_change);
  const FitResult& last() const { return last_; }

private:
  FitResult last_;
};

FitResult fit_from(HmmParams start,
                   std::span<const double> u,
                   double h,
                   double sigma_u,
                   const FitConfig& config);

FitResult fit_at_bandwidth(std::span<const double> u,
                           double h,
                           double sigma_u,
                           const FitConfig& config);

double prediction_error(std::span<const double> predictions, std::span<const double> v);

/// sum_i [ sum_j p_i(j) {u_i + sigma_u^2 f_j'(u_i)/f_j(u_i)} - v_i ]^2
double bandwidth_mse(const SplitSample& split, const FitResult& fit);

/// Index of the smallest finite score; throws Error if every entry failed.
std::size_t select_bandwidth(std::span<const BandwidthScore> scores);

struct BandwidthScan
{
  SplitSample split;
  std::vector<BandwidthScore> scores;
  std::size_t best;
};

/// Steps 1-7: split, fit on U at every grid bandwidth, score against V.
BandwidthScan bandwidth_scan(std::span<const double> x, double sigma, const FitConfig& config);

struct HmmtFit
{
  FitResult fit;
  ShrinkageResult estimate;  // td rule
  ShrinkageResult truncated; // robust variant, per config.truncation_mode
};

/// Full estimator: bandwidth scan, then a refit on x at the chosen
/// bandwidth with working scale sigma.
HmmtFit fit_hmmt(std::span<const double> x, double sigma, const FitConfig& config);

/// Infeasible KDE using the true states: weights theta_i / sum theta.
WeightedKde oracle_kde(std::span<const double> x, std::span<const int> theta, double h);

/// Adds independent N(0, extra_sd^2) noise to a Gaussian or Gaussian mixture.
Density widen(const Density& f, double extra_sd);

} // namespace hmmt
