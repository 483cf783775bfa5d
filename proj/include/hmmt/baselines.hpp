#pragma once

#include "hmmt/densities.hpp"
#include "hmmt/fit.hpp"
#include "hmmt/hmm.hpp"
#include "hmmt/shrinkage.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace hmmt {

// ------------------------------------------------------------------ T.ND

struct TndResult
{
  ShrinkageResult estimate;
  double chosen_h;
  std::vector<BandwidthScore> mse_by_h;
};

/// Tweedie's formula with an unweighted KDE of the whole sequence, ignoring
/// the chain. The bandwidth is picked by the split-sample prediction error
/// with every p_i fixed at 1.
TndResult tnd_estimate(std::span<const double> x, double sigma, const FitConfig& config);

/// 16 geometric points from 0.05 h_S to 2 h_S, h_S the Silverman bandwidth
/// of the whole of u, in units of sigma_u.
std::vector<double> tnd_bandwidth_grid(std::span<const double> u, double sigma_u);

// ------------------------------------------------------------------ GMM

inline constexpr std::size_t kMaxAutoComponents = 8;
inline constexpr double kMinComponentWeight = 1e-8;
inline constexpr double kMinComponentSd = 0.05; // times sigma

/// Mixture order: fixed, or chosen by BIC over 1..max_components.
struct MixtureOrder
{
  bool automatic = false;
  std::size_t components = 3;
  std::size_t max_components = kMaxAutoComponents;

  static MixtureOrder fixed(std::size_t m) { return { false, m, m }; }
  static MixtureOrder automatic_bic(std::size_t max_m = kMaxAutoComponents)
  {
    return { true, 0, max_m };
  }
};

/// Starting mixture: the provisional out-of-control points split into m
/// groups by rank, each summarised by its weight, mean and sd (floored at
/// sigma).
GaussianMixture initial_mixture(std::span<const double> x, double sigma, std::size_t m);

/// One generalized EM step: forward-backward, the chain and f0 updates of
/// the kernel fit, and one weighted EM pass for the mixture with weights
/// p_i(1) r_ik. Throws ComponentCollapse when a component's weight drops
/// below 1e-8 or its sd below 0.05 sigma.
HmmParams gmm_em_step(const HmmParams& params,
                      std::span<const double> x,
                      double sigma,
                      const FitConfig& config);

/// Mixture part of gmm_em_step for given posteriors.
GaussianMixture mixture_m_step(const GaussianMixture& current,
                               std::span<const double> p,
                               std::span<const double> x,
                               double sigma);

struct GmmFit
{
  FitResult fit;
  ShrinkageResult estimate;
  std::size_t components;
  double bic;
  std::vector<std::pair<std::size_t, double>> bic_by_order; // NaN where the fit failed
};

/// Number of free parameters of the chain plus f0 plus an m-component f1.
std::size_t gmm_parameter_count(std::size_t m, const FitConfig& config);

/// Baum-Welch with a Gaussian-mixture f1, run on x with working scale
/// sigma. A collapsed component is pruned and the fit continues.
GmmFit gmm_fit(std::span<const double> x,
               double sigma,
               MixtureOrder order,
               const FitConfig& config);

} // namespace hmmt
