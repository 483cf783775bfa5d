#pragma once

#include "hmmt/densities.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace hmmt {

// Probabilities are kept inside [kMinProbability, 1 - kMinProbability] so
// that every transition stays possible.
inline constexpr double kMinProbability = 1e-9;

/// Two-state transition matrix a_jk = P(theta_i = k | theta_{i-1} = j).
/// Constructed from the two self-transition probabilities, clamped.
class TransitionMatrix
{
public:
  TransitionMatrix(double a00, double a11);

  double a00() const { return a00_; }
  double a01() const { return 1.0 - a00_; }
  double a10() const { return 1.0 - a11_; }
  double a11() const { return a11_; }
  double operator()(int from, int to) const;

private:
  double a00_;
  double a11_;
};

/// (psi0, psi1) with psi1 clamped like the transition entries.
class StateProbabilities
{
public:
  explicit StateProbabilities(double p1);

  double p0() const { return 1.0 - p1_; }
  double p1() const { return p1_; }
  double operator[](int state) const { return state == 0 ? p0() : p1(); }

private:
  double p1_;
};

/// Unique solution of pi A = pi: pi1 = a01 / (a01 + a10).
StateProbabilities stationary_distribution(const TransitionMatrix& t);

struct HmmParams
{
  TransitionMatrix transitions;
  StateProbabilities initial;
  Density f0;
  Density f1;
};

// xi[j][k] = P(theta_i = j, theta_{i+1} = k | x)
using PairTable = std::array<std::array<double, 2>, 2>;

struct PosteriorState
{
  std::vector<double> p;     // P(theta_i = 1 | x)
  std::vector<PairTable> xi; // length n - 1
  double loglik = 0.0;       // log P(x | params)

  std::size_t size() const { return p.size(); }
};

/// Log-space forward-backward on precomputed log emission densities.
/// Throws EmissionUnderflow where both log densities are -inf.
PosteriorState forward_backward(const TransitionMatrix& transitions,
                                const StateProbabilities& initial,
                                std::span<const double> log_f0,
                                std::span<const double> log_f1);

PosteriorState forward_backward(const HmmParams& params, std::span<const double> x);

/// Exact posterior by summing over all 2^n state paths. Test oracle only;
/// throws InstanceTooLarge for n > 20.
PosteriorState brute_force_posterior(const HmmParams& params, std::span<const double> x);

inline constexpr std::size_t kBruteForceMaxLength = 20;

} // namespace hmmt
