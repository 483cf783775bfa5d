#pragma once

#include "hmmt/densities.hpp"
#include "hmmt/hmm.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace hmmt {

enum class RuleTag
{
  independent_tweedie,
  oracle,
  bayes,
  td,
  truncated
};

std::string_view to_string(RuleTag tag);

/// How the out-of-control estimate is limited by the robust rule. `clamp`
/// caps |mu_oc| at sqrt(3 log n); `literal_max` raises it to at least that
/// value (the formula as printed).
enum class TruncationMode
{
  clamp,
  literal_max
};

struct PointComponents
{
  std::vector<double> p;              // P(theta_i = 1 | x)
  std::vector<double> in_control;     // per-state estimate under theta_i = 0
  std::vector<double> out_of_control; // per-state estimate under theta_i = 1
};

struct ShrinkageResult
{
  std::vector<double> estimates;
  RuleTag rule;
  std::optional<PointComponents> components;
};

/// mu_i = x_i + sigma^2 f'(x_i)/f(x_i).
ShrinkageResult tweedie_independent(std::span<const double> x, const Density& f, double sigma);

/// Tweedie's formula applied with the density of the known state theta_i.
ShrinkageResult oracle_rule(std::span<const double> x,
                            std::span<const int> theta,
                            const Density& f0,
                            const Density& f1,
                            double sigma);

/// Posterior-weighted per-state Tweedie rule with exact posteriors under
/// params; MSE-optimal when params are the truth.
ShrinkageResult bayes_rule(std::span<const double> x, const HmmParams& params, double sigma);

/// p_i {x_i + s^2 f1'/f1} + (1 - p_i) {x_i + s^2 f0'/f0}.
///
/// Where the f1 score underflows and p_i < kNegligiblePosterior the
/// out-of-control branch contributes p_i * x_i; any other underflow
/// propagates.
ShrinkageResult td_rule(std::span<const double> x,
                        const PosteriorState& posterior,
                        const Density& f0,
                        const Density& f1,
                        double sigma);

inline constexpr double kNegligiblePosterior = 1e-10;

/// sqrt(3 log n).
double truncation_threshold(std::size_t n);

/// (1 - p_i) nu + p_i sign(m_i) limit(|m_i|, sqrt(3 log n)) where nu is the
/// mode of f0 and m_i the out-of-control Tweedie estimate.
/// The returned components hold nu and the limited out-of-control value.
ShrinkageResult truncated_rule(std::span<const double> x,
                               const PosteriorState& posterior,
                               const Density& f0,
                               const Density& f1,
                               double sigma,
                               std::size_t n,
                               TruncationMode mode = TruncationMode::clamp);

} // namespace hmmt
