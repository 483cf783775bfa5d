#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical code.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double
phi(double t)
{
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}

inline double
normal_pdf(double x, double mean, double sd)
{
  return phi((x - mean) / sd) / sd;
}

inline double
normal_cdf(double t)
{
  return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

// Plain sum over every point, no cutoff; weights need not be normalized.
inline double
kde_pdf(const std::vector<double>& points, const std::vector<double>& weights, double h, double x)
{
  double total = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    total += weights[i] * phi((points[i] - x) / h);
    mass += weights[i];
  }
  return total / (mass * h);
}

// Composite Simpson rule with m (even) panels.
inline double
simpson(const std::function<double(double)>& f, double a, double b, std::size_t m)
{
  if (m % 2 == 1)
    ++m;
  const double h = (b - a) / static_cast<double>(m);
  double s = f(a) + f(b);
  for (std::size_t k = 1; k < m; ++k)
    s += (k % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(k));
  return s * h / 3.0;
}

inline double
central_difference(const std::function<double(double)>& f, double x, double step)
{
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

struct Enumerated
{
  std::vector<double> p;
  std::vector<std::array<std::array<double, 2>, 2>> xi;
  double loglik;
};

// Posterior by direct products over all 2^n paths; f0[i], f1[i] are emission
// densities (not logs).
inline Enumerated
enumerate(double psi1, double a00, double a11, const std::vector<double>& f0, const std::vector<double>& f1)
{
  const std::size_t n = f0.size();
  const double a[2][2] = { { a00, 1.0 - a00 }, { 1.0 - a11, a11 } };
  const double psi[2] = { 1.0 - psi1, psi1 };
  Enumerated out{ std::vector<double>(n, 0.0), std::vector<std::array<std::array<double, 2>, 2>>(n ? n - 1 : 0), 0.0 };
  for (auto& t : out.xi)
    t = { { { 0.0, 0.0 }, { 0.0, 0.0 } } };
  double total = 0.0;
  std::vector<double> joint(std::size_t{ 1 } << n);
  for (std::size_t path = 0; path < joint.size(); ++path) {
    auto s = [&](std::size_t i) { return static_cast<int>((path >> i) & 1U); };
    double w = psi[s(0)] * (s(0) ? f1[0] : f0[0]);
    for (std::size_t i = 1; i < n; ++i)
      w *= a[s(i - 1)][s(i)] * (s(i) ? f1[i] : f0[i]);
    joint[path] = w;
    total += w;
  }
  for (std::size_t path = 0; path < joint.size(); ++path) {
    const double w = joint[path] / total;
    for (std::size_t i = 0; i < n; ++i) {
      const int s = static_cast<int>((path >> i) & 1U);
      out.p[i] += s * w;
      if (i + 1 < n)
        out.xi[i][s][(path >> (i + 1)) & 1U] += w;
    }
  }
  out.loglik = std::log(total);
  return out;
}

} // namespace oracle
