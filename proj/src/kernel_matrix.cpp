#include "kernel_matrix.hpp"

#include "hmmt/densities.hpp"

#include <algorithm>

namespace hmmt::detail {

KernelMatrix::KernelMatrix(std::span<const double> sorted_points, double bandwidth)
  : bandwidth_(bandwidth)
{
  const std::size_t n = sorted_points.size();
  const double reach = kKernelCutoff * bandwidth;
  first_.resize(n);
  offset_.resize(n + 1);
  std::vector<std::size_t> last(n);
  std::size_t total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double x = sorted_points[r];
    first_[r] = static_cast<std::size_t>(
      std::lower_bound(sorted_points.begin(), sorted_points.end(), x - reach) -
      sorted_points.begin());
    last[r] = static_cast<std::size_t>(
      std::upper_bound(sorted_points.begin() + static_cast<std::ptrdiff_t>(first_[r]),
                       sorted_points.end(),
                       x + reach) -
      sorted_points.begin());
    offset_[r] = total;
    total += last[r] - first_[r];
  }
  offset_[n] = total;
  values_.resize(total);
  for (std::size_t r = 0; r < n; ++r) {
    const double x = sorted_points[r];
    double* row = values_.data() + offset_[r];
    for (std::size_t k = first_[r]; k < last[r]; ++k)
      row[k - first_[r]] = standard_normal_pdf((sorted_points[k] - x) / bandwidth);
  }
}

void
KernelMatrix::densities(std::span<const double> sorted_weights, std::span<double> out) const
{
  const std::size_t n = first_.size();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = values_.data() + offset_[r];
    const double* w = sorted_weights.data() + first_[r];
    const std::size_t width = offset_[r + 1] - offset_[r];
    double s[4] = { 0.0, 0.0, 0.0, 0.0 };
    std::size_t k = 0;
    for (; k + 4 <= width; k += 4) {
      s[0] += w[k] * row[k];
      s[1] += w[k + 1] * row[k + 1];
      s[2] += w[k + 2] * row[k + 2];
      s[3] += w[k + 3] * row[k + 3];
    }
    for (; k < width; ++k)
      s[0] += w[k] * row[k];
    out[r] = ((s[0] + s[1]) + (s[2] + s[3])) / bandwidth_;
  }
}

} // namespace hmmt::detail
