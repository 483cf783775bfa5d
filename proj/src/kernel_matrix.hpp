#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hmmt::detail {

// Banded Gaussian kernel values phi((s_k - s_r)/b) between sorted support
// points, using the same cutoff window as WeightedKde so that densities()
// reproduces WeightedKde::pdf at the support points up to rounding.
class KernelMatrix
{
public:
  KernelMatrix(std::span<const double> sorted_points, double bandwidth);

  // out[r] = sum_k w[k] phi_rk / b for weights in sorted order.
  void densities(std::span<const double> sorted_weights, std::span<double> out) const;

  std::size_t size() const { return first_.size(); }

private:
  double bandwidth_;
  std::vector<std::size_t> first_;  // first column in row r's window
  std::vector<std::size_t> offset_; // start of row r in values_
  std::vector<double> values_;
};

} // namespace hmmt::detail
