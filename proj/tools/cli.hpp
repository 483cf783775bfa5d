#pragma once

#include "hmmt/densities.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hmmt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1; // computational failure
inline constexpr int kExitUsage = 2;   // bad flags or malformed input

/// Malformed input file; row and column are 1-based (0 when not applicable).
class InputError : public std::runtime_error
{
public:
  InputError(const std::string& what, std::size_t row = 0, std::size_t column = 0);
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

private:
  std::size_t row_;
  std::size_t column_;
};

struct SeriesData
{
  std::vector<double> position;
  std::vector<double> value;
};

/// One value per row, or "position,value". Blank lines are skipped.
SeriesData read_series_csv(std::istream& in, bool header);
SeriesData read_series_csv_file(const std::string& path, bool header);

/// "N(0,1)" or a mixture such as "0.8*N(0,0.11)+0.2*N(-0.25,0.11)"; a weight
/// may also be written as a ratio, "1/3*N(5,3)".
Density parse_f0(std::string_view text);
std::string describe_density(const Density& f);

/// Comma-separated positive numbers.
std::vector<double> parse_number_list(std::string_view text);

/// Sample standard deviation of value[first, last).
double calibrate_sigma(std::span<const double> value, std::size_t first, std::size_t last);

/// %.17g, which reads back to the same double.
std::string format_number(double v);

/// Entry point without the program name; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hmmt::cli
