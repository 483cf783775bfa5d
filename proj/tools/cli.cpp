#include "cli.hpp"

#include "svg.hpp"

#include "hmmt/baselines.hpp"
#include "hmmt/errors.hpp"
#include "hmmt/fit.hpp"
#include "hmmt/random.hpp"
#include "hmmt/simulate.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace hmmt::cli {

InputError::InputError(const std::string& what, std::size_t row, std::size_t column)
  : std::runtime_error(what)
  , row_(row)
  , column_(column)
{}

namespace {

std::string_view
trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::optional<double>
to_number(std::string_view s)
{
  s = trim(s);
  if (!s.empty() && s.front() == '+')
    s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

// Small scanner for the f0 grammar: term ('+' term)*, term = [w '*'] 'N(' m ',' s ')'.
class F0Parser
{
public:
  explicit F0Parser(std::string_view text) : s_(text) {}

  Density parse()
  {
    std::vector<MixtureComponent> parts;
    do {
      parts.push_back(term());
      skip();
    } while (eat('+'));
    skip();
    if (pos_ != s_.size())
      fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    if (parts.size() == 1)
      return GaussianDensity(parts[0].mean, parts[0].sd);
    return GaussianMixture(std::move(parts));
  }

private:
  MixtureComponent term()
  {
    skip();
    double weight = 1.0;
    if (pos_ < s_.size() && s_[pos_] != 'N') {
      weight = number();
      skip();
      if (eat('/')) {
        const double denominator = number();
        if (!(denominator > 0.0))
          fail("mixture weight denominator must be positive");
        weight /= denominator;
        skip();
      }
      if (!eat('*'))
        fail("expected '*' after mixture weight");
      skip();
    }
    if (!eat('N'))
      fail("expected 'N('");
    skip();
    if (!eat('('))
      fail("expected '(' after N");
    const double mean = number();
    skip();
    if (!eat(','))
      fail("expected ',' between mean and sd");
    const double sd = number();
    skip();
    if (!eat(')'))
      fail("expected ')'");
    if (!(weight > 0.0))
      fail("mixture weights must be positive");
    if (!(sd > 0.0))
      fail("standard deviations must be positive");
    return { weight, mean, sd };
  }

  double number()
  {
    skip();
    std::size_t end = pos_;
    while (end < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[end])) || s_[end] == '.' ||
                               s_[end] == '-' || s_[end] == 'e' || s_[end] == 'E' ||
                               ((s_[end] == '+') && end > pos_ && (s_[end - 1] == 'e' || s_[end - 1] == 'E'))))
      ++end;
    const auto v = to_number(s_.substr(pos_, end - pos_));
    if (!v)
      fail("expected a number");
    pos_ = end;
    return *v;
  }

  void skip()
  {
    while (pos_ < s_.size() && s_[pos_] == ' ')
      ++pos_;
  }

  bool eat(char c)
  {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& why) const
  {
    throw InputError("--f0 '" + std::string(s_) + "': " + why + " at offset " + std::to_string(pos_));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

struct OutputTarget
{
  std::ofstream file;
  std::ostream* stream;

  OutputTarget(const std::string& path, std::ostream& fallback)
    : stream(&fallback)
  {
    if (path != "-") {
      file.open(path);
      if (!file)
        throw InputError("cannot open " + path + " for writing");
      stream = &file;
    }
  }
};

struct FitOptions
{
  std::string input;
  bool header = false;
  std::optional<double> sigma;
  std::string calibration;
  std::string f0;
  double alpha = 0.1;
  std::string grid;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string truncation = "clamp";
  std::string out = "-";
  std::string summary;
  std::string plot;
};

struct SimulateOptions
{
  std::vector<std::string> scenarios{ "I" };
  std::vector<double> a11{ 0.2 };
  std::size_t reps = 50;
  std::uint64_t seed = 1;
  std::size_t n = 2000;
  double sigma = 1.0;
  double alpha = 0.1;
  std::string grid;
  std::vector<std::string> estimators;
  unsigned threads = 1;
  std::string truncation = "clamp";
  std::string out = "-";
  std::string plot;
};

TruncationMode
parse_truncation(const std::string& s)
{
  if (s == "clamp")
    return TruncationMode::clamp;
  if (s == "literal-max")
    return TruncationMode::literal_max;
  throw InputError("--truncation must be 'clamp' or 'literal-max'");
}

FitConfig
base_config(double alpha, const std::string& grid, std::uint64_t seed, unsigned threads, const std::string& truncation)
{
  FitConfig config;
  config.alpha = alpha;
  if (!grid.empty()) {
    config.bandwidth_grid = parse_number_list(grid);
    std::sort(config.bandwidth_grid.begin(), config.bandwidth_grid.end());
    config.bandwidth_grid.erase(std::unique(config.bandwidth_grid.begin(), config.bandwidth_grid.end()),
                                config.bandwidth_grid.end());
  }
  config.rng_seed = seed;
  config.threads = threads;
  config.truncation_mode = parse_truncation(truncation);
  return config;
}

struct PreparedInput
{
  SeriesData data;
  double sigma;
  FitConfig config;
};

PreparedInput
prepare_input(const FitOptions& o)
{
  PreparedInput p{ read_series_csv_file(o.input, o.header), 0.0,
                   base_config(o.alpha, o.grid, o.seed, o.threads, o.truncation) };
  if (o.sigma && !o.calibration.empty())
    throw InputError("give either --sigma or --calibration-rows, not both");
  if (o.sigma) {
    if (!(*o.sigma > 0.0))
      throw InputError("--sigma must be positive");
    p.sigma = *o.sigma;
  } else if (!o.calibration.empty()) {
    const auto colon = o.calibration.find(':');
    const auto first = colon == std::string::npos ? std::nullopt : to_number(std::string_view(o.calibration).substr(0, colon));
    const auto last = colon == std::string::npos ? std::nullopt : to_number(std::string_view(o.calibration).substr(colon + 1));
    if (!first || !last || *first < 0 || *last < 0 || std::floor(*first) != *first || std::floor(*last) != *last)
      throw InputError("--calibration-rows expects FIRST:LAST (0-based, LAST exclusive)");
    p.sigma = calibrate_sigma(p.data.value, static_cast<std::size_t>(*first), static_cast<std::size_t>(*last));
  } else {
    throw InputError("one of --sigma or --calibration-rows is required");
  }
  if (!o.f0.empty()) {
    p.config.f0_mode = F0Mode::fixed_known;
    p.config.known_f0 = parse_f0(o.f0);
  }
  return p;
}

void
add_input_flags(CLI::App* cmd, FitOptions& o)
{
  cmd->add_option("--input,-i", o.input, "CSV with one value per row, or position,value")->required();
  cmd->add_flag("--header", o.header, "first non-blank row is a header");
  cmd->add_option("--sigma", o.sigma, "known noise standard deviation");
  cmd->add_option("--calibration-rows", o.calibration,
                  "estimate sigma as the sample sd of rows FIRST:LAST (0-based, LAST exclusive)");
  cmd->add_option("--f0", o.f0, "fixed in-control density, e.g. N(0,1) or 1/3*N(5,3)+2/3*N(13,3)");
  cmd->add_option("--alpha", o.alpha, "split-sample noise ratio")->capture_default_str();
  cmd->add_option("--grid", o.grid, "comma-separated bandwidths in units of sigma (default: data driven)");
  cmd->add_option("--seed", o.seed, "random seed for the sample split")->capture_default_str();
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)")->capture_default_str();
  cmd->add_option("--out,-o", o.out, "output CSV path, '-' for stdout")->capture_default_str();
  cmd->add_option("--plot", o.plot, "write an SVG plot to this path");
}

std::vector<double>
plot_grid(double lo, double hi, std::size_t count)
{
  std::vector<double> g(count);
  for (std::size_t k = 0; k < count; ++k)
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return g;
}

// ---------------------------------------------------------------- simulate

int
cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err)
{
  std::vector<std::string> names;
  for (const auto& s : o.scenarios) {
    if (s == "all") {
      names.insert(names.end(), scenario_names().begin(), scenario_names().end());
      continue;
    }
    if (std::find(scenario_names().begin(), scenario_names().end(), s) == scenario_names().end())
      throw InputError("unknown scenario '" + s + "' (expected I..XII or all)");
    names.push_back(s);
  }
  std::vector<Estimator> estimators;
  if (o.estimators.empty())
    estimators = all_estimators();
  else
    for (const auto& e : o.estimators) {
      try {
        estimators.push_back(parse_estimator(e));
      } catch (const std::invalid_argument& ex) {
        throw InputError(ex.what());
      }
    }
  if (o.reps < 1)
    throw InputError("--reps must be at least 1");

  BenchmarkOptions options;
  options.fit = base_config(o.alpha, o.grid, 0, 1, o.truncation);
  options.threads = o.threads;

  std::vector<BenchmarkTable> tables;
  for (const auto& name : names) {
    for (double a11 : o.a11) {
      ScenarioSpec spec = scenario(name, a11, o.n);
      spec.sigma = o.sigma;
      tables.push_back(run_benchmark(spec, estimators, o.reps, o.seed, options));
      for (const auto& row : tables.back().rows)
        for (const auto& f : row.failures)
          err << "warning: scenario " << name << " a11=" << a11 << " " << to_string(row.estimator)
              << ": " << f << "\n";
    }
  }
  {
    OutputTarget target(o.out, out);
    write_benchmark_csv(*target.stream, tables);
  }

  if (!o.plot.empty()) {
    ScenarioSpec spec = scenario(names.front(), o.a11.front(), o.n);
    spec.sigma = o.sigma;
    const SimulationRun run = generate(spec, derive_seed(o.seed, { 0 }));
    FitConfig config = options.fit;
    config.rng_seed = derive_seed(o.seed, { 0, 1 });

    std::vector<double> signal;
    for (std::size_t i = 0; i < run.x.size(); ++i)
      if (run.theta[i] == 1)
        signal.push_back(run.x[i]);
    std::sort(signal.begin(), signal.end());
    double lo = -4.0 * spec.sigma, hi = 4.0 * spec.sigma;
    if (!signal.empty()) {
      lo = std::min(lo, signal[signal.size() / 100]);
      hi = std::max(hi, signal[signal.size() - 1 - signal.size() / 100]);
    }
    const auto grid = plot_grid(lo, hi, 400);
    const ConvolvedDensity truth = marginal_density(spec.g1, spec.sigma);
    std::vector<Series> series;
    auto curve = [&](const std::string& label, const std::string& color, const Density& f) {
      Series s{ label, color, grid, std::vector<double>(grid.size()) };
      for (std::size_t k = 0; k < grid.size(); ++k)
        s.y[k] = pdf(f, grid[k]);
      series.push_back(std::move(s));
    };
    curve("true f1", "black", truth);
    try {
      curve("GMM.AUTO", "#1f4fd1", gmm_fit(run.x, spec.sigma, MixtureOrder::automatic_bic(), config).fit.params.f1);
    } catch (const Error& e) {
      err << "warning: plot: GMM.AUTO fit failed: " << e.what() << "\n";
    }
    try {
      curve("HMMT", "#d12f1f", fit_hmmt(run.x, spec.sigma, config).fit.params.f1);
    } catch (const Error& e) {
      err << "warning: plot: HMMT fit failed: " << e.what() << "\n";
    }
    write_svg(o.plot,
              { "Scenario " + spec.name + ", a11 = " + std::to_string(spec.a11).substr(0, 4) + ": estimated f1", "x",
                "density", false, {} },
              series);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- fit

int
cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err)
{
  const PreparedInput in = prepare_input(o);
  const HmmtFit result = fit_hmmt(in.data.value, in.sigma, in.config);
  const auto& x = in.data.value;
  {
    OutputTarget target(o.out, out);
    std::ostream& os = *target.stream;
    os << "position,x,p_hat,mu_hmmt,mu_truncated\n";
    for (std::size_t i = 0; i < x.size(); ++i)
      os << format_number(in.data.position[i]) << ',' << format_number(x[i]) << ','
         << format_number(result.fit.posterior.p[i]) << ',' << format_number(result.estimate.estimates[i])
         << ',' << format_number(result.truncated.estimates[i]) << '\n';
  }

  std::ostringstream summary;
  summary << "key,value\n"
          << "n," << x.size() << "\n"
          << "sigma," << format_number(in.sigma) << "\n"
          << "chosen_h," << format_number(result.fit.chosen_h) << "\n"
          << "a00," << format_number(result.fit.params.transitions.a00()) << "\n"
          << "a11," << format_number(result.fit.params.transitions.a11()) << "\n"
          << "psi1," << format_number(result.fit.params.initial.p1()) << "\n"
          << "f0," << describe_density(result.fit.params.f0) << "\n"
          << "loglik," << format_number(result.fit.posterior.loglik) << "\n"
          << "iterations," << result.fit.iterations_used << "\n"
          << "converged," << (result.fit.converged ? "true" : "false") << "\n";
  if (!o.summary.empty()) {
    std::ofstream s(o.summary);
    if (!s)
      throw InputError("cannot open " + o.summary + " for writing");
    s << summary.str();
  } else {
    err << summary.str();
  }

  if (!o.plot.empty()) {
    Series raw{ "observed", "#9a9a9a", in.data.position, x, true };
    Series est{ "HMMT estimate", "#d12f1f", in.data.position, result.estimate.estimates };
    write_svg(o.plot, { "Observed and denoised sequence", "position", "value", false, {} }, { raw, est });
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bandwidth-scan

int
cmd_bandwidth_scan(const FitOptions& o, std::ostream& out, std::ostream&)
{
  const PreparedInput in = prepare_input(o);
  const BandwidthScan scan = bandwidth_scan(in.data.value, in.sigma, in.config);
  {
    OutputTarget target(o.out, out);
    std::ostream& os = *target.stream;
    os << "h,mse,status,selected\n";
    for (std::size_t k = 0; k < scan.scores.size(); ++k) {
      const auto& s = scan.scores[k];
      std::string status = s.ok() ? "ok" : s.error;
      std::replace(status.begin(), status.end(), ',', ';');
      std::replace(status.begin(), status.end(), '\n', ' ');
      os << format_number(s.h) << ',' << (s.ok() ? format_number(s.mse) : std::string("nan")) << ','
         << status << ',' << (k == scan.best ? 1 : 0) << '\n';
    }
  }
  if (!o.plot.empty()) {
    Series curve{ "split-sample error", "#1f4fd1", {}, {} };
    for (const auto& s : scan.scores)
      if (s.ok()) {
        curve.x.push_back(s.h);
        curve.y.push_back(s.mse);
      }
    write_svg(o.plot, { "Bandwidth scan", "h (units of sigma)", "prediction error", true,
                        { scan.scores[scan.best].h } },
              { curve });
  }
  return kExitOk;
}

} // namespace

// ---------------------------------------------------------------- helpers

SeriesData
read_series_csv(std::istream& in, bool header)
{
  SeriesData data;
  std::string line;
  std::size_t row = 0;
  bool skipped_header = !header;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view content = trim(line);
    if (content.empty())
      continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = content.find(',', start);
      cells.push_back(content.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos)
        break;
      start = comma + 1;
    }
    if (cells.size() > 2)
      throw InputError("row " + std::to_string(row) + ": expected 1 or 2 columns, found " +
                         std::to_string(cells.size()),
                       row, 0);
    if (columns == 0)
      columns = cells.size();
    else if (cells.size() != columns)
      throw InputError("row " + std::to_string(row) + ": expected " + std::to_string(columns) +
                         " columns, found " + std::to_string(cells.size()),
                       row, 0);
    std::vector<double> values;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = to_number(cells[c]);
      if (!v)
        throw InputError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) + ": '" +
                           std::string(trim(cells[c])) + "' is not a number",
                         row, c + 1);
      values.push_back(*v);
    }
    data.position.push_back(values.size() == 2 ? values[0] : static_cast<double>(data.value.size()));
    data.value.push_back(values.back());
  }
  if (data.value.empty())
    throw InputError("input contains no data rows");
  return data;
}

SeriesData
read_series_csv_file(const std::string& path, bool header)
{
  std::ifstream in(path);
  if (!in)
    throw InputError("cannot open input file " + path);
  return read_series_csv(in, header);
}

Density
parse_f0(std::string_view text)
{
  return F0Parser(text).parse();
}

std::string
describe_density(const Density& f)
{
  if (const auto* g = std::get_if<GaussianDensity>(&f))
    return "N(" + format_number(g->location()) + ";" + format_number(g->scale()) + ")";
  if (const auto* m = std::get_if<GaussianMixture>(&f)) {
    std::string out;
    for (const auto& c : m->components()) {
      if (!out.empty())
        out += " + ";
      out += format_number(c.weight) + "*N(" + format_number(c.mean) + ";" + format_number(c.sd) + ")";
    }
    return out;
  }
  if (std::holds_alternative<WeightedKde>(f))
    return "kernel estimate";
  return "convolved prior";
}

std::vector<double>
parse_number_list(std::string_view text)
{
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    const auto cell = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const auto v = to_number(cell);
    if (!v || !(*v > 0.0))
      throw InputError("'" + std::string(trim(cell)) + "' is not a positive number");
    out.push_back(*v);
    if (comma == std::string_view::npos)
      break;
    start = comma + 1;
  }
  return out;
}

double
calibrate_sigma(std::span<const double> value, std::size_t first, std::size_t last)
{
  if (last > value.size() || first >= last || last - first < 2)
    throw InputError("calibration range must hold at least two rows inside the input");
  const double count = static_cast<double>(last - first);
  double mean = 0.0;
  for (std::size_t i = first; i < last; ++i)
    mean += value[i];
  mean /= count;
  double ss = 0.0;
  for (std::size_t i = first; i < last; ++i)
    ss += (value[i] - mean) * (value[i] - mean);
  const double sd = std::sqrt(ss / (count - 1.0));
  if (!(sd > 0.0))
    throw InputError("calibration rows are constant; cannot estimate sigma");
  return sd;
}

std::string
format_number(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int
run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{ "Nonparametric empirical Bayes shrinkage for two-state hidden Markov sequences" };
  app.name("hmmt");
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "run the Monte Carlo benchmark and write a CSV table");
  simulate->add_option("--scenario", sim.scenarios, "scenario names I..XII, or all")
    ->delimiter(',')
    ->capture_default_str();
  simulate->add_option("--a11", sim.a11, "out-of-control persistence values")->delimiter(',')->capture_default_str();
  simulate->add_option("--reps", sim.reps, "replications per cell")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "base random seed")->capture_default_str();
  simulate->add_option("--n", sim.n, "sequence length")->capture_default_str();
  simulate->add_option("--sigma", sim.sigma, "noise standard deviation")->capture_default_str();
  simulate->add_option("--alpha", sim.alpha, "split-sample noise ratio")->capture_default_str();
  simulate->add_option("--grid", sim.grid, "comma-separated bandwidths in units of sigma");
  simulate->add_option("--estimators", sim.estimators,
                       "subset of tnd,gmm3,gmm_auto,hmmt,hmmt_truncated,oracle,bayes")
    ->delimiter(',');
  simulate->add_option("--threads", sim.threads, "worker threads across replications (0 = all cores)")
    ->capture_default_str();
  simulate->add_option("--truncation", sim.truncation, "clamp or literal-max")->capture_default_str();
  simulate->add_option("--out,-o", sim.out, "output CSV path, '-' for stdout")->capture_default_str();
  simulate->add_option("--plot", sim.plot, "SVG of estimated and true f1 for the first cell");

  FitOptions fit_opts;
  auto* fit = app.add_subcommand("fit", "fit a sequence from CSV and write per-position estimates");
  add_input_flags(fit, fit_opts);
  fit->add_option("--truncation", fit_opts.truncation, "clamp or literal-max")->capture_default_str();
  fit->add_option("--summary", fit_opts.summary, "write the fitted-parameter summary CSV here (default stderr)");

  FitOptions scan_opts;
  auto* scan = app.add_subcommand("bandwidth-scan", "write the split-sample error for each bandwidth");
  add_input_flags(scan, scan_opts);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  auto usage_help = [&]() -> std::string {
    if (simulate->parsed())
      return simulate->help();
    if (fit->parsed())
      return fit->help();
    return scan->help();
  };

  try {
    if (simulate->parsed())
      return cmd_simulate(sim, out, err);
    if (fit->parsed())
      return cmd_fit(fit_opts, out, err);
    return cmd_bandwidth_scan(scan_opts, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n" << usage_help();
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n" << usage_help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

} // namespace hmmt::cli
