#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sharp/dual.hpp"
#include "sharp/problem.hpp"

namespace sharp {

// Configuration / schema failure; the CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optional closed-form overlay for sweep output. Both kinds assume the
// constraints are (E[x] = λ, E[x²] = λ² + σ²) in that order. PowerMean also
// reports the bound columns as M_s = E[x^s]^{1/s} instead of raw E[x^s]
// (for s < 0 the transform is decreasing, so the pair swaps).
enum class ReferenceKind { None, Mgf, PowerMean };

struct RunConfig {
  int dim = 1;
  SupportSet support;
  std::vector<std::string> constraint_exprs;
  std::vector<double> phi;
  std::string objective_expr;
  bool want_lower = false;
  bool want_upper = false;
  SolverParams solver;
  std::uint64_t seed = 0;
  std::map<std::string, double> params;
  ReferenceKind reference = ReferenceKind::None;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

// Parses every expression with the given named constants substituted.
ProblemSpec build_problem(const RunConfig& cfg, Direction dir,
                          const std::map<std::string, double>& params);

struct RunFlags {
  bool timestamp = true;  // false: omit timestamp and timing for byte-stable output
  bool verbose = false;   // stage-by-stage progress on standard error
};

// Solves the requested direction(s) and writes a JSON report. Returns the
// process exit code: 0 ok, 2 infeasible, 3 φ on the moment-set boundary,
// 4 iteration budget exhausted. Throws ConfigError on invalid configuration.
int run_bound(const RunConfig& cfg, std::ostream& out, const RunFlags& flags);

struct SweepSpec {
  std::string param;
  double from = 0.0;
  double to = 0.0;
  int steps = 1;  // values are evenly spaced from `from` to `to` inclusive
};

// Solves both directions at each parameter value and writes CSV rows
// `param,lower,upper,lower_ref,upper_ref,gap_lower,gap_upper,status`.
// Row-level failures are recorded in the status column; the return value is 0
// (only configuration errors abort the sweep, by throwing ConfigError).
int run_sweep(const RunConfig& cfg, const SweepSpec& sweep, std::ostream& out,
              const RunFlags& flags);

}  // namespace sharp
