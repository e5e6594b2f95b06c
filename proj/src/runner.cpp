#include "sharp/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "sharp/closed_forms.hpp"
#include "sharp/expr.hpp"

namespace sharp {
namespace {

using ojson = nlohmann::ordered_json;

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

const ojson& require(const ojson& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end()) fail(std::string(where) + " is missing required key \"" + key + "\"");
  return *it;
}

void check_keys(const ojson& j, std::initializer_list<const char*> allowed,
                const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) known = true;
    if (!known) fail(std::string(where) + " has unknown key \"" + item.key() + "\"");
  }
}

double num_or_inf(const ojson& j, const char* what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  fail(std::string(what) + " must be a number or \"inf\"/\"-inf\"");
}

std::vector<double> bound_vector(const ojson& j, int dim, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    fail(std::string(what) + " must be an array of length dim");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(num_or_inf(e, what));
  return v;
}

std::vector<char> open_flags(const ojson& j, int dim, const char* what) {
  std::vector<char> v(static_cast<std::size_t>(dim), 0);
  if (j.is_null()) return v;
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    fail(std::string(what) + " must be an array of length dim");
  for (int i = 0; i < dim; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_boolean())
      fail(std::string(what) + " entries must be booleans");
    v[static_cast<std::size_t>(i)] = j[static_cast<std::size_t>(i)].get<bool>() ? 1 : 0;
  }
  return v;
}

TruncationSchedule parse_schedule(const ojson& j) {
  check_keys(j, {"r0", "rho", "stages", "exclusions"}, "schedule");
  TruncationSchedule sch;
  sch.r0 = num_or_inf(require(j, "r0", "schedule"), "schedule.r0");
  sch.rho = num_or_inf(require(j, "rho", "schedule"), "schedule.rho");
  const auto& stages = require(j, "stages", "schedule");
  if (!stages.is_number_integer()) fail("schedule.stages must be an integer");
  sch.max_stages = stages.get<int>();
  if (!(sch.r0 > 0) || !std::isfinite(sch.r0)) fail("schedule.r0 must be finite and positive");
  if (!(sch.rho > 1) || !std::isfinite(sch.rho)) fail("schedule.rho must be greater than 1");
  if (sch.max_stages < 1) fail("schedule.stages must be at least 1");
  if (auto it = j.find("exclusions"); it != j.end()) {
    if (!it->is_array()) fail("schedule.exclusions must be an array");
    for (const auto& e : *it) {
      check_keys(e, {"at", "side"}, "exclusion");
      Exclusion ex;
      ex.at = num_or_inf(require(e, "at", "exclusion"), "exclusion.at");
      const std::string side = require(e, "side", "exclusion").get<std::string>();
      if (side == "left")
        ex.side = Side::Left;
      else if (side == "right")
        ex.side = Side::Right;
      else
        fail("exclusion.side must be \"left\" or \"right\"");
      sch.exclusions.push_back(ex);
    }
  }
  return sch;
}

SupportSet parse_support(const ojson& j, int dim) {
  if (!j.is_object()) fail("support must be an object");
  SupportSet s;
  const std::string type = require(j, "type", "support").get<std::string>();
  if (type == "box") {
    check_keys(j, {"type", "lower", "upper", "lower_open", "upper_open", "schedule"},
               "support");
    Box box;
    box.lower = bound_vector(require(j, "lower", "box support"), dim, "support.lower");
    box.upper = bound_vector(require(j, "upper", "box support"), dim, "support.upper");
    box.lower_open = open_flags(j.value("lower_open", ojson()), dim, "support.lower_open");
    box.upper_open = open_flags(j.value("upper_open", ojson()), dim, "support.upper_open");
    s.geometry = std::move(box);
  } else if (type == "intervals") {
    check_keys(j, {"type", "intervals", "schedule"}, "support");
    if (dim != 1) fail("interval-union support requires dim = 1");
    Interval1DUnion u;
    const auto& arr = require(j, "intervals", "support");
    if (!arr.is_array() || arr.empty()) fail("support.intervals must be a non-empty array");
    for (const auto& e : arr) {
      check_keys(e, {"lo", "hi", "lo_open", "hi_open"}, "interval");
      Interval iv;
      iv.lo = num_or_inf(require(e, "lo", "interval"), "interval.lo");
      iv.hi = num_or_inf(require(e, "hi", "interval"), "interval.hi");
      iv.lo_open = e.value("lo_open", false);
      iv.hi_open = e.value("hi_open", false);
      u.intervals.push_back(iv);
    }
    s.geometry = std::move(u);
  } else if (type == "points") {
    check_keys(j, {"type", "points"}, "support");
    FinitePoints fp;
    const auto& arr = require(j, "points", "support");
    if (!arr.is_array() || arr.empty()) fail("support.points must be a non-empty array");
    for (const auto& e : arr) {
      if (!e.is_array() || static_cast<int>(e.size()) != dim)
        fail("each support point must be an array of length dim");
      std::vector<double> x;
      for (const auto& c : e) x.push_back(num_or_inf(c, "support point coordinate"));
      fp.points.push_back(std::move(x));
    }
    s.geometry = std::move(fp);
  } else {
    fail("support.type must be \"box\", \"intervals\" or \"points\"");
  }
  if (auto it = j.find("schedule"); it != j.end()) s.schedule = parse_schedule(*it);
  return s;
}

SolverParams parse_solver(const ojson& j) {
  check_keys(j,
             {"outer_iters", "grid_res", "refine_iters", "tol_gap_abs", "tol_gap_rel",
              "trust_radius", "divergence_threshold", "workers", "grid_scale",
              "polish_rounds"},
             "solver");
  SolverParams sp;
  auto geti = [&](const char* key, int& slot) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number_integer()) fail(std::string("solver.") + key + " must be an integer");
      slot = it->get<int>();
    }
  };
  auto getd = [&](const char* key, double& slot) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) fail(std::string("solver.") + key + " must be a number");
      slot = it->get<double>();
    }
  };
  geti("outer_iters", sp.outer_iters);
  geti("grid_res", sp.grid_res);
  geti("refine_iters", sp.refine_iters);
  geti("workers", sp.workers);
  geti("polish_rounds", sp.polish_rounds);
  getd("tol_gap_abs", sp.tol_gap_abs);
  getd("tol_gap_rel", sp.tol_gap_rel);
  getd("trust_radius", sp.trust_radius);
  getd("divergence_threshold", sp.divergence_threshold);
  if (auto it = j.find("grid_scale"); it != j.end()) {
    const std::string scale = it->get<std::string>();
    if (scale == "uniform")
      sp.grid_scale = GridScale::Uniform;
    else if (scale == "log")
      sp.grid_scale = GridScale::Log;
    else
      fail("solver.grid_scale must be \"uniform\" or \"log\"");
  }
  if (sp.outer_iters < 1 || sp.grid_res < 2 || sp.refine_iters < 0 || sp.workers < 1 ||
      sp.polish_rounds < 0 || !(sp.tol_gap_abs > 0) || sp.tol_gap_rel < 0 ||
      !(sp.trust_radius > 0) || !(sp.divergence_threshold > 0))
    fail("solver parameters out of range");
  return sp;
}

// ---- report serialization ----------------------------------------------

ojson jnum(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

ojson jvec(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(jnum(x));
  return a;
}

ojson jpoints(const std::vector<std::vector<double>>& pts) {
  ojson a = ojson::array();
  for (const auto& p : pts) a.push_back(jvec(p));
  return a;
}

const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Ok: return "ok";
    case SolveStatus::NonConvergence: return "nonconvergence";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::BoundaryPhi: return "boundary";
  }
  return "ok";
}

const char* feas_name(FeasStatus s) {
  switch (s) {
    case FeasStatus::Feasible: return "feasible";
    case FeasStatus::Boundary: return "boundary";
    case FeasStatus::Infeasible: return "infeasible";
  }
  return "feasible";
}

int status_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::Ok: return 0;
    case SolveStatus::NonConvergence: return 4;
    case SolveStatus::Infeasible: return 2;
    case SolveStatus::BoundaryPhi: return 3;
  }
  return 0;
}

// Infeasible beats boundary beats non-convergence beats ok.
int combine_codes(int a, int b) {
  auto rank = [](int c) { return c == 2 ? 3 : c == 3 ? 2 : c == 4 ? 1 : 0; };
  return rank(a) >= rank(b) ? a : b;
}

ojson feasibility_json(const FeasibilityReport& fr) {
  ojson f;
  f["status"] = feas_name(fr.status);
  f["grid_points"] = fr.grid_points;
  if (fr.status == FeasStatus::Infeasible) {
    f["alpha"] = jvec(fr.alpha);
    f["epsilon"] = jnum(fr.epsilon);
  } else {
    f["margin"] = jnum(fr.margin);
  }
  return f;
}

ojson direction_json(const ProblemSpec& p, const BoundResult& r) {
  ojson d;
  d["bound"] = jnum(r.bound);
  d["status"] = status_name(r.status);
  d["converged"] = r.converged;
  if (r.oracle_gap) d["oracle_gap"] = jnum(*r.oracle_gap);
  d["feasibility"] = feasibility_json(r.feasibility);
  if (r.certificate) {
    const auto& c = *r.certificate;
    double adote = 0.0;
    const auto phi = p.phi();
    for (std::size_t i = 0; i < c.alpha.size(); ++i) adote += c.alpha[i] * phi[i];
    ojson cj;
    cj["alpha"] = jvec(c.alpha);
    cj["c"] = jnum(-adote - c.bound);  // hyperplane offset: <α,φ> + c = −bound
    cj["stage"] = c.stage;
    cj["inner_tol"] = jnum(c.inner_tol);
    cj["active_points"] = jpoints(c.active_points);
    d["certificate"] = cj;
  }
  if (r.measure) {
    ojson mj;
    mj["atoms"] = jpoints(r.measure->atoms);
    mj["weights"] = jvec(r.measure->weights);
    d["measure"] = mj;
  }
  ojson stages = ojson::array();
  for (const auto& st : r.stages) {
    ojson sj;
    sj["stage"] = st.stage;
    if (st.skipped) {
      sj["skipped"] = true;
    } else {
      sj["bound"] = jnum(st.bound);
      if (st.oracle_value) sj["grid_lp"] = jnum(*st.oracle_value);
      sj["iterations"] = st.iterations;
    }
    stages.push_back(sj);
  }
  d["stages"] = stages;
  d["inner_evaluations"] = r.history.size();
  return d;
}

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void verbose_result(const char* dirname, const BoundResult& r) {
  std::fprintf(stderr, "[%s] status=%s converged=%d bound=%.12g evaluations=%zu\n", dirname,
               status_name(r.status), r.converged ? 1 : 0, r.bound, r.history.size());
  for (const auto& st : r.stages) {
    if (st.skipped)
      std::fprintf(stderr, "[%s]   stage %d skipped (infeasible on this stage)\n", dirname,
                   st.stage);
    else
      std::fprintf(stderr, "[%s]   stage %d bound=%.12g iterations=%d\n", dirname, st.stage,
                   st.bound, st.iterations);
  }
}

// ---- sweep helpers -------------------------------------------------------

std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string csv_opt(const std::optional<double>& v) { return v ? csv_num(*v) : std::string(); }

// Gap column: |bound − reference| when both are finite, 0 when both are the
// same infinity, inf on a finite/infinite mismatch, blank if either is absent.
std::string csv_gap(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return "";
  if (std::isfinite(*a) && std::isfinite(*b)) return csv_num(std::fabs(*a - *b));
  if (std::isinf(*a) && std::isinf(*b) && (*a > 0) == (*b > 0)) return csv_num(0.0);
  return "inf";
}

// E[x^s] → M_s = E^{1/s}; monotone decreasing in E for s < 0, so the pair
// swaps there. E = +∞ maps to M = +∞ for s > 0 and M = 0 for s < 0.
void to_power_mean(std::optional<double>& lo, std::optional<double>& hi, double s) {
  auto tr = [&](double e) -> double {
    if (std::isinf(e) && e > 0) return s > 0 ? kInf : 0.0;
    if (e <= 0) return s > 0 ? 0.0 : kInf;
    return std::pow(e, 1.0 / s);
  };
  std::optional<double> l2 = lo ? std::optional<double>(tr(*lo)) : std::nullopt;
  std::optional<double> h2 = hi ? std::optional<double>(tr(*hi)) : std::nullopt;
  if (s > 0) {
    lo = l2;
    hi = h2;
  } else {
    lo = h2;
    hi = l2;
  }
}

struct StatusWorst {
  // error > infeasible > boundary > nonconvergence > ok
  int rank = 0;
  std::string text = "ok";
  void offer(int r, std::string t) {
    if (r > rank) {
      rank = r;
      text = std::move(t);
    }
  }
  void offer_code(int code) {
    switch (code) {
      case 2: offer(3, "infeasible"); break;
      case 3: offer(2, "boundary"); break;
      case 4: offer(1, "nonconvergence"); break;
      default: break;
    }
  }
};

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("config root must be an object");
  check_keys(j,
             {"dim", "support", "constraints", "objective", "direction", "solver", "seed",
              "params", "reference"},
             "config");
  RunConfig cfg;
  try {
    if (auto it = j.find("dim"); it != j.end()) {
      if (!it->is_number_integer()) fail("dim must be an integer");
      cfg.dim = it->get<int>();
    }
    if (cfg.dim < 1) fail("dim must be at least 1");

    cfg.support = parse_support(require(j, "support", "config"), cfg.dim);

    const auto& cons = require(j, "constraints", "config");
    if (!cons.is_array() || cons.empty()) fail("constraints must be a non-empty array");
    for (const auto& c : cons) {
      check_keys(c, {"f", "phi"}, "constraint");
      const auto& f = require(c, "f", "constraint");
      if (!f.is_string()) fail("constraint.f must be an expression string");
      cfg.constraint_exprs.push_back(f.get<std::string>());
      cfg.phi.push_back(num_or_inf(require(c, "phi", "constraint"), "constraint.phi"));
      if (!std::isfinite(cfg.phi.back())) fail("constraint.phi must be finite");
    }

    const auto& obj = require(j, "objective", "config");
    if (!obj.is_string()) fail("objective must be an expression string");
    cfg.objective_expr = obj.get<std::string>();

    const std::string dir = require(j, "direction", "config").get<std::string>();
    if (dir == "lower") {
      cfg.want_lower = true;
    } else if (dir == "upper") {
      cfg.want_upper = true;
    } else if (dir == "both") {
      cfg.want_lower = cfg.want_upper = true;
    } else {
      fail("direction must be \"lower\", \"upper\" or \"both\"");
    }

    if (auto it = j.find("solver"); it != j.end()) cfg.solver = parse_solver(*it);
    if (auto it = j.find("seed"); it != j.end()) {
      if (!it->is_number_unsigned() && !it->is_number_integer()) fail("seed must be an integer");
      cfg.seed = it->get<std::uint64_t>();
    }
    if (auto it = j.find("params"); it != j.end()) {
      if (!it->is_object()) fail("params must map names to numbers");
      for (const auto& item : it->items()) {
        if (!item.value().is_number()) fail("params must map names to numbers");
        cfg.params[item.key()] = item.value().get<double>();
      }
    }
    if (auto it = j.find("reference"); it != j.end()) {
      const std::string ref = it->get<std::string>();
      if (ref == "mgf")
        cfg.reference = ReferenceKind::Mgf;
      else if (ref == "power_mean")
        cfg.reference = ReferenceKind::PowerMean;
      else if (ref != "none")
        fail("reference must be \"mgf\", \"power_mean\" or \"none\"");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("config field has the wrong type: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ProblemSpec build_problem(const RunConfig& cfg, Direction dir,
                          const std::map<std::string, double>& params) {
  ProblemSpec p;
  p.dim = cfg.dim;
  p.support = cfg.support;
  p.direction = dir;
  try {
    p.objective = parse_expr(cfg.objective_expr, cfg.dim, params);
    for (std::size_t i = 0; i < cfg.constraint_exprs.size(); ++i)
      p.constraints.push_back({parse_expr(cfg.constraint_exprs[i], cfg.dim, params), cfg.phi[i]});
  } catch (const ParseError& e) {
    fail(std::string("expression error: ") + e.what());
  }
  return p;
}

int run_bound(const RunConfig& cfg, std::ostream& out, const RunFlags& flags) {
  ojson rep;
  if (flags.timestamp) rep["timestamp"] = iso_now();
  rep["dim"] = cfg.dim;
  rep["direction"] =
      cfg.want_lower && cfg.want_upper ? "both" : (cfg.want_lower ? "lower" : "upper");
  rep["seed"] = cfg.seed;

  int code = 0;
  ojson timing;
  for (int pass = 0; pass < 2; ++pass) {
    const bool lower = pass == 0;
    if ((lower && !cfg.want_lower) || (!lower && !cfg.want_upper)) continue;
    const char* name = lower ? "lower" : "upper";
    ProblemSpec p = build_problem(cfg, lower ? Direction::Lower : Direction::Upper, cfg.params);
    if (auto diags = validate_problem(p); !diags.empty())
      fail("invalid problem (" + diags.front().code + "): " + diags.front().detail);
    const auto t0 = std::chrono::steady_clock::now();
    BoundResult r = solve_dual(p, cfg.solver);
    const auto t1 = std::chrono::steady_clock::now();
    if (flags.verbose) verbose_result(name, r);
    rep[name] = direction_json(p, r);
    timing[name] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    code = combine_codes(code, status_code(r.status));
  }
  if (flags.timestamp) rep["timing_ms"] = timing;
  out << rep.dump(2) << "\n";
  return code;
}

int run_sweep(const RunConfig& cfg, const SweepSpec& sweep, std::ostream& out,
              const RunFlags& flags) {
  if (sweep.param.empty()) fail("sweep requires a parameter name");
  if (sweep.steps < 1) fail("sweep steps must be at least 1");
  if (!std::isfinite(sweep.from) || !std::isfinite(sweep.to))
    fail("sweep range must be finite");

  double lam = 0.0, sig2 = 0.0;
  if (cfg.reference != ReferenceKind::None) {
    if (cfg.phi.size() < 2)
      fail("reference curves require mean and second-moment constraints");
    lam = cfg.phi[0];
    sig2 = cfg.phi[1] - lam * lam;
    if (!(lam > 0) || !(sig2 > 0))
      fail("reference curves require phi = (mean, second moment) with positive variance");
  }

  out << "param,lower,upper,lower_ref,upper_ref,gap_lower,gap_upper,status\n";
  for (int i = 0; i < sweep.steps; ++i) {
    const double v = sweep.steps == 1
                         ? sweep.from
                         : sweep.from + (sweep.to - sweep.from) * i / (sweep.steps - 1);
    auto params = cfg.params;
    params[sweep.param] = v;

    std::optional<double> lo, hi;
    StatusWorst status;
    for (int pass = 0; pass < 2; ++pass) {
      const bool lower = pass == 0;
      try {
        ProblemSpec p =
            build_problem(cfg, lower ? Direction::Lower : Direction::Upper, params);
        if (auto diags = validate_problem(p); !diags.empty()) {
          status.offer(4, "error:" + diags.front().code);
          continue;
        }
        BoundResult r = solve_dual(p, cfg.solver);
        status.offer_code(status_code(r.status));
        if (r.status == SolveStatus::Ok || r.status == SolveStatus::NonConvergence)
          (lower ? lo : hi) = r.bound;
      } catch (const std::exception&) {
        status.offer(4, "error:solve");
      }
    }

    std::optional<double> lo_ref, hi_ref;
    if (cfg.reference == ReferenceKind::Mgf) {
      try {
        const MgfBounds b = mgf_bounds(lam, sig2, v);
        lo_ref = b.lower;
        hi_ref = b.upper;
      } catch (const std::domain_error&) {
      }
    } else if (cfg.reference == ReferenceKind::PowerMean) {
      if (v == 0.0) {
        // M_0 is not produced by the moment solver; leave the row blank.
        lo.reset();
        hi.reset();
      } else {
        to_power_mean(lo, hi, v);
        try {
          const PowerMeanBounds b = power_mean_bounds(lam, sig2, v);
          lo_ref = b.lower;
          hi_ref = b.upper;
        } catch (const std::domain_error&) {
        }
      }
    }

    out << csv_num(v) << ',' << csv_opt(lo) << ',' << csv_opt(hi) << ',' << csv_opt(lo_ref)
        << ',' << csv_opt(hi_ref) << ',' << csv_gap(lo, lo_ref) << ',' << csv_gap(hi, hi_ref)
        << ',' << status.text << '\n';
    if (flags.verbose)
      std::fprintf(stderr, "[sweep] %s=%.12g lower=%s upper=%s status=%s\n",
                   sweep.param.c_str(), v, csv_opt(lo).c_str(), csv_opt(hi).c_str(),
                   status.text.c_str());
  }
  return 0;
}

}  // namespace sharp
