#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "thermo/bcf.hpp"
#include "thermo/config.hpp"
#include "thermo/errors.hpp"
#include "thermo/gibbs.hpp"
#include "thermo/induced.hpp"
#include "thermo/map_model.hpp"
#include "thermo/parallel.hpp"
#include "thermo/pressure.hpp"
#include "thermo/spectrum.hpp"

namespace thermo::cli {

using Json = nlohmann::json;

inline const char* kColumnsHelp =
    "CSV columns per command:\n"
    "  check      condition, value, limit, pass, detail\n"
    "  pressure   b, q, p, method, residual, in_N   (residual: root residual + discretisation + tail)\n"
    "  dimension  subsystem, size, dimension\n"
    "  spectrum   alpha, b, q, lambda, entropy, mean_phi, case, flat, res_P, res_dP\n"
    "  bcf        x, n, psi, average, last_quarter, terminated, error_estimate, digits\n"
    "  sample     seed, n, psi, average, symbols, mean_return, b, q, alpha\n"
    "Rows that fail numerically are written as case \"error\" and NaN values.\n"
    "Exit status: 0 ok, 2 invalid input, 3 numerical failure.\n";

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

inline std::string csv_field(const Json& cell) {
  if (cell.is_null()) return "";
  if (cell.is_boolean()) return cell.get<bool>() ? "true" : "false";
  if (cell.is_number_integer()) return std::to_string(cell.get<long long>());
  if (cell.is_number()) return format_real(cell.get<double>());
  std::string s = cell.is_string() ? cell.get<std::string>() : cell.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

// Non-finite reals become strings in JSON.
inline Json real_cell(double v) {
  if (v == 0.0) return 0.0;
  if (std::isfinite(v)) return v;
  return format_real(v);
}

struct Report {
  std::string command;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
  std::vector<std::string> failures;  // per-row numerical failures; the report is still written
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string render(const Report& rep, const Config& cfg, const std::string& format) {
  std::ostringstream out;
  if (format == "json") {
    Json j;
    j["command"] = rep.command;
    j["generated"] = utc_timestamp();
    Json c = Json::object();
    for (const auto& [k, v] : cfg.resolved()) c[k] = v;
    j["config"] = c;
    j["columns"] = rep.columns;
    Json rows = Json::array();
    for (const auto& r : rep.rows) {
      Json row = Json::object();
      for (std::size_t k = 0; k < r.size(); ++k) row[rep.columns[k]] = r[k];
      rows.push_back(row);
    }
    j["rows"] = rows;
    out << j.dump(2) << "\n";
    return out.str();
  }
  out << "# thermo " << rep.command << "\n";
  out << "# generated " << utc_timestamp() << "\n";
  for (const auto& [k, v] : cfg.resolved()) out << "#! " << k << " = " << v << "\n";
  for (std::size_t k = 0; k < rep.columns.size(); ++k) out << (k ? "," : "") << rep.columns[k];
  out << "\n";
  for (const auto& r : rep.rows) {
    for (std::size_t k = 0; k < r.size(); ++k) out << (k ? "," : "") << csv_field(r[k]);
    out << "\n";
  }
  return out.str();
}

struct Context {
  Config cfg;
  MapModel model;
  Potential phi;
  Truncation trunc;
  std::vector<Index> digits;
  unsigned workers = 1;
};

inline Report run_check(const Context& ctx) {
  Report rep{"check", {"condition", "value", "limit", "pass", "detail"}, {}, {}};
  const Index i_max = ctx.cfg.integer("check.i_max");
  const Index n_max = ctx.cfg.integer("check.n_max");
  if (i_max < 20) throw ValidationError("config: check.i_max must be >= 20");
  const GrowthReport g = check_growth_condition(ctx.model, i_max);
  rep.rows.push_back({"G", real_cell(g.empirical_C), 8.0, g.pass, "kappa=" + format_real(g.kappa_used)});
  if (ctx.model.parabolic().empty()) {
    rep.rows.push_back({"F", 1.0, 16.0, true, "vacuous: no parabolic branches"});
  } else {
    const InducingReport f = check_inducing_condition(ctx.model, std::min<Index>(i_max, 200), n_max);
    rep.rows.push_back({"F", real_cell(f.empirical_C), 16.0, f.pass, "gamma=" + format_real(ctx.model.gamma())});
  }
  const StructureReport s = check_structure(ctx.model, i_max);
  rep.rows.push_back({"R", real_cell(s.renyi_constant), nullptr, s.renyi_condition, "sup |f''|/|f'|^2"});
  rep.rows.push_back({"NERI1", nullptr, nullptr, s.disjoint && s.accumulate_at_one, "disjoint domains accumulating at 1"});
  rep.rows.push_back({"NERI2", real_cell(s.expansion_constant), 1.0, s.expanding_off_p, "inf |f'| off P"});
  rep.rows.push_back({"NERI3", nullptr, nullptr, s.parabolic_ok, "|f'(x_i)| = 1 exactly on P"});
  const PotentialClassReport pc = classify_potential(ctx.model, ctx.phi, i_max);
  rep.rows.push_back({"xi_class", real_cell(pc.limit_estimate), nullptr, pc.consistent,
                      std::string(to_string(ctx.phi.xi_class().kind)) + (pc.message.empty() ? "" : "; " + pc.message)});
  return rep;
}

inline Report run_pressure(const Context& ctx) {
  Report rep{"pressure", {"b", "q", "p", "method", "residual", "in_N"}, {}, {}};
  const auto bs = parse_grid("pressure.b", ctx.cfg.str("pressure.b"));
  const auto qs = parse_grid("pressure.q", ctx.cfg.str("pressure.q"));
  const PressureEngine engine(ctx.model, ctx.phi, ctx.trunc, ctx.digits);
  const std::function<std::vector<Json>(std::size_t)> point = [&](std::size_t k) {
    const double b = bs[k / qs.size()];
    const double q = qs[k % qs.size()];
    const PressureResult r = engine.root(b, q, true);
    const double err = r.residual + r.discretisation + r.truncation.tail_estimate;
    return std::vector<Json>{b, q, real_cell(r.value), to_string(r.method), real_cell(err), r.in_N};
  };
  rep.rows = parallel_map(bs.size() * qs.size(), ctx.workers, point);
  return rep;
}

inline Report run_dimension(const Context& ctx) {
  Report rep{"dimension", {"subsystem", "size", "dimension"}, {}, {}};
  std::vector<std::string> names;
  std::vector<std::vector<Index>> sets;
  const std::string spec = ctx.cfg.str("dimension.subsystems");
  if (!spec.empty()) {
    for (const auto& s : split(spec, ';')) {
      names.push_back(s);
      sets.push_back(parse_digit_set(s));
    }
  } else if (!ctx.digits.empty()) {
    names.push_back(ctx.cfg.str("digits"));
    sets.push_back(ctx.digits);
  } else {
    names.push_back("1.." + std::to_string(ctx.trunc.j_max));
    sets.push_back({});
  }
  const double tol = ctx.cfg.real("tol.root");
  const std::function<std::vector<Json>(std::size_t)> point = [&](std::size_t k) {
    const double d = bowen_dimension(ctx.model, sets[k], ctx.trunc, tol);
    const long long size = sets[k].empty() ? static_cast<long long>(ctx.trunc.j_max) : static_cast<long long>(sets[k].size());
    return std::vector<Json>{names[k], size, d};
  };
  rep.rows = parallel_map(sets.size(), ctx.workers, point);
  return rep;
}

inline SpectrumConfig spectrum_config(const Context& ctx) {
  SpectrumConfig sc;
  sc.truncation = ctx.trunc;
  sc.digits = ctx.digits;
  sc.res_P_tol = ctx.cfg.real("tol.res_P");
  sc.res_dP_tol = ctx.cfg.real("tol.res_dP");
  sc.q_abs_max = ctx.cfg.real("spectrum.q_max");
  return sc;
}

inline Report run_spectrum(const Context& ctx) {
  Report rep{"spectrum", {"alpha", "b", "q", "lambda", "entropy", "mean_phi", "case", "flat", "res_P", "res_dP"}, {}, {}};
  const auto alphas = ctx.cfg.list("spectrum.alpha");
  if (alphas.empty()) throw ValidationError("config: spectrum.alpha is empty");
  const SpectrumSolver solver(ctx.model, ctx.phi, spectrum_config(ctx));
  using Outcome = std::pair<std::optional<SpectrumPoint>, std::string>;
  const std::function<Outcome(std::size_t)> point = [&](std::size_t k) -> Outcome {
    try {
      return {solver.solve(alphas[k]), ""};
    } catch (const NumericalError& e) {
      return {std::nullopt, e.what()};
    }
  };
  const std::vector<Outcome> pts = parallel_map(alphas.size(), ctx.workers, point);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!pts[k].first) {
      rep.rows.push_back({alphas[k], real_cell(nan), nullptr, real_cell(nan), real_cell(nan), real_cell(nan), "error",
                          false, real_cell(nan), real_cell(nan)});
      rep.failures.push_back("alpha = " + format_real(alphas[k]) + ": " + pts[k].second);
      continue;
    }
    const SpectrumPoint& p = *pts[k].first;
    rep.rows.push_back({p.alpha, p.b, p.q ? Json(*p.q) : Json(nullptr), real_cell(p.lyapunov), real_cell(p.entropy),
                        real_cell(p.mean_phi), to_string(p.case_tag), p.flat, p.res_P, p.res_dP});
  }
  return rep;
}

inline std::function<double(Index)> bcf_psi(const Config& cfg) {
  if (cfg.str("bcf.psi") == "log") return [](Index d) { return std::log(static_cast<double>(d)); };
  const double r = cfg.real("bcf.r");
  return [r](Index d) { return std::pow(static_cast<double>(d), r); };
}

inline Report run_bcf(const Context& ctx) {
  Report rep{"bcf", {"x", "n", "psi", "average", "last_quarter", "terminated", "error_estimate", "digits"}, {}, {}};
  std::vector<double> xs = ctx.cfg.list("bcf.x");
  const long long random = ctx.cfg.integer("bcf.random");
  if (random < 0) throw ValidationError("config: bcf.random must be >= 0");
  std::mt19937_64 rng(static_cast<std::uint64_t>(ctx.cfg.integer("seed")));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (long long k = 0; k < random; ++k) xs.push_back(unit(rng));
  if (xs.empty()) throw ValidationError("config: bcf needs bcf.x or bcf.random");
  const long long n = ctx.cfg.integer("bcf.n");
  if (n < 1) throw ValidationError("config: bcf.n must be >= 1");
  const auto psi = bcf_psi(ctx.cfg);
  const std::string psi_name = ctx.cfg.str("bcf.psi") == "log" ? "log" : "pow(" + format_real(ctx.cfg.real("bcf.r")) + ")";
  const bool backward = ctx.model.kind() == ModelKind::Renyi;
  for (double x : xs) {
    const DigitSequence ds = backward ? bcf_expand(x, static_cast<std::size_t>(n)) : cf_expand(x, static_cast<std::size_t>(n));
    const BirkhoffResult br = birkhoff_average(ctx.model, psi, x, static_cast<std::size_t>(n));
    std::string digits;
    for (Index d : ds.digits) digits += (digits.empty() ? "" : " ") + std::to_string(d);
    rep.rows.push_back({x, n, psi_name, real_cell(br.average), real_cell(br.last_quarter), ds.terminated || br.terminated,
                        real_cell(br.error_estimate), digits});
  }
  return rep;
}

inline Report run_sample(const Context& ctx) {
  Report rep{"sample", {"seed", "n", "psi", "average", "symbols", "mean_return", "b", "q", "alpha"}, {}, {}};
  const long long length = ctx.cfg.integer("sample.length");
  const long long burn = ctx.cfg.integer("sample.burn_in");
  if (length < 0 || burn < 0) throw ValidationError("config: sample.length and sample.burn_in must be >= 0");
  const auto seed = static_cast<std::uint64_t>(ctx.cfg.integer("seed"));
  std::shared_ptr<const TransferOperator> op;
  double b = ctx.cfg.real("sample.b");
  double q = ctx.cfg.real("sample.q");
  double s = 0.0;
  Json alpha = nullptr;
  if (!ctx.cfg.str("sample.alpha").empty()) {
    const double a = parse_real("sample.alpha", ctx.cfg.str("sample.alpha"));
    const SpectrumSolver solver(ctx.model, ctx.phi, spectrum_config(ctx));
    const SpectrumPoint pt = solver.solve(a);
    if (pt.flat || !pt.q) throw ValidationError("sample.alpha lies on a flat part; there is no equilibrium chain");
    b = pt.b;
    q = *pt.q;
    s = -q * a;
    op = solver.engine().op_ptr();
    alpha = a;
  } else {
    const PressureEngine engine(ctx.model, ctx.phi, ctx.trunc, ctx.digits, false);
    const PressureResult r = engine.root(b, q, false);
    if (!r.in_N) throw NumericalError("(b, q) lies outside the region where the induced root exists");
    s = r.value;
    op = engine.op_ptr();
  }
  const GibbsChain chain(op, b, q, s);
  const OrbitSample o = sample_gibbs_orbit(chain, static_cast<std::size_t>(length), seed, static_cast<std::size_t>(burn));
  rep.rows.push_back({static_cast<long long>(seed), length, ctx.phi.name(), real_cell(o.average),
                      static_cast<long long>(o.symbols), real_cell(chain.mean_return()), b, q, alpha});
  return rep;
}

/// Entry point shared by the binary and the tests. Returns the exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Thermodynamic formalism for countable-branch interval maps"};
  app.footer(kColumnsHelp);
  std::string command;
  std::string config_path;
  std::string out_path;
  std::string format;
  std::optional<long long> workers;
  std::optional<long long> seed;
  std::optional<double> tol;
  app.add_option("command", command, "check | pressure | dimension | spectrum | bcf | sample")
      ->required()
      ->check(CLI::IsMember({"check", "pressure", "dimension", "spectrum", "bcf", "sample"}));
  app.add_option("--config", config_path, "key = value config file (or a previous report)");
  app.add_option("--out", out_path, "output path (default: stdout)");
  app.add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--workers", workers, "worker threads (default: available parallelism)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--tol", tol, "root tolerance");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "thermo: validation-error: " << e.what() << "\n";
    return 2;
  }

  try {
    Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
    if (!out_path.empty()) cfg.set("output.path", out_path);
    if (!format.empty()) cfg.set("output.format", format);
    if (workers) cfg.set("workers", std::to_string(*workers));
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (tol) cfg.set("tol.root", format_real(*tol));
    if (cfg.integer("workers") < 0) throw ValidationError("workers must be >= 0");
    if (!(cfg.real("tol.root") > 0.0)) throw ValidationError("tol.root must be positive");

    const MapModel model = build_model(cfg);
    Context ctx{cfg, model, build_potential(cfg, model), build_truncation(cfg),
                cfg.str("digits").empty() ? std::vector<Index>{} : parse_digit_set(cfg.str("digits")),
                static_cast<unsigned>(cfg.integer("workers"))};

    Report rep;
    if (command == "check") rep = run_check(ctx);
    else if (command == "pressure") rep = run_pressure(ctx);
    else if (command == "dimension") rep = run_dimension(ctx);
    else if (command == "spectrum") rep = run_spectrum(ctx);
    else if (command == "bcf") rep = run_bcf(ctx);
    else rep = run_sample(ctx);

    const std::string text = render(rep, cfg, cfg.str("output.format"));
    const std::string path = cfg.str("output.path");
    if (path.empty()) {
      out << text;
    } else {
      std::ofstream f(path);
      if (!f) throw ValidationError("cannot write " + path);
      f << text;
    }
    for (const auto& msg : rep.failures) err << "thermo: numerical-error: " << msg << "\n";
    return rep.failures.empty() ? 0 : 3;
  } catch (const ValidationError& e) {
    err << "thermo: validation-error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "thermo: numerical-error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "thermo: numerical-error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace thermo::cli
