// Acceptance checks, one line per criterion.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>

#include "oracles/ulam.hpp"
#include "thermo.hpp"

using namespace thermo;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Index> range(Index lo, Index hi) {
  std::vector<Index> v(static_cast<std::size_t>(hi - lo + 1));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

const MapModel& renyi() {
  static const MapModel m = MapModel::renyi();
  return m;
}

const Potential& log_b1() {
  static const Potential p = Potential::log_digit(renyi());
  return p;
}

const PressureEngine& renyi_engine() {
  static const PressureEngine e(renyi(), log_b1(), Truncation{});
  return e;
}

// points well inside the region where the induced root exists
std::vector<std::pair<double, double>> grid(double b0, double b1, double q0, double q1, int n) {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      pts.emplace_back(b0 + (b1 - b0) * i / (n - 1), q0 + (q1 - q0) * j / (n - 1));
  return pts;
}

Verdict round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const double x = u(rng);
    const Reconstruction r = bcf_reconstruct(bcf_expand(x, 40), TailMode::IntervalBound);
    const double err = std::abs(r.value - x);
    worst = std::max(worst, err);
    bad += err >= 1e-9;
  }
  const double dt = seconds_since(t0);
  return {worst < 1e-9 && dt < 5.0,
          "max error " + fmt("%.3g", worst) + ", " + std::to_string(bad) + "/10000 over 1e-9, " + fmt("%.2f", dt) + " s"};
}

Verdict shift_identity() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    double x = u(rng);
    const DigitSequence seq = bcf_expand(x, 30);
    for (std::size_t k = 0; k < 30; ++k) {
      const BcfStep st = bcf_step(x);
      mismatches += st.digit != seq.digits[k];
      x = st.next;
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 x, k <= 30"};
}

Verdict conditions() {
  const MapModel& m = renyi();
  const GrowthReport g = check_growth_condition(m, 10000);
  const InducingReport f = check_inducing_condition(m, 100, 1000);
  const StructureReport s = check_structure(m, 1000);
  const double d0 = std::exp(m.log_derivative(1, 0.0));
  const bool bad_kappa = !check_growth_condition(m.with_kappa(1.0), 1000).pass;
  const bool bad_gamma = !check_inducing_condition(m.with_gamma(0.0), 100, 1000).pass;
  const bool ok = g.pass && g.empirical_C <= 4.0 && g.kappa_used == 2.0 && f.pass && m.gamma() == 1.0 && s.pass() &&
                  std::abs(d0 - 1.0) < 1e-15 && bad_kappa && bad_gamma;
  return {ok, "G C=" + fmt("%.4g", g.empirical_C) + ", F C=" + fmt("%.4g", f.empirical_C) + ", f'(0)=" + fmt("%.17g", d0) +
                  ", kappa=1 fails: " + (bad_kappa ? "yes" : "no") + ", gamma=0 fails: " + (bad_gamma ? "yes" : "no")};
}

Verdict truncation_monotone() {
  const std::vector<std::pair<double, double>> pts{{0.6, 0.0}, {0.7, 0.2}, {0.8, -0.1}, {0.9, 0.1}, {1.0, 0.0}};
  int violations = 0;
  std::string vals;
  for (const auto& [b, q] : pts) {
    double prev = -1e300;
    for (Index n : {10, 100, 1000}) {
      const double v = truncated_pressure(renyi(), log_b1(), b, q, range(1, n), 1).spectral.value;
      violations += v < prev;
      prev = v;
    }
    vals += (vals.empty() ? "" : " ") + fmt("%.4f", prev);
  }
  return {violations == 0, std::to_string(violations) + " violations; P_{1..1000}: " + vals};
}

Verdict gauss_bowen() {
  const double oracle = oracle::gauss_bowen_root({1, 2}, 12800);
  const auto t0 = std::chrono::steady_clock::now();
  const double d = bowen_dimension(MapModel::gauss(), {1, 2}, Truncation{});
  const double dt = seconds_since(t0);
  return {std::abs(d - oracle) < 1e-4 && dt < 10.0,
          "root " + fmt("%.10f", d) + ", Ulam " + fmt("%.10f", oracle) + ", " + fmt("%.2f", dt) + " s"};
}

Verdict full_dimension() {
  double prev = 0.0;
  bool increasing = true;
  std::string vals;
  for (Index j : {100, 1000, 10000}) {
    Truncation t;
    t.j_max = j;
    const double d = bowen_dimension(renyi(), {}, t);
    increasing = increasing && d > prev && d <= 1.0 + 1e-9;
    prev = d;
    vals += (vals.empty() ? "" : " ") + fmt("%.6f", d);
  }
  return {increasing && prev > 0.99, "j_max 1e2/1e3/1e4: " + vals};
}

Verdict induced_vs_direct() {
  const std::vector<Index> F = range(1, 100);
  const PressureEngine e(renyi(), log_b1(), Truncation{}, F);
  int bad = 0;
  double worst = 0.0;
  for (const auto& [b, q] : grid(0.6, 0.9, -0.2, 0.2, 5)) {
    const PressureResult ir = e.root(b, q, true);
    const TruncatedPressure tp = truncated_pressure(renyi(), log_b1(), b, q, F, 1, 48);
    const double gap = std::abs(ir.value - tp.spectral.value);
    const double tol = ir.residual + ir.discretisation + ir.truncation.tail_estimate + tp.spectral.residual;
    worst = std::max(worst, gap);
    bad += !ir.in_N || !(gap <= tol);
  }
  return {bad == 0, std::to_string(bad) + "/25 outside tolerance, max gap " + fmt("%.3g", worst)};
}

Verdict ruelle() {
  int bad = 0;
  double worst = 0.0;
  const std::vector<std::pair<double, double>> pts{{0.6, 0.0}, {0.65, 0.1}, {0.7, -0.2}, {0.75, 0.3}, {0.8, 0.0},
                                                   {0.8, 0.2}, {0.85, -0.1}, {0.9, 0.1}, {0.95, -0.2}, {0.7, 0.5}};
  for (const auto& [b, q] : pts) {
    const RuelleCheck r = ruelle_check(renyi_engine(), b, q, 1e-4);
    worst = std::max({worst, r.residual_b, r.residual_q});
    bad += !(r.residual_b < 1e-3 && r.residual_q < 1e-3);
  }
  return {bad == 0, std::to_string(bad) + "/10 failing, worst residual " + fmt("%.3g", worst)};
}

Verdict convexity() {
  const int n = 21;
  const double b0 = 0.6, b1 = 0.9, q0 = -0.2, q1 = 0.2;
  std::vector<double> p(n * n);
  int outside = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const PressureResult r = renyi_engine().root(b0 + (b1 - b0) * i / (n - 1), q0 + (q1 - q0) * j / (n - 1), false);
      outside += !r.in_N;
      p[i * n + j] = r.value;
    }
  const auto at = [&](int i, int j) { return p[i * n + j]; };
  int violations = 0;
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (auto [di, dj] : {std::pair{1, 0}, {0, 1}, {1, 1}, {1, -1}}) {
        const int i2 = i + 2 * di, j2 = j + 2 * dj;
        if (i2 >= n || j2 < 0 || j2 >= n) continue;
        const double excess = at(i + di, j + dj) - 0.5 * (at(i, j) + at(i2, j2));
        worst = std::max(worst, excess);
        violations += excess > 1e-9;
      }
  return {violations == 0 && outside == 0,
          std::to_string(violations) + " violations, max midpoint excess " + fmt("%.3g", worst) + ", " +
              std::to_string(outside) + " points outside"};
}

Verdict gibbs_sandwich() {
  const double b = 0.8, q = 0.3;
  const PressureResult p = renyi_engine().root(b, q, false);
  const GibbsChain chain(renyi_engine().op_ptr(), b, q, p.value);
  const GibbsConstant g = gibbs_constant(chain, 500, 17);
  const bool ok = g.cylinders == 500 && g.Q < 1e3 && g.ratio_min >= 1.0 / g.Q && g.ratio_max <= g.Q;
  return {ok, "Q = " + fmt("%.4g", g.Q) + ", ratios in [" + fmt("%.4g", g.ratio_min) + ", " + fmt("%.4g", g.ratio_max) + "]"};
}

Verdict equilibrium_identity() {
  int bad = 0;
  double worst = 0.0;
  const std::vector<std::pair<double, double>> pts{{0.65, 0.0}, {0.7, 0.1}, {0.7, -0.1}, {0.75, 0.3}, {0.8, 0.0},
                                                   {0.8, 0.3}, {0.85, -0.1}, {0.85, 0.2}, {0.9, 0.0}, {0.9, 0.1}};
  for (const auto& [b, q] : pts) {
    const PressureResult p = renyi_engine().root(b, q, false);
    const GibbsChain chain(renyi_engine().op_ptr(), b, q, p.value);
    const LiftedObservables lo = lift_observables(chain);
    const double gap = std::abs(lo.entropy - q * lo.mean_phi - b * lo.lyapunov - p.value);
    worst = std::max(worst, gap);
    bad += !(gap < 2e-3);
  }
  return {bad == 0, std::to_string(bad) + "/10 failing, worst gap " + fmt("%.3g", worst)};
}

Verdict khinchin_spectrum() {
  const auto t0 = std::chrono::steady_clock::now();
  const SpectrumSolver solver(renyi(), log_b1(), SpectrumConfig{});
  bool ok = true;
  double prev = 2.0;
  std::string vals;
  for (double a : {0.8, 1.0, 1.5, 2.0}) {
    const SpectrumPoint p = solver.solve(a);
    ok = ok && !p.flat && p.b > 0.0 && p.b < 1.0 && p.b < prev && p.q && *p.q < 0.0 && p.res_P <= 1e-8 &&
         p.res_dP <= 1e-6 && std::abs(p.entropy / p.lyapunov - p.b) <= 2e-3;
    prev = p.b;
    vals += (vals.empty() ? "" : " ") + fmt("%.6f", p.b);
  }
  const SpectrumPoint flat = solver.solve(std::log(2.0));
  const FlatPart fp = flat_part(renyi(), log_b1(), std::log(2.0));
  ok = ok && flat.flat && flat.b == 1.0 && fp.flat;
  const double dt = seconds_since(t0);
  return {ok && dt < 60.0, "b(0.8,1,1.5,2) = " + vals + ", b(log 2) = " + fmt("%g", flat.b) + ", " + fmt("%.1f", dt) + " s"};
}

Verdict arithmetic_flat() {
  bool ok = true;
  int count = 0;
  for (auto [r, alphas] : {std::pair{1.0, std::vector<double>{2.5, 4.0, 8.0}}, {2.0, std::vector<double>{4.5, 9.0}}}) {
    const SpectrumCurve c = spectrum_curve(renyi(), Potential::digit_power(renyi(), r), alphas, SpectrumConfig{});
    for (const SpectrumPoint& p : c.points) {
      ok = ok && p.flat && p.b == 1.0;
      ++count;
    }
  }
  return {ok && count == 5, std::to_string(count) + " points, all flat with b = 1: " + (ok ? "yes" : "no")};
}

Verdict psi_dichotomy() {
  bool ok = true;
  const SpectrumSolver solver(renyi(), log_b1(), SpectrumConfig{});
  for (double a : {0.9, 1.5, 3.0}) {
    const SpectrumPoint p = solver.solve(a);
    ok = ok && !flat_part(renyi(), log_b1(), a).flat && !p.flat && p.b < 1.0;
  }
  const Potential sq = Potential::log_power(renyi(), 2.0);
  const double lo = std::pow(std::log(2.0), 2.0);
  const bool declared = sq.xi_class().kind == XiClass::Kind::Infinite;
  int flat = 0;
  for (double a : {lo, lo + 0.1, 1.0, 2.0, 4.0, 10.0, 50.0}) flat += flat_part(renyi(), sq, a).flat;
  return {ok && declared && flat == 7,
          std::string("log: non-flat off A: ") + (ok ? "yes" : "no") + "; log^2: " + std::to_string(flat) + "/7 flat"};
}

Verdict sampling() {
  const SpectrumSolver solver(renyi(), log_b1(), SpectrumConfig{});
  const double alpha = 1.2;
  const SpectrumPoint p = solver.solve(alpha);
  const GibbsChain chain(solver.engine().op_ptr(), p.b, *p.q, solver.engine().root(p.b, *p.q, false).value);
  const OrbitSample s = sample_gibbs_orbit(chain, 1000000, 12345);
  return {std::abs(s.average - alpha) < 0.02, "Birkhoff mean " + fmt("%.5f", s.average) + " at alpha 1.2"};
}

Verdict divergent_return() {
  std::vector<double> mr;
  bool flagged = true;
  for (Index n : {100, 1000, 10000}) {
    Truncation t;
    t.n_max = n;
    t.extrapolate_runs = false;
    const PressureEngine e(renyi(), log_b1(), t, {}, false);
    const GibbsChain c(e.op_ptr(), 1.0, 0.0, 0.0);
    flagged = flagged && c.mean_return_divergent();
    mr.push_back(c.mean_return());
  }
  // logarithmic growth: every decade of n_max adds about the same amount
  const bool growing = mr[1] - mr[0] > 1.0 && mr[2] - mr[1] > 0.9 * (mr[1] - mr[0]);
  const PressureEngine full(renyi(), log_b1(), Truncation{}, {}, false);
  flagged = flagged && GibbsChain(full.op_ptr(), 1.0, 0.0, 0.0).mean_return_divergent();
  return {growing && flagged,
          "mean return " + fmt("%.3f", mr[0]) + " / " + fmt("%.3f", mr[1]) + " / " + fmt("%.3f", mr[2]) + ", flagged divergent: " +
              (flagged ? "yes" : "no")};
}

const std::vector<std::pair<std::string, std::function<Verdict()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Verdict()>>> c{
      {"bcf round trip", round_trip},
      {"shift identity", shift_identity},
      {"condition suite", conditions},
      {"truncation monotonicity", truncation_monotone},
      {"gauss pair bowen root", gauss_bowen},
      {"full renyi dimension", full_dimension},
      {"induced root vs direct", induced_vs_direct},
      {"ruelle formula", ruelle},
      {"convexity", convexity},
      {"gibbs sandwich", gibbs_sandwich},
      {"equilibrium identity", equilibrium_identity},
      {"khinchin spectrum", khinchin_spectrum},
      {"arithmetic mean flatness", arithmetic_flat},
      {"psi dichotomy", psi_dichotomy},
      {"gibbs orbit sampling", sampling},
      {"divergent return time", divergent_return},
  };
  return c;
}

bool run_one(std::size_t k) {
  const auto& [name, fn] = criteria()[k - 1];
  Verdict v{false, ""};
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  std::printf("criterion %zu (%s): %s  %s\n", k, name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
  return v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::size_t only = 0;
  app.add_option("--criterion", only, "run a single criterion")->check(CLI::Range(1, 16));
  CLI11_PARSE(app, argc, argv);
  bool ok = true;
  for (std::size_t k = 1; k <= criteria().size(); ++k)
    if (only == 0 || only == k) ok = run_one(k) && ok;
  return ok ? 0 : 1;
}
