#pragma once

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "thermo/errors.hpp"
#include "thermo/gibbs.hpp"
#include "thermo/map_model.hpp"
#include "thermo/pressure.hpp"

namespace thermo {

enum class SpectrumCase { B1, B2, B3, FLAT_A, FLAT_INFTY, BOUNDARY };

inline const char* to_string(SpectrumCase c) {
  switch (c) {
    case SpectrumCase::B1: return "B1";
    case SpectrumCase::B2: return "B2";
    case SpectrumCase::B3: return "B3";
    case SpectrumCase::FLAT_A: return "FLAT_A";
    case SpectrumCase::FLAT_INFTY: return "FLAT_INFTY";
    case SpectrumCase::BOUNDARY: return "BOUNDARY";
  }
  return "?";
}

struct SpectrumPoint {
  double alpha = 0.0;
  double b = 0.0;
  std::optional<double> q;
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
  double entropy = std::numeric_limits<double>::quiet_NaN();
  double mean_phi = std::numeric_limits<double>::quiet_NaN();
  SpectrumCase case_tag = SpectrumCase::B3;
  bool flat = false;
  double res_P = 0.0;
  double res_dP = 0.0;
  bool in_N = true;
};

struct SpectrumConfig {
  Truncation truncation{400, 400, 1, 24};
  std::vector<Index> digits;  // empty: 1..j_max
  double res_P_tol = 1e-8;
  double res_dP_tol = 1e-6;
  double q_abs_max = 20.0;
  double q_margin = 1e-12;
  std::optional<double> delta;  // dimension of the limit set; computed when absent
};

struct AlphaEndpoints {
  double alpha_inf_est = 0.0;
  double alpha_sup_est = 0.0;
  bool alpha_sup_infinite = false;
  bool has_A = false;
  double A_min = 0.0;
  double A_max = 0.0;
};

struct FlatPart {
  bool flat = false;
  std::string reason;
  SpectrumCase tag = SpectrumCase::B3;
};

/// Flat iff alpha is in A, or phi has infinite ratio with (H1) and alpha > max A.
inline FlatPart flat_part(const MapModel& model, const Potential& phi, double alpha) {
  FlatPart out;
  if (!model.parabolic().empty()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index i : model.parabolic()) {
      const double a = fixed_point_value(model, phi, i);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(hi));
    if (alpha >= lo - tol && alpha <= hi + tol) {
      out.flat = true;
      out.reason = "A";
      out.tag = SpectrumCase::FLAT_A;
      return out;
    }
    if (phi.xi_class().kind == XiClass::Kind::Infinite && phi.h1() && alpha > hi) {
      out.flat = true;
      out.reason = "B2";
      out.tag = SpectrumCase::FLAT_INFTY;
      return out;
    }
  }
  out.reason = "none";
  return out;
}

inline SpectrumCase regime_of(const Potential& phi) {
  switch (phi.xi_class().kind) {
    case XiClass::Kind::Zero: return SpectrumCase::B1;
    case XiClass::Kind::Infinite: return SpectrumCase::B2;
    case XiClass::Kind::FiniteL: return SpectrumCase::B3;
  }
  return SpectrumCase::B3;
}

/// Nested solve of P_alpha(b,q) = 0, d_q P_alpha = 0:
///   inner  b(q) = root in b of P(b, q, -q alpha)
///   outer  b(alpha) = min_q b(q) on the sign-restricted q interval
class SpectrumSolver {
 public:
  SpectrumSolver(const MapModel& model, const Potential& phi, SpectrumConfig cfg)
      : model_(model), phi_(phi), cfg_(std::move(cfg)),
        engine_(model, phi, cfg_.truncation, cfg_.digits, false) {
    if (cfg_.res_P_tol <= 0 || cfg_.res_dP_tol <= 0) throw ValidationError("spectrum tolerances must be positive");
    if (cfg_.delta) {
      delta_ = *cfg_.delta;
    } else if (model.full_branch_cover() && cfg_.digits.empty()) {
      delta_ = 1.0;
    } else {
      delta_ = bowen_dimension(model, cfg_.digits, cfg_.truncation);
    }
    const auto& para = engine_.op().parabolic_digits();
    if (!para.empty()) {
      has_A_ = true;
      A_min_ = std::numeric_limits<double>::infinity();
      A_max_ = -A_min_;
      for (Index i : para) {
        A_min_ = std::min(A_min_, engine_.op().alpha(i));
        A_max_ = std::max(A_max_, engine_.op().alpha(i));
      }
    }
  }

  const PressureEngine& engine() const { return engine_; }
  /// An explicit digit list is a finite subsystem: no tail, pressure finite for all (b,q).
  bool finite_alphabet() const { return !cfg_.digits.empty(); }
  double delta() const { return delta_; }

  /// Lower limit for b at fixed q where the full-system pressure is finite.
  double b_floor(double q) const {
    if (finite_alphabet()) return 0.0;
    const XiClass& xi = phi_.xi_class();
    switch (xi.kind) {
      case XiClass::Kind::FiniteL: return std::max(0.0, model_.s_inf() - q * xi.theta);
      case XiClass::Kind::Zero: return q >= 0.0 ? 0.0 : model_.s_inf();
      case XiClass::Kind::Infinite: return 0.0;
    }
    return 0.0;
  }

  /// P(b, q, -q alpha).
  double inner_function(double b, double q, double alpha) const {
    return engine_.eval(b, q, -q * alpha, false).log_lambda;
  }

  /// b(q); nullopt when -q alpha is not above LB(q) or no root exists above the floor.
  std::optional<double> b_of_q(double q, double alpha) const {
    if (engine_.has_parabolic() && !(-q * alpha > engine_.LB(q))) return std::nullopt;
    try {
      const double lo = b_floor(q);
      const double f_lo = inner_function(lo, q, alpha);
      if (f_lo <= 0.0) return std::nullopt;
      double hi = std::max(lo + 0.25, delta_ + 0.25);
      double f_hi = inner_function(hi, q, alpha);
      while (f_hi > 0.0) {
        hi = lo + 2.0 * (hi - lo);
        if (hi > 20.0) return std::nullopt;
        f_hi = inner_function(hi, q, alpha);
      }
      const auto f = [&](double b) { return inner_function(b, q, alpha); };
      std::uintmax_t iters = 200;
      const auto r = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi,
                                                       boost::math::tools::eps_tolerance<double>(50), iters);
      return 0.5 * (r.first + r.second);
    } catch (const NumericalError&) {
      return std::nullopt;
    }
  }

  std::pair<double, double> q_interval(double alpha) const {
    double q_lo = -cfg_.q_abs_max;
    double q_hi = cfg_.q_abs_max;
    const XiClass& xi = phi_.xi_class();
    if (!finite_alphabet() && xi.kind == XiClass::Kind::FiniteL && xi.theta > 0.0)
      q_lo = std::max(q_lo, (model_.s_inf() - delta_) / xi.theta + cfg_.q_margin);
    if (has_A_) {
      if (alpha > A_max_) q_hi = -cfg_.q_margin;
      if (alpha < A_min_) q_lo = cfg_.q_margin;
    }
    if (!finite_alphabet() && xi.kind == XiClass::Kind::Infinite) q_lo = std::max(q_lo, cfg_.q_margin);
    if (!(q_lo < q_hi)) throw NumericalError("empty q search interval for alpha = " + std::to_string(alpha));
    return {q_lo, q_hi};
  }

  SpectrumPoint solve(double alpha) const {
    SpectrumPoint pt;
    pt.alpha = alpha;
    const FlatPart fp = flat_part(model_, phi_, alpha);
    if (fp.flat) {
      pt.flat = true;
      pt.b = delta_;
      pt.case_tag = fp.tag;
      pt.mean_phi = alpha;
      return pt;
    }
    const auto [q_lo, q_hi] = q_interval(alpha);
    const double big = 1e6;
    const auto objective_at = [&](double q) {
      const auto b = b_of_q(q, alpha);
      return b ? *b : big + std::abs(q);
    };
    // one-signed intervals are searched in log|q|: near A the optimal q is exponentially small
    const int sign = q_lo >= 0.0 ? 1 : (q_hi <= 0.0 ? -1 : 0);
    const auto to_q = [&](double u) { return sign == 0 ? u : sign * std::exp(u); };
    const double u_lo = sign == 0 ? q_lo : std::log(sign > 0 ? q_lo : -q_hi);
    const double u_hi = sign == 0 ? q_hi : std::log(sign > 0 ? q_hi : -q_lo);
    std::uintmax_t iters = 200;
    const auto best =
        boost::math::tools::brent_find_minima([&](double u) { return objective_at(to_q(u)); }, u_lo, u_hi, 40, iters);
    double q = to_q(best.first);
    if (!(best.second < big)) throw NumericalError("no bracket for the inner root at alpha = " + std::to_string(alpha));

    bool at_boundary = std::min(best.first - u_lo, u_hi - best.first) < 1e-6 * std::max(1.0, u_hi - u_lo);
    if (!at_boundary) q = polish(q, alpha, q_lo, q_hi, sign != 0);
    if (!at_boundary && !(std::abs(stationarity_or_nan(q, alpha)) <= std::max(1e-3, 1e3 * cfg_.res_dP_tol))) {
      // flat objective running into an end of the interval
      for (double u : {u_lo, u_hi}) {
        if (objective_at(to_q(u)) <= best.second + 1e-10) {
          q = to_q(u);
          at_boundary = true;
          break;
        }
      }
    }

    const auto b = b_of_q(q, alpha);
    if (!b) throw NumericalError("inner root lost after polishing at alpha = " + std::to_string(alpha));
    pt.b = *b;
    pt.q = q;
    const PressureResult p = engine_.root(pt.b, q, false);
    pt.in_N = p.in_N;
    pt.res_P = std::abs(p.value + q * alpha);
    const GibbsChain chain(engine_.op_ptr(), pt.b, q, p.value);
    const LiftedObservables obs = lift_observables(chain);
    pt.lyapunov = obs.lyapunov;
    pt.entropy = obs.entropy;
    pt.mean_phi = obs.mean_phi;
    pt.res_dP = std::abs(alpha - obs.mean_phi);
    if (!at_boundary && pt.res_dP > std::max(1e-3, 1e3 * cfg_.res_dP_tol))
      throw NumericalError("no stationary q at alpha = " + std::to_string(alpha) + " (outside the computable range)");
    pt.case_tag = at_boundary ? SpectrumCase::BOUNDARY : regime_of(phi_);
    return pt;
  }

  /// Implicit derivative db/dq = -(d_q P_alpha)/(d_b P_alpha) at (b(q), q).
  double envelope_slope(double q, double alpha) const {
    const auto b = b_of_q(q, alpha);
    if (!b) throw NumericalError("envelope_slope: no inner root");
    const OperatorEval e = engine_.eval(*b, q, -q * alpha, true);
    // P_alpha(b,q) = p(b,q) + q alpha, so d_q P_alpha = alpha - mean_phi, d_b P_alpha = -lyapunov
    const double mean_phi = e.d_q / e.d_s;
    const double lyap = e.d_b / e.d_s;
    return -(alpha - mean_phi) / (-lyap);
  }

 private:
  double stationarity_or_nan(double q, double alpha) const {
    try {
      return stationarity(q, alpha);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }

  double stationarity(double q, double alpha) const {
    const auto b = b_of_q(q, alpha);
    if (!b) throw NumericalError("stationarity: no inner root");
    const OperatorEval e = engine_.eval(*b, q, -q * alpha, true);
    return alpha - e.d_q / e.d_s;
  }

  double polish(double q, double alpha, double q_lo, double q_hi, bool relative) const {
    double step = 1e-6 * (relative ? std::abs(q) : std::max(1.0, std::abs(q)));
    try {
      const double d0 = stationarity(q, alpha);
      if (std::abs(d0) < 1e-12) return q;
      for (int k = 0; k < 20; ++k) {
        const double a = std::max(q_lo, q - step);
        const double c = std::min(q_hi, q + step);
        const double fa = stationarity(a, alpha);
        const double fc = stationarity(c, alpha);
        if ((fa < 0) != (fc < 0)) {
          std::uintmax_t iters = 100;
          const auto f = [&](double x) { return stationarity(x, alpha); };
          const auto r = boost::math::tools::toms748_solve(f, a, c, fa, fc,
                                                           boost::math::tools::eps_tolerance<double>(45), iters);
          return 0.5 * (r.first + r.second);
        }
        step *= 4.0;
      }
    } catch (const NumericalError&) {
    }
    return q;
  }

  MapModel model_;
  Potential phi_;
  SpectrumConfig cfg_;
  PressureEngine engine_;
  double delta_ = 1.0;
  bool has_A_ = false;
  double A_min_ = 0.0;
  double A_max_ = 0.0;
};

inline SpectrumPoint solve_spectrum_point(const MapModel& model, const Potential& phi, double alpha,
                                          const SpectrumConfig& cfg) {
  return SpectrumSolver(model, phi, cfg).solve(alpha);
}

struct SpectrumCurve {
  std::vector<SpectrumPoint> points;
  bool monotone_ok = true;
};

/// Points solve independently; the audit checks b is non-decreasing left of A and
/// non-increasing right of A.
inline SpectrumCurve spectrum_curve(const SpectrumSolver& solver, const std::vector<double>& alphas) {
  SpectrumCurve out;
  for (double a : alphas) out.points.push_back(solver.solve(a));
  std::vector<const SpectrumPoint*> sorted;
  for (const auto& p : out.points) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(), [](auto* x, auto* y) { return x->alpha < y->alpha; });
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const SpectrumPoint& a = *sorted[k - 1];
    const SpectrumPoint& b = *sorted[k];
    if (a.flat || b.flat || !a.q || !b.q) continue;
    if (*a.q > 0 && *b.q > 0 && b.b < a.b - 1e-9) out.monotone_ok = false;
    if (*a.q < 0 && *b.q < 0 && b.b > a.b + 1e-9) out.monotone_ok = false;
  }
  return out;
}

inline SpectrumCurve spectrum_curve(const MapModel& model, const Potential& phi, const std::vector<double>& alphas,
                                    const SpectrumConfig& cfg) {
  return spectrum_curve(SpectrumSolver(model, phi, cfg), alphas);
}

/// A exactly; alpha_inf / alpha_sup estimated from fixed points and Gibbs chains
/// scanned over q at b = delta.
inline AlphaEndpoints alpha_endpoints(const MapModel& model, const Potential& phi, const Truncation& trunc,
                                      const std::vector<Index>& digits = {}) {
  AlphaEndpoints out;
  const PressureEngine engine(model, phi, trunc, digits, false);
  const auto& para = engine.op().parabolic_digits();
  out.alpha_inf_est = std::numeric_limits<double>::infinity();
  out.alpha_sup_est = -out.alpha_inf_est;
  for (Index i : para) {
    const double a = engine.op().alpha(i);
    if (!out.has_A) {
      out.has_A = true;
      out.A_min = out.A_max = a;
    }
    out.A_min = std::min(out.A_min, a);
    out.A_max = std::max(out.A_max, a);
  }
  // Dirac measures on branch fixed points
  for (Index j : engine.op().digits()) {
    if (j > 20) break;
    const double a = fixed_point_value(model, phi, j);
    out.alpha_inf_est = std::min(out.alpha_inf_est, a);
    out.alpha_sup_est = std::max(out.alpha_sup_est, a);
  }
  for (double q : {1.0, 2.0, 4.0, 8.0, 16.0, -0.25, -0.5}) {
    try {
      const PressureResult p = engine.root(1.0, q, false);
      if (!p.in_N) continue;
      const GibbsChain chain(engine.op_ptr(), 1.0, q, p.value);
      const double m = lift_observables(chain).mean_phi;
      out.alpha_inf_est = std::min(out.alpha_inf_est, m);
      out.alpha_sup_est = std::max(out.alpha_sup_est, m);
    } catch (const NumericalError&) {
    }
  }
  const XiClass::Kind k = phi.xi_class().kind;
  if (k == XiClass::Kind::FiniteL || k == XiClass::Kind::Infinite) {
    const auto d = phi.of_digit(model.digit(1000));
    const auto d2 = phi.of_digit(model.digit(100));
    const bool grows = d && d2 ? *d > *d2 + 1e-12 : true;
    out.alpha_sup_infinite = grows;
  }
  return out;
}

}  // namespace thermo
