#pragma once

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thermo/coding.hpp"
#include "thermo/errors.hpp"
#include "thermo/map_model.hpp"
#include "thermo/transfer_operator.hpp"

namespace thermo {

struct Truncation {
  Index j_max = 400;
  Index n_max = 400;
  int depth = 1;
  int nodes = 24;
  double tail_estimate = 0.0;
  double digit_tail_estimate = 0.0;
  bool extrapolate_runs = true;
};

enum class PressureMethod { DirectCylinder, Spectral, Induced, InducedRoot };

inline const char* to_string(PressureMethod m) {
  switch (m) {
    case PressureMethod::DirectCylinder: return "direct";
    case PressureMethod::Spectral: return "spectral";
    case PressureMethod::Induced: return "induced";
    case PressureMethod::InducedRoot: return "induced-root";
  }
  return "?";
}

struct PressureResult {
  double value = 0.0;
  bool infinite = false;
  PressureMethod method = PressureMethod::InducedRoot;
  Truncation truncation;
  double residual = 0.0;        // |P(b,q,value)| for roots, resolution gap for spectral values
  double discretisation = 0.0;  // collocation resolution gap, when estimated
  bool in_N = true;
  double mean_return = 1.0;     // mu(r) at the root
};

inline double lower_bound_LB(const MapModel& model, const Potential& phi, double q,
                             const std::vector<Index>& parabolic) {
  double lb = -std::numeric_limits<double>::infinity();
  for (Index i : parabolic) lb = std::max(lb, -q * fixed_point_value(model, phi, i));
  return lb;
}

inline double lower_bound_LB(const MapModel& model, const Potential& phi, double q) {
  return lower_bound_LB(model, phi, q, model.parabolic());
}

/// sum_{n > m} (n/m)^{-beta} e^{-gap (n - m)}; +inf when divergent.
inline double run_tail_sum(double beta, double gap, Index m) {
  if (gap < 0.0) return std::numeric_limits<double>::infinity();
  const double md = static_cast<double>(m);
  if (gap < 1e-12) {
    if (beta <= 1.0) return std::numeric_limits<double>::infinity();
    return md / (beta - 1.0);
  }
  double sum = 0.0;
  for (Index k = 1; k <= 10'000'000; ++k) {
    const double term = std::exp(-beta * std::log1p(static_cast<double>(k) / md) - gap * static_cast<double>(k));
    sum += term;
    if (term < 1e-17 * sum) return sum;
  }
  // slowly decaying remainder: integral estimate
  const double n0 = md + 1e7;
  return sum + std::exp(-beta * std::log(n0 / md) - gap * 1e7) / std::max(gap, 1e-300);
}

/// Relative mass of the discarded runs and digits for an operator evaluation.
struct TailMass {
  double runs = 0.0;
  double digits = 0.0;
};

inline TailMass tail_mass(const TransferOperator& op, const OperatorEval& e) {
  TailMass t;
  const auto& paras = op.parabolic_digits();
  if (op.scheme() == Scheme::Induced) {
    const double beta = e.b * (1.0 + op.model().gamma());
    for (std::size_t p = 0; p < paras.size(); ++p) {
      const double gap = e.s - (-e.q * op.alpha(paras[p]));
      const double sum = run_tail_sum(beta, gap, op.n_max());
      t.runs = std::max(t.runs, e.run_tail_weight[p] * sum);
    }
    // extrapolated runs: only the asymptotic model error remains
    if (op.extrapolates_runs()) t.runs /= static_cast<double>(op.n_max());
  }
  if (e.digit_tail_weight > 0.0) {
    const double ex = e.digit_tail_exponent;
    if (ex >= -1.0) {
      t.digits = std::numeric_limits<double>::infinity();
    } else {
      t.digits = e.digit_tail_weight * static_cast<double>(op.j_max()) / (-ex - 1.0);
    }
  }
  return t;
}

struct FinitenessReport {
  bool finite = false;
  double partial_sum = 0.0;
  double tail_exponent = 0.0;  // terms decay like i^{-tail_exponent}
};

/// sum_{i <= i_max} exp(sup_{Delta_i}(-q phi - b log|f'|)) with a power-law fit of
/// the terms over the last decade.
inline FinitenessReport finiteness_test(const MapModel& model, const Potential& phi, double b, double q,
                                        Index i_max) {
  if (i_max < 1000) throw ValidationError("finiteness_test: i_max must be >= 1000");
  FinitenessReport rep;
  std::vector<double> logs(static_cast<std::size_t>(i_max));
  for (Index i = 1; i <= i_max; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (double x : branch_samples(model, i))
      best = std::max(best, -q * phi.on_branch(i, x) - b * model.log_derivative(i, x));
    logs[static_cast<std::size_t>(i - 1)] = best;
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - top);
  rep.partial_sum = std::isfinite(top) ? sum * std::exp(top) : std::numeric_limits<double>::infinity();
  const Index start = i_max / 10;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (Index i = start; i <= i_max; ++i) {
    const double x = std::log(static_cast<double>(i));
    const double y = logs[static_cast<std::size_t>(i - 1)];
    sx += x; sy += y; sxx += x * x; sxy += x * y; cnt += 1;
  }
  rep.tail_exponent = -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  rep.finite = std::isfinite(rep.partial_sum) && rep.tail_exponent > 1.0 + 1e-9;
  return rep;
}

/// sup of S_n(-q phi - b log|f'|) over the cylinder of `word` (endpoints and midpoint).
inline std::pair<double, double> cylinder_birkhoff_range(const MapModel& model, const Potential& phi,
                                                         const Word& word, double b, double q) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::vector<double> pts(word.size() + 1);
  for (double t : {0.0, 0.5, 1.0}) {
    pts.back() = t;
    for (std::size_t m = word.size(); m-- > 0;) pts[m] = model.inverse(word[m], pts[m + 1]);
    double sum = 0.0;
    for (std::size_t m = 0; m < word.size(); ++m)
      sum += -q * phi.on_branch(word[m], pts[m]) + b * model.inverse_branch(word[m]).log_abs_derivative(pts[m + 1]);
    lo = std::min(lo, sum);
    hi = std::max(hi, sum);
  }
  return {lo, hi};
}

struct TruncatedPressure {
  PressureResult direct;
  PressureResult spectral;
};

/// Pressure of the finite full shift on digit set F: cylinder sums at the given
/// depth, and the spectral radius of the collocated transfer operator.
inline TruncatedPressure truncated_pressure(const MapModel& model, const Potential& phi, double b, double q,
                                            std::vector<Index> digits, int depth, int nodes = 32) {
  if (digits.empty()) throw ValidationError("truncated_pressure: empty digit set");
  std::sort(digits.begin(), digits.end());
  digits.erase(std::unique(digits.begin(), digits.end()), digits.end());
  if (depth < 1 || depth > 3) throw ValidationError("truncated_pressure: depth must be 1, 2 or 3");
  if (depth > 1 && digits.size() > 64) throw ValidationError("truncated_pressure: depth > 1 needs |F| <= 64");
  TruncatedPressure out;

  // direct: (1/n) log sum_w exp(sup S_n psi), log-sum-exp over F^n
  const std::size_t k = digits.size();
  std::size_t count = 1;
  for (int d = 0; d < depth; ++d) count *= k;
  std::vector<double> sups(count);
  std::vector<double> infs(count);
  Word w(static_cast<std::size_t>(depth));
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t rem = idx;
    for (int d = depth - 1; d >= 0; --d) {
      w[static_cast<std::size_t>(d)] = digits[rem % k];
      rem /= k;
    }
    const auto [lo, hi] = cylinder_birkhoff_range(model, phi, w, b, q);
    sups[idx] = hi;
    infs[idx] = lo;
  }
  const auto lse = [](const std::vector<double>& xs) {
    const double top = *std::max_element(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += std::exp(x - top);
    return top + std::log(s);
  };
  const double upper = lse(sups) / depth;
  const double lower = lse(infs) / depth;
  out.direct.value = upper;
  out.direct.method = PressureMethod::DirectCylinder;
  out.direct.truncation.j_max = digits.back();
  out.direct.truncation.n_max = 1;
  out.direct.truncation.depth = depth;
  out.direct.residual = upper - lower;
  out.direct.in_N = true;

  // spectral: collocation of the transfer operator of f on F
  const auto spectral_at = [&](int n_nodes) {
    OperatorSettings st;
    st.digits = digits;
    st.nodes = n_nodes;
    st.scheme = Scheme::Original;
    TransferOperator op(model, phi, st);
    return op.evaluate(b, q, 0.0, false).log_lambda;
  };
  const int coarse = std::max(8, (3 * nodes) / 4);
  const double fine_value = spectral_at(nodes);
  const double coarse_value = spectral_at(coarse);
  out.spectral.value = fine_value;
  out.spectral.method = PressureMethod::Spectral;
  out.spectral.truncation.j_max = digits.back();
  out.spectral.truncation.n_max = 1;
  out.spectral.truncation.depth = depth;
  out.spectral.truncation.nodes = nodes;
  out.spectral.residual = std::abs(fine_value - coarse_value);
  out.spectral.discretisation = out.spectral.residual;
  out.spectral.in_N = true;
  return out;
}

/// Collocated induced operator with a coarser twin for resolution checks.
class PressureEngine {
 public:
  PressureEngine(const MapModel& model, const Potential& phi, const Truncation& trunc,
                 std::vector<Index> digits = {}, bool with_coarse = true)
      : model_(model), phi_(phi), trunc_(trunc) {
    OperatorSettings st;
    st.j_max = trunc.j_max;
    st.n_max = trunc.n_max;
    st.run_tail = trunc.extrapolate_runs;
    st.nodes = trunc.nodes;
    st.digits = std::move(digits);
    op_ = std::make_shared<TransferOperator>(model, phi, st);
    if (with_coarse) {
      st.nodes = std::max(8, (3 * trunc.nodes) / 4);
      coarse_ = std::make_shared<TransferOperator>(model, phi, st);
    }
  }

  const TransferOperator& op() const { return *op_; }
  std::shared_ptr<const TransferOperator> op_ptr() const { return op_; }
  const Truncation& truncation() const { return trunc_; }
  const MapModel& model() const { return model_; }
  const Potential& potential() const { return phi_; }
  bool has_parabolic() const { return op_->scheme() == Scheme::Induced; }

  double LB(double q) const { return lower_bound_LB(model_, phi_, q, op_->parabolic_digits()); }

  OperatorEval eval(double b, double q, double s, bool derivatives = true) const {
    return op_->evaluate(b, q, s, derivatives);
  }

  /// Induced pressure P(b,q,s) with tail estimates.
  PressureResult induced(double b, double q, double s) const {
    if (has_parabolic() && !(s > LB(q)))
      throw NumericalError("divergent tail: s = " + std::to_string(s) + " <= LB(q) = " + std::to_string(LB(q)));
    const OperatorEval e = eval(b, q, s, true);
    PressureResult r;
    r.value = e.log_lambda;
    r.method = PressureMethod::Induced;
    r.truncation = trunc_;
    const TailMass tm = tail_mass(*op_, e);
    r.truncation.tail_estimate = std::log1p(tm.runs);
    r.truncation.digit_tail_estimate = std::isfinite(tm.digits) ? std::log1p(tm.digits) : tm.digits;
    r.mean_return = -e.d_s;
    if (coarse_) r.discretisation = std::abs(coarse_->evaluate(b, q, s, false).log_lambda - e.log_lambda);
    return r;
  }

  /// p(b,q): root of s -> P(b,q,s).
  PressureResult root(double b, double q, bool estimate_errors = true) const {
    PressureResult r;
    r.truncation = trunc_;
    r.method = PressureMethod::InducedRoot;
    if (!has_parabolic()) {
      const OperatorEval e = eval(b, q, 0.0, true);
      r.value = e.log_lambda;
      r.mean_return = 1.0;
      if (estimate_errors) fill_errors(r, e);
      return r;
    }
    const double lb = LB(q);
    const double s_lo = lb + 1e-6;
    const double f_lo = eval(b, q, s_lo, false).log_lambda;
    if (f_lo < 0.0) {
      r.in_N = false;
      r.method = PressureMethod::Spectral;
      r.value = lb;
      try {
        const TruncatedPressure tp = truncated_pressure(model_, phi_, b, q, op_->digits(), 1, std::max(32, trunc_.nodes));
        r.value = std::max(lb, tp.spectral.value);
        r.residual = tp.spectral.residual;
      } catch (const NumericalError&) {
        r.residual = std::numeric_limits<double>::infinity();
      }
      return r;
    }
    double s_hi = s_lo + f_lo + 1e-12;
    double f_hi = eval(b, q, s_hi, false).log_lambda;
    while (f_hi > 0.0) {
      s_hi = s_lo + 2.0 * (s_hi - s_lo) + 1.0;
      if (s_hi > 1e3) throw NumericalError("pressure root bracketing failed up to s = 1e3");
      f_hi = eval(b, q, s_hi, false).log_lambda;
    }
    const double s = root_in_s(b, q, s_lo, s_hi);
    const OperatorEval e = eval(b, q, s, true);
    r.value = s;
    r.residual = std::abs(e.log_lambda);
    r.mean_return = -e.d_s;
    if (estimate_errors) fill_errors(r, e);
    return r;
  }

  /// Root in s of P(b,q,s) on a known bracket.
  double root_in_s(double b, double q, double s_lo, double s_hi) const {
    const auto f = [&](double s) {
      const OperatorEval e = eval(b, q, s, true);
      return std::make_pair(e.log_lambda, e.d_s);
    };
    std::uintmax_t iters = 100;
    const double guess = 0.5 * (s_lo + s_hi);
    const double s = boost::math::tools::newton_raphson_iterate(f, guess, s_lo, s_hi, 50, iters);
    if (iters >= 100) throw NumericalError("pressure root did not converge");
    return s;
  }

 private:
  void fill_errors(PressureResult& r, const OperatorEval& e) const {
    const TailMass tm = tail_mass(*op_, e);
    const double mr = std::max(1.0, -e.d_s);
    r.truncation.tail_estimate = std::isfinite(tm.runs) ? std::log1p(tm.runs) / mr : tm.runs;
    r.truncation.digit_tail_estimate = std::isfinite(tm.digits) ? std::log1p(tm.digits) / mr : tm.digits;
    if (coarse_) r.discretisation = std::abs(coarse_->evaluate(e.b, e.q, e.s, false).log_lambda - e.log_lambda) / mr;
  }

  MapModel model_;
  Potential phi_;
  Truncation trunc_;
  std::shared_ptr<TransferOperator> op_;
  std::shared_ptr<TransferOperator> coarse_;
};

inline PressureResult induced_pressure(const MapModel& model, const Potential& phi, double b, double q, double s,
                                       const Truncation& trunc) {
  return PressureEngine(model, phi, trunc).induced(b, q, s);
}

inline PressureResult pressure(const MapModel& model, const Potential& phi, double b, double q,
                               const Truncation& trunc) {
  return PressureEngine(model, phi, trunc).root(b, q);
}

/// Root t of P(-t log|f'|) = 0 on the subsystem with digits F (empty: 1..j_max).
inline double bowen_dimension(const MapModel& model, const std::vector<Index>& digits, const Truncation& trunc,
                              double tol = 1e-10) {
  const Potential zero = Potential::digit_table(model, {{model.digit(1), 1.0}});
  const PressureEngine engine(model, zero, trunc, digits, false);
  // a divergent run tail means infinite pressure, which only has to sit on the positive side
  const auto f = [&](double t) {
    try {
      return engine.eval(t, 0.0, 0.0, false).log_lambda;
    } catch (const NumericalError&) {
      return 1e3;
    }
  };
  const double lo = 0.0;
  const double hi = 1.5;
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  if (!(f_lo > 0.0) || !(f_hi < 0.0)) throw NumericalError("Bowen root outside [0, 1.5]");
  std::uintmax_t iters = 200;
  const auto tolerance = [tol](double a, double b) { return std::abs(b - a) <= tol; };
  const auto bracket = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, tolerance, iters);
  return 0.5 * (bracket.first + bracket.second);
}

struct RuelleCheck {
  double fd_b = 0.0;
  double fd_q = 0.0;
  double minus_lyapunov = 0.0;
  double minus_mean_phi = 0.0;
  double residual_b = 0.0;
  double residual_q = 0.0;
};

inline RuelleCheck ruelle_check(const PressureEngine& engine, double b, double q, double h) {
  const auto p = [&](double bb, double qq) {
    const PressureResult r = engine.root(bb, qq, false);
    if (!r.in_N) throw ValidationError("ruelle_check: neighbour outside N");
    return r.value;
  };
  RuelleCheck out;
  out.fd_b = (p(b + h, q) - p(b - h, q)) / (2.0 * h);
  out.fd_q = (p(b, q + h) - p(b, q - h)) / (2.0 * h);
  const PressureResult centre = engine.root(b, q, false);
  if (!centre.in_N) throw ValidationError("ruelle_check: point outside N");
  const OperatorEval e = engine.eval(b, q, centre.value, true);
  out.minus_lyapunov = -e.d_b / e.d_s;
  out.minus_mean_phi = -e.d_q / e.d_s;
  out.residual_b = std::abs(out.fd_b - out.minus_lyapunov);
  out.residual_q = std::abs(out.fd_q - out.minus_mean_phi);
  return out;
}

inline RuelleCheck ruelle_check(const MapModel& model, const Potential& phi, double b, double q, double h,
                                const Truncation& trunc) {
  return ruelle_check(PressureEngine(model, phi, trunc, {}, false), b, q, h);
}

}  // namespace thermo
