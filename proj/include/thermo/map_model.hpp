#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thermo/errors.hpp"

namespace thermo {

using Index = std::int64_t;

/// Mobius transformation y -> (a y + b) / (c y + d).
struct Mobius {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 1.0;

  double operator()(double y) const { return (a * y + b) / (c * y + d); }
  double determinant() const { return a * d - b * c; }

  double abs_derivative(double y) const {
    const double den = c * y + d;
    return std::abs(determinant()) / (den * den);
  }

  double log_abs_derivative(double y) const {
    return std::log(std::abs(determinant())) - 2.0 * std::log(std::abs(c * y + d));
  }

  Mobius inverse() const { return {d, -b, -c, a}; }

  /// Rescale so the largest coefficient has modulus one. The map is unchanged.
  Mobius normalized() const {
    const double m = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
    if (m == 0.0) return *this;
    return {a / m, b / m, c / m, d / m};
  }
};

/// outer(inner(y)).
inline Mobius compose(const Mobius& outer, const Mobius& inner) {
  return Mobius{outer.a * inner.a + outer.b * inner.c, outer.a * inner.b + outer.b * inner.d,
                outer.c * inner.a + outer.d * inner.c, outer.c * inner.b + outer.d * inner.d}
      .normalized();
}

enum class ModelKind { Renyi, Gauss, Custom };

struct IndexAffine {
  double constant = 0.0;
  double slope = 0.0;
  double at(Index i) const { return constant + slope * static_cast<double>(i); }
};

/// Inverse branches T_i(y) = (a_i y + b_i) / (c_i y + d_i) with coefficients affine in i.
struct BranchFamily {
  IndexAffine a, b, c, d;
  Mobius branch(Index i) const { return {a.at(i), b.at(i), c.at(i), d.at(i)}; }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

struct CustomModelSpec {
  std::string name = "custom";
  BranchFamily inverse;
  std::vector<Index> parabolic;
  double kappa = 2.0;
  double growth_constant = 4.0;
  double gamma = 1.0;
  Index digit_offset = 0;
  Index validate_up_to = 2000;
};

/// Countable-branch interval map given by its inverse branches. Branch indices are
/// 1-based and unbounded; every enumeration takes an explicit cap.
class MapModel {
 public:
  /// R(x) = 1/(1-x) - [1/(1-x)] on Delta_i = [1 - 1/i, 1 - 1/(i+1)).
  static MapModel renyi() {
    MapModel m;
    m.kind_ = ModelKind::Renyi;
    m.name_ = "renyi";
    m.family_ = BranchFamily{{1.0, 0.0}, {-1.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}};
    m.parabolic_ = {1};
    m.kappa_ = 2.0;
    m.growth_constant_ = 4.0;
    m.gamma_ = 1.0;
    m.digit_offset_ = 1;
    m.increasing_ = true;
    return m;
  }

  /// G(x) = 1/x - [1/x] on Delta_i = (1/(i+1), 1/i].
  static MapModel gauss() {
    MapModel m;
    m.kind_ = ModelKind::Gauss;
    m.name_ = "gauss";
    m.family_ = BranchFamily{{0.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    m.kappa_ = 2.0;
    m.growth_constant_ = 4.0;
    m.gamma_ = 1.0;
    m.digit_offset_ = 0;
    m.increasing_ = false;
    return m;
  }

  static MapModel custom(const CustomModelSpec& spec) {
    if (!(spec.kappa > 0.0)) throw ValidationError("custom model: kappa must be positive");
    if (!(spec.growth_constant >= 1.0)) throw ValidationError("custom model: growth constant must be >= 1");
    if (spec.gamma > 1.0) throw ValidationError("custom model: inducing exponent gamma must be <= 1");
    if (spec.validate_up_to < 2) throw ValidationError("custom model: validate_up_to must be >= 2");

    MapModel m;
    m.kind_ = ModelKind::Custom;
    m.name_ = spec.name;
    m.family_ = spec.inverse;
    m.kappa_ = spec.kappa;
    m.growth_constant_ = spec.growth_constant;
    m.gamma_ = spec.gamma;
    m.digit_offset_ = spec.digit_offset;

    std::vector<Index> para = spec.parabolic;
    std::sort(para.begin(), para.end());
    para.erase(std::unique(para.begin(), para.end()), para.end());
    for (std::size_t k = 0; k < para.size(); ++k) {
      if (para[k] != static_cast<Index>(k + 1))
        throw ValidationError("custom model: parabolic indices must be {1, ..., #P}");
    }
    m.parabolic_ = para;

    constexpr double slack = 1e-12;
    for (Index i = 1; i <= spec.validate_up_to; ++i) {
      const Mobius t = m.family_.branch(i);
      if (t.determinant() == 0.0) throw ValidationError("custom model: degenerate branch " + std::to_string(i));
      const double denom0 = t.d;
      const double denom1 = t.c + t.d;
      if (denom0 == 0.0 || denom1 == 0.0 || (denom0 > 0) != (denom1 > 0))
        throw ValidationError("custom model: branch " + std::to_string(i) + " has a pole in [0,1]");
      const double y0 = t(0.0);
      const double y1 = t(1.0);
      if (y0 < -slack || y0 > 1 + slack || y1 < -slack || y1 > 1 + slack)
        throw ValidationError("custom model: branch " + std::to_string(i) + " leaves [0,1]");
    }
    const Interval d1 = m.domain(1);
    const Interval d2 = m.domain(2);
    m.increasing_ = d2.mid() > d1.mid();
    for (Index i = 1; i < spec.validate_up_to; ++i) {
      const Interval cur = m.domain(i);
      const Interval next = m.domain(i + 1);
      const bool ok = m.increasing_ ? (cur.hi <= next.lo + slack) : (next.hi <= cur.lo + slack);
      if (!ok) throw ValidationError("custom model: branch domains " + std::to_string(i) + " and " +
                                     std::to_string(i + 1) + " overlap or are out of order");
    }
    if (!m.parabolic_.empty() && !m.increasing_)
      throw ValidationError("custom model: parabolic models need domains accumulating at 1");
    for (Index i : m.parabolic_) {
      const double x = m.fixed_point(i);
      if (std::abs(m.derivative(i, x) - 1.0) > 1e-9)
        throw ValidationError("custom model: branch " + std::to_string(i) + " is declared parabolic but |f'(x_i)| != 1");
    }
    return m;
  }

  ModelKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const BranchFamily& family() const { return family_; }

  Mobius inverse_branch(Index i) const { return family_.branch(i); }
  Mobius forward_branch(Index i) const { return family_.branch(i).inverse(); }

  /// T_i(y).
  double inverse(Index i, double y) const { return inverse_branch(i)(y); }
  /// f_i(x).
  double forward(Index i, double x) const { return forward_branch(i)(x); }
  /// |f_i'(x)|.
  double derivative(Index i, double x) const { return forward_branch(i).abs_derivative(x); }
  double log_derivative(Index i, double x) const { return forward_branch(i).log_abs_derivative(x); }

  /// Closure of Delta_i.
  Interval domain(Index i) const {
    const Mobius t = inverse_branch(i);
    const double y0 = t(0.0);
    const double y1 = t(1.0);
    return {std::min(y0, y1), std::max(y0, y1)};
  }

  /// True when Delta_i moves towards 1 as i grows (Renyi orientation).
  bool increasing_domains() const { return increasing_; }

  /// Branch containing x under the half-open convention, if any.
  std::optional<Index> locate(double x) const {
    if (!(x >= 0.0 && x <= 1.0)) return std::nullopt;
    if (kind_ == ModelKind::Renyi) {
      if (x >= 1.0) return std::nullopt;
      return static_cast<Index>(std::floor(1.0 / (1.0 - x)));
    }
    if (kind_ == ModelKind::Gauss) {
      if (x <= 0.0) return std::nullopt;
      return static_cast<Index>(std::floor(1.0 / x));
    }
    return locate_by_search(x);
  }

  /// Fixed point of T_i inside the closure of Delta_i.
  double fixed_point(Index i) const {
    const Mobius t = inverse_branch(i);
    const Interval dom = domain(i);
    const auto inside = [&](double y) { return y >= dom.lo - 1e-12 && y <= dom.hi + 1e-12; };
    if (t.c == 0.0) return t.b / (t.d - t.a);
    // c y^2 + (d - a) y - b = 0
    const double qa = t.c;
    const double qb = t.d - t.a;
    const double qc = -t.b;
    const double disc = std::max(0.0, qb * qb - 4.0 * qa * qc);
    const double root = std::sqrt(disc);
    const double qq = -0.5 * (qb + std::copysign(root, qb == 0.0 ? 1.0 : qb));
    double r1 = qq / qa;
    double r2 = (qq != 0.0) ? qc / qq : r1;
    if (inside(r1)) return std::clamp(r1, dom.lo, dom.hi);
    if (inside(r2)) return std::clamp(r2, dom.lo, dom.hi);
    throw NumericalError("no fixed point of branch " + std::to_string(i) + " in its domain");
  }

  const std::vector<Index>& parabolic() const { return parabolic_; }
  bool is_parabolic(Index i) const {
    return std::binary_search(parabolic_.begin(), parabolic_.end(), i);
  }
  /// Smallest non-parabolic index.
  Index first_hyperbolic() const { return static_cast<Index>(parabolic_.size()) + 1; }

  double kappa() const { return kappa_; }
  double growth_constant() const { return growth_constant_; }
  double s_inf() const { return 1.0 / kappa_; }
  double gamma() const { return gamma_; }

  /// Continued-fraction digit carried by branch i (Renyi: b_1 = i + 1, Gauss: a_1 = i).
  Index digit(Index branch) const { return branch + digit_offset_; }
  Index digit_offset() const { return digit_offset_; }

  /// Built-in models have branches covering [0,1), so the limit set has full dimension.
  bool full_branch_cover() const { return kind_ != ModelKind::Custom; }

  MapModel with_kappa(double kappa) const {
    MapModel m = *this;
    m.kappa_ = kappa;
    return m;
  }
  MapModel with_gamma(double gamma) const {
    MapModel m = *this;
    m.gamma_ = gamma;
    return m;
  }

 private:
  MapModel() = default;

  std::optional<Index> locate_by_search(double x) const {
    const auto below = [&](Index i) {
      const Interval d = domain(i);
      return increasing_ ? (x >= d.lo) : (x <= d.hi);
    };
    if (!below(1)) return std::nullopt;
    Index lo = 1;
    Index hi = 2;
    while (below(hi)) {
      lo = hi;
      if (hi > (Index{1} << 52)) return std::nullopt;
      hi *= 2;
    }
    while (hi - lo > 1) {
      const Index m = lo + (hi - lo) / 2;
      if (below(m)) lo = m; else hi = m;
    }
    return lo;
  }

  ModelKind kind_ = ModelKind::Custom;
  std::string name_;
  BranchFamily family_;
  std::vector<Index> parabolic_;
  double kappa_ = 2.0;
  double growth_constant_ = 4.0;
  double gamma_ = 1.0;
  Index digit_offset_ = 0;
  bool increasing_ = true;
};

/// Asymptotic class of phi / log|f'| near the accumulation point.
struct XiClass {
  enum class Kind { Zero, FiniteL, Infinite };
  Kind kind = Kind::Zero;
  double theta = 0.0;  // limit ratio for FiniteL
  double eta = 0.0;    // phi - theta log|f'| >= eta
  double xi = 0.0;     // phi - theta log|f'| <= xi

  static XiClass zero() { return {}; }
  static XiClass finite(double theta, double eta, double xi) { return {Kind::FiniteL, theta, eta, xi}; }
  static XiClass infinite() { return {Kind::Infinite}; }
};

inline const char* to_string(XiClass::Kind k) {
  switch (k) {
    case XiClass::Kind::Zero: return "zero";
    case XiClass::Kind::FiniteL: return "finite";
    case XiClass::Kind::Infinite: return "infinite";
  }
  return "?";
}

/// Potential phi on the limit set, with its declared asymptotic class.
class Potential {
 public:
  using DigitFunction = std::function<double(Index digit)>;
  using PointFunction = std::function<double(Index branch, double x)>;

  /// phi(x) = g(digit of x).
  static Potential from_digits(std::string name, const MapModel& model, DigitFunction g, XiClass xi,
                               bool h1, double floor) {
    Potential p;
    p.name_ = std::move(name);
    p.model_offset_ = model.digit_offset();
    p.digit_fn_ = std::move(g);
    p.xi_ = xi;
    p.h1_ = h1;
    p.floor_ = floor;
    p.locate_ = [model](double x) { return model.locate(x); };
    return p;
  }

  static Potential from_points(std::string name, const MapModel& model, PointFunction f, XiClass xi,
                               bool h1, double floor) {
    Potential p;
    p.name_ = std::move(name);
    p.model_offset_ = model.digit_offset();
    p.point_fn_ = std::move(f);
    p.xi_ = xi;
    p.h1_ = h1;
    p.floor_ = floor;
    p.locate_ = [model](double x) { return model.locate(x); };
    return p;
  }

  /// log of the continued-fraction digit (log b_1 for Renyi, log a_1 for Gauss).
  static Potential log_digit(const MapModel& model) {
    const double theta = 1.0 / model.kappa();
    // Renyi: log(i+1) - log(1/(1-x)) lies in [0, log 2] on Delta_i.
    return from_digits("log_b1", model, [](Index d) { return std::log(static_cast<double>(d)); },
                       XiClass::finite(theta, 0.0, std::log(2.0)), true,
                       std::log(static_cast<double>(model.digit(1))));
  }

  /// digit^r.
  static Potential digit_power(const MapModel& model, double r) {
    if (!(r > 0.0)) throw ValidationError("b1_pow: exponent must be positive");
    return from_digits("b1_pow", model,
                       [r](Index d) { return std::pow(static_cast<double>(d), r); }, XiClass::infinite(),
                       true, std::pow(static_cast<double>(model.digit(1)), r));
  }

  /// (log digit)^r; r > 1 grows faster than log|f'|.
  static Potential log_power(const MapModel& model, double r) {
    if (!(r > 0.0)) throw ValidationError("log_pow: exponent must be positive");
    XiClass xi = r > 1.0 ? XiClass::infinite()
                 : r == 1.0 ? XiClass::finite(1.0 / model.kappa(), 0.0, std::log(2.0))
                            : XiClass::zero();
    return from_digits("log_pow", model,
                       [r](Index d) { return std::pow(std::log(static_cast<double>(d)), r); }, xi, true,
                       std::pow(std::log(static_cast<double>(model.digit(1))), r));
  }

  /// log|f'(x)|. Vanishes at parabolic fixed points, so (P) fails there.
  static Potential log_derivative(const MapModel& model) {
    return from_points("log_deriv", model,
                       [model](Index i, double x) { return model.log_derivative(i, x); },
                       XiClass::finite(1.0, 0.0, 0.0), false, 0.0);
  }

  /// Tabulated digit values; held at the last value beyond the table.
  static Potential digit_table(const MapModel& model, std::vector<std::pair<Index, double>> table) {
    if (table.empty()) throw ValidationError("digit_table: empty table");
    std::sort(table.begin(), table.end());
    double floor = std::numeric_limits<double>::infinity();
    for (const auto& [d, v] : table) floor = std::min(floor, v);
    auto lookup = [table](Index d) {
      auto it = std::upper_bound(table.begin(), table.end(), d,
                                 [](Index key, const auto& e) { return key < e.first; });
      if (it == table.begin()) return table.front().second;
      return std::prev(it)->second;
    };
    return from_digits("digit_table", model, lookup, XiClass::zero(), true, floor);
  }

  const std::string& name() const { return name_; }
  const XiClass& xi_class() const { return xi_; }
  bool h1() const { return h1_; }
  double positivity_floor() const { return floor_; }
  bool digit_constant() const { return static_cast<bool>(digit_fn_); }

  /// phi(x) for x known to lie in Delta_i.
  double on_branch(Index i, double x) const {
    if (digit_fn_) return digit_fn_(i + model_offset_);
    return point_fn_(i, x);
  }

  double eval(double x) const {
    const auto i = locate_(x);
    if (!i) throw ValidationError("potential evaluated outside the branch domains");
    return on_branch(*i, x);
  }

  std::optional<double> per_digit_constant(Index i) const {
    if (!digit_fn_) return std::nullopt;
    return digit_fn_(i + model_offset_);
  }

  /// Value as a function of the continued-fraction digit, when digit-constant.
  std::optional<double> of_digit(Index digit) const {
    if (!digit_fn_) return std::nullopt;
    return digit_fn_(digit);
  }

  Potential with_class(XiClass xi, bool h1) const {
    Potential p = *this;
    p.xi_ = xi;
    p.h1_ = h1;
    return p;
  }

 private:
  Potential() = default;

  std::string name_;
  Index model_offset_ = 0;
  DigitFunction digit_fn_;
  PointFunction point_fn_;
  XiClass xi_;
  bool h1_ = false;
  double floor_ = 0.0;
  std::function<std::optional<Index>(double)> locate_;
};

/// alpha_i = phi(x_i) at the fixed point of branch i.
inline double fixed_point_value(const MapModel& model, const Potential& phi, Index i) {
  return phi.on_branch(i, model.fixed_point(i));
}

// ---------------------------------------------------------------------------
// Structural condition checks. All are sampled: branch endpoints, the midpoint
// and eight interior points. For Mobius branches endpoint evaluation already
// bounds sup/inf exactly.

inline std::vector<double> branch_samples(const MapModel& model, Index i) {
  const Interval d = model.domain(i);
  std::vector<double> xs{d.lo, d.hi, d.mid()};
  for (int k = 1; k <= 8; ++k) xs.push_back(d.lo + d.width() * k / 9.0);
  return xs;
}

struct GrowthReport {
  double empirical_C = 0.0;
  double kappa_used = 0.0;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  bool pass = false;
};

inline GrowthReport check_growth_condition(const MapModel& model, Index i_max, double c_limit = 8.0) {
  if (i_max < 2) throw ValidationError("check_growth_condition: i_max must be >= 2");
  GrowthReport r;
  r.kappa_used = model.kappa();
  r.ratio_min = std::numeric_limits<double>::infinity();
  r.ratio_max = 0.0;
  for (Index i = 1; i <= i_max; ++i) {
    const double scale = std::pow(static_cast<double>(i), model.kappa());
    for (double x : branch_samples(model, i)) {
      const double ratio = model.derivative(i, x) / scale;
      r.ratio_min = std::min(r.ratio_min, ratio);
      r.ratio_max = std::max(r.ratio_max, ratio);
    }
  }
  r.empirical_C = std::max(r.ratio_max, 1.0 / r.ratio_min);
  r.pass = r.empirical_C <= c_limit;
  return r;
}

struct StructureReport {
  bool disjoint = true;           // NERI1: interiors disjoint
  bool accumulate_at_one = true;  // NERI1: endpoints accumulate only at 1
  bool parabolic_ok = true;       // NERI3a: |f_i'(x_i)| = 1 on P, > 1 elsewhere on Delta_i
  bool expanding_off_p = true;    // NERI2: inf |f'| > c > 1 off P
  double expansion_constant = 0.0;
  bool renyi_condition = true;    // NERI3b: sup |f''|/|f'|^2 < infinity
  double renyi_constant = 0.0;
  bool pass() const {
    return disjoint && accumulate_at_one && parabolic_ok && expanding_off_p && renyi_condition;
  }
};

inline StructureReport check_structure(const MapModel& model, Index i_max) {
  StructureReport r;
  r.expansion_constant = std::numeric_limits<double>::infinity();
  for (Index i = 1; i < i_max; ++i) {
    const Interval a = model.domain(i);
    const Interval b = model.domain(i + 1);
    const bool ok = model.increasing_domains() ? a.hi <= b.lo + 1e-12 : b.hi <= a.lo + 1e-12;
    r.disjoint = r.disjoint && ok;
  }
  r.accumulate_at_one = model.increasing_domains() && model.domain(i_max).hi > 1.0 - 2.0 / static_cast<double>(i_max);
  for (Index i = 1; i <= i_max; ++i) {
    const Mobius f = model.forward_branch(i);
    const bool para = model.is_parabolic(i);
    const double xi = para ? model.fixed_point(i) : 0.0;
    for (double x : branch_samples(model, i)) {
      const double der = model.derivative(i, x);
      // |f''| / |f'|^2 = 2 |c| |c x + d| / |det| for a Mobius branch
      const double distortion = 2.0 * std::abs(f.c) * std::abs(f.c * x + f.d) / std::abs(f.determinant());
      r.renyi_constant = std::max(r.renyi_constant, distortion);
      if (para) {
        if (std::abs(x - xi) > 1e-12 && der <= 1.0) r.parabolic_ok = false;
      } else {
        r.expansion_constant = std::min(r.expansion_constant, der);
      }
    }
    if (para && std::abs(model.derivative(i, xi) - 1.0) > 1e-9) r.parabolic_ok = false;
  }
  r.expanding_off_p = r.expansion_constant > 1.0;
  r.renyi_condition = std::isfinite(r.renyi_constant);
  return r;
}

struct RatioSample {
  Index branch = 0;
  double ratio = 0.0;
};

struct PotentialClassReport {
  std::vector<RatioSample> curve;
  double limit_estimate = 0.0;
  bool consistent = false;
  std::string message;
};

/// Samples phi / log|f'| at the midpoint of every branch i <= i_max and checks the
/// trend against the declared class. The declared class stays authoritative.
inline PotentialClassReport classify_potential(const MapModel& model, const Potential& phi, Index i_max) {
  if (i_max < 20) throw ValidationError("classify_potential: i_max must be >= 20");
  PotentialClassReport rep;
  rep.curve.reserve(static_cast<std::size_t>(i_max));
  for (Index i = 1; i <= i_max; ++i) {
    const double x = model.domain(i).mid();
    const double lf = model.log_derivative(i, x);
    rep.curve.push_back({i, lf > 0.0 ? phi.on_branch(i, x) / lf : std::numeric_limits<double>::quiet_NaN()});
  }
  // Regress ratio on u = 1/log(i) over the last decade; the intercept estimates the limit.
  const Index start = std::max<Index>(2, i_max / 10);
  double su = 0, sr = 0, suu = 0, sur = 0, cnt = 0;
  for (Index i = start; i <= i_max; ++i) {
    const double u = 1.0 / std::log(static_cast<double>(i));
    const double r = rep.curve[static_cast<std::size_t>(i - 1)].ratio;
    su += u; sr += r; suu += u * u; sur += u * r; cnt += 1;
  }
  const double slope = (cnt * sur - su * sr) / (cnt * suu - su * su);
  rep.limit_estimate = (sr - slope * su) / cnt;
  const double r_hi = rep.curve.back().ratio;
  const double r_mid = rep.curve[static_cast<std::size_t>(start - 1)].ratio;
  const XiClass& xi = phi.xi_class();
  switch (xi.kind) {
    case XiClass::Kind::Zero:
      rep.consistent = r_hi < r_mid && std::abs(rep.limit_estimate) < 0.05;
      break;
    case XiClass::Kind::FiniteL:
      rep.consistent = std::abs(rep.limit_estimate - xi.theta) <= 0.1 * xi.theta + 0.02 &&
                       std::abs(r_hi - xi.theta) <= std::abs(r_mid - xi.theta) + 1e-12;
      break;
    case XiClass::Kind::Infinite:
      rep.consistent = r_hi > 1.05 * r_mid;
      break;
  }
  if (!rep.consistent) {
    rep.message = std::string("warning: sampled ratio trend does not match declared class '") +
                  to_string(xi.kind) + "'";
  }
  return rep;
}

}  // namespace thermo
