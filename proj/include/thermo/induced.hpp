#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "thermo/coding.hpp"
#include "thermo/errors.hpp"
#include "thermo/map_model.hpp"

namespace thermo {

/// Element of the induced alphabet.
///   Hyp(i):          i followed by a hyperbolic digit, r = 1 (any i)
///   ParaRun(j,i,n):  j i^n followed by a digit != i, r = n (i parabolic, j != i)
/// ParaEntry(j,i) is ParaRun(j,i,1).
struct InducedSymbol {
  enum class Kind { Hyp, ParaRun };
  Kind kind = Kind::Hyp;
  Index lead = 1;  // i for Hyp, j for ParaRun
  Index para = 0;  // parabolic index of a run
  Index n = 1;
  Index return_time = 1;

  static InducedSymbol hyp(Index i) { return {Kind::Hyp, i, 0, 1, 1}; }
  static InducedSymbol run(Index j, Index i, Index n) { return {Kind::ParaRun, j, i, n, n}; }

  bool is_run() const { return kind == Kind::ParaRun; }

  /// j i^n, or i.
  Word base_word() const {
    Word w{lead};
    if (is_run()) w.insert(w.end(), static_cast<std::size_t>(n), para);
    return w;
  }

  /// Digits consumed by one step of the induced map: j i^{n-1}, or i.
  Word consumed() const {
    Word w{lead};
    if (is_run()) w.insert(w.end(), static_cast<std::size_t>(n - 1), para);
    return w;
  }

  std::string tag() const {
    if (!is_run()) return "Hyp(" + std::to_string(lead) + ")";
    if (n == 1) return "ParaEntry(" + std::to_string(lead) + "," + std::to_string(para) + ")";
    return "ParaRun(" + std::to_string(lead) + "," + std::to_string(para) + "," + std::to_string(n) + ")";
  }

  friend bool operator==(const InducedSymbol& a, const InducedSymbol& b) {
    return a.kind == b.kind && a.lead == b.lead && a.para == b.para && a.n == b.n;
  }
};

/// Membership of a point with itinerary u in the inducing domain:
/// u_1 hyperbolic, or u_1 parabolic and u_2 != u_1.
inline bool in_inducing_domain(const MapModel& model, const Word& u, std::size_t from = 0) {
  if (from >= u.size()) throw ValidationError("itinerary too short to decide inducing-domain membership");
  if (!model.is_parabolic(u[from])) return true;
  if (from + 1 >= u.size()) throw ValidationError("itinerary too short to decide inducing-domain membership");
  return u[from + 1] != u[from];
}

/// First m >= 1 with sigma^m(u) in the inducing domain.
inline Index symbolic_return_time(const MapModel& model, const Word& u) {
  for (std::size_t m = 1; m < u.size(); ++m)
    if (in_inducing_domain(model, u, m)) return static_cast<Index>(m);
  throw ValidationError("word does not return to the inducing domain");
}

/// Can `k` follow the base word of `s`?
inline bool admissible_successor(const MapModel& model, const InducedSymbol& s, Index k) {
  if (k < 1) return false;
  if (s.is_run()) return k != s.para;
  return !model.is_parabolic(k);
}

/// Can symbol b follow symbol a in the induced shift?
inline bool incidence(const MapModel& model, const InducedSymbol& a, const InducedSymbol& b) {
  if (!a.is_run()) return !model.is_parabolic(b.lead);
  // next point starts with i followed by a digit != i
  if (b.lead != a.para) return false;
  if (!b.is_run()) return true;
  return b.para != a.para;
}

struct InducedAlphabet {
  bool identity_scheme = false;
  Index j_max = 0;
  Index n_max = 0;
  std::vector<InducedSymbol> symbols;
};

inline InducedAlphabet enumerate_induced_symbols(const MapModel& model, Index j_max, Index n_max) {
  if (n_max < 1) throw ValidationError("n_max must be >= 1");
  InducedAlphabet out;
  out.j_max = j_max;
  out.n_max = n_max;
  if (model.parabolic().empty()) {
    out.identity_scheme = true;
    for (Index i = 1; i <= j_max; ++i) out.symbols.push_back(InducedSymbol::hyp(i));
    return out;
  }
  if (j_max < 2) throw ValidationError("j_max must be >= 2 when the model has parabolic branches");
  for (Index i = 1; i <= j_max; ++i) out.symbols.push_back(InducedSymbol::hyp(i));
  for (Index n = 1; n <= n_max; ++n)
    for (Index i : model.parabolic())
      for (Index j = 1; j <= j_max; ++j)
        if (j != i) out.symbols.push_back(InducedSymbol::run(j, i, n));
  // verify the return-time law symbolically
  for (InducedSymbol& s : out.symbols) {
    Word u = s.base_word();
    Index k = 1;
    while (!admissible_successor(model, s, k)) ++k;
    u.push_back(k);
    u.push_back(k == 1 ? 2 : 1);
    s.return_time = symbolic_return_time(model, u);
  }
  return out;
}

struct Bounds {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double width() const { return hi - lo; }
};

struct InducedOrbitData {
  InducedSymbol symbol;
  Index successor = 0;
  Word word;
  CylinderInterval cylinder;
  Index return_time = 0;
  Bounds log_deriv_sum;
  Bounds phi_sum;
};

/// Birkhoff sums over one induced step, bounded over the cylinder of
/// base_word + k + k^refine_depth (endpoints and midpoint).
inline InducedOrbitData induced_orbit_data(const MapModel& model, const Potential& phi,
                                           const InducedSymbol& symbol, Index successor,
                                           int refine_depth = 0) {
  if (!admissible_successor(model, symbol, successor))
    throw ValidationError("successor " + std::to_string(successor) + " is not admissible after " + symbol.tag());
  if (refine_depth < 0) throw ValidationError("refine_depth must be >= 0");
  InducedOrbitData out;
  out.symbol = symbol;
  out.successor = successor;
  out.word = symbol.base_word();
  out.word.insert(out.word.end(), static_cast<std::size_t>(refine_depth) + 1, successor);
  out.cylinder = cylinder_interval(model, out.word, std::max(kDefaultMaxDepth, out.word.size()));

  Word probe = out.word;
  probe.push_back(successor == 1 ? 2 : 1);
  out.return_time = symbolic_return_time(model, probe);

  const auto r = static_cast<std::size_t>(out.return_time);
  for (double t : {0.0, 0.5, 1.0}) {
    // orbit points f^m x = T_{w_{m+1}} ... T_{w_L}(t)
    std::vector<double> pts(out.word.size() + 1);
    pts.back() = t;
    for (std::size_t m = out.word.size(); m-- > 0;) pts[m] = model.inverse(out.word[m], pts[m + 1]);
    double ld = 0.0;
    double ph = 0.0;
    for (std::size_t m = 0; m < r; ++m) {
      ld += -model.inverse_branch(out.word[m]).log_abs_derivative(pts[m + 1]);
      ph += phi.on_branch(out.word[m], pts[m]);
    }
    out.log_deriv_sum.add(ld);
    out.phi_sum.add(ph);
  }
  return out;
}

struct InducingReport {
  double empirical_C = 1.0;
  double ratio_min = 1.0;
  double ratio_max = 1.0;
  bool vacuous = false;
  bool pass = true;
};

/// Condition (F): |F'(x)| / (|f'(x)| n^{1+gamma}) over run symbols, sampled at the
/// endpoints and midpoint of each run cylinder. Independent of the lead digit j.
inline InducingReport check_inducing_condition(const MapModel& model, Index j_max, Index n_max,
                                               double c_limit = 16.0) {
  InducingReport rep;
  if (model.parabolic().empty()) {
    rep.vacuous = true;
    return rep;
  }
  if (j_max < 2 || n_max < 2) throw ValidationError("check_inducing_condition: need j_max >= 2 and n_max >= 2");
  rep.ratio_min = std::numeric_limits<double>::infinity();
  rep.ratio_max = 0.0;
  const double expo = 1.0 + model.gamma();
  for (Index i : model.parabolic()) {
    std::vector<double> ts;
    for (Index k = 1; k <= j_max; ++k) {
      if (k == i) continue;
      const Interval dk = model.domain(k);
      ts.push_back(dk.lo);
      ts.push_back(dk.mid());
      ts.push_back(dk.hi);
    }
    const Mobius t_i = model.inverse_branch(i);
    for (double t : ts) {
      // y = T_i(t) is where the run of i's ends; accumulate log|(T_i^{n-1})'(y)|
      double y = t_i(t);
      double log_contraction = 0.0;
      for (Index n = 2; n <= n_max; ++n) {
        log_contraction += t_i.log_abs_derivative(y);
        y = t_i(y);
        const double ratio = std::exp(-log_contraction) / std::pow(static_cast<double>(n), expo);
        rep.ratio_min = std::min(rep.ratio_min, ratio);
        rep.ratio_max = std::max(rep.ratio_max, ratio);
      }
    }
  }
  rep.empirical_C = std::max(rep.ratio_max, 1.0 / rep.ratio_min);
  rep.pass = rep.empirical_C <= c_limit;
  return rep;
}

}  // namespace thermo
