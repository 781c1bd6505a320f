#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "thermo/errors.hpp"
#include "thermo/map_model.hpp"

namespace thermo {

using Word = std::vector<Index>;

inline constexpr std::size_t kDefaultMaxDepth = 64;

struct CylinderInterval {
  double lo = 0.0;
  double hi = 1.0;
  Word word;
  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x, double slack = 0.0) const { return lo - slack <= x && x <= hi + slack; }
  bool contains(const CylinderInterval& other, double slack = 0.0) const {
    return lo - slack <= other.lo && other.hi <= hi + slack;
  }
};

inline void check_word(const Word& word, std::size_t max_depth) {
  if (word.size() > max_depth)
    throw ValidationError("word of length " + std::to_string(word.size()) + " exceeds max depth " +
                          std::to_string(max_depth));
  for (Index d : word)
    if (d < 1) throw ValidationError("branch indices start at 1");
}

/// T_w(y) = T_{w_1}( ... T_{w_n}(y)), applied innermost first.
inline double apply_word(const MapModel& model, const Word& word, double y) {
  for (auto it = word.rbegin(); it != word.rend(); ++it) y = model.inverse(*it, y);
  return y;
}

/// Composite Mobius map T_w.
inline Mobius word_map(const MapModel& model, const Word& word) {
  Mobius m;
  for (Index d : word) m = compose(m, model.inverse_branch(d));
  return m;
}

inline CylinderInterval cylinder_interval(const MapModel& model, const Word& word,
                                          std::size_t max_depth = kDefaultMaxDepth) {
  check_word(word, max_depth);
  const double a = apply_word(model, word, 0.0);
  const double b = apply_word(model, word, 1.0);
  return {std::min(a, b), std::max(a, b), word};
}

struct PointEstimate {
  double value = 0.0;
  double radius = 0.0;
  bool exact = false;
};

/// Midpoint of the cylinder, with its half-width as error bound.
inline PointEstimate refine_point(const MapModel& model, const Word& word,
                                  std::size_t max_depth = kDefaultMaxDepth) {
  if (word.empty()) throw ValidationError("refine_point: empty word");
  const CylinderInterval c = cylinder_interval(model, word, max_depth);
  return {c.mid(), 0.5 * c.width(), false};
}

/// pi(w w w ...): fixed point of T_w inside its cylinder.
inline PointEstimate periodic_point(const MapModel& model, const Word& period,
                                    std::size_t max_depth = kDefaultMaxDepth) {
  if (period.empty()) throw ValidationError("periodic_point: empty period");
  const CylinderInterval c = cylinder_interval(model, period, max_depth);
  const Mobius t = word_map(model, period);
  const auto inside = [&](double y) { return y >= c.lo - 1e-12 && y <= c.hi + 1e-12; };
  double root = 0.0;
  bool found = false;
  if (t.c == 0.0) {
    if (t.d != t.a) {
      root = t.b / (t.d - t.a);
      found = inside(root);
    }
  } else {
    // c y^2 + (d - a) y - b = 0
    const double qb = t.d - t.a;
    const double qc = -t.b;
    const double disc = std::max(0.0, qb * qb - 4.0 * t.c * qc);
    const double qq = -0.5 * (qb + std::copysign(std::sqrt(disc), qb == 0.0 ? 1.0 : qb));
    const double r1 = qq / t.c;
    const double r2 = qq != 0.0 ? qc / qq : r1;
    if (inside(r1)) {
      root = r1;
      found = true;
    } else if (inside(r2)) {
      root = r2;
      found = true;
    }
  }
  if (!found) {
    // Fall back to iterating the contraction from the midpoint.
    double y = c.mid();
    for (int k = 0; k < 10000; ++k) {
      const double next = t(y);
      if (std::abs(next - y) < 1e-15) break;
      y = next;
    }
    root = y;
  }
  root = std::clamp(root, c.lo, c.hi);
  return {root, 0.0, true};
}

}  // namespace thermo
