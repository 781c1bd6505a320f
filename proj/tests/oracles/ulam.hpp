#pragma once

// Piecewise-constant (Ulam) projection of a weighted transfer operator
//   L f(x) = sum_i w_i |T_i'(x)|^t f(T_i x),   T_i(x) = (a x + b) / (c x + d)
// on a uniform partition of [0,1]. Cell integrals of |T_i'|^t are exact.

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace oracle {

struct Branch {
  double a, b, c, d;
  double weight;
};

inline double branch_map(const Branch& br, double x) { return (br.a * x + br.b) / (br.c * x + br.d); }

// int_lo^hi |T'(x)|^t dx
inline double deriv_power_integral(const Branch& br, double t, double lo, double hi) {
  const double det = std::abs(br.a * br.d - br.b * br.c);
  const double scale = std::pow(det, t);
  if (br.c == 0.0) return scale * std::pow(std::abs(br.d), -2.0 * t) * (hi - lo);
  const double e = 1.0 - 2.0 * t;
  const double ul = std::abs(br.c * lo + br.d), uh = std::abs(br.c * hi + br.d);
  if (std::abs(e) < 1e-14) return scale * (std::log(uh) - std::log(ul)) / br.c;
  return scale * (std::pow(uh, e) - std::pow(ul, e)) / (br.c * e);
}

inline double ulam_log_radius(const std::vector<Branch>& branches, double t, int cells) {
  const double h = 1.0 / cells;
  std::vector<std::vector<std::pair<int, double>>> rows(cells);
  for (const Branch& br : branches) {
    // image of [0,1] under T_i; walk the cells of x and the cells of T_i x together
    for (int j = 0; j < cells; ++j) {
      const double x0 = j * h, x1 = (j + 1) * h;
      double y0 = branch_map(br, x0), y1 = branch_map(br, x1);
      const bool inc = y1 > y0;
      if (!inc) std::swap(y0, y1);
      int k0 = std::max(0, static_cast<int>(std::floor(y0 / h)));
      int k1 = std::min(cells - 1, static_cast<int>(std::floor(y1 / h)));
      for (int k = k0; k <= k1; ++k) {
        const double ylo = std::max(y0, k * h), yhi = std::min(y1, (k + 1) * h);
        if (!(yhi > ylo)) continue;
        // pull back the y-interval: T^{-1}(y) = (d y - b) / (a - c y)
        double xa = (br.d * ylo - br.b) / (br.a - br.c * ylo);
        double xb = (br.d * yhi - br.b) / (br.a - br.c * yhi);
        if (xa > xb) std::swap(xa, xb);
        xa = std::max(xa, x0);
        xb = std::min(xb, x1);
        if (xb > xa) rows[j].emplace_back(k, br.weight * deriv_power_integral(br, t, xa, xb) / h);
      }
    }
  }
  std::vector<double> v(cells, 1.0), w(cells);
  double log_r = 0.0, prev = 1e300;
  for (int it = 0; it < 5000; ++it) {
    for (int j = 0; j < cells; ++j) {
      double s = 0.0;
      for (const auto& [k, x] : rows[j]) s += x * v[k];
      w[j] = s;
    }
    double norm = 0.0;
    for (double x : w) norm = std::max(norm, x);
    for (int j = 0; j < cells; ++j) v[j] = w[j] / norm;
    log_r = std::log(norm);
    if (std::abs(log_r - prev) < 1e-15) break;
    prev = log_r;
  }
  return log_r;
}

// Richardson extrapolation on (N, 2N), first-order error.
inline double ulam_pressure(const std::vector<Branch>& branches, double t, int cells) {
  const double p1 = ulam_log_radius(branches, t, cells);
  const double p2 = ulam_log_radius(branches, t, 2 * cells);
  return 2.0 * p2 - p1;
}

// Root in t of a decreasing function by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12) {
  double flo = f(lo);
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline std::vector<Branch> gauss_branches(const std::vector<int>& digits, const std::function<double(int)>& weight) {
  std::vector<Branch> out;
  for (int i : digits) out.push_back({0.0, 1.0, 1.0, static_cast<double>(i), weight(i)});
  return out;
}

// Bowen root of the Gauss subsystem on `digits`; plain projection, no extrapolation.
inline double gauss_bowen_root(const std::vector<int>& digits, int cells) {
  const auto br = gauss_branches(digits, [](int) { return 1.0; });
  return bisect([&](double t) { return ulam_log_radius(br, t, cells); }, 0.0, 2.0, 1e-10);
}

// b(alpha) = min_q root_b P(-b log|T'| - q (log a_1 - alpha)) on a Gauss subsystem; golden section in q.
inline std::pair<double, double> gauss_log_spectrum(const std::vector<int>& digits, double alpha, double q_lo,
                                                    double q_hi, int cells) {
  const auto b_of_q = [&](double q) {
    const auto br = gauss_branches(digits, [&](int i) { return std::exp(-q * (std::log(i) - alpha)); });
    return bisect([&](double t) { return ulam_pressure(br, t, cells); }, 0.0, 6.0, 1e-9);
  };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = q_lo, b = q_hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = b_of_q(c), fd = b_of_q(d);
  while (b - a > 1e-3) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = b_of_q(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = b_of_q(d);
    }
  }
  const double q = 0.5 * (a + b);
  return {b_of_q(q), q};
}

// Subsystem {T_1, T_2} of the Renyi map through its first-return IFS S_k = T_1^k T_2 (k >= 0),
// S_k(y) = (y + 1) / ((k + 1) y + k + 2). Branches k < cells are projected exactly; the
// images of the rest lie inside the first cell, where their summed weight
//   sum_{m > cells} ((x + 1) m + 1)^{-2t}
// is taken from Euler-Maclaurin and integrated by Gauss-Legendre on each x cell.
inline double renyi_pair_log_radius(double t, int cells) {
  const double h = 1.0 / cells;
  const int k_exact = cells;
  std::vector<double> m(static_cast<std::size_t>(cells) * cells, 0.0);
  for (int k = 0; k < k_exact; ++k) {
    const Branch br{1.0, 1.0, k + 1.0, k + 2.0, 1.0};
    for (int j = 0; j < cells; ++j) {
      const double x0 = j * h, x1 = (j + 1) * h;
      double y0 = branch_map(br, x0), y1 = branch_map(br, x1);
      if (y0 > y1) std::swap(y0, y1);
      const int k0 = std::max(0, static_cast<int>(std::floor(y0 / h)));
      const int k1 = std::min(cells - 1, static_cast<int>(std::floor(y1 / h)));
      for (int c = k0; c <= k1; ++c) {
        const double ylo = std::max(y0, c * h), yhi = std::min(y1, (c + 1) * h);
        if (!(yhi > ylo)) continue;
        double xa = (br.d * ylo - br.b) / (br.a - br.c * ylo);
        double xb = (br.d * yhi - br.b) / (br.a - br.c * yhi);
        if (xa > xb) std::swap(xa, xb);
        xa = std::max(xa, x0);
        xb = std::min(xb, x1);
        if (xb > xa) m[static_cast<std::size_t>(j) * cells + c] += deriv_power_integral(br, t, xa, xb) / h;
      }
    }
  }
  // tail: S_k'(x) = ((k + 1) x + k + 2)^{-2} = ((x + 1) m + 1)^{-2} with m = k + 1 > k_exact
  const double s = 2.0 * t;
  const auto tail_at = [&](double x) {
    const double a = 1.0 / (x + 1.0);
    const double M = k_exact + 1.0 + a;  // sum_{m >= k_exact + 1} (m + a)^{-s}
    const double em = std::pow(M, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(M, -s) + s / 12.0 * std::pow(M, -s - 1.0) -
                      s * (s + 1.0) * (s + 2.0) / 720.0 * std::pow(M, -s - 3.0);
    return std::pow(x + 1.0, -s) * em;
  };
  static const double gl_x[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
  static const double gl_w[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
  for (int j = 0; j < cells; ++j) {
    double acc = 0.0;
    for (int g = 0; g < 4; ++g) acc += 0.5 * gl_w[g] * tail_at((j + 0.5) * h + 0.5 * h * gl_x[g]);
    m[static_cast<std::size_t>(j) * cells] += acc;  // average over the cell
  }
  std::vector<double> v(cells, 1.0), w(cells);
  double log_r = 0.0, prev = 1e300;
  for (int it = 0; it < 5000; ++it) {
    for (int j = 0; j < cells; ++j) {
      double acc = 0.0;
      const double* row = &m[static_cast<std::size_t>(j) * cells];
      for (int c = 0; c < cells; ++c) acc += row[c] * v[c];
      w[j] = acc;
    }
    double norm = 0.0;
    for (double x : w) norm = std::max(norm, x);
    for (int j = 0; j < cells; ++j) v[j] = w[j] / norm;
    log_r = std::log(norm);
    if (std::abs(log_r - prev) < 1e-15) break;
    prev = log_r;
  }
  return log_r;
}

// Dimension of the limit set of {T_1, T_2}: zero of the induced pressure, t > 1/2.
inline double renyi_pair_dimension(int cells) {
  return bisect([&](double t) { return 2.0 * renyi_pair_log_radius(t, 2 * cells) - renyi_pair_log_radius(t, cells); },
                0.55, 1.0, 1e-8);
}

}  // namespace oracle
