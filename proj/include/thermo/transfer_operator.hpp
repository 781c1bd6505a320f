#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "thermo/chebyshev.hpp"
#include "thermo/errors.hpp"
#include "thermo/induced.hpp"
#include "thermo/map_model.hpp"

namespace thermo {

// Transfer operator of the first-return map (or of the map itself) discretised by
// Chebyshev collocation. The induced space splits into pieces:
//   A          points whose first digit is hyperbolic
//   B(i,side)  points i k ... with i parabolic and k != i on one side of Delta_i
// Runs of a parabolic digit are summed explicitly, so the discrete operator for the
// induced potential -q phi - b log|F'| - s r is a small dense matrix.

enum class Scheme { Induced, Original };

struct OperatorSettings {
  Index j_max = 400;
  Index n_max = 400;
  int nodes = 24;
  Scheme scheme = Scheme::Induced;
  std::vector<Index> digits;  // empty: 1..j_max
  std::size_t cache_limit = 8'000'000;
  bool run_tail = true;  // extrapolate runs longer than n_max
};

/// Sums over k >= 1 of r_k = (1 + k/N)^{-beta} e^{-g k} and its moments
/// k r_k, log(1 + k/N) r_k, (1 + k/N)^{-omega} r_k.
struct RunTailSums {
  double s0 = 0.0, s1 = 0.0, sl = 0.0, sz = 0.0;
};

inline RunTailSums run_tail_sums(double beta, double g, double n, double omega) {
  RunTailSums out;
  if (g < 0.0 || (g == 0.0 && beta <= 1.0)) throw NumericalError("divergent run tail");
  constexpr int k0 = 64;
  for (int k = 1; k < k0; ++k) {
    const double x = std::log1p(k / n);
    const double r = std::exp(-beta * x - g * k);
    out.s0 += r;
    out.s1 += k * r;
    out.sl += x * r;
    out.sz += std::exp(-omega * x) * r;
  }
  // remaining terms by the midpoint rule
  thread_local boost::math::quadrature::exp_sinh<double> integrator;
  const double a = k0 - 0.5;
  const auto integral = [&](auto f) {
    return integrator.integrate([&](double t) { return f(a + t); }, 1e-10);
  };
  const auto r = [&](double k) { return std::exp(-beta * std::log1p(k / n) - g * k); };
  out.s0 += integral([&](double k) { return r(k); });
  if (g == 0.0 && beta <= 2.0) {
    out.s1 = std::numeric_limits<double>::infinity();
  } else {
    out.s1 += integral([&](double k) { return k * r(k); });
  }
  out.sl += integral([&](double k) { return std::log1p(k / n) * r(k); });
  out.sz += integral([&](double k) { return std::exp(-omega * std::log1p(k / n)) * r(k); });
  return out;
}

struct Eigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;
  int iterations = 0;
};

/// Dominant eigenpair by power iteration on M^8, capped at max_iter iterations.
inline Eigenpair dominant_eigenpair(const Eigen::MatrixXd& m, int max_iter = 10000, double tol = 1e-13) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd p = m * m;
  p = p * p;
  p = p * p;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w = p * v;
    double norm = w.norm();
    if (!std::isfinite(norm) || norm == 0.0) throw NumericalError("power iteration produced a degenerate iterate");
    if (w.sum() < 0.0) norm = -norm;
    w /= norm;
    const double diff = (w - v).norm();
    v = std::move(w);
    if (diff < tol) {
      Eigen::VectorXd mv = m * v;
      double lambda = mv.norm();
      if (mv.dot(v) < 0.0) lambda = -lambda;
      if (!(lambda > 0.0)) throw NumericalError("dominant eigenvalue is not positive");
      return {lambda, mv / lambda, it};
    }
  }
  throw NumericalError("power iteration did not converge in " + std::to_string(max_iter) + " iterations");
}

struct OperatorEval {
  double b = 0.0, q = 0.0, s = 0.0;
  double lambda = 0.0;
  double log_lambda = 0.0;
  Eigen::VectorXd right;  // v
  Eigen::VectorXd left;   // u
  bool has_derivatives = false;
  double d_b = 0.0;  // d log lambda / db = -mu(log|F'|)
  double d_q = 0.0;  // -mu(phi bar)
  double d_s = 0.0;  // -mu(r)
  std::vector<double> run_tail_weight;  // per parabolic index, last run term / row value
  double digit_tail_weight = 0.0;       // last digit / row value
  double digit_tail_exponent = 0.0;     // fitted power of the digit-term decay
  bool return_divergent = false;        // run tail has infinite mean length
  int iterations = 0;
};

class TransferOperator {
 public:
  struct Component {
    enum class Kind { Inducing, RunLow, RunHigh, Whole };
    Kind kind = Kind::Whole;
    Index para = 0;
    ChebyshevGrid grid;
    int offset = 0;
  };

  TransferOperator(MapModel model, Potential phi, OperatorSettings settings)
      : model_(std::move(model)), phi_(std::move(phi)), settings_(std::move(settings)) {
    if (settings_.nodes < 4) throw ValidationError("collocation needs at least 4 nodes");
    if (settings_.n_max < 1) throw ValidationError("n_max must be >= 1");
    digits_ = settings_.digits;
    if (digits_.empty()) {
      if (settings_.j_max < 1) throw ValidationError("j_max must be >= 1");
      for (Index j = 1; j <= settings_.j_max; ++j) digits_.push_back(j);
    }
    std::sort(digits_.begin(), digits_.end());
    digits_.erase(std::unique(digits_.begin(), digits_.end()), digits_.end());
    if (digits_.front() < 1) throw ValidationError("digits start at 1");
    j_max_ = digits_.back();
    for (Index j : digits_) (model_.is_parabolic(j) ? para_digits_ : hyp_digits_).push_back(j);
    if (settings_.scheme == Scheme::Induced && para_digits_.empty()) settings_.scheme = Scheme::Original;
    if (settings_.scheme == Scheme::Induced && hyp_digits_.empty())
      throw ValidationError("induced scheme needs at least one hyperbolic digit");
    if (settings_.scheme == Scheme::Original) build_original(); else build_induced();
    build_caches();
  }

  const MapModel& model() const { return model_; }
  const Potential& potential() const { return phi_; }
  const OperatorSettings& settings() const { return settings_; }
  Scheme scheme() const { return settings_.scheme; }
  const std::vector<Index>& digits() const { return digits_; }
  const std::vector<Index>& parabolic_digits() const { return para_digits_; }
  const std::vector<Index>& hyperbolic_digits() const { return hyp_digits_; }
  Index j_max() const { return j_max_; }
  Index n_max() const { return settings_.scheme == Scheme::Induced ? settings_.n_max : 1; }
  int size() const { return size_; }
  const std::vector<Component>& components() const { return comps_; }
  int inducing_component() const { return 0; }

  /// alpha_i = phi(x_i) for each parabolic digit in the alphabet.
  double alpha(Index i) const { return fixed_point_value(model_, phi_, i); }

  /// Log-weight of stepping back through digit j from y: psi(T_j y).
  double log_weight(Index j, double y, double b, double q, double s) const {
    const Mobius t = model_.inverse_branch(j);
    const double x = t(y);
    return -q * phi_.on_branch(j, x) + b * t.log_abs_derivative(y) - s;
  }

  /// Component holding the point T_j(y) when y lies in component `from`.
  int landing_component(Index j, int from) const {
    if (settings_.scheme == Scheme::Original) return 0;
    if (!model_.is_parabolic(j)) return 0;
    const Index next = comps_[from].kind == Component::Kind::Inducing ? hyp_digits_.front() : comps_[from].para;
    return run_component(j, next);
  }

  /// h(x) on component c from nodal values v.
  double interpolate(const Eigen::VectorXd& v, int c, double x) const {
    const Component& comp = comps_[c];
    return comp.grid.interpolate(v.segment(comp.offset, comp.grid.size()), x);
  }

  OperatorEval evaluate(double b, double q, double s, bool derivatives = true) const {
    const int n = size_;
    OperatorEval out;
    out.b = b;
    out.q = q;
    out.s = s;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd mb, mq, ms;
    if (derivatives) {
      mb = Eigen::MatrixXd::Zero(n, n);
      mq = Eigen::MatrixXd::Zero(n, n);
      ms = Eigen::MatrixXd::Zero(n, n);
    }
    std::vector<double> scratch(static_cast<std::size_t>(max_nodes_));
    std::vector<double> tail_basis(static_cast<std::size_t>(max_nodes_));

    // direct terms
    for (std::size_t t = 0; t < direct_.size(); ++t) {
      const Term& term = direct_[t];
      const double w = weight(term.phi, term.logd, 1.0, b, q, s);
      const Component& c = comps_[term.comp];
      const double* basis = term_basis(direct_, t, scratch);
      for (int l = 0; l < c.grid.size(); ++l) {
        const double wl = w * basis[l];
        m(term.row, c.offset + l) += wl;
        if (derivatives) {
          mb(term.row, c.offset + l) -= term.logd * wl;
          mq(term.row, c.offset + l) -= term.phi * wl;
          ms(term.row, c.offset + l) -= wl;
        }
      }
    }

    // parabolic runs: M_B = K H
    std::vector<Eigen::MatrixXd> hs(paras_.size());
    for (std::size_t p = 0; p < paras_.size(); ++p) {
      const Para& para = paras_[p];
      const int nz = para.zeta.size();
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nz, n), hb, hq, hsd;
      if (derivatives) {
        hb = Eigen::MatrixXd::Zero(nz, n);
        hq = Eigen::MatrixXd::Zero(nz, n);
        hsd = Eigen::MatrixXd::Zero(nz, n);
      }
      for (std::size_t t = 0; t < para.terms.size(); ++t) {
        const Term& term = para.terms[t];
        const double w = weight(term.phi, term.logd, 1.0, b, q, s);
        const Component& c = comps_[term.comp];
        const double* basis = term_basis(para.terms, t, scratch);
        for (int l = 0; l < c.grid.size(); ++l) {
          const double wl = w * basis[l];
          h(term.row, c.offset + l) += wl;
          if (derivatives) {
            hb(term.row, c.offset + l) -= term.logd * wl;
            hq(term.row, c.offset + l) -= term.phi * wl;
            hsd(term.row, c.offset + l) -= wl;
          }
        }
      }
      for (const Run& run : runs_) {
        if (run.para != static_cast<int>(p)) continue;
        const Component& c = comps_[run.comp];
        const int nb = c.grid.size();
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nb, nz), kb, kq, ks;
        if (derivatives) {
          kb = Eigen::MatrixXd::Zero(nb, nz);
          kq = Eigen::MatrixXd::Zero(nb, nz);
          ks = Eigen::MatrixXd::Zero(nb, nz);
        }
        const std::size_t len = static_cast<std::size_t>(settings_.n_max);
        for (int row = 0; row < nb; ++row) {
          for (std::size_t step = 0; step < len; ++step) {
            const std::size_t at = static_cast<std::size_t>(row) * len + step;
            const double w = weight(run.phi_sum[at], run.log_sum[at], static_cast<double>(step), b, q, s);
            if (w == 0.0) continue;
            const double* basis = run_basis(run, at, para.zeta, scratch);
            for (int r = 0; r < nz; ++r) {
              const double wr = w * basis[r];
              k(row, r) += wr;
              if (derivatives) {
                kb(row, r) -= run.log_sum[at] * wr;
                kq(row, r) -= run.phi_sum[at] * wr;
                ks(row, r) -= static_cast<double>(step) * wr;
              }
            }
          }
          if (tail_on()) {
            if (add_run_tail(run, row, b, q, s, tail_basis, [&](int r, double wr, double lb, double lq, double ls) {
              k(row, r) += wr;
              if (derivatives) {
                kb(row, r) -= lb * wr;
                kq(row, r) -= lq * wr;
                ks(row, r) -= ls * wr;
              }
            }))
              out.return_divergent = true;
          }
        }
        m.middleRows(c.offset, nb) += k * h;
        if (derivatives) {
          mb.middleRows(c.offset, nb) += kb * h + k * hb;
          mq.middleRows(c.offset, nb) += kq * h + k * hq;
          ms.middleRows(c.offset, nb) += ks * h + k * hsd;
        }
      }
      hs[p] = std::move(h);
    }

    if (!m.allFinite()) throw NumericalError("transfer operator weights overflow");
    const Eigenpair right = dominant_eigenpair(m);
    out.lambda = right.value;
    out.log_lambda = std::log(right.value);
    out.right = right.vector;
    out.iterations = right.iterations;
    if (derivatives) {
      const Eigenpair left = dominant_eigenpair(m.transpose());
      out.left = left.vector;
      out.iterations += left.iterations;
      const double norm = out.left.dot(out.right) * out.lambda;
      if (!(std::abs(norm) > 0.0)) throw NumericalError("left and right eigenvectors are orthogonal");
      out.has_derivatives = true;
      out.d_b = out.left.dot(mb * out.right) / norm;
      out.d_q = out.left.dot(mq * out.right) / norm;
      out.d_s = out.left.dot(ms * out.right) / norm;
      if (out.return_divergent) {
        // infinite mean return time; the induced integral of phi bar is not finite either
        out.d_s = -std::numeric_limits<double>::infinity();
        out.d_q = std::numeric_limits<double>::quiet_NaN();
      }
    }
    tails(out, hs, scratch);
    return out;
  }

  // ---------------------------------------------------------------------
  // Pieces used by Gibbs chains and samplers.

  /// u^T restricted to a run component, pushed through the K factor at run
  /// length n: a_n[r] = sum_k u_k e^{S_{n-1}(y_k)} l_r(z_{n-1}). One matrix per parabolic digit;
  /// with run tails on, the extra last row lumps every run longer than n_max.
  std::vector<Eigen::MatrixXd> run_left_factors(const OperatorEval& e) const {
    std::vector<Eigen::MatrixXd> out;
    std::vector<double> scratch(static_cast<std::size_t>(max_nodes_));
    std::vector<double> tail_basis(static_cast<std::size_t>(max_nodes_));
    const std::size_t len = static_cast<std::size_t>(settings_.n_max);
    const Eigen::Index rows = static_cast<Eigen::Index>(len) + (tail_on() ? 1 : 0);
    for (std::size_t p = 0; p < paras_.size(); ++p) {
      const int nz = paras_[p].zeta.size();
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, nz);
      for (const Run& run : runs_) {
        if (run.para != static_cast<int>(p)) continue;
        const Component& c = comps_[run.comp];
        for (int row = 0; row < c.grid.size(); ++row) {
          const double u = e.left(c.offset + row);
          for (std::size_t step = 0; step < len; ++step) {
            const std::size_t at = static_cast<std::size_t>(row) * len + step;
            const double w = u * weight(run.phi_sum[at], run.log_sum[at], static_cast<double>(step), e.b, e.q, e.s);
            const double* basis = run_basis(run, at, paras_[p].zeta, scratch);
            for (int r = 0; r < nz; ++r) a(static_cast<Eigen::Index>(step), r) += w * basis[r];
          }
          if (tail_on())
            add_run_tail(run, row, e.b, e.q, e.s, tail_basis,
                         [&](int r, double wr, double, double, double) { a(rows - 1, r) += u * wr; });
        }
      }
      out.push_back(std::move(a));
    }
    return out;
  }

  /// (H^{(j)} v)[r]: contribution of lead digit j to the run factor of parabolic index p.
  Eigen::VectorXd run_right_factor(const OperatorEval& e, std::size_t p, Index j) const {
    const Para& para = paras_[p];
    Eigen::VectorXd out = Eigen::VectorXd::Zero(para.zeta.size());
    std::vector<double> scratch(static_cast<std::size_t>(max_nodes_));
    for (std::size_t t = 0; t < para.terms.size(); ++t) {
      const Term& term = para.terms[t];
      if (term.digit != j) continue;
      const Component& c = comps_[term.comp];
      const double w = weight(term.phi, term.logd, 1.0, e.b, e.q, e.s);
      const double* basis = term_basis(para.terms, t, scratch);
      double acc = 0.0;
      for (int l = 0; l < c.grid.size(); ++l) acc += basis[l] * e.right(c.offset + l);
      out(term.row) += w * acc;
    }
    return out;
  }

  /// u^T M^{(j)} v over the direct block, per digit j (index into digits()).
  std::vector<double> direct_contributions(const OperatorEval& e) const {
    std::vector<double> out(digits_.size(), 0.0);
    std::vector<double> scratch(static_cast<std::size_t>(max_nodes_));
    for (std::size_t t = 0; t < direct_.size(); ++t) {
      const Term& term = direct_[t];
      const Component& c = comps_[term.comp];
      const double w = weight(term.phi, term.logd, 1.0, e.b, e.q, e.s);
      const double* basis = term_basis(direct_, t, scratch);
      double acc = 0.0;
      for (int l = 0; l < c.grid.size(); ++l) acc += basis[l] * e.right(c.offset + l);
      out[digit_slot(term.digit)] += e.left(term.row) * w * acc;
    }
    return out;
  }

  bool extrapolates_runs() const { return tail_on(); }

  /// Grid carrying the run factors of parabolic slot p.
  const ChebyshevGrid& zeta(std::size_t p) const { return paras_.at(p).zeta; }

  /// (H v)[r] = sum_{j != i} e^{psi(T_j zeta_r)} h(T_j zeta_r): the last step of a run, on the zeta grid.
  Eigen::VectorXd run_head_values(const OperatorEval& e, std::size_t p) const {
    const Para& para = paras_.at(p);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(para.zeta.size());
    std::vector<double> scratch(static_cast<std::size_t>(max_nodes_));
    for (std::size_t t = 0; t < para.terms.size(); ++t) {
      const Term& term = para.terms[t];
      const Component& c = comps_[term.comp];
      const double* basis = term_basis(para.terms, t, scratch);
      double acc = 0.0;
      for (int l = 0; l < c.grid.size(); ++l) acc += basis[l] * e.right(c.offset + l);
      out(term.row) += weight(term.phi, term.logd, 1.0, e.b, e.q, e.s) * acc;
    }
    return out;
  }

  std::size_t digit_slot(Index j) const {
    return static_cast<std::size_t>(std::lower_bound(digits_.begin(), digits_.end(), j) - digits_.begin());
  }
  std::size_t para_slot(Index i) const {
    return static_cast<std::size_t>(std::lower_bound(para_digits_.begin(), para_digits_.end(), i) - para_digits_.begin());
  }

  /// Run component for parabolic i when the next digit is `next`.
  int run_component(Index i, Index next) const {
    const std::size_t p = para_slot(i);
    const bool high = model_.domain(next).mid() > model_.domain(i).mid();
    const int c = high ? paras_[p].high : paras_[p].low;
    if (c < 0) throw ValidationError("no run component for digit " + std::to_string(i));
    return c;
  }

  /// Component containing a point whose itinerary starts with (first, second).
  int component_of(Index first, Index second) const {
    if (settings_.scheme == Scheme::Original || !model_.is_parabolic(first)) return 0;
    return run_component(first, second);
  }

 private:
  struct Term {
    int row = 0;
    int comp = 0;
    Index digit = 0;
    double point = 0.0;
    double phi = 0.0;
    double logd = 0.0;
  };
  struct TermList : std::vector<Term> {
    std::vector<double> basis;
    std::vector<std::size_t> basis_at;
  };
  struct Para {
    Index i = 0;
    ChebyshevGrid zeta;
    TermList terms;
    int low = -1;
    int high = -1;
  };
  struct Run {
    int comp = 0;
    int para = 0;
    std::vector<double> z, phi_sum, log_sum;
    std::vector<double> basis;
    std::vector<double> tail_n;  // effective run position at n_max, per row
  };

  bool tail_on() const { return settings_.run_tail && settings_.n_max >= 2; }

  /// Runs longer than n_max for one row of a run component, lumped at the mean
  /// tail position. sink(r, weight, d log w/db, d/dq, d/ds) up to sign.
  template <class Sink>
  bool add_run_tail(const Run& run, int row, double b, double q, double s, std::vector<double>& basis,
                    Sink&& sink) const {
    const std::size_t len = static_cast<std::size_t>(settings_.n_max);
    const std::size_t at = static_cast<std::size_t>(row) * len + (len - 1);
    const double w0 = weight(run.phi_sum[at], run.log_sum[at], static_cast<double>(len - 1), b, q, s);
    if (w0 == 0.0) return false;
    const Para& para = paras_[static_cast<std::size_t>(run.para)];
    const double gamma = model_.gamma();
    const double alpha_i = alpha(para.i);
    const RunTailSums t = run_tail_sums(b * (1.0 + gamma), s + q * alpha_i, run.tail_n[static_cast<std::size_t>(row)],
                                        gamma > 0.0 ? 1.0 / gamma : 0.0);
    const double xi = model_.fixed_point(para.i);
    const double zt = xi + (run.z[at] - xi) * (gamma > 0.0 ? t.sz / t.s0 : 0.0);
    const int nz = para.zeta.size();
    para.zeta.basis(zt, std::span<double>(basis.data(), static_cast<std::size_t>(nz)));
    const bool divergent = !std::isfinite(t.s1);
    const double mean_extra = divergent ? 0.0 : t.s1 / t.s0;
    const double lb = run.log_sum[at] + (1.0 + gamma) * t.sl / t.s0;
    const double lq = run.phi_sum[at] + alpha_i * mean_extra;
    const double ls = static_cast<double>(len - 1) + mean_extra;
    for (int r = 0; r < nz; ++r) sink(r, w0 * t.s0 * basis[static_cast<std::size_t>(r)], lb, lq, ls);
    return divergent;
  }

  static double weight(double phi, double logd, double steps, double b, double q, double s) {
    return std::exp(-q * phi - b * logd - s * steps);
  }

  Interval hull_of(const std::vector<Index>& ds) const {
    Interval h{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (Index d : ds) {
      const Interval di = model_.domain(d);
      h.lo = std::min(h.lo, di.lo);
      h.hi = std::max(h.hi, di.hi);
    }
    return h;
  }

  int add_component(Component::Kind kind, Index para, Interval iv) {
    Component c;
    c.kind = kind;
    c.para = para;
    c.grid = ChebyshevGrid(iv.lo, iv.hi, settings_.nodes);
    c.offset = size_;
    size_ += c.grid.size();
    max_nodes_ = std::max(max_nodes_, c.grid.size());
    comps_.push_back(std::move(c));
    return static_cast<int>(comps_.size()) - 1;
  }

  Term make_term(int row, int comp, Index j, double y) const {
    const Mobius t = model_.inverse_branch(j);
    Term term;
    term.row = row;
    term.comp = comp;
    term.digit = j;
    term.point = t(y);
    term.phi = phi_.on_branch(j, term.point);
    term.logd = -t.log_abs_derivative(y);
    return term;
  }

  void build_original() {
    add_component(Component::Kind::Whole, 0, hull_of(digits_));
    const Component& c = comps_[0];
    for (int k = 0; k < c.grid.size(); ++k)
      for (Index j : digits_) direct_.push_back(make_term(c.offset + k, 0, j, c.grid.node(k)));
  }

  void build_induced() {
    add_component(Component::Kind::Inducing, 0, hull_of(hyp_digits_));
    paras_.resize(para_digits_.size());
    for (std::size_t p = 0; p < para_digits_.size(); ++p) {
      const Index i = para_digits_[p];
      paras_[p].i = i;
      const Interval di = model_.domain(i);
      std::vector<Index> low, high;
      for (Index k : digits_) {
        if (k == i) continue;
        (model_.domain(k).mid() > di.mid() ? high : low).push_back(k);
      }
      const Mobius t = model_.inverse_branch(i);
      const double xi = model_.fixed_point(i);
      Interval zeta{xi, xi};
      for (int side = 0; side < 2; ++side) {
        const auto& ks = side == 0 ? low : high;
        if (ks.empty()) continue;
        const Interval h = hull_of(ks);
        const double a = t(h.lo);
        const double bb = t(h.hi);
        const Interval piece{std::min(a, bb), std::max(a, bb)};
        const int c = add_component(side == 0 ? Component::Kind::RunLow : Component::Kind::RunHigh, i, piece);
        (side == 0 ? paras_[p].low : paras_[p].high) = c;
        zeta.lo = std::min(zeta.lo, piece.lo);
        zeta.hi = std::max(zeta.hi, piece.hi);
      }
      paras_[p].zeta = ChebyshevGrid(zeta.lo, zeta.hi, settings_.nodes);
      max_nodes_ = std::max(max_nodes_, paras_[p].zeta.size());
    }
    // rows of A: Hyp(j) for every digit
    const Component& a = comps_[0];
    for (int k = 0; k < a.grid.size(); ++k)
      for (Index j : digits_) direct_.push_back(make_term(a.offset + k, landing_component(j, 0), j, a.grid.node(k)));
    // H factors: last step of a run, T_j(zeta) with j != i
    for (std::size_t p = 0; p < paras_.size(); ++p) {
      Para& para = paras_[p];
      for (int r = 0; r < para.zeta.size(); ++r)
        for (Index j : digits_) {
          if (j == para.i) continue;
          const int comp = model_.is_parabolic(j) ? run_component(j, para.i) : 0;
          para.terms.push_back(make_term(r, comp, j, para.zeta.node(r)));
        }
    }
    // K factors: explicit orbits z_m = T_i^m(y) from each node of a run component
    const std::size_t len = static_cast<std::size_t>(settings_.n_max);
    for (int c = 1; c < static_cast<int>(comps_.size()); ++c) {
      const Component& comp = comps_[c];
      Run run;
      run.comp = c;
      run.para = static_cast<int>(para_slot(comp.para));
      const Mobius t = model_.inverse_branch(comp.para);
      const std::size_t total = static_cast<std::size_t>(comp.grid.size()) * len;
      run.z.resize(total);
      run.phi_sum.resize(total);
      run.log_sum.resize(total);
      for (int row = 0; row < comp.grid.size(); ++row) {
        double z = comp.grid.node(row);
        double ps = 0.0;
        double ls = 0.0;
        for (std::size_t step = 0; step < len; ++step) {
          if (step > 0) {
            ls -= t.log_abs_derivative(z);
            z = t(z);
            ps += phi_.on_branch(comp.para, z);
          }
          const std::size_t at = static_cast<std::size_t>(row) * len + step;
          run.z[at] = z;
          run.phi_sum[at] = ps;
          run.log_sum[at] = ls;
        }
      }
      // log|(T_i^m)'| ~ (1 + gamma) log(m + c) along a parabolic run
      run.tail_n.assign(static_cast<std::size_t>(comp.grid.size()), static_cast<double>(len));
      if (len >= 2) {
        for (int row = 0; row < comp.grid.size(); ++row) {
          const std::size_t at = static_cast<std::size_t>(row) * len + (len - 1);
          const double inc = run.log_sum[at] - run.log_sum[at - 1];
          if (inc > 0.0) run.tail_n[static_cast<std::size_t>(row)] = (1.0 + model_.gamma()) / inc + 0.5;
        }
      }
      runs_.push_back(std::move(run));
    }
  }

  void cache_terms(TermList& terms) {
    terms.basis_at.resize(terms.size());
    std::size_t total = 0;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      terms.basis_at[t] = total;
      total += static_cast<std::size_t>(comps_[terms[t].comp].grid.size());
    }
    terms.basis.resize(total);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const Component& c = comps_[terms[t].comp];
      c.grid.basis(terms[t].point, std::span<double>(terms.basis.data() + terms.basis_at[t], c.grid.size()));
    }
  }

  void build_caches() {
    std::size_t need = 0;
    for (const Term& t : direct_) need += static_cast<std::size_t>(comps_[t.comp].grid.size());
    for (const Para& p : paras_) {
      for (const Term& t : p.terms) need += static_cast<std::size_t>(comps_[t.comp].grid.size());
    }
    for (const Run& r : runs_) need += r.z.size() * static_cast<std::size_t>(paras_[r.para].zeta.size());
    cached_ = need <= settings_.cache_limit;
    if (!cached_) return;
    cache_terms(direct_);
    for (Para& p : paras_) cache_terms(p.terms);
    for (Run& r : runs_) {
      const ChebyshevGrid& zeta = paras_[r.para].zeta;
      const std::size_t nz = static_cast<std::size_t>(zeta.size());
      r.basis.resize(r.z.size() * nz);
      for (std::size_t at = 0; at < r.z.size(); ++at)
        zeta.basis(r.z[at], std::span<double>(r.basis.data() + at * nz, nz));
    }
  }

  const double* term_basis(const TermList& terms, std::size_t t, std::vector<double>& scratch) const {
    if (cached_) return terms.basis.data() + terms.basis_at[t];
    const Component& c = comps_[terms[t].comp];
    c.grid.basis(terms[t].point, std::span<double>(scratch.data(), c.grid.size()));
    return scratch.data();
  }

  const double* run_basis(const Run& run, std::size_t at, const ChebyshevGrid& zeta,
                          std::vector<double>& scratch) const {
    const std::size_t nz = static_cast<std::size_t>(zeta.size());
    if (cached_) return run.basis.data() + at * nz;
    zeta.basis(run.z[at], std::span<double>(scratch.data(), nz));
    return scratch.data();
  }

  void tails(OperatorEval& out, const std::vector<Eigen::MatrixXd>& hs, std::vector<double>& scratch) const {
    const Eigen::VectorXd& v = out.right;
    // runs longer than n_max
    out.run_tail_weight.assign(paras_.size(), 0.0);
    const std::size_t len = static_cast<std::size_t>(settings_.n_max);
    for (const Run& run : runs_) {
      const Component& c = comps_[run.comp];
      const Eigen::VectorXd hv = hs[static_cast<std::size_t>(run.para)] * v;
      for (int row = 0; row < c.grid.size(); ++row) {
        const std::size_t at = static_cast<std::size_t>(row) * len + (len - 1);
        const double w = weight(run.phi_sum[at], run.log_sum[at], static_cast<double>(len - 1), out.b, out.q, out.s);
        const double* basis = run_basis(run, at, paras_[static_cast<std::size_t>(run.para)].zeta, scratch);
        double last = 0.0;
        for (int r = 0; r < hv.size(); ++r) last += basis[r] * hv(r);
        const double row_value = out.lambda * v(c.offset + row);
        if (row_value != 0.0)
          out.run_tail_weight[static_cast<std::size_t>(run.para)] =
              std::max(out.run_tail_weight[static_cast<std::size_t>(run.para)], std::abs(w * last / row_value));
      }
    }
    // digits beyond j_max: compare the last two digits of the alphabet
    if (digits_.size() < 2 || digits_[digits_.size() - 2] != j_max_ - 1) return;
    const Index prev = j_max_ - 1;
    double sum_last = 0.0;
    double sum_prev = 0.0;
    double worst = 0.0;
    const auto scan = [&](const TermList& terms, const auto& row_value) {
      for (std::size_t t = 0; t < terms.size(); ++t) {
        const Term& term = terms[t];
        if (term.digit != j_max_ && term.digit != prev) continue;
        const Component& c = comps_[term.comp];
        const double* basis = term_basis(terms, t, scratch);
        double acc = 0.0;
        for (int l = 0; l < c.grid.size(); ++l) acc += basis[l] * v(c.offset + l);
        const double contrib = std::abs(weight(term.phi, term.logd, 1.0, out.b, out.q, out.s) * acc);
        if (term.digit == j_max_) {
          sum_last += contrib;
          const double rv = std::abs(row_value(term.row));
          if (rv > 0.0) worst = std::max(worst, contrib / rv);
        } else {
          sum_prev += contrib;
        }
      }
    };
    scan(direct_, [&](int row) { return out.lambda * v(row); });
    for (std::size_t p = 0; p < paras_.size(); ++p) {
      const Eigen::VectorXd hv = hs[p] * v;
      scan(paras_[p].terms, [&](int row) { return hv(row); });
    }
    out.digit_tail_weight = worst;
    if (sum_last > 0.0 && sum_prev > 0.0)
      out.digit_tail_exponent = std::log(sum_last / sum_prev) / std::log(static_cast<double>(j_max_) / prev);
  }

  MapModel model_;
  Potential phi_;
  OperatorSettings settings_;
  std::vector<Index> digits_, para_digits_, hyp_digits_;
  Index j_max_ = 0;
  std::vector<Component> comps_;
  std::vector<Para> paras_;
  std::vector<Run> runs_;
  TermList direct_;
  int size_ = 0;
  int max_nodes_ = 0;
  bool cached_ = false;
};

}  // namespace thermo
