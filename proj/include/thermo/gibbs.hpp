#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "thermo/errors.hpp"
#include "thermo/induced.hpp"
#include "thermo/pressure.hpp"
#include "thermo/transfer_operator.hpp"

namespace thermo {

/// Equilibrium (Gibbs) measure of the truncated induced system for
/// -q phi bar - b log|F'| - s r, read off the collocated operator.
class GibbsChain {
 public:
  GibbsChain(std::shared_ptr<const TransferOperator> op, double b, double q, double s)
      : op_(std::move(op)), eval_(op_->evaluate(b, q, s, true)) {
    norm_ = eval_.lambda * eval_.left.dot(eval_.right);
    build_masses();
    const double beta = b * (1.0 + op_->model().gamma());
    for (Index i : op_->parabolic_digits()) {
      const double gap = s + q * op_->alpha(i);
      if (gap < -1e-8 || (std::abs(gap) <= 1e-8 && beta <= 2.0)) divergent_ = true;
    }
    if (eval_.return_divergent) divergent_ = true;
  }

  const TransferOperator& op() const { return *op_; }
  const OperatorEval& eval() const { return eval_; }
  double b() const { return eval_.b; }
  double q() const { return eval_.q; }
  double s() const { return eval_.s; }
  double pressure() const { return eval_.log_lambda; }

  const std::vector<InducedSymbol>& symbols() const { return symbols_; }
  const std::vector<double>& masses() const { return masses_; }
  const std::vector<double>& stationary() const { return stationary_; }
  double total_mass() const { return total_; }
  /// Mass of runs longer than n_max (zero unless the operator extrapolates them).
  double tail_mass() const { return tail_mass_; }

  /// mu(r) of the truncated chain.
  double mean_return() const { return mean_return_; }
  /// True when the untruncated chain has infinite mean return time.
  bool mean_return_divergent() const { return divergent_; }

  std::size_t index_of(const InducedSymbol& sym) const {
    for (std::size_t k = 0; k < symbols_.size(); ++k)
      if (symbols_[k] == sym) return k;
    throw ValidationError("symbol " + sym.tag() + " is not in the truncated alphabet");
  }

  bool admissible(const InducedSymbol& a, const InducedSymbol& b) const {
    if (op_->scheme() == Scheme::Original) return true;
    return incidence(op_->model(), a, b);
  }

  /// Component where the points following symbol `sym` live.
  std::vector<int> successor_components(const InducedSymbol& sym) const {
    if (op_->scheme() == Scheme::Original || !sym.is_run()) return {0};
    std::vector<int> out;
    const auto& comps = op_->components();
    for (int c = 1; c < static_cast<int>(comps.size()); ++c)
      if (comps[c].para == sym.para) out.push_back(c);
    return out;
  }

  /// Consumed digits of a symbol (the digit itself for the original scheme).
  Word consumed(const InducedSymbol& sym) const { return sym.consumed(); }

  struct CylinderMass {
    double mass = 0.0;
    double birkhoff_sup = 0.0;  // sup of S psi over the cylinder
    double birkhoff_inf = 0.0;
  };

  /// mu([w1 w2]) = lambda^{-2} nu(1 e^{S psi} h o T_{w1 w2}).
  CylinderMass cylinder_mass(const InducedSymbol& w1, const InducedSymbol& w2) const {
    if (!admissible(w1, w2)) throw ValidationError(w1.tag() + " cannot be followed by " + w2.tag());
    Word word = consumed(w1);
    const Word tail = consumed(w2);
    word.insert(word.end(), tail.begin(), tail.end());
    const int land = landing(w1, w2);
    CylinderMass out;
    out.birkhoff_sup = -std::numeric_limits<double>::infinity();
    out.birkhoff_inf = std::numeric_limits<double>::infinity();
    std::vector<double> pts(word.size() + 1);
    const auto birkhoff = [&](double y) {
      pts.back() = y;
      double sum = 0.0;
      for (std::size_t m = word.size(); m-- > 0;) {
        sum += op_->log_weight(word[m], pts[m + 1], eval_.b, eval_.q, eval_.s);
        pts[m] = op_->model().inverse(word[m], pts[m + 1]);
      }
      return sum;
    };
    double acc = 0.0;
    for (int c : successor_components(w2)) {
      const auto& comp = op_->components()[c];
      for (int k = 0; k < comp.grid.size(); ++k) {
        const double sum = birkhoff(comp.grid.node(k));
        acc += eval_.left(comp.offset + k) * std::exp(sum) * op_->interpolate(eval_.right, land, pts[0]);
      }
      for (double y : {comp.grid.lo(), 0.5 * (comp.grid.lo() + comp.grid.hi()), comp.grid.hi()}) {
        const double sum = birkhoff(y);
        out.birkhoff_sup = std::max(out.birkhoff_sup, sum);
        out.birkhoff_inf = std::min(out.birkhoff_inf, sum);
      }
    }
    out.mass = acc / (eval_.lambda * norm_);
    return out;
  }

  double transition_probability(const InducedSymbol& w1, const InducedSymbol& w2) const {
    const double m1 = masses_[index_of(w1)];
    return cylinder_mass(w1, w2).mass / m1;
  }

  /// Successor distribution of symbol k, on demand (intended for small alphabets).
  std::vector<std::pair<std::size_t, double>> transition_row(std::size_t k) const {
    std::vector<std::pair<std::size_t, double>> row;
    const InducedSymbol& a = symbols_.at(k);
    for (std::size_t j = 0; j < symbols_.size(); ++j) {
      if (!admissible(a, symbols_[j])) continue;
      row.emplace_back(j, cylinder_mass(a, symbols_[j]).mass / masses_[k]);
    }
    return row;
  }

 private:
  int landing(const InducedSymbol& w1, const InducedSymbol& w2) const {
    if (op_->scheme() == Scheme::Original) return 0;
    const Word c1 = w1.consumed();
    const Index second = c1.size() > 1 ? c1[1] : w2.lead;
    return op_->component_of(w1.lead, second);
  }

  void build_masses() {
    const std::vector<double> direct = op_->direct_contributions(eval_);
    const auto& digits = op_->digits();
    for (std::size_t k = 0; k < digits.size(); ++k) {
      symbols_.push_back(InducedSymbol::hyp(digits[k]));
      masses_.push_back(direct[k] / norm_);
    }
    if (op_->scheme() == Scheme::Induced) {
      const std::vector<Eigen::MatrixXd> left = op_->run_left_factors(eval_);
      const auto& paras = op_->parabolic_digits();
      for (std::size_t p = 0; p < paras.size(); ++p) {
        for (Index j : digits) {
          if (j == paras[p]) continue;
          const Eigen::VectorXd right = op_->run_right_factor(eval_, p, j);
          for (Index n = 1; n <= op_->n_max(); ++n) {
            symbols_.push_back(InducedSymbol::run(j, paras[p], n));
            masses_.push_back(left[p].row(n - 1).dot(right) / norm_);
          }
          if (op_->extrapolates_runs()) tail_mass_ += left[p].row(left[p].rows() - 1).dot(right) / norm_;
        }
      }
    }
    double symbol_total = 0.0;
    mean_return_ = 0.0;
    for (std::size_t k = 0; k < masses_.size(); ++k) {
      symbol_total += masses_[k];
      mean_return_ += masses_[k] * static_cast<double>(symbols_[k].return_time);
    }
    total_ = symbol_total + tail_mass_;
    stationary_.resize(masses_.size());
    for (std::size_t k = 0; k < masses_.size(); ++k) stationary_[k] = std::max(0.0, masses_[k]) / symbol_total;
    mean_return_ = op_->extrapolates_runs() ? -eval_.d_s : mean_return_ / total_;
  }

  std::shared_ptr<const TransferOperator> op_;
  OperatorEval eval_;
  double norm_ = 1.0;
  std::vector<InducedSymbol> symbols_;
  std::vector<double> masses_;
  std::vector<double> stationary_;
  double total_ = 1.0;
  double tail_mass_ = 0.0;
  double mean_return_ = 1.0;
  bool divergent_ = false;
};

struct LiftedObservables {
  double entropy = 0.0;          // h = h~ / mu~(r)
  double lyapunov = 0.0;         // mu(log|f'|)
  double mean_phi = 0.0;         // mu(phi)
  double mean_return = 0.0;      // mu~(r)
  double induced_entropy = 0.0;  // h~
  double induced_pressure = 0.0;
};

/// Abramov-Kac lifting. The induced entropy is -mu~(log g) for the g-function
/// g = e^psi h / (lambda h o F); the coboundary log h o F - log h integrates to zero.
inline LiftedObservables lift_observables(const GibbsChain& chain) {
  if (chain.mean_return_divergent()) throw NumericalError("infinite mean return time");
  const OperatorEval& e = chain.eval();
  LiftedObservables out;
  out.mean_return = -e.d_s;
  if (!(out.mean_return > 0.0)) throw NumericalError("non-positive mean return time");
  out.induced_pressure = e.log_lambda;
  const double mean_psi = e.q * e.d_q + e.b * e.d_b + e.s * e.d_s;
  out.induced_entropy = e.log_lambda - mean_psi;
  out.entropy = out.induced_entropy / out.mean_return;
  out.lyapunov = e.d_b / e.d_s;
  out.mean_phi = e.d_q / e.d_s;
  return out;
}

struct GibbsConstant {
  double Q = 1.0;
  double ratio_min = 1.0;
  double ratio_max = 1.0;
  std::size_t cylinders = 0;
};

/// Ratios mu([w1 w2]) / exp(sup S_2 psi - 2 P) over random depth-2 cylinders.
inline GibbsConstant gibbs_constant(const GibbsChain& chain, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(chain.stationary().begin(), chain.stationary().end());
  GibbsConstant out;
  out.ratio_min = std::numeric_limits<double>::infinity();
  out.ratio_max = 0.0;
  const auto& syms = chain.symbols();
  while (out.cylinders < count) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    int guard = 0;
    while (!chain.admissible(syms[a], syms[b])) {
      b = pick(rng);
      if (++guard > 100000) throw NumericalError("could not sample an admissible successor");
    }
    const auto cm = chain.cylinder_mass(syms[a], syms[b]);
    const double ratio = cm.mass / std::exp(cm.birkhoff_sup - 2.0 * chain.pressure());
    out.ratio_min = std::min(out.ratio_min, ratio);
    out.ratio_max = std::max(out.ratio_max, ratio);
    ++out.cylinders;
  }
  out.Q = std::max(out.ratio_max, 1.0 / out.ratio_min);
  return out;
}

}  // namespace thermo
