#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "thermo/coding.hpp"
#include "thermo/errors.hpp"
#include "thermo/gibbs.hpp"
#include "thermo/map_model.hpp"
#include "thermo/transfer_operator.hpp"

namespace thermo {

enum class DigitKind { Backward, Regular };

struct DigitSequence {
  std::vector<Index> digits;
  DigitKind kind = DigitKind::Backward;
  bool terminated = false;  // orbit reached a branch boundary
};

inline constexpr double kSnapTolerance = 1e-12;

struct BcfStep {
  Index digit = 2;
  double next = 0.0;
  bool boundary = false;
};

/// One step of the Renyi map: b = [1/(1-x)] + 1, R(x) = 1/(1-x) - (b - 1).
inline BcfStep bcf_step(double x) {
  if (!(x >= 0.0 && x < 1.0)) throw ValidationError("backward continued fractions need 0 <= x < 1");
  const double u = 1.0 / (1.0 - x);
  const double r = std::round(u);
  if (std::abs(u - r) <= kSnapTolerance * std::max(1.0, u)) return {static_cast<Index>(r) + 1, 0.0, true};
  const double f = std::floor(u);
  return {static_cast<Index>(f) + 1, u - f, false};
}

inline DigitSequence bcf_expand(double x, std::size_t n) {
  DigitSequence out;
  out.kind = DigitKind::Backward;
  out.digits.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const BcfStep st = bcf_step(x);
    out.digits.push_back(st.digit);
    if (st.boundary) out.terminated = true;
    x = st.next;
  }
  return out;
}

enum class TailMode { AllTwos, IntervalBound };

struct Reconstruction {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// x = 1 - 1/(b_1 - 1/(b_2 - ...)), evaluated bottom-up from the tail value z = 1 - R^n(x).
inline Reconstruction bcf_reconstruct(const DigitSequence& seq, TailMode mode = TailMode::AllTwos) {
  if (seq.kind != DigitKind::Backward) throw ValidationError("bcf_reconstruct needs backward digits");
  if (seq.digits.empty()) throw ValidationError("bcf_reconstruct: empty digit sequence");
  for (Index b : seq.digits)
    if (b < 2) throw ValidationError("backward digits are >= 2");
  const auto eval = [&](double z) {
    for (auto it = seq.digits.rbegin(); it != seq.digits.rend(); ++it) z = 1.0 / (static_cast<double>(*it) - z);
    return 1.0 - z;
  };
  Reconstruction out;
  const double at_one = eval(1.0);  // all-2s tail: z = 1/(2 - z) has z = 1
  if (mode == TailMode::AllTwos) {
    out.value = out.lo = out.hi = at_one;
    return out;
  }
  const double at_zero = eval(0.0);
  out.lo = std::min(at_one, at_zero);
  out.hi = std::max(at_one, at_zero);
  out.value = 0.5 * (out.lo + out.hi);
  return out;
}

/// Regular continued-fraction digits via the Gauss map; stops at rationals.
inline DigitSequence cf_expand(double x, std::size_t n) {
  if (!(x > 0.0 && x < 1.0)) throw ValidationError("regular continued fractions need 0 < x < 1");
  DigitSequence out;
  out.kind = DigitKind::Regular;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = 1.0 / x;
    const double r = std::round(u);
    if (std::abs(u - r) <= kSnapTolerance * std::max(1.0, u)) {
      out.digits.push_back(static_cast<Index>(r));
      out.terminated = true;
      break;
    }
    const double f = std::floor(u);
    out.digits.push_back(static_cast<Index>(f));
    x = u - f;
    if (x <= 0.0) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

struct BirkhoffResult {
  double average = 0.0;
  double last_quarter = 0.0;
  std::size_t steps = 0;
  bool terminated = false;
  double log_expansion = 0.0;   // log |(f^n)'(x)|
  double error_estimate = 0.0;  // eps |(f^n)'(x)|: absolute error of the final orbit point
};

/// (1/n) sum_{k<n} psi(digit_k(x)) along the orbit of x, with the average over the last quarter.
inline BirkhoffResult birkhoff_average(const MapModel& model, const std::function<double(Index)>& psi, double x,
                                       std::size_t n) {
  if (n < 1) throw ValidationError("birkhoff_average needs n >= 1");
  BirkhoffResult out;
  const std::size_t quarter_start = n - std::max<std::size_t>(1, n / 4);
  double sum = 0.0;
  double tail = 0.0;
  std::size_t tail_count = 0;
  for (std::size_t k = 0; k < n; ++k) {
    Index digit = 0;
    if (model.kind() == ModelKind::Renyi) {
      const BcfStep st = bcf_step(x);
      digit = st.digit;
      out.log_expansion += model.log_derivative(digit - model.digit_offset(), x);
      if (st.boundary) out.terminated = true;
      x = st.next;
    } else {
      const auto branch = model.locate(x);
      if (!branch) {
        out.terminated = true;
        break;
      }
      digit = model.digit(*branch);
      out.log_expansion += model.log_derivative(*branch, x);
      x = std::clamp(model.forward(*branch, x), 0.0, 1.0);
    }
    const double v = psi(digit);
    sum += v;
    if (k >= quarter_start) {
      tail += v;
      ++tail_count;
    }
    ++out.steps;
  }
  out.average = sum / static_cast<double>(out.steps);
  out.last_quarter = tail_count > 0 ? tail / static_cast<double>(tail_count) : out.average;
  out.error_estimate = std::numeric_limits<double>::epsilon() * std::exp(std::min(out.log_expansion, 700.0));
  return out;
}

struct OrbitSample {
  DigitSequence digits;
  std::vector<double> phi;  // phi along the sampled orbit
  double average = std::numeric_limits<double>::quiet_NaN();
  std::size_t symbols = 0;  // induced symbols drawn after burn-in
};

namespace detail {

// Backward chain y -> T_sigma(y) of the equilibrium state: the preimage through sigma is
// chosen with probability e^{psi(T_sigma y)} h(T_sigma y) / (lambda h(y)).
class BackwardSampler {
 public:
  BackwardSampler(const GibbsChain& chain, std::uint64_t seed)
      : op_(chain.op()), e_(chain.eval()), rng_(seed) {
    for (std::size_t p = 0; p < op_.parabolic_digits().size() && op_.scheme() == Scheme::Induced; ++p)
      head_.push_back(op_.run_head_values(e_, p));
    run_cap_ = op_.extrapolates_runs() ? Index{10'000'000} : op_.n_max();
    const auto& g = op_.components()[0].grid;
    y_ = g.node(g.size() / 2);
  }

  // Draws one induced symbol; appends its digits and phi values in backward order.
  void step(std::vector<Index>& digits, std::vector<double>& phi) {
    if (comp_ == 0) direct_step(digits, phi); else run_step(digits, phi);
  }

 private:
  double h(int c, double x) const { return op_.interpolate(e_.right, c, x); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

  int land_after_run(Index j, Index i) const { return op_.model().is_parabolic(j) ? op_.run_component(j, i) : 0; }

  void record(Index branch, double x, std::vector<Index>& digits, std::vector<double>& phi) const {
    digits.push_back(op_.model().digit(branch));
    phi.push_back(op_.potential().on_branch(branch, x));
  }

  // Pick among digits j (skipping `skip`) with weights e^{psi(T_j z)} h(T_j z), early exit.
  Index pick_digit(double z, double expected, Index skip, const std::function<int(Index)>& land) {
    const double u = uniform();
    double total = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      const double target = pass == 0 ? u * expected : u * total;
      double cum = 0.0;
      Index last = 0;
      for (Index j : op_.digits()) {
        if (j == skip) continue;
        const double x = op_.model().inverse(j, z);
        const double w = std::exp(op_.log_weight(j, z, e_.b, e_.q, e_.s)) * std::max(0.0, h(land(j), x));
        cum += w;
        if (w > 0.0) last = j;
        if (pass == 0 && cum >= target) return j;
        if (pass == 1 && cum >= target && w > 0.0) return j;
      }
      total = cum;
      if (pass == 1 || !(total > 0.0)) {
        if (last == 0) throw NumericalError("backward sampler: no admissible preimage");
        return last;
      }
    }
    throw NumericalError("backward sampler: no admissible preimage");
  }

  void direct_step(std::vector<Index>& digits, std::vector<double>& phi) {
    const double norm = e_.lambda * h(comp_, y_);
    const auto land = [&](Index j) { return op_.landing_component(j, 0); };
    const Index j = pick_digit(y_, norm, 0, land);
    const double x = op_.model().inverse(j, y_);
    record(j, x, digits, phi);
    comp_ = land(j);
    y_ = x;
  }

  void run_step(std::vector<Index>& digits, std::vector<double>& phi) {
    const Index i = op_.components()[comp_].para;
    const std::size_t p = op_.para_slot(i);
    const ChebyshevGrid& zeta = op_.zeta(p);
    const double norm = e_.lambda * h(comp_, y_);
    const std::size_t mark = digits.size();
    const auto scan = [&](double target) -> std::pair<Index, double> {
      double z = y_;
      double log_s = 0.0;
      double cum = 0.0;
      for (Index n = 1;; ++n) {
        if (n > 1) {
          log_s += op_.log_weight(i, z, e_.b, e_.q, e_.s);
          z = op_.model().inverse(i, z);
          record(i, z, digits, phi);
        }
        cum += std::exp(log_s) * std::max(0.0, zeta.interpolate(head_[p], z));
        if (cum >= target || n >= run_cap_) return {n, cum};
      }
    };
    const double u = uniform();
    auto [n, cum] = scan(u * norm);
    if (cum < u * norm) {
      digits.resize(mark);
      phi.resize(mark);
      std::tie(n, cum) = scan(u * cum);
    }
    // z_{n-1} = T_i^{n-1}(y)
    double z = y_;
    for (Index k = 1; k < n; ++k) z = op_.model().inverse(i, z);
    const auto land = [&](Index j) { return land_after_run(j, i); };
    const Index j = pick_digit(z, zeta.interpolate(head_[p], z), i, land);
    const double x = op_.model().inverse(j, z);
    record(j, x, digits, phi);
    comp_ = land(j);
    y_ = x;
  }

  const TransferOperator& op_;
  const OperatorEval& e_;
  std::mt19937_64 rng_;
  std::vector<Eigen::VectorXd> head_;
  Index run_cap_ = 1;
  double y_ = 0.5;
  int comp_ = 0;
};

}  // namespace detail

/// Orbit of `length` original-map steps drawn from the chain's equilibrium state.
/// Digits are the continued-fraction digits of the model (b_k for Renyi).
inline OrbitSample sample_gibbs_orbit(const GibbsChain& chain, std::size_t length, std::uint64_t seed,
                                      std::size_t burn_in = 1000) {
  if (chain.mean_return_divergent()) throw NumericalError("cannot sample: infinite mean return time");
  OrbitSample out;
  out.digits.kind = chain.op().model().kind() == ModelKind::Renyi ? DigitKind::Backward : DigitKind::Regular;
  if (length == 0) return out;
  detail::BackwardSampler sampler(chain, seed);
  std::vector<Index> digits;
  std::vector<double> phi;
  for (std::size_t k = 0; k < burn_in; ++k) {
    sampler.step(digits, phi);
    digits.clear();
    phi.clear();
  }
  digits.reserve(length + 64);
  phi.reserve(length + 64);
  while (digits.size() < length) {
    sampler.step(digits, phi);
    ++out.symbols;
  }
  // backward in time -> forward order
  std::reverse(digits.begin(), digits.end());
  std::reverse(phi.begin(), phi.end());
  digits.resize(length);
  phi.resize(length);
  double sum = 0.0;
  for (double v : phi) sum += v;
  out.average = sum / static_cast<double>(length);
  out.digits.digits = std::move(digits);
  out.phi = std::move(phi);
  return out;
}

}  // namespace thermo
