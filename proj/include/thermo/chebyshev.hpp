#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace thermo {

/// Chebyshev points of the first kind on [lo, hi] with barycentric weights.
class ChebyshevGrid {
 public:
  ChebyshevGrid() = default;

  ChebyshevGrid(double lo, double hi, int count) : lo_(lo), hi_(hi) {
    nodes_.resize(count);
    weights_.resize(count);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    for (int j = 0; j < count; ++j) {
      const double angle = (2.0 * j + 1.0) * std::numbers::pi / (2.0 * count);
      nodes_[j] = mid + half * std::cos(angle);
      weights_[j] = ((j % 2 == 0) ? 1.0 : -1.0) * std::sin(angle);
    }
  }

  int size() const { return static_cast<int>(nodes_.size()); }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double node(int j) const { return nodes_[j]; }
  const std::vector<double>& nodes() const { return nodes_; }

  /// Lagrange basis values l_j(x), written to out (size() entries).
  void basis(double x, std::span<double> out) const {
    const int n = size();
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      const double diff = x - nodes_[j];
      if (diff == 0.0) {
        for (int k = 0; k < n; ++k) out[k] = 0.0;
        out[j] = 1.0;
        return;
      }
      out[j] = weights_[j] / diff;
      denom += out[j];
    }
    const double inv = 1.0 / denom;
    for (int j = 0; j < n; ++j) out[j] *= inv;
  }

  template <class Values>
  double interpolate(const Values& values, double x) const {
    const int n = size();
    double num = 0.0;
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      const double diff = x - nodes_[j];
      if (diff == 0.0) return values[j];
      const double t = weights_[j] / diff;
      num += t * values[j];
      denom += t;
    }
    return num / denom;
  }

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

}  // namespace thermo
