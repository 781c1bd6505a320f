#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/exact_cf.hpp"
#include "thermo/bcf.hpp"
#include "thermo/spectrum.hpp"

using namespace thermo;

namespace {

std::vector<Index> as_index(const std::vector<long>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(BcfExpand, Examples) {
  const DigitSequence a = bcf_expand(1.0 / 3.0, 3);
  EXPECT_EQ(a.digits, (std::vector<Index>{2, 3, 2}));
  EXPECT_TRUE(a.terminated);
  EXPECT_EQ(as_index(oracle::renyi_digits(oracle::cpp_rational(1, 3), 3).digits), a.digits);

  const DigitSequence z = bcf_expand(0.0, 5);
  EXPECT_EQ(z.digits, (std::vector<Index>{2, 2, 2, 2, 2}));

  const DigitSequence h = bcf_expand(0.5, 2);
  EXPECT_EQ(h.digits, (std::vector<Index>{3, 2}));
  EXPECT_EQ(as_index(oracle::renyi_digits(oracle::cpp_rational(1, 2), 2).digits), h.digits);
  EXPECT_EQ(h.kind, DigitKind::Backward);

  EXPECT_THROW(bcf_expand(1.0, 3), ValidationError);
}

TEST(BcfReconstruct, Examples) {
  const Reconstruction r = bcf_reconstruct({{2, 3, 2}, DigitKind::Backward, false});
  EXPECT_NEAR(r.value, 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(bcf_reconstruct({{2}, DigitKind::Backward, false}).value, 0.0);
  EXPECT_DOUBLE_EQ(bcf_reconstruct({{3, 2}, DigitKind::Backward, false}).value, 0.5);
  EXPECT_THROW(bcf_reconstruct({{}, DigitKind::Backward, false}), ValidationError);
  EXPECT_THROW(bcf_reconstruct({{2, 1}, DigitKind::Backward, false}), ValidationError);
}

TEST(BcfReconstruct, IntervalContainsExactPoint) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<long> num(1, 1000000);
  for (int t = 0; t < 300; ++t) {
    const long d = 1000003;
    const oracle::cpp_rational x(num(rng), d);
    const auto exact = oracle::renyi_digits(x, 12);
    const DigitSequence seq{as_index(exact.digits), DigitKind::Backward, false};
    const Reconstruction r = bcf_reconstruct(seq, TailMode::IntervalBound);
    const double xv = x.convert_to<double>();
    EXPECT_LE(r.lo, xv + 1e-12);
    EXPECT_GE(r.hi, xv - 1e-12);
  }
}

TEST(CfExpand, Examples) {
  const DigitSequence s = cf_expand(std::sqrt(2.0) - 1.0, 5);
  EXPECT_EQ(s.digits, (std::vector<Index>{2, 2, 2, 2, 2}));
  EXPECT_EQ(s.kind, DigitKind::Regular);
  const DigitSequence h = cf_expand(0.5, 3);
  EXPECT_EQ(h.digits, (std::vector<Index>{2}));
  EXPECT_TRUE(h.terminated);
  const DigitSequence t = cf_expand(1.0 / 3.0, 3);
  EXPECT_EQ(t.digits, (std::vector<Index>{3}));
  EXPECT_TRUE(t.terminated);
  EXPECT_EQ(as_index(oracle::gauss_digits(oracle::cpp_rational(1, 3), 3).digits), t.digits);
  EXPECT_THROW(cf_expand(0.0, 3), ValidationError);
}

TEST(Digits, ShiftPropertyAndFloor) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    double x = u(rng);
    const DigitSequence seq = bcf_expand(x, 30);
    for (std::size_t k = 0; k < 30; ++k) {
      EXPECT_GE(seq.digits[k], 2);
      EXPECT_EQ(seq.digits[k], bcf_step(x).digit);
      x = bcf_step(x).next;
    }
    const DigitSequence cf = cf_expand(u(rng), 30);
    for (Index d : cf.digits) EXPECT_GE(d, 1);
  }
}

TEST(Digits, AgreeWithExactRationalIteration) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<long> num(1, (1L << 40) - 1);
  int agreeing_prefix = 0;
  for (int t = 0; t < 200; ++t) {
    const long n = num(rng);
    const double x = std::ldexp(static_cast<double>(n), -40);  // exactly representable
    const auto exact = oracle::renyi_digits(oracle::cpp_rational(n, 1L << 40), 8);
    const DigitSequence seq = bcf_expand(x, 8);
    agreeing_prefix += seq.digits == as_index(exact.digits);
  }
  EXPECT_GE(agreeing_prefix, 195);
}

TEST(Birkhoff, Examples) {
  const MapModel r = MapModel::renyi();
  const auto log_psi = [](Index d) { return std::log(static_cast<double>(d)); };
  const BirkhoffResult z = birkhoff_average(r, log_psi, 0.0, 100);
  EXPECT_NEAR(z.average, std::log(2.0), 1e-15);
  EXPECT_NEAR(z.last_quarter, std::log(2.0), 1e-15);
  const BirkhoffResult id = birkhoff_average(r, [](Index d) { return static_cast<double>(d); }, 0.0, 10);
  EXPECT_DOUBLE_EQ(id.average, 2.0);
  EXPECT_THROW(birkhoff_average(r, log_psi, 0.3, 0), ValidationError);
}

TEST(Birkhoff, QuadraticSurdAgainstExactDigits) {
  const MapModel r = MapModel::renyi();
  const double x = std::sqrt(2.0) - 1.0;
  const std::vector<long> exact = oracle::renyi_surd_digits({-1, 1, 2, 1}, 10000);
  double exact_avg = 0.0;
  for (long d : exact) exact_avg += std::log(static_cast<double>(d));
  exact_avg /= static_cast<double>(exact.size());
  EXPECT_NEAR(exact_avg, 1.5 * std::log(2.0), 1e-12);  // period [2, 4]

  const DigitSequence seq = bcf_expand(x, 15);
  EXPECT_EQ(seq.digits, as_index(std::vector<long>(exact.begin(), exact.begin() + 15)));
  const BirkhoffResult b = birkhoff_average(r, [](Index d) { return std::log(static_cast<double>(d)); }, x, 10000);
  // double orbits leave the periodic orbit; the running error bound says so
  EXPECT_GT(b.error_estimate, 1.0);
  const BirkhoffResult shortrun = birkhoff_average(r, [](Index d) { return std::log(static_cast<double>(d)); }, x, 12);
  EXPECT_NEAR(shortrun.average, 1.5 * std::log(2.0), 1e-12);
  EXPECT_LT(shortrun.error_estimate, 1e-3);
}

TEST(Sampling, UniformGaussPair) {
  const MapModel g = MapModel::gauss();
  const PressureEngine e(g, Potential::log_digit(g), Truncation{}, {1, 2}, false);
  const GibbsChain chain(e.op_ptr(), 0.0, 0.0, 0.0);
  const OrbitSample s = sample_gibbs_orbit(chain, 100000, 7);
  ASSERT_EQ(s.digits.digits.size(), 100000u);
  double ones = 0;
  for (Index d : s.digits.digits) ones += d == 1;
  EXPECT_NEAR(ones / 1e5, 0.5, 0.01);
  EXPECT_EQ(s.digits.kind, DigitKind::Regular);
}

TEST(Sampling, DeterministicAndEmpty) {
  const MapModel r = MapModel::renyi();
  const PressureEngine e(r, Potential::log_digit(r), Truncation{}, {}, false);
  const double b = 0.8, q = 0.3;
  const GibbsChain chain(e.op_ptr(), b, q, e.root(b, q, false).value);
  const OrbitSample a = sample_gibbs_orbit(chain, 5000, 42);
  const OrbitSample c = sample_gibbs_orbit(chain, 5000, 42);
  EXPECT_EQ(a.digits.digits, c.digits.digits);
  EXPECT_EQ(a.average, c.average);
  EXPECT_NE(a.digits.digits, sample_gibbs_orbit(chain, 5000, 43).digits.digits);
  const OrbitSample none = sample_gibbs_orbit(chain, 0, 1);
  EXPECT_TRUE(none.digits.digits.empty());
}

TEST(Sampling, RefusesDivergentChain) {
  const MapModel r = MapModel::renyi();
  const PressureEngine e(r, Potential::log_digit(r), Truncation{}, {}, false);
  const GibbsChain chain(e.op_ptr(), 1.0, 0.0, 0.0);
  EXPECT_THROW(sample_gibbs_orbit(chain, 10, 1), NumericalError);
}

TEST(Sampling, SolvedSpectrumPoint) {
  const MapModel r = MapModel::renyi();
  const SpectrumSolver solver(r, Potential::log_digit(r), SpectrumConfig{});
  const SpectrumPoint p = solver.solve(1.2);
  const GibbsChain chain(solver.engine().op_ptr(), p.b, *p.q, solver.engine().root(p.b, *p.q, false).value);
  const OrbitSample s = sample_gibbs_orbit(chain, 200000, 1);
  EXPECT_NEAR(s.average, 1.2, 0.05);
  // digits per induced symbol is the mean return time
  EXPECT_NEAR(200000.0 / static_cast<double>(s.symbols), chain.mean_return(), 0.1);
}
