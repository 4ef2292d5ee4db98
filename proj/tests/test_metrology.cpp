#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "kforce/error.hpp"
#include "kforce/metrology.hpp"

using namespace kforce;
using namespace kforce::metrology;

namespace {

std::vector<double> gaussian(std::size_t n, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Direct transcription of the overlapping estimator, O(M m).
double brute_adev(const std::vector<double>& y, int m) {
  const int M = static_cast<int>(y.size());
  auto avg = [&](int j) {
    double s = 0.0;
    for (int i = j; i < j + m; ++i) s += y[i];
    return s / m;
  };
  double acc = 0.0;
  for (int j = 0; j <= M - 2 * m; ++j) acc += std::pow(avg(j + m) - avg(j), 2);
  return std::sqrt(acc / (2.0 * (M - 2 * m + 1)));
}

double brute_ad(std::vector<double> v) {
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / (n - 1));
  for (double& x : v) x = (x - mu) / sd;
  std::sort(v.begin(), v.end());
  auto Phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (2.0 * (i + 1) - 1) * (std::log(Phi(v[i])) + std::log(1.0 - Phi(v[v.size() - 1 - i])));
  const double a2 = -n - s / n;
  return a2 * (1.0 + 0.75 / n + 2.25 / (n * n));
}

}  // namespace

TEST_CASE("series validation") {
  CHECK_THROWS_AS(MeasurementSeries::uniform({}, 1.0, 'y').validate(), ArgumentError);
  CHECK_THROWS_AS(MeasurementSeries::uniform({1.0}, 0.0, 'y').validate(), ArgumentError);
  MeasurementSeries s = MeasurementSeries::uniform({1, 2, 3}, 76.0, 'y');
  s.start_times = {0.0, 76.0, 100.0};
  CHECK_THROWS_AS(s.validate(), ArgumentError);
  s.start_times = {0.0, 76.0, 76.0 * 2 * (1 - 1e-7)};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("ADEV matches the direct estimator") {
  const auto v = gaussian(600, 2.0, 1);
  const auto s = MeasurementSeries::uniform(v, 76.0, 'y');
  const auto curve = allan_deviation(s, octave_taus(s));
  REQUIRE(curve.taus.size() == 9);  // 1..256
  for (std::size_t i = 0; i < curve.taus.size(); ++i) {
    const int m = static_cast<int>(std::lround(curve.taus[i] / 76.0));
    CHECK(curve.adev[i] == doctest::Approx(brute_adev(v, m)).epsilon(1e-10));
    CHECK(curve.ci_lower[i] <= curve.adev[i]);
    CHECK(curve.adev[i] <= curve.ci_upper[i]);
    CHECK(curve.edf[i] == doctest::Approx(600.0 / m - 1.0));
  }
  for (std::size_t i = 1; i < curve.taus.size(); ++i) CHECK(curve.taus[i] > curve.taus[i - 1]);
}

TEST_CASE("ADEV oracles") {
  const auto flat = MeasurementSeries::uniform(std::vector<double>(200, 3e-26), 76.0, 'y');
  for (double a : allan_deviation(flat, octave_taus(flat)).adev) CHECK(a == 0.0);

  std::vector<double> ramp(300);
  const double d = 1e-28;
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 5e-26 + d * i;
  const auto rs = MeasurementSeries::uniform(ramp, 76.0, 'y');
  const auto rc = allan_deviation(rs, octave_taus(rs));
  for (std::size_t i = 0; i < rc.taus.size(); ++i) {
    const double m = rc.taus[i] / 76.0;
    CHECK(rc.adev[i] == doctest::Approx(d * m / std::sqrt(2.0)).epsilon(1e-9));
  }

  const double s0 = 3e-27;
  const auto ws = MeasurementSeries::uniform(gaussian(10000, s0, 2), 76.0, 'y');
  const auto wc = allan_deviation(ws, octave_taus(ws));
  for (std::size_t i = 0; i < wc.taus.size(); ++i) {
    const double m = wc.taus[i] / 76.0;
    if (m > 256) break;  // edf < 40: CI is already checked via coverage below
    const double want = s0 / std::sqrt(m);
    CHECK(want >= wc.ci_lower[i] - 2 * (wc.adev[i] - wc.ci_lower[i]));
    CHECK(want <= wc.ci_upper[i] + 2 * (wc.ci_upper[i] - wc.adev[i]));
  }
  CHECK(adev_slope(wc, 76.0 * 256) == doctest::Approx(-0.5).epsilon(0.1));  // -0.5 +/- 0.05
}

TEST_CASE("ADEV white-noise CI coverage") {
  // The 1-sigma interval should contain the truth roughly 68% of the time.
  int hits = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = MeasurementSeries::uniform(gaussian(2000, 1.0, 100 + seed), 1.0, 'x');
    const auto c = allan_deviation(s, {1.0, 4.0, 16.0});
    for (std::size_t i = 0; i < c.taus.size(); ++i, ++total) {
      const double want = 1.0 / std::sqrt(c.taus[i]);
      hits += (c.ci_lower[i] <= want && want <= c.ci_upper[i]);
    }
  }
  CHECK(double(hits) / total == doctest::Approx(0.683).epsilon(0.08));
}

TEST_CASE("ADEV omission rules and non-overlapping cross-check") {
  const auto s = MeasurementSeries::uniform(gaussian(100, 1.0, 3), 2.0, 'y');
  const auto c = allan_deviation(s, {2.0, 100.0, 102.0, 200.0});
  REQUIRE(c.taus.size() == 2);
  CHECK(c.taus[0] == 2.0);
  CHECK(c.taus[1] == 100.0);
  CHECK(allan_deviation(s, {500.0}).taus.empty());
  CHECK_THROWS_AS(allan_deviation(s, {3.0}), ArgumentError);
  CHECK_THROWS_AS(allan_deviation(s, {-2.0}), ArgumentError);

  const auto big = MeasurementSeries::uniform(gaussian(8192, 1.0, 4), 1.0, 'y');
  const auto o = allan_deviation(big, {1.0, 8.0, 64.0});
  const auto n = allan_deviation_nonoverlapping(big, {1.0, 8.0, 64.0});
  REQUIRE(n.taus.size() == 3);
  CHECK(n.adev[0] == doctest::Approx(o.adev[0]).epsilon(1e-12));  // m = 1 identical
  for (int i = 1; i < 3; ++i) CHECK(std::abs(n.adev[i] - o.adev[i]) < 2 * (n.ci_upper[i] - n.adev[i]));
  CHECK(o.at(8.0).has_value());
  CHECK_FALSE(o.at(7.0).has_value());
}

TEST_CASE("sensitivity") {
  AdevCurve c;
  c.taus = {76.0, 152.0};
  c.adev = {2.94e-27, 2e-27};
  c.ci_lower = c.adev;
  c.ci_upper = c.adev;
  c.edf = {10, 5};
  CHECK(sensitivity_from_adev(c, 76.0) == doctest::Approx(2.56e-26).epsilon(2e-3));
  CHECK_THROWS_AS(sensitivity_from_adev(c, 10.0), ArgumentError);
  auto twice = c;
  twice.adev[0] *= 2;
  CHECK(sensitivity_from_adev(twice, 76.0) == doctest::Approx(2 * sensitivity_from_adev(c, 76.0)));
  c.adev[0] = 0.0;
  CHECK(sensitivity_from_adev(c, 76.0) == 0.0);

  // Rescaling time by k and the per-sample noise by 1/sqrt(k) leaves S unchanged.
  const auto v = gaussian(1000, 1.0, 5);
  const auto a = allan_deviation(MeasurementSeries::uniform(v, 1.0, 'y'), {1.0});
  std::vector<double> w(v);
  for (double& x : w) x /= 2.0;
  const auto b = allan_deviation(MeasurementSeries::uniform(w, 4.0, 'y'), {4.0});
  CHECK(sensitivity_from_adev(b, 4.0) == doctest::Approx(sensitivity_from_adev(a, 1.0)).epsilon(1e-12));
}

TEST_CASE("histogram stability") {
  const auto flat = MeasurementSeries::uniform(std::vector<double>(100, 1.0), 1.0, 'y');
  for (const auto& h : histogram_stability(flat, {1, 2, 5})) CHECK(h.stability == 0.0);

  const auto v = gaussian(20000, 2.0, 6);
  const auto s = MeasurementSeries::uniform(v, 76.0, 'y');
  const auto hs = histogram_stability(s, {1, 4, 16, 64, 20000});
  REQUIRE(hs.size() == 4);  // 20000 leaves a single bin
  double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size(), ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  CHECK(hs[0].stability == doctest::Approx(std::sqrt(ss / (v.size() - 1))).epsilon(1e-12));
  const auto adev = allan_deviation(s, {76.0 * 4, 76.0 * 16, 76.0 * 64});
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const double want = 2.0 / std::sqrt(double(hs[i].bin_size));
    CHECK(hs[i].stability == doctest::Approx(want).epsilon(0.12));
    CHECK(hs[i].ci_lower <= hs[i].stability);
    CHECK(hs[i].stability <= hs[i].ci_upper);
    if (i > 0) {
      // Joint 1-sigma CIs, widened to 3 sigma.
      const double joint = std::hypot(hs[i].ci_upper - hs[i].stability, adev.ci_upper[i - 1] - adev.adev[i - 1]);
      CHECK(std::abs(hs[i].stability - adev.adev[i - 1]) < 3 * joint);
    }
  }
  CHECK_THROWS_AS(histogram_stability(s, {0}), ArgumentError);
}

TEST_CASE("normality diagnostic") {
  const auto v = gaussian(500, 1.0, 7);
  const auto r = normality_diagnostic(MeasurementSeries::uniform(v, 1.0, 'y'));
  CHECK(r.statistic == doctest::Approx(brute_ad(v)).epsilon(1e-9));

  int pass = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    pass += normality_diagnostic(MeasurementSeries::uniform(gaussian(10000, 1.0, 1000 + seed), 1.0, 'y')).pass;
  CHECK(pass >= 95 - 4);  // 5% nominal false-reject rate; binomial sd ~2.2

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> mix(10000);
    for (double& x : mix) x = (coin(rng) ? 3.0 : -3.0) + nd(rng);
    const auto m = normality_diagnostic(MeasurementSeries::uniform(mix, 1.0, 'y'));
    CHECK_FALSE(m.pass);
    CHECK(m.excess_kurtosis < -1.0);
  }

  CHECK_THROWS_AS(normality_diagnostic(MeasurementSeries::uniform(std::vector<double>(100, 1.0), 1.0, 'y')),
                  DegenerateError);
  CHECK_THROWS_AS(normality_diagnostic(MeasurementSeries::uniform(gaussian(49, 1.0, 9), 1.0, 'y')), ArgumentError);
}

TEST_CASE("linear fits") {
  const LineFit two = fit_line({1.0, 3.0}, {2.0, 6.0});
  CHECK(two.slope == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::abs(two.intercept) < 1e-14);
  CHECK_THROWS_AS(fit_line({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), RankError);

  const double fy = 7.81e-26, fx = 1e-27;
  std::vector<WavevectorSample> exact;
  for (double dt : {1e-3, 2e-3, 3e-3, 4.2e-3})
    exact.push_back({dt, Wavevector(fx * dt / kHbar, fy * dt / kHbar), Vec2(1e3, 1e3)});
  const ForceFit f = fit_force_linear(exact);
  CHECK(f.force.y() == doctest::Approx(fy).epsilon(1e-12));
  CHECK(f.force.x() == doctest::Approx(fx).epsilon(1e-12));
  CHECK(std::abs(f.intercept.y()) < 1e-12 * fy * 4.2e-3);

  std::vector<WavevectorSample> same(3, exact[0]);
  CHECK_THROWS_AS(fit_force_linear(same), RankError);
}

TEST_CASE("weighted force fit: coverage and chi2") {
  const ForceVec F(2e-27, 7.81e-26);
  const std::vector<double> dts{1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3, 7e-3, 8e-3, 9e-3, 10e-3, 11e-3, 12e-3};
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd(0.0, 1.0);
  int covered = 0;
  double chi_sum = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<WavevectorSample> pts;
    for (double dt : dts) {
      const Vec2 sig(5e4 * (1 + 3 * dt / 12e-3), 8e4);
      const Wavevector dk = dynamics::evolve_quasimomentum(Wavevector::Zero(), dynamics::ForceProfile::constant(F), dt);
      pts.push_back({dt, dk + Wavevector(sig.x() * nd(rng), sig.y() * nd(rng)), sig});
    }
    const auto fit = fit_force_linear(pts);
    covered += (std::abs(fit.force.x() - F.x()) < 3 * fit.force_sigma.x()) &&
               (std::abs(fit.force.y() - F.y()) < 3 * fit.force_sigma.y());
    chi_sum += fit.chi2_per_dof.y();
  }
  CHECK(covered >= 0.99 * trials - 5);  // two components at 99.73% each
  const double dof = double(dts.size() - 2);
  CHECK(std::abs(chi_sum / trials - 1.0) < 3.0 / std::sqrt(dof));
  CHECK(chi_sum / trials == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("force angle") {
  CHECK(force_angle(ForceVec(1.0e-27, 7.81e-26)) == doctest::Approx(0.0128).epsilon(1e-2));
  CHECK(force_angle(ForceVec(0.0, 1.0)) == 0.0);
  CHECK(force_angle(ForceVec(1.0, 0.0)) == doctest::Approx(kPi / 2));
  CHECK(force_angle(ForceVec(-1.0, 1.0)) == doctest::Approx(-kPi / 4));
  CHECK_THROWS_AS(force_angle(ForceVec::Zero()), ArgumentError);
}

TEST_CASE("square-wave plateaus") {
  const auto lat = lattice::build_reciprocal_lattice({});
  const double f = 250.0, span = 6.0 / f;
  std::vector<double> times;
  for (int i = 0; i <= 6 * 2 * 8; ++i) times.push_back(i * span / (6 * 2 * 8));

  SUBCASE("symmetric") {
    const auto p = dynamics::ForceProfile::square_wave(ForceVec(0.0, 9.41e-26), f);
    const auto tr = dynamics::sample_trace(Wavevector::Zero(), p, times, lat);
    const auto rep = fit_square_wave_plateaus(tr, f, span);
    REQUIRE(rep.plateaus.size() == 12);
    for (const auto& pl : rep.plateaus) {
      CHECK(pl.force.y() == doctest::Approx(pl.positive ? 9.41e-26 : -9.41e-26).epsilon(1e-12));
      CHECK(std::abs(pl.force.x()) < 1e-12 * 9.41e-26);
    }
    CHECK(rep.positive.count == 6);
    CHECK(rep.negative.count == 6);
    CHECK(rep.frequency_hz == doctest::Approx(f).epsilon(1e-12));
    CHECK(rep.positive.variance.y() < 1e-24 * 9.41e-26 * 9.41e-26);
  }
  SUBCASE("asymmetric") {
    const auto p = dynamics::ForceProfile::square_wave(ForceVec(0.0, 9.44e-26), f, 0.0, ForceVec(0.0, -0.03e-26));
    const auto rep = fit_square_wave_plateaus(dynamics::sample_trace(Wavevector::Zero(), p, times, lat), f, span);
    CHECK(rep.positive.mean.y() == doctest::Approx(9.41e-26).epsilon(1e-12));
    CHECK(rep.negative.mean.y() == doctest::Approx(-9.47e-26).epsilon(1e-12));
  }
  SUBCASE("zero amplitude and a phase offset") {
    const auto p = dynamics::ForceProfile::square_wave(ForceVec::Zero(), f, 0.7);
    const auto rep = fit_square_wave_plateaus(dynamics::sample_trace(Wavevector::Zero(), p, times, lat), f, span, 0.7);
    for (const auto& pl : rep.plateaus) CHECK(pl.force.norm() == 0.0);
  }
  SUBCASE("too short") {
    const auto p = dynamics::ForceProfile::square_wave(ForceVec(0.0, 1e-26), f);
    std::vector<double> short_t;
    for (int i = 0; i <= 8; ++i) short_t.push_back(i * 0.5 / f / 8);
    const auto tr = dynamics::sample_trace(Wavevector::Zero(), p, short_t, lat);
    CHECK_THROWS_AS(fit_square_wave_plateaus(tr, f, 0.5 / f), ArgumentError);
  }
}

TEST_CASE("quantum limit formulas") {
  const PhysicalConstants c;
  CHECK(sql_real(c, 4.2e-3) == doctest::Approx(1.433e-26).epsilon(2e-3));
  CHECK(sql_real_sensitivity(c, 4.2e-3) == doctest::Approx(9.29e-28).epsilon(2e-3));
  CHECK(ql_reciprocal(c, 2e5, 4.2e-3, 1e-6) == doctest::Approx(5.6e-29).epsilon(1e-2));
  CHECK(ql_reciprocal_sensitivity(c, 2e5, 4.2e-3, 1e-6, 76.0) ==
        doctest::Approx(ql_reciprocal(c, 2e5, 4.2e-3, 1e-6) * std::sqrt(76.0)).epsilon(1e-14));

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int t = 0; t < 200; ++t) {
    const double dt = 4e-3 * u(rng), n0 = 1e5 * u(rng), lq = 1e-6 * u(rng);
    CHECK(sql_real(c, dt) / sql_real(c, 8 * dt) == doctest::Approx(std::pow(8.0, 1.5)).epsilon(1e-12));
    PhysicalConstants heavy = c;
    heavy.mass *= 4;
    CHECK(sql_real(heavy, dt) / sql_real(c, dt) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ql_reciprocal(c, n0, dt, lq) / ql_reciprocal(c, 50 * n0, dt, lq) ==
          doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
    CHECK(ql_reciprocal(c, n0, dt, lq) / ql_reciprocal(c, n0, 2 * dt, lq) == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("deviation CI brackets the estimate and narrows with edf") {
  const auto [lo1, hi1] = deviation_ci(1.0, 10.0);
  const auto [lo2, hi2] = deviation_ci(1.0, 1000.0);
  CHECK(lo1 < 1.0);
  CHECK(hi1 > 1.0);
  CHECK(hi2 - lo2 < hi1 - lo1);
  CHECK(hi2 - lo2 == doctest::Approx(2.0 / std::sqrt(2 * 1000.0)).epsilon(0.02));
}
