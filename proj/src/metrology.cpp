#include "kforce/metrology.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numeric>

#include "kforce/error.hpp"

namespace kforce::metrology {
namespace {

constexpr double kSigmaLo = 0.15865525393145707;  // Phi(-1)
constexpr double kSigmaHi = 0.8413447460685429;   // Phi(+1)

// Averaging factor for tau, or 0 when tau is not a positive integer multiple
// of the cycle time.
long averaging_factor(double tau, double cycle_time) {
  const double m = tau / cycle_time;
  const double r = std::round(m);
  if (r < 1.0 || std::abs(m - r) > 1e-9 * r) return 0;
  return static_cast<long>(r);
}

std::vector<double> centred(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  const double ref = v.front();
  std::transform(v.begin(), v.end(), out.begin(), [ref](double x) { return x - ref; });
  return out;
}

void push_point(AdevCurve& c, double tau, double var, double edf) {
  const double adev = std::sqrt(std::max(var, 0.0));
  const auto [lo, hi] = deviation_ci(adev, edf);
  c.taus.push_back(tau);
  c.adev.push_back(adev);
  c.ci_lower.push_back(lo);
  c.ci_upper.push_back(hi);
  c.edf.push_back(edf);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

DirectionSummary summarize(const std::vector<Plateau>& ps, bool positive) {
  DirectionSummary d;
  std::vector<double> fx, fy;
  for (const auto& p : ps) {
    if (p.positive != positive) continue;
    fx.push_back(p.force.x());
    fy.push_back(p.force.y());
  }
  d.count = static_cast<int>(fx.size());
  if (fx.empty()) return d;
  d.mean = {mean_of(fx), mean_of(fy)};
  d.std = {sample_std(fx), sample_std(fy)};
  d.std_error = d.std / std::sqrt(static_cast<double>(d.count));
  d.variance = d.std.array().square();
  return d;
}

}  // namespace

MeasurementSeries MeasurementSeries::uniform(std::vector<double> values, double cycle_time, char label) {
  MeasurementSeries s;
  s.start_times.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) s.start_times[i] = static_cast<double>(i) * cycle_time;
  s.values = std::move(values);
  s.cycle_time = cycle_time;
  s.label = label;
  s.validate();
  return s;
}

void MeasurementSeries::validate() const {
  if (!(cycle_time > 0.0)) throw ArgumentError("measurement series: cycle_time must be > 0");
  if (values.empty()) throw ArgumentError("measurement series: no samples");
  if (start_times.size() != values.size()) {
    throw ArgumentError("measurement series: start_times and values differ in length");
  }
  for (std::size_t i = 1; i < start_times.size(); ++i) {
    if (start_times[i] - start_times[i - 1] < cycle_time * (1.0 - 1e-6)) {
      throw ArgumentError("measurement series: start times closer than one cycle");
    }
  }
  if (label != 'x' && label != 'y') throw ArgumentError("measurement series: label must be x or y");
}

std::optional<double> AdevCurve::at(double tau) const {
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (std::abs(taus[i] - tau) <= 1e-9 * tau) return adev[i];
  }
  return std::nullopt;
}

void PhysicalConstants::validate() const {
  if (!(hbar > 0.0) || !(mass > 0.0)) throw ArgumentError("physical constants must be > 0");
}

std::pair<double, double> deviation_ci(double deviation, double edf) {
  const double nu = std::max(edf, 1e-3);
  const boost::math::chi_squared chi(nu);
  const double lo = deviation * std::sqrt(nu / boost::math::quantile(chi, kSigmaHi));
  const double hi = deviation * std::sqrt(nu / boost::math::quantile(chi, kSigmaLo));
  return {lo, hi};
}

std::vector<double> octave_taus(const MeasurementSeries& s) {
  std::vector<double> taus;
  for (std::size_t m = 1; m <= s.size() / 2; m *= 2) taus.push_back(static_cast<double>(m) * s.cycle_time);
  return taus;
}

AdevCurve allan_deviation(const MeasurementSeries& s, const std::vector<double>& taus) {
  s.validate();
  const std::vector<double> y = centred(s.values);
  const auto n = static_cast<long>(y.size());
  std::vector<double> prefix(y.size() + 1, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) prefix[i + 1] = prefix[i] + y[i];
  AdevCurve c;
  for (double tau : taus) {
    const long m = averaging_factor(tau, s.cycle_time);
    if (m == 0) throw ArgumentError("allan_deviation: tau must be a positive multiple of the cycle time");
    if (2 * m > n) continue;
    const long terms = n - 2 * m + 1;
    double sum = 0.0;
    for (long j = 0; j < terms; ++j) {
      const double a = (prefix[j + m] - prefix[j]) / m;
      const double b = (prefix[j + 2 * m] - prefix[j + m]) / m;
      sum += (b - a) * (b - a);
    }
    push_point(c, static_cast<double>(m) * s.cycle_time, sum / (2.0 * terms),
               static_cast<double>(n) / m - 1.0);
  }
  return c;
}

AdevCurve allan_deviation_nonoverlapping(const MeasurementSeries& s, const std::vector<double>& taus) {
  s.validate();
  const std::vector<double> y = centred(s.values);
  const auto n = static_cast<long>(y.size());
  AdevCurve c;
  for (double tau : taus) {
    const long m = averaging_factor(tau, s.cycle_time);
    if (m == 0) throw ArgumentError("allan_deviation: tau must be a positive multiple of the cycle time");
    const long blocks = n / m;
    if (blocks < 2) continue;
    std::vector<double> means(static_cast<std::size_t>(blocks));
    for (long k = 0; k < blocks; ++k) {
      means[k] = std::accumulate(y.begin() + k * m, y.begin() + (k + 1) * m, 0.0) / m;
    }
    double sum = 0.0;
    for (long k = 0; k + 1 < blocks; ++k) sum += (means[k + 1] - means[k]) * (means[k + 1] - means[k]);
    push_point(c, static_cast<double>(m) * s.cycle_time, sum / (2.0 * (blocks - 1)),
               static_cast<double>(blocks - 1));
  }
  return c;
}

double adev_slope(const AdevCurve& curve, double max_tau) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < curve.taus.size(); ++i) {
    if (curve.taus[i] <= max_tau * (1 + 1e-12) && curve.adev[i] > 0.0) {
      x.push_back(std::log(curve.taus[i]));
      y.push_back(std::log(curve.adev[i]));
    }
  }
  if (x.size() < 2) throw ArgumentError("adev_slope: need at least two positive points");
  return fit_line(x, y).slope;
}

double sensitivity_from_adev(const AdevCurve& curve, double tau0) {
  const auto a = curve.at(tau0);
  if (!a) throw ArgumentError("sensitivity_from_adev: tau0 not present in the ADEV curve");
  return *a * std::sqrt(tau0);
}

std::vector<HistogramPoint> histogram_stability(const MeasurementSeries& s, const std::vector<int>& bin_sizes) {
  s.validate();
  const std::vector<double> y = centred(s.values);
  std::vector<HistogramPoint> out;
  for (int b : bin_sizes) {
    if (b < 1) throw ArgumentError("histogram_stability: bin size must be >= 1");
    const std::size_t bins = y.size() / static_cast<std::size_t>(b);
    if (bins < 2) continue;
    std::vector<double> means(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      means[k] = std::accumulate(y.begin() + static_cast<long>(k) * b,
                                 y.begin() + static_cast<long>(k + 1) * b, 0.0) / b;
    }
    HistogramPoint p;
    p.bin_size = b;
    p.n_bins = static_cast<int>(bins);
    p.stability = sample_std(means);
    std::tie(p.ci_lower, p.ci_upper) = deviation_ci(p.stability, static_cast<double>(bins - 1));
    out.push_back(p);
  }
  return out;
}

NormalityResult normality_diagnostic(const MeasurementSeries& s) {
  s.validate();
  const auto n = s.values.size();
  if (n < 50) throw ArgumentError("normality_diagnostic: need at least 50 samples");
  const double mean = mean_of(s.values);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : s.values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double sd = std::sqrt(m2 * n / (n - 1.0));
  if (!(sd > 0.0) || sd <= 1e-14 * std::abs(mean)) throw DegenerateError("normality_diagnostic: zero variance");

  std::vector<double> z(n);
  std::transform(s.values.begin(), s.values.end(), z.begin(), [&](double v) { return (v - mean) / sd; });
  std::sort(z.begin(), z.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double log_cdf = std::log(0.5 * std::erfc(-z[i] / std::sqrt(2.0)));
    const double log_sf = std::log(0.5 * std::erfc(z[n - 1 - i] / std::sqrt(2.0)));
    acc += (2.0 * (i + 1) - 1.0) * (log_cdf + log_sf);
  }
  const double nd = static_cast<double>(n);
  const double a2 = -nd - acc / nd;
  NormalityResult r;
  r.statistic = a2 * (1.0 + 0.75 / nd + 2.25 / (nd * nd));
  r.pass = r.statistic < kAndersonDarlingCritical5;
  r.skewness = m3 / std::pow(m2, 1.5);
  r.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return r;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigmas) {
  if (x.size() != y.size() || (!sigmas.empty() && sigmas.size() != x.size())) {
    throw ArgumentError("fit_line: input lengths differ");
  }
  if (x.size() < 2) throw RankError("fit_line: need at least two points");
  const bool weighted = std::any_of(sigmas.begin(), sigmas.end(), [](double s) { return s != 0.0; });
  std::vector<double> w(x.size(), 1.0);
  if (weighted) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(sigmas[i] > 0.0)) throw ArgumentError("fit_line: sigmas must be all positive or all zero");
      w[i] = 1.0 / (sigmas[i] * sigmas[i]);
    }
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0.0, sxy = 0.0, xscale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - xm) * (x[i] - xm);
    sxy += w[i] * (x[i] - xm) * (y[i] - ym);
    xscale = std::max(xscale, std::abs(x[i]));
  }
  if (!(sxx > 1e-24 * sw * xscale * xscale)) throw RankError("fit_line: all abscissae identical");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    f.chi2 += w[i] * r * r;
  }
  f.dof = static_cast<int>(x.size()) - 2;
  // Unweighted fits take the noise scale from the residuals.
  const double scale = weighted ? 1.0 : (f.dof > 0 ? f.chi2 / f.dof : 0.0);
  const double var_slope = scale / sxx;
  f.slope_sigma = std::sqrt(var_slope);
  f.intercept_sigma = std::sqrt(scale / sw + xm * xm * var_slope);
  f.covariance = -xm * var_slope;
  return f;
}

ForceFit fit_force_linear(const std::vector<WavevectorSample>& samples) {
  std::vector<double> dt;
  for (const auto& s : samples) dt.push_back(s.dt);
  ForceFit out;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> y, sig;
    for (const auto& s : samples) {
      y.push_back(kHbar * s.dk[c]);
      sig.push_back(kHbar * s.sigma[c]);
    }
    const LineFit f = fit_line(dt, y, sig);
    out.force[c] = f.slope;
    out.force_sigma[c] = f.slope_sigma;
    out.intercept[c] = f.intercept;
    out.intercept_sigma[c] = f.intercept_sigma;
    out.slope_intercept_cov[c] = f.covariance;
    out.chi2_per_dof[c] = f.dof > 0 ? f.chi2 / f.dof : 0.0;
  }
  return out;
}

double force_angle(const ForceVec& f) {
  if (f.x() == 0.0 && f.y() == 0.0) throw ArgumentError("force_angle: zero force has no direction");
  return std::atan2(f.x(), f.y());
}

PlateauReport fit_square_wave_plateaus(const dynamics::QuasimomentumTrace& trace, double frequency_hz,
                                       double dt_total, double phase_rad, const std::vector<Vec2>& sigmas) {
  if (!(frequency_hz > 0.0)) throw ArgumentError("fit_square_wave_plateaus: frequency must be > 0");
  if (trace.times.size() < 2 || trace.k_unfolded.size() != trace.times.size()) {
    throw ArgumentError("fit_square_wave_plateaus: trace needs at least two samples");
  }
  if (!sigmas.empty() && sigmas.size() != trace.times.size()) {
    throw ArgumentError("fit_square_wave_plateaus: sigma count does not match the trace");
  }
  const double half = 0.5 / frequency_hz;
  const double t_lo = trace.times.front();
  const double t_hi = std::min(dt_total, trace.times.back());
  const double eps = 1e-9 * half;
  // Boundary n sits at t_n = (n pi - phase) / (2 pi f).
  const double shift = phase_rad / (2 * kPi * frequency_hz);
  long n = static_cast<long>(std::ceil((t_lo + shift) / half - 1e-9));

  PlateauReport rep;
  for (;; ++n) {
    const double a = n * half - shift;
    const double b = (n + 1) * half - shift;
    if (b > t_hi + eps) break;
    std::vector<double> t;
    std::vector<std::vector<double>> y(2), sg(2);
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
      if (trace.times[i] < a - eps || trace.times[i] > b + eps) continue;
      t.push_back(trace.times[i]);
      for (int c = 0; c < 2; ++c) {
        y[c].push_back(kHbar * trace.k_unfolded[i][c]);
        sg[c].push_back(sigmas.empty() ? 0.0 : kHbar * sigmas[i][c]);
      }
    }
    if (t.size() < 2) continue;
    Plateau p;
    p.index = static_cast<int>(n);
    p.t_start = a;
    p.t_end = b;
    p.positive = std::sin(2 * kPi * frequency_hz * 0.5 * (a + b) + phase_rad) >= 0.0;
    for (int c = 0; c < 2; ++c) {
      const LineFit f = fit_line(t, y[c], sg[c]);
      p.force[c] = f.slope;
      p.force_sigma[c] = f.slope_sigma;
    }
    rep.plateaus.push_back(p);
  }
  if (rep.plateaus.size() < 2) {
    throw ArgumentError("fit_square_wave_plateaus: fewer than two complete half-periods sampled");
  }
  const double span = rep.plateaus.back().t_end - rep.plateaus.front().t_start;
  const double halves = static_cast<double>(rep.plateaus.back().index - rep.plateaus.front().index + 1);
  rep.frequency_hz = halves / (2.0 * span);
  rep.positive = summarize(rep.plateaus, true);
  rep.negative = summarize(rep.plateaus, false);
  return rep;
}

double sql_real(const PhysicalConstants& c, double dt) {
  c.validate();
  if (!(dt > 0.0)) throw ArgumentError("sql_real: dt must be > 0");
  return std::sqrt(c.mass * c.hbar / (dt * dt * dt));
}

double sql_real_sensitivity(const PhysicalConstants& c, double dt) { return sql_real(c, dt) * std::sqrt(dt); }

double ql_reciprocal(const PhysicalConstants& c, double n0, double dt, double l_q) {
  c.validate();
  if (!(n0 > 0.0) || !(dt > 0.0) || !(l_q > 0.0)) throw ArgumentError("ql_reciprocal: inputs must be > 0");
  return c.hbar / (std::sqrt(n0) * dt * l_q);
}

double ql_reciprocal_sensitivity(const PhysicalConstants& c, double n0, double dt, double l_q,
                                 double cycle_time) {
  if (!(cycle_time > 0.0)) throw ArgumentError("ql_reciprocal_sensitivity: cycle_time must be > 0");
  return ql_reciprocal(c, n0, dt, l_q) * std::sqrt(cycle_time);
}

}  // namespace kforce::metrology
