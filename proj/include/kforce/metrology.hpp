#pragma once

#include <optional>
#include <utility>
#include <string>
#include <vector>

#include "kforce/constants.hpp"
#include "kforce/dynamics.hpp"

namespace kforce::metrology {

/// One force component sampled once per measurement cycle (tau0).
struct MeasurementSeries {
  std::vector<double> values;       // N
  double cycle_time = 0.0;          // s
  std::vector<double> start_times;  // s
  char label = 'y';                 // 'x' or 'y'

  /// Samples at start_times = i * cycle_time.
  static MeasurementSeries uniform(std::vector<double> values, double cycle_time, char label);
  void validate() const;
  std::size_t size() const noexcept { return values.size(); }
};

struct AdevCurve {
  std::vector<double> taus;  // s
  std::vector<double> adev;  // N
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<double> edf;

  std::optional<double> at(double tau) const;
  bool operator==(const AdevCurve&) const = default;
};

struct PhysicalConstants {
  double hbar = kHbar;
  double mass = kMassRb87;
  void validate() const;
};

/// Octave averaging factors 1, 2, 4, ... up to n / 2, as taus.
std::vector<double> octave_taus(const MeasurementSeries& s);

/// Overlapping Allan deviation. Taus whose factor exceeds len/2 are omitted;
/// a tau that is not a positive multiple of the cycle time is an ArgumentError.
AdevCurve allan_deviation(const MeasurementSeries& s, const std::vector<double>& taus);
/// Non-overlapping variant (cross-check).
AdevCurve allan_deviation_nonoverlapping(const MeasurementSeries& s, const std::vector<double>& taus);

/// Log-log slope of adev vs tau over the curve points with tau <= max_tau.
double adev_slope(const AdevCurve& curve, double max_tau);

/// S = adev(tau0) * sqrt(tau0), in N/sqrt(Hz).
double sensitivity_from_adev(const AdevCurve& curve, double tau0);

struct HistogramPoint {
  int bin_size = 0;
  int n_bins = 0;
  double stability = 0.0;  // std of bin means, N
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool operator==(const HistogramPoint&) const = default;
};
/// Std of consecutive bin means per bin size; sizes with fewer than two bins
/// are omitted.
std::vector<HistogramPoint> histogram_stability(const MeasurementSeries& s,
                                                const std::vector<int>& bin_sizes);

struct NormalityResult {
  double statistic = 0.0;  // Anderson-Darling A*^2 (small-sample adjusted)
  bool pass = false;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool operator==(const NormalityResult&) const = default;
};
inline constexpr double kAndersonDarlingCritical5 = 0.752;
NormalityResult normality_diagnostic(const MeasurementSeries& s);

/// Weighted straight line y = intercept + slope * x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_sigma = 0.0;
  double intercept_sigma = 0.0;
  double covariance = 0.0;  // cov(slope, intercept)
  double chi2 = 0.0;
  int dof = 0;
};
/// sigmas empty or all zero -> unweighted. Throws RankError when x has no spread.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>& sigmas = {});

struct WavevectorSample {
  double dt = 0.0;                    // s
  Wavevector dk = Wavevector::Zero();  // m^-1
  Vec2 sigma = Vec2::Zero();           // m^-1
};
struct ForceFit {
  ForceVec force = ForceVec::Zero();
  ForceVec force_sigma = ForceVec::Zero();
  Vec2 intercept = Vec2::Zero();  // N s
  Vec2 intercept_sigma = Vec2::Zero();
  Vec2 slope_intercept_cov = Vec2::Zero();
  Vec2 chi2_per_dof = Vec2::Zero();
};
/// Per-component weighted regression of hbar * dk against dt.
ForceFit fit_force_linear(const std::vector<WavevectorSample>& samples);

/// Direction of F from the +y axis, signed toward +x.
double force_angle(const ForceVec& f);

struct Plateau {
  int index = 0;  // half-period counter from t = 0
  bool positive = true;
  double t_start = 0.0, t_end = 0.0;
  ForceVec force = ForceVec::Zero();
  ForceVec force_sigma = ForceVec::Zero();
};
struct DirectionSummary {
  ForceVec mean = ForceVec::Zero();
  ForceVec std = ForceVec::Zero();
  ForceVec std_error = ForceVec::Zero();
  Vec2 variance = Vec2::Zero();  // across periods, N^2
  int count = 0;
};
struct PlateauReport {
  std::vector<Plateau> plateaus;
  DirectionSummary positive;
  DirectionSummary negative;
  double frequency_hz = 0.0;  // from plateau boundary spacing
};
/// Segments the trace at the known half-period boundaries of
/// sgn(sin(2 pi f t + phase)) and fits hbar k vs t on each segment.
/// `sigmas` (m^-1, per sample) are optional fit weights.
PlateauReport fit_square_wave_plateaus(const dynamics::QuasimomentumTrace& trace, double frequency_hz,
                                       double dt_total, double phase_rad = 0.0,
                                       const std::vector<Vec2>& sigmas = {});

/// Real-space standard quantum limit sqrt(m hbar / dt^3).
double sql_real(const PhysicalConstants& c, double dt);
/// sql_real * sqrt(dt), N/sqrt(Hz).
double sql_real_sensitivity(const PhysicalConstants& c, double dt);
/// Reciprocal-space shot-noise limit hbar / (sqrt(n0) dt l_q).
double ql_reciprocal(const PhysicalConstants& c, double n0, double dt, double l_q);
/// ql_reciprocal * sqrt(cycle_time), N/sqrt(Hz).
double ql_reciprocal_sensitivity(const PhysicalConstants& c, double n0, double dt, double l_q,
                                 double cycle_time);

/// Chi-square based 1-sigma interval for a deviation estimated with `edf`
/// equivalent degrees of freedom.
std::pair<double, double> deviation_ci(double deviation, double edf);

}  // namespace kforce::metrology
