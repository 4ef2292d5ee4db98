#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kforce/config.hpp"
#include "kforce/dynamics.hpp"
#include "kforce/imaging.hpp"
#include "kforce/lattice.hpp"
#include "kforce/metrology.hpp"

namespace kforce::campaign {

enum class JitterMode { Independent, Paired };
enum class DriftKind { None, Linear, RandomWalk };

struct NoiseModel {
  JitterMode jitter_mode = JitterMode::Independent;
  DriftKind drift = DriftKind::None;
  double drift_rate_n_per_s = 0.0;  // linear drift on F_y
  double drift_step_n = 0.0;        // rms random-walk step on F_y per cycle
};

struct AcSampling {
  int periods = 10;
  int samples_per_half_period = 4;
  int runs_per_sample = 5;
  std::vector<double> sample_times;  // overrides the generated grid when non-empty
};

struct CampaignConfig {
  lattice::BeamGeometry geometry;
  imaging::ImagingConfig imaging;  // centering_jitter_k lives here
  dynamics::ForceProfile force;
  double n0 = 2e5;
  double condensate_fraction = 0.8;
  double tau_coh = 0.05;
  double l_q = 1e-6;
  std::vector<double> dt_list{4.2e-3};
  double cycle_time = 76.0;
  double prep_time = 38.0;
  int n_cycles = 500;
  std::uint64_t seed = 1;
  NoiseModel noise;
  double fit_window_k = 0.0;  // 0 -> 5 peak widths
  AcSampling ac;

  /// Built-in defaults with imaging scaled to the default lattice.
  static CampaignConfig defaults();
  static CampaignConfig from_keyvalues(const config::KeyValueFile& kv);
  static CampaignConfig load(const std::filesystem::path& path);
  /// Canonical flat representation; every field, keys sorted.
  config::KeyValueFile to_keyvalues() const;
  std::string to_text() const;
  void validate() const;
  double window_k() const;
  lattice::ReciprocalLattice reciprocal_lattice() const;
};

/// FNV-1a over the canonical key-value text.
std::string config_hash(const CampaignConfig& cfg);

struct RunOptions {
  int workers = 1;
};

struct CycleRecord {
  int index = 0;
  double timestamp_s = 0.0;
  double dt_s = 0.0;
  ForceVec injected = ForceVec::Zero();
  Wavevector dk = Wavevector::Zero();
  Vec2 sigma_k = Vec2::Zero();
  ForceVec force = ForceVec::Zero();
  ForceVec force_sigma = ForceVec::Zero();
  bool converged = false;
  bool operator==(const CycleRecord&) const = default;
};

struct ComponentSummary {
  char label = 'x';
  double mean = 0.0;
  double std = 0.0;
  double sem = 0.0;
  double fit_sigma_mean = 0.0;  // mean per-pair sigma from fit covariance
  metrology::AdevCurve adev;
  double adev_slope = 0.0;
  double sensitivity = 0.0;             // cycle-referenced, N/sqrt(Hz)
  std::pair<double, double> sensitivity_ci{0.0, 0.0};
  double sensitivity_acting_time = 0.0;  // referenced to dt only
  double stability = 0.0;                // ADEV at the largest tau
  double stability_tau = 0.0;
  std::vector<metrology::HistogramPoint> histogram;
  std::optional<metrology::NormalityResult> normality;
  bool operator==(const ComponentSummary&) const = default;
};

struct Summary {
  int schema_version = 1;
  int n_cycles = 0;
  int n_excluded = 0;
  double dt_s = 0.0;
  double cycle_time_s = 0.0;
  ForceVec mean_force = ForceVec::Zero();
  ForceVec sem_force = ForceVec::Zero();
  std::optional<double> angle_rad;
  std::optional<double> angle_sigma_rad;
  ComponentSummary x, y;
  std::optional<std::string> drift;
  bool operator==(const Summary&) const = default;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<CycleRecord> cycles;
  Summary summary;
};

RunRecord run_static_campaign(const CampaignConfig& cfg, const RunOptions& opt = {});

/// Per-cycle forces of one component from converged cycles.
metrology::MeasurementSeries series_of(const RunRecord& rec, char component);

struct ScalingRow {
  double dt_s = 0.0;
  std::uint64_t seed = 0;
  Vec2 sensitivity = Vec2::Zero();
  Vec2 sensitivity_lo = Vec2::Zero();
  Vec2 sensitivity_hi = Vec2::Zero();
  Vec2 sensitivity_acting_time = Vec2::Zero();
  double ql_sensitivity = 0.0;
  double ql_sensitivity_large_n0 = 0.0;
  double ql_sensitivity_short_prep = 0.0;
  int n_excluded = 0;
};
struct ScalingReport {
  std::string config_hash;
  std::vector<ScalingRow> rows;
  Vec2 exponent = Vec2::Zero();
  Vec2 exponent_sigma = Vec2::Zero();
};
ScalingReport run_scaling_campaign(const CampaignConfig& cfg, const RunOptions& opt = {});

struct AcSample {
  double t_s = 0.0;
  Wavevector k_mean = Wavevector::Zero();
  Vec2 k_sem = Vec2::Zero();
  Wavevector k_true = Wavevector::Zero();
  int runs = 0;
};
struct AcReport {
  std::string config_hash;
  std::vector<AcSample> samples;
  metrology::PlateauReport plateaus;
  int n_excluded = 0;
};
std::vector<double> ac_sample_times(const CampaignConfig& cfg);
AcReport run_ac_campaign(const CampaignConfig& cfg, const RunOptions& opt = {});

struct CalibrationResult {
  double centering_jitter_k = 0.0;
  double achieved_sigma_n = 0.0;
  double target_sigma_n = 0.0;
  int iterations = 0;
};
/// Bisection on centering_jitter_k until the per-pair force noise matches the
/// target within `tolerance` (relative). Uses common random numbers.
CalibrationResult calibrate_jitter(const CampaignConfig& cfg, double target_sigma_n, int cycles = 200,
                                   double tolerance = 0.01, const RunOptions& opt = {});
/// Pooled per-pair force std over both components.
double per_pair_sigma(const RunRecord& rec);

// Serialization and report files.
nlohmann::json to_json(const RunRecord& rec);
nlohmann::json to_json(const Summary& s);
Summary summary_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScalingReport& r);
nlohmann::json to_json(const AcReport& r);

void write_series_csv(const RunRecord& rec, std::ostream& os);
std::vector<metrology::MeasurementSeries> read_series_csv(std::istream& is, double tau0);
void write_adev_csv(const metrology::AdevCurve& c, std::ostream& os);

void write_static_report(const RunRecord& rec, const CampaignConfig& cfg, const std::filesystem::path& dir);
void write_scaling_report(const ScalingReport& rep, const CampaignConfig& cfg, const std::filesystem::path& dir);
void write_ac_report(const AcReport& rep, const CampaignConfig& cfg, const std::filesystem::path& dir);

}  // namespace kforce::campaign
