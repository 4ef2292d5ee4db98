#include "kforce/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "kforce/error.hpp"
#include "kforce/rng.hpp"

namespace kforce::campaign {
namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index writes
// only its own output slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

struct PairOutcome {
  bool converged = false;
  Wavevector dk = Wavevector::Zero();
  Vec2 sigma = Vec2::Zero();
};

// One differential measurement: a reference shot at k = 0 and a signal shot
// after the force acted for dt. The signal peak is unwrapped against the
// predicted wavevector so zone crossings do not alias the result.
PairOutcome measure_pair(const CampaignConfig& cfg, const lattice::ReciprocalLattice& lat,
                         const dynamics::ForceProfile& applied, double dt, const Wavevector& k_predicted,
                         std::uint64_t pair_seed) {
  dynamics::CondensateState ref;
  ref.n0 = cfg.n0;
  ref.condensate_fraction = cfg.condensate_fraction;
  ref.l_q_m = cfg.l_q;
  dynamics::CondensateState sig = dynamics::apply_decoherence(ref, dt, cfg.tau_coh);
  sig.k = dynamics::evolve_quasimomentum(Wavevector::Zero(), applied, dt);

  const std::uint64_t jitter_ref = derive_seed(pair_seed, 2);
  const std::uint64_t jitter_sig = cfg.noise.jitter_mode == JitterMode::Paired ? jitter_ref : derive_seed(pair_seed, 3);
  const auto img_ref = imaging::synthesize_tof(ref, lat, cfg.imaging, {derive_seed(pair_seed, 0), jitter_ref});
  const auto img_sig = imaging::synthesize_tof(sig, lat, cfg.imaging, {derive_seed(pair_seed, 1), jitter_sig});

  PairOutcome out;
  try {
    const auto d = imaging::differential_wavevector(img_ref, img_sig, Wavevector::Zero(),
                                                    lattice::fold_to_fbz(k_predicted, lat), cfg.window_k());
    const Wavevector k_sig = dynamics::unwrap_trace({k_predicted, d.sig.k_hat}, lat)[1];
    out.dk = k_sig - d.ref.k_hat;
    out.sigma = d.sigma;
    out.converged = true;
  } catch (const imaging::MeasurementError&) {
    out.converged = false;
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> drift_offsets(const CampaignConfig& cfg) {
  std::vector<double> d(static_cast<std::size_t>(cfg.n_cycles), 0.0);
  switch (cfg.noise.drift) {
    case DriftKind::None:
      break;
    case DriftKind::Linear:
      for (std::size_t c = 0; c < d.size(); ++c) d[c] = cfg.noise.drift_rate_n_per_s * c * cfg.cycle_time;
      break;
    case DriftKind::RandomWalk: {
      Engine eng = make_engine(derive_seed(cfg.seed, 0xd71f7ULL));
      std::normal_distribution<double> step(0.0, 1.0);
      double acc = 0.0;
      for (std::size_t c = 0; c < d.size(); ++c) {
        d[c] = acc;
        acc += cfg.noise.drift_step_n * step(eng);
      }
      break;
    }
  }
  return d;
}

ComponentSummary summarize_component(const RunRecord& rec, char label, double dt) {
  ComponentSummary cs;
  cs.label = label;
  const int c = label == 'x' ? 0 : 1;
  const auto series = series_of(rec, label);
  cs.mean = mean_of(series.values);
  cs.std = std_of(series.values);
  cs.sem = cs.std / std::sqrt(static_cast<double>(series.size()));
  std::vector<double> fit_sigmas;
  for (const auto& cy : rec.cycles) {
    if (cy.converged) fit_sigmas.push_back(cy.force_sigma[c]);
  }
  cs.fit_sigma_mean = mean_of(fit_sigmas);

  const double tau0 = series.cycle_time;
  cs.adev = metrology::allan_deviation(series, metrology::octave_taus(series));
  if (cs.adev.taus.empty()) return cs;
  const double slope_span = std::max<double>(2.0, std::floor(series.size() / 4.0)) * tau0;
  try {
    cs.adev_slope = metrology::adev_slope(cs.adev, slope_span);
  } catch (const ArgumentError&) {
    cs.adev_slope = 0.0;
  }
  cs.sensitivity = metrology::sensitivity_from_adev(cs.adev, tau0);
  cs.sensitivity_ci = {cs.adev.ci_lower.front() * std::sqrt(tau0), cs.adev.ci_upper.front() * std::sqrt(tau0)};
  cs.sensitivity_acting_time = cs.adev.adev.front() * std::sqrt(dt);
  cs.stability = cs.adev.adev.back();
  cs.stability_tau = cs.adev.taus.back();

  std::vector<int> bins;
  for (std::size_t b = 1; 2 * b <= series.size(); b *= 2) bins.push_back(static_cast<int>(b));
  cs.histogram = metrology::histogram_stability(series, bins);
  if (series.size() >= 50) {
    try {
      cs.normality = metrology::normality_diagnostic(series);
    } catch (const DegenerateError&) {
      cs.normality.reset();
    }
  }
  return cs;
}

Summary summarize(const RunRecord& rec, const CampaignConfig& cfg, double dt) {
  Summary s;
  s.n_cycles = static_cast<int>(rec.cycles.size());
  s.n_excluded = static_cast<int>(std::count_if(rec.cycles.begin(), rec.cycles.end(),
                                                [](const CycleRecord& c) { return !c.converged; }));
  if (s.n_cycles - s.n_excluded < 2) {
    throw NumericalError("static campaign: fewer than two converged cycles");
  }
  s.dt_s = dt;
  s.cycle_time_s = cfg.cycle_time;
  s.x = summarize_component(rec, 'x', dt);
  s.y = summarize_component(rec, 'y', dt);
  s.mean_force = {s.x.mean, s.y.mean};
  s.sem_force = {s.x.sem, s.y.sem};
  if (s.mean_force.squaredNorm() > 0.0) {
    s.angle_rad = metrology::force_angle(s.mean_force);
    const double n2 = s.mean_force.squaredNorm();
    s.angle_sigma_rad = std::hypot(s.mean_force.y() * s.sem_force.x(), s.mean_force.x() * s.sem_force.y()) / n2;
  }
  if (cfg.noise.drift == DriftKind::Linear) s.drift = "linear";
  if (cfg.noise.drift == DriftKind::RandomWalk) s.drift = "random_walk";
  return s;
}

}  // namespace

metrology::MeasurementSeries series_of(const RunRecord& rec, char component) {
  const int c = component == 'x' ? 0 : 1;
  metrology::MeasurementSeries s;
  s.label = component;
  s.cycle_time = rec.summary.cycle_time_s;
  for (const auto& cy : rec.cycles) {
    if (!cy.converged) continue;
    s.values.push_back(cy.force[c]);
    s.start_times.push_back(cy.timestamp_s);
  }
  s.validate();
  return s;
}

RunRecord run_static_campaign(const CampaignConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  if (cfg.force.kind != dynamics::ForceKind::Static) {
    throw ArgumentError("static campaign requires a static force profile");
  }
  const auto lat = cfg.reciprocal_lattice();
  const double dt = cfg.dt_list.front();
  const Wavevector k_predicted = dynamics::evolve_quasimomentum(Wavevector::Zero(), cfg.force, dt);
  const auto drift = drift_offsets(cfg);

  RunRecord rec;
  rec.config_hash = config_hash(cfg);
  rec.seed = cfg.seed;
  rec.cycles.resize(static_cast<std::size_t>(cfg.n_cycles));
  parallel_for(rec.cycles.size(), opt.workers, [&](std::size_t i) {
    CycleRecord& cy = rec.cycles[i];
    cy.index = static_cast<int>(i);
    cy.timestamp_s = static_cast<double>(i) * cfg.cycle_time;
    cy.dt_s = dt;
    cy.injected = cfg.force.static_force + ForceVec(0.0, drift[i]);
    const auto applied = dynamics::ForceProfile::constant(cy.injected);
    const PairOutcome o = measure_pair(cfg, lat, applied, dt, k_predicted, derive_seed(cfg.seed, i));
    cy.converged = o.converged;
    if (o.converged) {
      cy.dk = o.dk;
      cy.sigma_k = o.sigma;
      cy.force = dynamics::force_from_impulse(Wavevector::Zero(), o.dk, dt);
      cy.force_sigma = kHbar * o.sigma / dt;
    }
  });
  rec.summary.cycle_time_s = cfg.cycle_time;
  rec.summary = summarize(rec, cfg, dt);
  return rec;
}

ScalingReport run_scaling_campaign(const CampaignConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  const std::set<double> distinct(cfg.dt_list.begin(), cfg.dt_list.end());
  if (distinct.size() < 3) throw ArgumentError("scaling campaign needs at least three distinct force-acting times");
  ScalingReport rep;
  rep.config_hash = config_hash(cfg);
  const metrology::PhysicalConstants pc;
  const double n_condensed = cfg.n0 * cfg.condensate_fraction;
  const double short_cycle = std::max(cfg.cycle_time - 2.0 * (cfg.prep_time - 3.0), 1e-3);
  std::vector<double> log_dt, log_sx, log_sy;
  for (std::size_t i = 0; i < cfg.dt_list.size(); ++i) {
    CampaignConfig sub = cfg;
    sub.dt_list = {cfg.dt_list[i]};
    sub.seed = derive_seed(cfg.seed, i);
    const RunRecord rec = run_static_campaign(sub, opt);
    ScalingRow row;
    row.dt_s = cfg.dt_list[i];
    row.seed = sub.seed;
    row.sensitivity = {rec.summary.x.sensitivity, rec.summary.y.sensitivity};
    row.sensitivity_lo = {rec.summary.x.sensitivity_ci.first, rec.summary.y.sensitivity_ci.first};
    row.sensitivity_hi = {rec.summary.x.sensitivity_ci.second, rec.summary.y.sensitivity_ci.second};
    row.sensitivity_acting_time = {rec.summary.x.sensitivity_acting_time, rec.summary.y.sensitivity_acting_time};
    row.ql_sensitivity = metrology::ql_reciprocal_sensitivity(pc, n_condensed, row.dt_s, cfg.l_q, cfg.cycle_time);
    row.ql_sensitivity_large_n0 = metrology::ql_reciprocal_sensitivity(pc, 1e7, row.dt_s, cfg.l_q, cfg.cycle_time);
    row.ql_sensitivity_short_prep =
        metrology::ql_reciprocal_sensitivity(pc, n_condensed, row.dt_s, cfg.l_q, short_cycle);
    row.n_excluded = rec.summary.n_excluded;
    rep.rows.push_back(row);
    log_dt.push_back(std::log(row.dt_s));
    log_sx.push_back(std::log(row.sensitivity.x()));
    log_sy.push_back(std::log(row.sensitivity.y()));
  }
  const auto fx = metrology::fit_line(log_dt, log_sx);
  const auto fy = metrology::fit_line(log_dt, log_sy);
  rep.exponent = {fx.slope, fy.slope};
  rep.exponent_sigma = {fx.slope_sigma, fy.slope_sigma};
  return rep;
}

std::vector<double> ac_sample_times(const CampaignConfig& cfg) {
  if (!cfg.ac.sample_times.empty()) return cfg.ac.sample_times;
  if (!(cfg.force.sw_frequency_hz > 0.0)) throw ArgumentError("a.c. sampling needs a modulation frequency");
  const double step = 0.5 / cfg.force.sw_frequency_hz / cfg.ac.samples_per_half_period;
  std::vector<double> t;
  const int n = 2 * cfg.ac.periods * cfg.ac.samples_per_half_period;
  for (int j = 0; j <= n; ++j) t.push_back(j * step);
  return t;
}

AcReport run_ac_campaign(const CampaignConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  if (cfg.force.kind != dynamics::ForceKind::SquareWave) {
    throw ArgumentError("a.c. campaign requires a square-wave force profile");
  }
  const auto times = ac_sample_times(cfg);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || (i > 0 && !(times[i] > times[i - 1]))) {
      throw ArgumentError("a.c. sample times must be non-negative and strictly increasing");
    }
  }
  const double period = 1.0 / cfg.force.sw_frequency_hz;
  if (times.size() < 2 || times.back() - times.front() < 2.0 * period * (1.0 - 1e-9)) {
    throw ArgumentError("a.c. sample times must span at least two modulation periods");
  }
  const auto lat = cfg.reciprocal_lattice();
  const auto runs = static_cast<std::size_t>(cfg.ac.runs_per_sample);
  std::vector<PairOutcome> shots(times.size() * runs);
  parallel_for(shots.size(), opt.workers, [&](std::size_t i) {
    const double t = times[i / runs];
    const Wavevector k_pred = dynamics::evolve_quasimomentum(Wavevector::Zero(), cfg.force, t);
    shots[i] = measure_pair(cfg, lat, cfg.force, t, k_pred, derive_seed(cfg.seed, i));
  });

  AcReport rep;
  rep.config_hash = config_hash(cfg);
  dynamics::QuasimomentumTrace trace;
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<double> kx, ky;
    Vec2 fit_sigma = Vec2::Zero();
    for (std::size_t r = 0; r < runs; ++r) {
      const PairOutcome& o = shots[j * runs + r];
      if (!o.converged) {
        ++rep.n_excluded;
        continue;
      }
      kx.push_back(o.dk.x());
      ky.push_back(o.dk.y());
      fit_sigma = o.sigma;
    }
    if (kx.empty()) continue;
    AcSample s;
    s.t_s = times[j];
    s.runs = static_cast<int>(kx.size());
    s.k_mean = {mean_of(kx), mean_of(ky)};
    s.k_sem = kx.size() >= 2 ? Vec2(std_of(kx), std_of(ky)) / std::sqrt(static_cast<double>(kx.size())) : fit_sigma;
    s.k_true = dynamics::evolve_quasimomentum(Wavevector::Zero(), cfg.force, times[j]);
    rep.samples.push_back(s);
    trace.times.push_back(s.t_s);
    trace.k_unfolded.push_back(s.k_mean);
    trace.k_folded.push_back(lattice::fold_to_fbz(s.k_mean, lat));
  }
  // Unweighted: a standard error from a handful of runs is too noisy to weight by.
  rep.plateaus = metrology::fit_square_wave_plateaus(trace, cfg.force.sw_frequency_hz, times.back(),
                                                     cfg.force.sw_phase_rad);
  return rep;
}

double per_pair_sigma(const RunRecord& rec) {
  const double sx = rec.summary.x.std, sy = rec.summary.y.std;
  return std::sqrt(0.5 * (sx * sx + sy * sy));
}

CalibrationResult calibrate_jitter(const CampaignConfig& cfg, double target_sigma_n, int cycles, double tolerance,
                                   const RunOptions& opt) {
  if (!(target_sigma_n > 0.0)) throw ArgumentError("calibrate: target sigma must be > 0");
  if (cycles < 2) throw ArgumentError("calibrate: need at least two cycles");
  CampaignConfig base = cfg;
  base.n_cycles = cycles;
  base.noise.drift = DriftKind::None;
  if (base.force.kind != dynamics::ForceKind::Static) base.force = dynamics::ForceProfile::constant(ForceVec::Zero());

  CalibrationResult res;
  res.target_sigma_n = target_sigma_n;
  auto measure = [&](double jitter) {
    CampaignConfig c = base;
    c.imaging.centering_jitter_k = jitter;
    ++res.iterations;
    return per_pair_sigma(run_static_campaign(c, opt));
  };
  auto within = [&](double s) { return std::abs(s / target_sigma_n - 1.0) < tolerance; };

  double lo = 0.0;
  const double s_lo = measure(lo);
  if (within(s_lo)) return {lo, s_lo, target_sigma_n, res.iterations};
  if (s_lo > target_sigma_n) {
    throw NumericalError("calibrate: shot noise alone exceeds the target force noise");
  }
  double hi = target_sigma_n * base.dt_list.front() / kHbar;
  double s_hi = measure(hi);
  while (s_hi < target_sigma_n) {
    lo = hi;
    hi *= 2.0;
    s_hi = measure(hi);
    if (res.iterations > 40) throw NumericalError("calibrate: could not bracket the target");
  }
  if (within(s_hi)) return {hi, s_hi, target_sigma_n, res.iterations};
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = measure(mid);
    if (within(s)) {
      res.centering_jitter_k = mid;
      res.achieved_sigma_n = s;
      return res;
    }
    (s < target_sigma_n ? lo : hi) = mid;
  }
  throw NumericalError("calibrate: bisection did not reach the tolerance");
}

}  // namespace kforce::campaign
