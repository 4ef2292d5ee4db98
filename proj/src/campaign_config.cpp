#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "kforce/campaign.hpp"
#include "kforce/error.hpp"

namespace kforce::campaign {
namespace {

using config::format_number;
using config::KeyValueFile;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "lattice.wavelength_m",        "lattice.beam_angles_deg",
      "force.kind",                  "force.static_n",
      "force.sw_amplitude_n",        "force.sw_frequency_hz",
      "force.sw_phase_rad",          "force.sw_offset_n",
      "condensate.n0",               "condensate.fraction",
      "condensate.tau_coh_s",        "condensate.l_q_m",
      "imaging.grid_px",             "imaging.k_per_pixel_m_inv",
      "imaging.peak_sigma_k_m_inv",  "imaging.thermal_sigma_k_m_inv",
      "imaging.shell_cutoff",        "imaging.peak_weight_decay",
      "imaging.fit_window_k_m_inv",  "noise.centering_jitter_k_m_inv",
      "noise.jitter_mode",           "noise.drift",
      "noise.shot_noise",
      "noise.drift_rate_n_per_s",    "noise.drift_step_n",
      "campaign.dt_list_s",          "campaign.cycle_time_s",
      "campaign.prep_time_s",        "campaign.n_cycles",
      "campaign.seed",               "ac.periods",
      "ac.samples_per_half_period",  "ac.runs_per_sample",
      "ac.sample_times_s"};
  return keys;
}

Vec2 vec2(const KeyValueFile& kv, const std::string& key) {
  const auto v = kv.numbers(key);
  if (v.size() != 2) throw ConfigError("config key '" + key + "': expected [x, y]");
  return {v[0], v[1]};
}

std::vector<std::string> tokens(const Vec2& v) { return {format_number(v.x()), format_number(v.y())}; }

std::vector<std::string> tokens(const std::vector<double>& v) {
  std::vector<std::string> out;
  for (double d : v) out.push_back(format_number(d));
  return out;
}

template <typename T>
T positive_int(const KeyValueFile& kv, const std::string& key) {
  const long v = kv.integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<T>(v);
}

}  // namespace

CampaignConfig CampaignConfig::defaults() {
  CampaignConfig c;
  c.force = dynamics::ForceProfile::constant(ForceVec(0.0, 7.81e-26));
  c.imaging = imaging::ImagingConfig::defaults_for(c.reciprocal_lattice());
  return c;
}

lattice::ReciprocalLattice CampaignConfig::reciprocal_lattice() const {
  return lattice::build_reciprocal_lattice(geometry);
}

double CampaignConfig::window_k() const { return fit_window_k > 0.0 ? fit_window_k : 5.0 * imaging.peak_sigma_k; }

CampaignConfig CampaignConfig::from_keyvalues(const KeyValueFile& kv) {
  for (const auto& k : kv.keys()) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  CampaignConfig c = defaults();
  try {
    if (kv.has("lattice.wavelength_m")) c.geometry.wavelength_m = kv.number("lattice.wavelength_m");
    if (kv.has("lattice.beam_angles_deg")) {
      const auto a = kv.numbers("lattice.beam_angles_deg");
      if (a.size() != 3) throw ConfigError("lattice.beam_angles_deg needs exactly three angles");
      for (int i = 0; i < 3; ++i) c.geometry.beam_angles_rad[i] = a[i] * kPi / 180.0;
    }
    const auto lat = c.reciprocal_lattice();
    c.imaging = imaging::ImagingConfig::defaults_for(lat);

    if (kv.has("force.kind")) {
      const std::string kind = kv.string("force.kind");
      if (kind == "static") c.force.kind = dynamics::ForceKind::Static;
      else if (kind == "square_wave") c.force.kind = dynamics::ForceKind::SquareWave;
      else throw ConfigError("force.kind must be 'static' or 'square_wave'");
    }
    if (kv.has("force.static_n")) c.force.static_force = vec2(kv, "force.static_n");
    if (kv.has("force.sw_amplitude_n")) c.force.sw_amplitude = vec2(kv, "force.sw_amplitude_n");
    if (kv.has("force.sw_frequency_hz")) c.force.sw_frequency_hz = kv.number("force.sw_frequency_hz");
    if (kv.has("force.sw_phase_rad")) c.force.sw_phase_rad = kv.number("force.sw_phase_rad");
    if (kv.has("force.sw_offset_n")) c.force.sw_offset = vec2(kv, "force.sw_offset_n");

    if (kv.has("condensate.n0")) c.n0 = kv.number("condensate.n0");
    if (kv.has("condensate.fraction")) c.condensate_fraction = kv.number("condensate.fraction");
    if (kv.has("condensate.tau_coh_s")) c.tau_coh = kv.number("condensate.tau_coh_s");
    if (kv.has("condensate.l_q_m")) c.l_q = kv.number("condensate.l_q_m");

    if (kv.has("imaging.grid_px")) {
      const auto g = kv.numbers("imaging.grid_px");
      if (g.size() != 2 || g[0] != std::floor(g[0]) || g[1] != std::floor(g[1])) {
        throw ConfigError("imaging.grid_px must be [nx, ny] integers");
      }
      c.imaging.nx = static_cast<int>(g[0]);
      c.imaging.ny = static_cast<int>(g[1]);
    }
    if (kv.has("imaging.k_per_pixel_m_inv")) c.imaging.k_per_pixel = kv.number("imaging.k_per_pixel_m_inv");
    if (kv.has("imaging.peak_sigma_k_m_inv")) c.imaging.peak_sigma_k = kv.number("imaging.peak_sigma_k_m_inv");
    if (kv.has("imaging.thermal_sigma_k_m_inv")) {
      c.imaging.thermal_sigma_k = kv.number("imaging.thermal_sigma_k_m_inv");
    }
    if (kv.has("imaging.shell_cutoff")) c.imaging.shell_cutoff = positive_int<int>(kv, "imaging.shell_cutoff");
    if (kv.has("imaging.peak_weight_decay")) c.imaging.peak_weight_decay = kv.number("imaging.peak_weight_decay");
    if (kv.has("imaging.fit_window_k_m_inv")) c.fit_window_k = kv.number("imaging.fit_window_k_m_inv");

    if (kv.has("noise.centering_jitter_k_m_inv")) {
      c.imaging.centering_jitter_k = kv.number("noise.centering_jitter_k_m_inv");
    }
    if (kv.has("noise.shot_noise")) {
      const std::string v = kv.string("noise.shot_noise");
      if (v != "true" && v != "false") throw ConfigError("noise.shot_noise must be true or false");
      c.imaging.shot_noise = v == "true";
    }
    if (kv.has("noise.jitter_mode")) {
      const std::string m = kv.string("noise.jitter_mode");
      if (m == "independent") c.noise.jitter_mode = JitterMode::Independent;
      else if (m == "paired") c.noise.jitter_mode = JitterMode::Paired;
      else throw ConfigError("noise.jitter_mode must be 'independent' or 'paired'");
    }
    if (kv.has("noise.drift")) {
      const std::string d = kv.string("noise.drift");
      if (d == "none") c.noise.drift = DriftKind::None;
      else if (d == "linear") c.noise.drift = DriftKind::Linear;
      else if (d == "random_walk") c.noise.drift = DriftKind::RandomWalk;
      else throw ConfigError("noise.drift must be 'none', 'linear' or 'random_walk'");
    }
    if (kv.has("noise.drift_rate_n_per_s")) c.noise.drift_rate_n_per_s = kv.number("noise.drift_rate_n_per_s");
    if (kv.has("noise.drift_step_n")) c.noise.drift_step_n = kv.number("noise.drift_step_n");

    if (kv.has("campaign.dt_list_s")) c.dt_list = kv.numbers("campaign.dt_list_s");
    if (kv.has("campaign.cycle_time_s")) c.cycle_time = kv.number("campaign.cycle_time_s");
    if (kv.has("campaign.prep_time_s")) c.prep_time = kv.number("campaign.prep_time_s");
    if (kv.has("campaign.n_cycles")) c.n_cycles = positive_int<int>(kv, "campaign.n_cycles");
    if (kv.has("campaign.seed")) c.seed = positive_int<std::uint64_t>(kv, "campaign.seed");

    if (kv.has("ac.periods")) c.ac.periods = positive_int<int>(kv, "ac.periods");
    if (kv.has("ac.samples_per_half_period")) {
      c.ac.samples_per_half_period = positive_int<int>(kv, "ac.samples_per_half_period");
    }
    if (kv.has("ac.runs_per_sample")) c.ac.runs_per_sample = positive_int<int>(kv, "ac.runs_per_sample");
    if (kv.has("ac.sample_times_s")) c.ac.sample_times = kv.numbers("ac.sample_times_s");
    c.validate();
  } catch (const ConstructionError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

CampaignConfig CampaignConfig::load(const std::filesystem::path& path) {
  return from_keyvalues(KeyValueFile::load(path));
}

void CampaignConfig::validate() const {
  geometry.validate();
  imaging.validate();
  force.validate();
  dynamics::CondensateState{n0, condensate_fraction, Wavevector::Zero(), 1.0, l_q}.validate();
  if (!(tau_coh > 0.0)) throw ConfigError("condensate.tau_coh_s must be > 0");
  if (n_cycles < 2) throw ConfigError("campaign.n_cycles must be >= 2");
  if (dt_list.empty()) throw ConfigError("campaign.dt_list_s must not be empty");
  for (double dt : dt_list) {
    if (!(dt > 0.0)) throw ConfigError("campaign.dt_list_s entries must be > 0");
  }
  if (!(cycle_time > 0.0)) throw ConfigError("campaign.cycle_time_s must be > 0");
  if (!(prep_time >= 0.0) || !(prep_time < cycle_time)) {
    throw ConfigError("campaign.prep_time_s must lie in [0, cycle_time)");
  }
  if (!(fit_window_k >= 0.0)) throw ConfigError("imaging.fit_window_k_m_inv must be >= 0");
  if (noise.drift_step_n < 0.0) throw ConfigError("noise.drift_step_n must be >= 0");
  if (ac.periods < 1 || ac.samples_per_half_period < 1 || ac.runs_per_sample < 1) {
    throw ConfigError("ac sampling parameters must be >= 1");
  }
}

KeyValueFile CampaignConfig::to_keyvalues() const {
  KeyValueFile kv;
  auto scalar = [&](const std::string& k, double v) { kv.set(k, {format_number(v)}, false); };
  auto word = [&](const std::string& k, const std::string& v) { kv.set(k, {v}, false); };
  scalar("lattice.wavelength_m", geometry.wavelength_m);
  std::vector<double> deg;
  for (double a : geometry.beam_angles_rad) deg.push_back(a * 180.0 / kPi);
  kv.set("lattice.beam_angles_deg", tokens(deg), true);
  word("force.kind", force.kind == dynamics::ForceKind::Static ? "static" : "square_wave");
  kv.set("force.static_n", tokens(force.static_force), true);
  kv.set("force.sw_amplitude_n", tokens(force.sw_amplitude), true);
  scalar("force.sw_frequency_hz", force.sw_frequency_hz);
  scalar("force.sw_phase_rad", force.sw_phase_rad);
  kv.set("force.sw_offset_n", tokens(force.sw_offset), true);
  scalar("condensate.n0", n0);
  scalar("condensate.fraction", condensate_fraction);
  scalar("condensate.tau_coh_s", tau_coh);
  scalar("condensate.l_q_m", l_q);
  kv.set("imaging.grid_px", {std::to_string(imaging.nx), std::to_string(imaging.ny)}, true);
  scalar("imaging.k_per_pixel_m_inv", imaging.k_per_pixel);
  scalar("imaging.peak_sigma_k_m_inv", imaging.peak_sigma_k);
  scalar("imaging.thermal_sigma_k_m_inv", imaging.thermal_sigma_k);
  word("imaging.shell_cutoff", std::to_string(imaging.shell_cutoff));
  scalar("imaging.peak_weight_decay", imaging.peak_weight_decay);
  scalar("imaging.fit_window_k_m_inv", fit_window_k);
  scalar("noise.centering_jitter_k_m_inv", imaging.centering_jitter_k);
  word("noise.shot_noise", imaging.shot_noise ? "true" : "false");
  word("noise.jitter_mode", noise.jitter_mode == JitterMode::Paired ? "paired" : "independent");
  word("noise.drift", noise.drift == DriftKind::None     ? "none"
                      : noise.drift == DriftKind::Linear ? "linear"
                                                         : "random_walk");
  scalar("noise.drift_rate_n_per_s", noise.drift_rate_n_per_s);
  scalar("noise.drift_step_n", noise.drift_step_n);
  kv.set("campaign.dt_list_s", tokens(dt_list), true);
  scalar("campaign.cycle_time_s", cycle_time);
  scalar("campaign.prep_time_s", prep_time);
  word("campaign.n_cycles", std::to_string(n_cycles));
  word("campaign.seed", std::to_string(seed));
  word("ac.periods", std::to_string(ac.periods));
  word("ac.samples_per_half_period", std::to_string(ac.samples_per_half_period));
  word("ac.runs_per_sample", std::to_string(ac.runs_per_sample));
  kv.set("ac.sample_times_s", tokens(ac.sample_times), true);
  return kv;
}

std::string CampaignConfig::to_text() const { return to_keyvalues().render(); }

std::string config_hash(const CampaignConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kforce::campaign
