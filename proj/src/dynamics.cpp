#include "kforce/dynamics.hpp"

#include <cmath>

#include "kforce/error.hpp"

namespace kforce::dynamics {
namespace {

// integral_0^theta sgn(sin x) dx, a triangle wave with period 2 pi and peak pi.
double sign_sine_integral(double theta) {
  const double r = theta - 2 * kPi * std::floor(theta / (2 * kPi));
  return r <= kPi ? r : 2 * kPi - r;
}

}  // namespace

ForceProfile ForceProfile::constant(const ForceVec& f) {
  ForceProfile p;
  p.kind = ForceKind::Static;
  p.static_force = f;
  return p;
}

ForceProfile ForceProfile::square_wave(const ForceVec& amplitude, double frequency_hz,
                                       double phase_rad, const ForceVec& offset) {
  ForceProfile p;
  p.kind = ForceKind::SquareWave;
  p.sw_amplitude = amplitude;
  p.sw_frequency_hz = frequency_hz;
  p.sw_phase_rad = phase_rad;
  p.sw_offset = offset;
  p.validate();
  return p;
}

void ForceProfile::validate() const {
  if (kind == ForceKind::SquareWave && !(sw_frequency_hz > 0.0)) {
    throw ConstructionError("square-wave force profile requires frequency > 0");
  }
}

ForceVec force_at(const ForceProfile& profile, double t) {
  if (t < 0.0) throw ArgumentError("force_at: t must be >= 0");
  if (profile.kind == ForceKind::Static) return profile.static_force;
  const double s = std::sin(2 * kPi * profile.sw_frequency_hz * t + profile.sw_phase_rad);
  return profile.sw_offset + (s >= 0.0 ? 1.0 : -1.0) * profile.sw_amplitude;
}

ForceVec impulse(const ForceProfile& profile, double dt) {
  if (dt < 0.0) throw ArgumentError("impulse: dt must be >= 0");
  if (profile.kind == ForceKind::Static) return profile.static_force * dt;
  const double omega = 2 * kPi * profile.sw_frequency_hz;
  const double phase = profile.sw_phase_rad;
  const double sgn_integral =
      (sign_sine_integral(omega * dt + phase) - sign_sine_integral(phase)) / omega;
  return profile.sw_offset * dt + profile.sw_amplitude * sgn_integral;
}

Wavevector evolve_quasimomentum(const Wavevector& k_i, const ForceProfile& profile, double dt) {
  return k_i + impulse(profile, dt) / kHbar;
}

QuasimomentumTrace sample_trace(const Wavevector& k_i, const ForceProfile& profile,
                                const std::vector<double>& times,
                                const lattice::ReciprocalLattice& lat) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) throw ArgumentError("sample_trace: times must be >= 0");
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw ArgumentError("sample_trace: times must be strictly increasing");
    }
  }
  QuasimomentumTrace trace;
  trace.times = times;
  for (double t : times) {
    const Wavevector k = evolve_quasimomentum(k_i, profile, t);
    trace.k_unfolded.push_back(k);
    trace.k_folded.push_back(lattice::fold_to_fbz(k, lat));
  }
  return trace;
}

ForceVec force_from_impulse(const Wavevector& k_i, const Wavevector& k_f, double dt) {
  if (!(dt > 0.0)) throw ArgumentError("force_from_impulse: dt must be > 0");
  return kHbar * (k_f - k_i) / dt;
}

std::vector<Wavevector> unwrap_trace(const std::vector<Wavevector>& folded,
                                     const lattice::ReciprocalLattice& lat) {
  std::vector<Wavevector> out;
  out.reserve(folded.size());
  for (const auto& s : folded) {
    if (out.empty()) {
      out.push_back(s);
      continue;
    }
    out.push_back(s - lat.point(lat.nearest_index(s - out.back())));
  }
  return out;
}

void CondensateState::validate() const {
  if (!(n0 > 0.0)) throw ConstructionError("condensate: n0 must be > 0");
  if (condensate_fraction < 0.0 || condensate_fraction > 1.0) {
    throw ConstructionError("condensate: fraction must lie in [0, 1]");
  }
  if (coherence < 0.0 || coherence > 1.0) {
    throw ConstructionError("condensate: coherence must lie in [0, 1]");
  }
  if (!(l_q_m > 0.0)) throw ConstructionError("condensate: l_q must be > 0");
}

CondensateState apply_decoherence(CondensateState state, double dt, double tau_coh) {
  if (dt < 0.0) throw ArgumentError("apply_decoherence: dt must be >= 0");
  if (!(tau_coh > 0.0)) throw ArgumentError("apply_decoherence: tau_coh must be > 0");
  state.coherence *= std::exp(-dt / tau_coh);
  return state;
}

}  // namespace kforce::dynamics
