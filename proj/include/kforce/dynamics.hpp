#pragma once

#include <vector>

#include "kforce/constants.hpp"
#include "kforce/lattice.hpp"

namespace kforce::dynamics {

enum class ForceKind { Static, SquareWave };

/// Applied in-plane force, either constant or a square-wave modulation
/// F(t) = offset + amplitude * sgn(sin(2 pi f t + phase)), sgn(0) = +1.
struct ForceProfile {
  ForceKind kind = ForceKind::Static;
  ForceVec static_force = ForceVec::Zero();
  ForceVec sw_amplitude = ForceVec::Zero();
  double sw_frequency_hz = 0.0;
  double sw_phase_rad = 0.0;
  ForceVec sw_offset = ForceVec::Zero();

  static ForceProfile constant(const ForceVec& f);
  static ForceProfile square_wave(const ForceVec& amplitude, double frequency_hz,
                                  double phase_rad = 0.0,
                                  const ForceVec& offset = ForceVec::Zero());
  void validate() const;
};

ForceVec force_at(const ForceProfile& profile, double t);

/// Closed-form impulse integral_0^dt F(t) dt (N s).
ForceVec impulse(const ForceProfile& profile, double dt);

/// k_f = k_i + impulse / hbar. Unfolded.
Wavevector evolve_quasimomentum(const Wavevector& k_i, const ForceProfile& profile, double dt);

struct QuasimomentumTrace {
  std::vector<double> times;
  std::vector<Wavevector> k_unfolded;
  std::vector<Wavevector> k_folded;
};

QuasimomentumTrace sample_trace(const Wavevector& k_i, const ForceProfile& profile,
                                const std::vector<double>& times,
                                const lattice::ReciprocalLattice& lat);

/// Impulse-momentum inversion F = hbar (k_f - k_i) / dt.
ForceVec force_from_impulse(const Wavevector& k_i, const Wavevector& k_f, double dt);

/// Undo zone folding: each sample is moved by the reciprocal lattice vector
/// that minimises the jump from its (already unwrapped) predecessor.
/// Requires true successive increments below half the smallest FBZ width.
std::vector<Wavevector> unwrap_trace(const std::vector<Wavevector>& folded,
                                     const lattice::ReciprocalLattice& lat);

struct CondensateState {
  double n0 = 2e5;
  double condensate_fraction = 0.8;
  Wavevector k = Wavevector::Zero();
  double coherence = 1.0;
  double l_q_m = 1e-6;

  void validate() const;
};

/// Phenomenological contrast decay: coherence *= exp(-dt / tau_coh).
CondensateState apply_decoherence(CondensateState state, double dt, double tau_coh);

}  // namespace kforce::dynamics
