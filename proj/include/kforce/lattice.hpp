#pragma once

#include <array>
#include <vector>

#include "kforce/constants.hpp"

namespace kforce::lattice {

/// Three lattice beams propagating in the x-y plane.
struct BeamGeometry {
  double wavelength_m = 1064e-9;
  /// Propagation directions (rad). Default: mutual 120 deg, one beam along +y.
  std::array<double, 3> beam_angles_rad{kPi / 2, 7 * kPi / 6, 11 * kPi / 6};

  /// Throws ConstructionError when the invariants fail.
  void validate() const;
};

/// Integer coordinates of a reciprocal lattice point in the (b1, b2) basis.
struct LatticeIndex {
  long n = 0;
  long m = 0;
  bool operator==(const LatticeIndex&) const = default;
};

/// Reciprocal space of the triangular light crystal plus its first
/// Brillouin zone (Wigner-Seitz cell, vertices counterclockwise).
class ReciprocalLattice {
 public:
  ReciprocalLattice(const Wavevector& b1, const Wavevector& b2);

  const Wavevector& b1() const noexcept { return b1_; }
  const Wavevector& b2() const noexcept { return b2_; }
  const std::vector<Wavevector>& fbz_vertices() const noexcept { return fbz_; }

  Wavevector point(const LatticeIndex& idx) const {
    return static_cast<double>(idx.n) * b1_ + static_cast<double>(idx.m) * b2_;
  }
  double cell_area() const noexcept;
  double fbz_area() const;
  /// Shortest nonzero reciprocal vector length.
  double min_g() const noexcept;
  /// Index of the lattice point closest to q; ties go to the candidate that
  /// leaves the lexicographically smallest q - G.
  LatticeIndex nearest_index(const Wavevector& q) const;

 private:
  Wavevector b1_, b2_;
  // Lagrange-reduced basis and the change of basis back to (b1, b2).
  Wavevector r1_, r2_;
  Eigen::Matrix2d reduced_to_basis_;
  Eigen::Matrix2d reduced_inverse_;
  std::vector<Wavevector> fbz_;
};

/// Beam wavevector k_i = (2 pi / lambda) (cos theta_i, sin theta_i).
Wavevector beam_wavevector(const BeamGeometry& geom, int i);

ReciprocalLattice build_reciprocal_lattice(const BeamGeometry& geom);

Wavevector fold_to_fbz(const Wavevector& q, const ReciprocalLattice& lat);

/// Reciprocal lattice points grouped into shells of equal |G|; shell 0 is the
/// origin.
struct ShellPoint {
  Wavevector g;
  int shell = 0;
};
std::vector<ShellPoint> lattice_shells(const ReciprocalLattice& lat, int shell_cutoff);

/// Bragg peak centres G + q for every G within shell_cutoff shells, sorted by
/// |G| then lexicographically.
std::vector<Wavevector> bragg_peak_positions(const ReciprocalLattice& lat,
                                             const Wavevector& q, int shell_cutoff);

}  // namespace kforce::lattice
