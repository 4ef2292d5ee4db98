#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kforce/constants.hpp"
#include "kforce/dynamics.hpp"
#include "kforce/lattice.hpp"

namespace kforce::imaging {

struct ImagingConfig {
  int nx = 256;
  int ny = 256;
  double k_per_pixel = 0.0;       // m^-1 per pixel
  double peak_sigma_k = 0.0;      // Bragg peak rms width, m^-1
  double thermal_sigma_k = 0.0;   // thermal cloud rms width, m^-1
  int shell_cutoff = 1;
  double peak_weight_decay = 0.15;
  double centering_jitter_k = 0.0;  // rms per-shot pattern offset, m^-1
  bool shot_noise = true;           // Poisson sampling of pixel counts

  /// Defaults scaled to the lattice: |b| spans 64 px, peaks ~3 px rms.
  static ImagingConfig defaults_for(const lattice::ReciprocalLattice& lat);
  void validate() const;
};

/// Momentum-space image, row-major (iy * nx + ix). Pixel (0, 0) sits at
/// k_origin; images built here are centred so that k = 0 is pixel (nx/2, ny/2).
struct TofImage {
  int nx = 0;
  int ny = 0;
  double k_per_pixel = 0.0;
  Wavevector k_origin = Wavevector::Zero();
  std::vector<double> counts;

  double at(int ix, int iy) const { return counts[static_cast<std::size_t>(iy) * nx + ix]; }
  double& at(int ix, int iy) { return counts[static_cast<std::size_t>(iy) * nx + ix]; }
  double total() const;
  /// Continuous pixel coordinate of wavevector k.
  Vec2 to_pixel(const Wavevector& k) const { return (k - k_origin) / k_per_pixel; }
  Wavevector to_k(const Vec2& px) const { return k_origin + px * k_per_pixel; }
  bool contains(const Wavevector& k) const;

  static TofImage centered(int nx, int ny, double k_per_pixel);
};

/// Per-shot random inputs. Shots that share `jitter_seed` share the centering
/// offset (paired differential mode).
struct ShotSeeds {
  std::uint64_t noise_seed = 0;
  std::uint64_t jitter_seed = 0;
  static ShotSeeds from(std::uint64_t seed);
};

Wavevector draw_jitter(const ImagingConfig& cfg, std::uint64_t jitter_seed);

/// Noiseless mean image for a given pattern offset.
TofImage expected_tof(const dynamics::CondensateState& state, const lattice::ReciprocalLattice& lat,
                      const ImagingConfig& cfg, const Wavevector& offset = Wavevector::Zero());

TofImage synthesize_tof(const dynamics::CondensateState& state, const lattice::ReciprocalLattice& lat,
                        const ImagingConfig& cfg, const ShotSeeds& seeds);
TofImage synthesize_tof(const dynamics::CondensateState& state, const lattice::ReciprocalLattice& lat,
                        const ImagingConfig& cfg, std::uint64_t seed);

struct PeakFitResult {
  Wavevector k_hat = Wavevector::Zero();
  Vec2 sigma_k = Vec2::Zero();
  double amplitude = 0.0;  // integrated counts in the peak
  double width_k = 0.0;    // fitted rms width, m^-1
  double offset = 0.0;     // background counts per pixel
  bool converged = false;
  double residual_norm = 0.0;  // sqrt(chi^2 / dof) with Poisson weights
  int iterations = 0;
};

/// Windowed Levenberg-Marquardt fit of a pixel-integrated isotropic 2D
/// Gaussian plus constant offset.
PeakFitResult fit_peak(const TofImage& img, const Wavevector& guess, double window_k);

struct DifferentialResult {
  Wavevector dk = Wavevector::Zero();
  Vec2 sigma = Vec2::Zero();
  PeakFitResult ref;
  PeakFitResult sig;
};

/// Thrown when either fit of a differential pair fails to converge.
class MeasurementError : public std::runtime_error {
 public:
  MeasurementError(const PeakFitResult& ref, const PeakFitResult& sig);
  const PeakFitResult& ref() const noexcept { return ref_; }
  const PeakFitResult& sig() const noexcept { return sig_; }

 private:
  PeakFitResult ref_, sig_;
};

DifferentialResult differential_wavevector(const TofImage& img_ref, const TofImage& img_sig,
                                           const Wavevector& guess_ref,
                                           const Wavevector& guess_sig, double window_k);
DifferentialResult differential_wavevector(const TofImage& img_ref, const TofImage& img_sig,
                                           const Wavevector& guess, double window_k);

/// Binary grid file: "TOFI", u32 nx, u32 ny, f32 k_per_pixel, then row-major
/// little-endian f64 counts. Reading yields a centred image.
void write_tofi(const TofImage& img, std::ostream& os);
TofImage read_tofi(std::istream& is);
void save_tofi(const TofImage& img, const std::filesystem::path& path);
TofImage load_tofi(const std::filesystem::path& path);
void write_csv(const TofImage& img, std::ostream& os);

}  // namespace kforce::imaging
