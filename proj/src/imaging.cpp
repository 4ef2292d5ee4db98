#include "kforce/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include "kforce/error.hpp"
#include "kforce/rng.hpp"

namespace kforce::imaging {
namespace {

// Fraction of a unit-variance Gaussian centred at `centre` (pixel units, width
// `sigma` px) that falls inside pixel i.
double pixel_mass(int i, double centre, double sigma) {
  const double a = (i - 0.5 - centre) / (std::sqrt(2.0) * sigma);
  const double b = (i + 0.5 - centre) / (std::sqrt(2.0) * sigma);
  const double v = a > 0.0 ? 0.5 * (std::erfc(a) - std::erfc(b)) : 0.5 * (std::erfc(-b) - std::erfc(-a));
  return std::max(v, 0.0);
}

void add_gaussian(TofImage& img, const Vec2& centre_px, double sigma_px, double atoms) {
  if (atoms <= 0.0) return;
  std::vector<double> gx(static_cast<std::size_t>(img.nx)), gy(static_cast<std::size_t>(img.ny));
  for (int i = 0; i < img.nx; ++i) gx[i] = pixel_mass(i, centre_px.x(), sigma_px);
  for (int j = 0; j < img.ny; ++j) gy[j] = atoms * pixel_mass(j, centre_px.y(), sigma_px);
  for (int j = 0; j < img.ny; ++j) {
    if (gy[j] == 0.0) continue;
    double* row = img.counts.data() + static_cast<std::size_t>(j) * img.nx;
    for (int i = 0; i < img.nx; ++i) row[i] += gy[j] * gx[i];
  }
}

template <typename T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U u = std::bit_cast<U>(v);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw ArgumentError("TOFI: truncated stream");
  }
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

}  // namespace

ImagingConfig ImagingConfig::defaults_for(const lattice::ReciprocalLattice& lat) {
  ImagingConfig cfg;
  const double b = lat.min_g();
  cfg.k_per_pixel = b / 64.0;
  cfg.peak_sigma_k = b / 20.0;
  cfg.thermal_sigma_k = b / 2.0;
  return cfg;
}

void ImagingConfig::validate() const {
  if (nx < 16 || ny < 16) throw ConstructionError("imaging: grid must be at least 16x16");
  if (!(k_per_pixel > 0.0)) throw ConstructionError("imaging: k_per_pixel must be > 0");
  if (!(peak_sigma_k > 0.0)) throw ConstructionError("imaging: peak_sigma_k must be > 0");
  if (!(thermal_sigma_k > peak_sigma_k)) {
    throw ConstructionError("imaging: thermal_sigma_k must exceed peak_sigma_k");
  }
  if (shell_cutoff < 0) throw ConstructionError("imaging: shell_cutoff must be >= 0");
  if (!(peak_weight_decay >= 0.0)) throw ConstructionError("imaging: peak_weight_decay must be >= 0");
  if (!(centering_jitter_k >= 0.0)) throw ConstructionError("imaging: centering jitter must be >= 0");
}

double TofImage::total() const {
  double s = 0.0;
  for (double c : counts) s += c;
  return s;
}

bool TofImage::contains(const Wavevector& k) const {
  const Vec2 p = to_pixel(k);
  return p.x() >= -0.5 && p.x() <= nx - 0.5 && p.y() >= -0.5 && p.y() <= ny - 0.5;
}

TofImage TofImage::centered(int nx, int ny, double k_per_pixel) {
  TofImage img;
  img.nx = nx;
  img.ny = ny;
  img.k_per_pixel = k_per_pixel;
  img.k_origin = Wavevector(-(nx / 2) * k_per_pixel, -(ny / 2) * k_per_pixel);
  img.counts.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0.0);
  return img;
}

ShotSeeds ShotSeeds::from(std::uint64_t seed) { return {derive_seed(seed, 0), derive_seed(seed, 1)}; }

Wavevector draw_jitter(const ImagingConfig& cfg, std::uint64_t jitter_seed) {
  if (cfg.centering_jitter_k == 0.0) return Wavevector::Zero();
  Engine eng = make_engine(jitter_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double jx = normal(eng);
  const double jy = normal(eng);
  return cfg.centering_jitter_k * Wavevector(jx, jy);
}

TofImage expected_tof(const dynamics::CondensateState& state, const lattice::ReciprocalLattice& lat,
                      const ImagingConfig& cfg, const Wavevector& offset) {
  state.validate();
  cfg.validate();
  TofImage img = TofImage::centered(cfg.nx, cfg.ny, cfg.k_per_pixel);
  const Wavevector q = lattice::fold_to_fbz(state.k, lat);
  const auto shells = lattice::lattice_shells(lat, cfg.shell_cutoff);

  double weight_sum = 0.0;
  for (const auto& sp : shells) {
    if (!img.contains(sp.g + q)) {
      throw ConstructionError("synthesize_tof: Bragg peak outside the image grid");
    }
    weight_sum += std::pow(cfg.peak_weight_decay, sp.shell);
  }
  const double coherent = state.condensate_fraction * state.coherence;
  const double condensed_atoms = state.n0 * coherent;
  const double sigma_px = cfg.peak_sigma_k / cfg.k_per_pixel;
  for (const auto& sp : shells) {
    const double w = std::pow(cfg.peak_weight_decay, sp.shell) / weight_sum;
    add_gaussian(img, img.to_pixel(sp.g + q + offset), sigma_px, condensed_atoms * w);
  }
  add_gaussian(img, img.to_pixel(offset), cfg.thermal_sigma_k / cfg.k_per_pixel,
               state.n0 * (1.0 - coherent));
  return img;
}

TofImage synthesize_tof(const dynamics::CondensateState& state, const lattice::ReciprocalLattice& lat,
                        const ImagingConfig& cfg, const ShotSeeds& seeds) {
  TofImage img = expected_tof(state, lat, cfg, draw_jitter(cfg, seeds.jitter_seed));
  if (!cfg.shot_noise) return img;
  Engine eng = make_engine(seeds.noise_seed);
  for (double& c : img.counts) {
    if (c > 0.0) {
      std::poisson_distribution<long long> pois(c);
      c = static_cast<double>(pois(eng));
    }
  }
  return img;
}

TofImage synthesize_tof(const dynamics::CondensateState& state, const lattice::ReciprocalLattice& lat,
                        const ImagingConfig& cfg, std::uint64_t seed) {
  return synthesize_tof(state, lat, cfg, ShotSeeds::from(seed));
}

MeasurementError::MeasurementError(const PeakFitResult& ref, const PeakFitResult& sig)
    : std::runtime_error(std::string("differential wavevector: peak fit did not converge (") +
                         (ref.converged ? "" : "reference") +
                         (!ref.converged && !sig.converged ? ", " : "") +
                         (sig.converged ? "" : "signal") + ")"),
      ref_(ref),
      sig_(sig) {}

DifferentialResult differential_wavevector(const TofImage& img_ref, const TofImage& img_sig,
                                           const Wavevector& guess_ref,
                                           const Wavevector& guess_sig, double window_k) {
  DifferentialResult r;
  r.ref = fit_peak(img_ref, guess_ref, window_k);
  r.sig = fit_peak(img_sig, guess_sig, window_k);
  if (!r.ref.converged || !r.sig.converged) throw MeasurementError(r.ref, r.sig);
  r.dk = r.sig.k_hat - r.ref.k_hat;
  r.sigma = (r.ref.sigma_k.array().square() + r.sig.sigma_k.array().square()).sqrt();
  return r;
}

DifferentialResult differential_wavevector(const TofImage& img_ref, const TofImage& img_sig,
                                           const Wavevector& guess, double window_k) {
  return differential_wavevector(img_ref, img_sig, guess, guess, window_k);
}

void write_tofi(const TofImage& img, std::ostream& os) {
  os.write("TOFI", 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.nx));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(img.ny));
  put_le<float>(os, static_cast<float>(img.k_per_pixel));
  for (double c : img.counts) put_le<double>(os, c);
}

TofImage read_tofi(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TOFI") {
    throw ArgumentError("TOFI: bad magic");
  }
  const auto nx = get_le<std::uint32_t>(is);
  const auto ny = get_le<std::uint32_t>(is);
  const auto kpp = get_le<float>(is);
  if (nx == 0 || ny == 0 || nx > (1u << 16) || ny > (1u << 16) || !(kpp > 0.0f)) {
    throw ArgumentError("TOFI: invalid header");
  }
  TofImage img = TofImage::centered(static_cast<int>(nx), static_cast<int>(ny), kpp);
  for (double& c : img.counts) c = get_le<double>(is);
  return img;
}

void save_tofi(const TofImage& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing", path.string());
  write_tofi(img, os);
  if (!os) throw IoError("write failed", path.string());
}

TofImage load_tofi(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading", path.string());
  return read_tofi(is);
}

void write_csv(const TofImage& img, std::ostream& os) {
  os << "ix,iy,kx_m_inv,ky_m_inv,counts\n";
  os.precision(17);
  for (int iy = 0; iy < img.ny; ++iy) {
    for (int ix = 0; ix < img.nx; ++ix) {
      const Wavevector k = img.to_k(Vec2(ix, iy));
      os << ix << ',' << iy << ',' << k.x() << ',' << k.y() << ',' << img.at(ix, iy) << '\n';
    }
  }
}

}  // namespace kforce::imaging
