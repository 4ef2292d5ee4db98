#include "kforce/lattice.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "kforce/error.hpp"

namespace kforce::lattice {
namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

bool lex_less(const Vec2& a, const Vec2& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  return a.y() < b.y();
}

// Sutherland-Hodgman clip against the half-plane {x : x.g <= |g|^2 / 2}.
std::vector<Vec2> clip(const std::vector<Vec2>& poly, const Vec2& g) {
  const double c = 0.5 * g.squaredNorm();
  auto inside = [&](const Vec2& p) { return p.dot(g) <= c; };
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const bool ia = inside(a), ib = inside(b);
    if (ia) out.push_back(a);
    if (ia != ib) {
      const double t = (c - a.dot(g)) / (b - a).dot(g);
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

std::vector<Vec2> wigner_seitz(const ReciprocalLattice& lat) {
  const double r = 4.0 * std::max(lat.b1().norm(), lat.b2().norm());
  std::vector<Vec2> poly{{-r, -r}, {r, -r}, {r, r}, {-r, r}};
  for (long n = -3; n <= 3; ++n) {
    for (long m = -3; m <= 3; ++m) {
      if (n == 0 && m == 0) continue;
      poly = clip(poly, lat.point({n, m}));
    }
  }
  // Drop duplicate and collinear vertices left by clipping.
  const double tol = 1e-12 * lat.min_g();
  std::vector<Vec2> dedup;
  for (const auto& p : poly) {
    if (dedup.empty() || (p - dedup.back()).norm() > tol) dedup.push_back(p);
  }
  while (dedup.size() > 1 && (dedup.front() - dedup.back()).norm() <= tol) dedup.pop_back();
  std::vector<Vec2> clean;
  for (std::size_t i = 0; i < dedup.size(); ++i) {
    const Vec2& prev = dedup[(i + dedup.size() - 1) % dedup.size()];
    const Vec2& next = dedup[(i + 1) % dedup.size()];
    const Vec2& p = dedup[i];
    if (std::abs(cross(p - prev, next - p)) > tol * lat.min_g()) clean.push_back(p);
  }
  std::sort(clean.begin(), clean.end(), [](const Vec2& a, const Vec2& b) {
    return std::atan2(a.y(), a.x()) < std::atan2(b.y(), b.x());
  });
  return clean;
}

}  // namespace

void BeamGeometry::validate() const {
  if (!(wavelength_m > 0.0) || !std::isfinite(wavelength_m)) {
    throw ConstructionError("beam geometry: wavelength must be positive");
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const double d = std::remainder(beam_angles_rad[i] - beam_angles_rad[j], 2 * kPi);
      if (std::abs(d) < 1e-9) {
        throw ConstructionError("beam geometry: beam angles must be distinct modulo 2 pi");
      }
    }
  }
}

ReciprocalLattice::ReciprocalLattice(const Wavevector& b1, const Wavevector& b2) : b1_(b1), b2_(b2) {
  const double scale = std::max(b1.norm(), b2.norm());
  if (!(scale > 0.0) || std::abs(cross(b1, b2)) <= 1e-9 * scale * scale) {
    throw ConstructionError("reciprocal lattice: primitive vectors are linearly dependent");
  }
  // Lagrange-Gauss reduction, tracking integer change of basis.
  Vec2 u = b1, v = b2;
  Eigen::Matrix2d cu = Eigen::Matrix2d::Identity();  // columns: coeffs of u, v in (b1, b2)
  if (u.squaredNorm() > v.squaredNorm()) {
    std::swap(u, v);
    cu.col(0).swap(cu.col(1));
  }
  for (int iter = 0; iter < 64; ++iter) {
    const double mu = std::round(u.dot(v) / u.squaredNorm());
    v -= mu * u;
    cu.col(1) -= mu * cu.col(0);
    if (v.squaredNorm() >= u.squaredNorm()) break;
    std::swap(u, v);
    cu.col(0).swap(cu.col(1));
  }
  r1_ = u;
  r2_ = v;
  reduced_to_basis_ = cu;
  Eigen::Matrix2d basis;
  basis << r1_, r2_;
  reduced_inverse_ = basis.inverse();
  fbz_ = wigner_seitz(*this);
}

double ReciprocalLattice::cell_area() const noexcept { return std::abs(cross(b1_, b2_)); }

double ReciprocalLattice::fbz_area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < fbz_.size(); ++i) a += cross(fbz_[i], fbz_[(i + 1) % fbz_.size()]);
  return 0.5 * std::abs(a);
}

double ReciprocalLattice::min_g() const noexcept { return r1_.norm(); }

LatticeIndex ReciprocalLattice::nearest_index(const Wavevector& q) const {
  const Vec2 frac = reduced_inverse_ * q;
  const double c1 = std::round(frac.x()), c2 = std::round(frac.y());
  const double tie_tol = 1e-12 * r1_.squaredNorm();
  std::array<std::pair<Eigen::Vector2d, Vec2>, 25> cand;
  double min_d2 = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  for (int di = -2; di <= 2; ++di) {
    for (int dj = -2; dj <= 2; ++dj, ++k) {
      const Eigen::Vector2d coeff(c1 + di, c2 + dj);
      cand[k] = {coeff, q - (coeff.x() * r1_ + coeff.y() * r2_)};
      min_d2 = std::min(min_d2, cand[k].second.squaredNorm());
    }
  }
  const std::pair<Eigen::Vector2d, Vec2>* best = nullptr;
  for (const auto& c : cand) {
    if (c.second.squaredNorm() > min_d2 + tie_tol) continue;
    if (best == nullptr || lex_less(c.second, best->second)) best = &c;
  }
  const Eigen::Vector2d best_coeff = best->first;
  const Eigen::Vector2d idx = reduced_to_basis_ * best_coeff;
  return {std::lround(idx.x()), std::lround(idx.y())};
}

Wavevector beam_wavevector(const BeamGeometry& geom, int i) {
  const double k = 2 * kPi / geom.wavelength_m;
  const double a = geom.beam_angles_rad.at(static_cast<std::size_t>(i));
  return {k * std::cos(a), k * std::sin(a)};
}

ReciprocalLattice build_reciprocal_lattice(const BeamGeometry& geom) {
  geom.validate();
  const Wavevector k1 = beam_wavevector(geom, 0);
  const Wavevector k2 = beam_wavevector(geom, 1);
  const Wavevector k3 = beam_wavevector(geom, 2);
  return ReciprocalLattice(k1 - k2, k1 - k3);
}

Wavevector fold_to_fbz(const Wavevector& q, const ReciprocalLattice& lat) {
  return q - lat.point(lat.nearest_index(q));
}

std::vector<ShellPoint> lattice_shells(const ReciprocalLattice& lat, int shell_cutoff) {
  if (shell_cutoff < 0) throw ArgumentError("lattice_shells: shell_cutoff must be >= 0");
  // Minimal height of the fundamental cell bounds |n|, |m| for a given radius.
  const double h = lat.cell_area() / std::max(lat.b1().norm(), lat.b2().norm());
  const double tol = 1e-9 * lat.min_g();
  for (long range = 2 * shell_cutoff + 2;; range *= 2) {
    std::vector<Vec2> pts;
    for (long n = -range; n <= range; ++n)
      for (long m = -range; m <= range; ++m) pts.push_back(lat.point({n, m}));
    std::sort(pts.begin(), pts.end(), [&](const Vec2& a, const Vec2& b) {
      const double na = a.norm(), nb = b.norm();
      if (std::abs(na - nb) > tol) return na < nb;
      return lex_less(a, b);
    });
    std::vector<ShellPoint> out;
    int shell = 0;
    double radius = 0.0;
    for (const auto& p : pts) {
      const double r = p.norm();
      if (r > radius + tol) {
        ++shell;
        radius = r;
      }
      if (shell > shell_cutoff) break;
      out.push_back({p, shell});
    }
    // Complete only if the enumeration box certainly contains the last shell.
    if (radius < static_cast<double>(range) * h) return out;
  }
}

std::vector<Wavevector> bragg_peak_positions(const ReciprocalLattice& lat, const Wavevector& q,
                                             int shell_cutoff) {
  std::vector<Wavevector> out;
  for (const auto& sp : lattice_shells(lat, shell_cutoff)) out.push_back(sp.g + q);
  return out;
}

}  // namespace kforce::lattice
