#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "kforce/error.hpp"
#include "kforce/lattice.hpp"

using namespace kforce;
using namespace kforce::lattice;

namespace {

constexpr double kLambda = 1064e-9;
const double kK = 2 * kPi / kLambda;

Vec2 rotate(const Vec2& v, double phi) {
  return {std::cos(phi) * v.x() - std::sin(phi) * v.y(), std::sin(phi) * v.x() + std::cos(phi) * v.y()};
}

std::vector<Vec2> nearest_points(const ReciprocalLattice& lat, std::size_t count) {
  std::vector<Vec2> pts;
  for (long n = -6; n <= 6; ++n)
    for (long m = -6; m <= 6; ++m) pts.push_back(lat.point({n, m}));
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.norm() < b.norm(); });
  pts.resize(count);
  return pts;
}

// Brute-force Voronoi: circumcentres of the origin and every pair of the 18
// nearest nonzero points that no lattice point is strictly closer to.
std::vector<Vec2> voronoi_vertices(const ReciprocalLattice& lat) {
  const auto pts = nearest_points(lat, 19);
  std::vector<Vec2> out;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      Eigen::Matrix2d a;
      a << pts[i].transpose(), pts[j].transpose();
      if (std::abs(a.determinant()) < 1e-6 * std::pow(pts[i].norm(), 2)) continue;
      const Vec2 c = a.inverse() * Vec2(0.5 * pts[i].squaredNorm(), 0.5 * pts[j].squaredNorm());
      bool ok = true;
      for (const auto& p : pts) ok = ok && (c - p).norm() >= c.norm() * (1 - 1e-9);
      const bool dup = std::any_of(out.begin(), out.end(), [&](const Vec2& o) { return (o - c).norm() < 1e-6 * kK; });
      if (ok && !dup) out.push_back(c);
    }
  }
  return out;
}

Vec2 brute_fold(const Vec2& q, const ReciprocalLattice& lat) {
  Vec2 best = q;
  for (long n = -10; n <= 10; ++n)
    for (long m = -10; m <= 10; ++m) {
      const Vec2 r = q - lat.point({n, m});
      if (r.norm() < best.norm()) best = r;
    }
  return best;
}

}  // namespace

TEST_CASE("reciprocal vectors of the 120-degree geometry") {
  const auto lat = build_reciprocal_lattice({kLambda, {kPi / 2, 7 * kPi / 6, 11 * kPi / 6}});
  CHECK(lat.b1().norm() == doctest::Approx(std::sqrt(3.0) * kK).epsilon(1e-13));
  CHECK(lat.b2().norm() == doctest::Approx(std::sqrt(3.0) * kK).epsilon(1e-13));
  CHECK(lat.b1().norm() == doctest::Approx(1.0228e7).epsilon(1e-4));
  // b-vectors are pairwise differences of beam wavevectors.
  const BeamGeometry g;
  CHECK((lat.b1() - (beam_wavevector(g, 0) - beam_wavevector(g, 1))).norm() < 1e-9);
}

TEST_CASE("FBZ matches a brute-force Voronoi construction") {
  for (const auto& angles : {std::array<double, 3>{kPi / 2, 7 * kPi / 6, 11 * kPi / 6},
                             std::array<double, 3>{1.4, 3.6, 5.9}}) {
    const auto lat = build_reciprocal_lattice({kLambda, angles});
    const auto oracle = voronoi_vertices(lat);
    const auto& fbz = lat.fbz_vertices();
    REQUIRE(fbz.size() == oracle.size());
    for (const auto& v : fbz) {
      const bool found = std::any_of(oracle.begin(), oracle.end(), [&](const Vec2& o) { return (o - v).norm() < 1e-6 * kK; });
      CHECK(found);
    }
    CHECK(lat.fbz_area() == doctest::Approx(lat.cell_area()).epsilon(1e-12));
  }
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  REQUIRE(lat.fbz_vertices().size() == 6);
  for (const auto& v : lat.fbz_vertices()) {
    CHECK(std::abs(v.norm() / kK - 1.0) < 1e-12);
    CHECK(v.norm() == doctest::Approx(5.905e6).epsilon(1e-3));
  }
}

TEST_CASE("FBZ vertices are counterclockwise and six-fold symmetric") {
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  const auto& v = lat.fbz_vertices();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % v.size()];
    CHECK(a.x() * b.y() - a.y() * b.x() > 0.0);
    const Vec2 r = rotate(a, kPi / 3);
    CHECK(std::any_of(v.begin(), v.end(), [&](const Vec2& w) { return (w - r).norm() < 1e-9 * kK; }));
  }
}

TEST_CASE("Wigner-Seitz property of every FBZ vertex") {
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  const auto pts = nearest_points(lat, 19);
  for (const auto& v : lat.fbz_vertices()) {
    int equidistant = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (std::abs((v - pts[i]).norm() - v.norm()) < 1e-12 * kK) ++equidistant;
    }
    CHECK(equidistant >= 2);
  }
}

TEST_CASE("rotating the beams rotates the lattice and keeps the FBZ area") {
  const double phi = 0.37;
  const BeamGeometry g0;
  BeamGeometry g1 = g0;
  for (auto& a : g1.beam_angles_rad) a += phi;
  const auto l0 = build_reciprocal_lattice(g0);
  const auto l1 = build_reciprocal_lattice(g1);
  CHECK((rotate(l0.b1(), phi) - l1.b1()).norm() < 1e-9 * kK);
  CHECK((rotate(l0.b2(), phi) - l1.b2()).norm() < 1e-9 * kK);
  CHECK(l1.fbz_area() == doctest::Approx(l0.fbz_area()).epsilon(1e-12));
}

TEST_CASE("degenerate geometry is rejected") {
  CHECK_THROWS_AS(build_reciprocal_lattice({kLambda, {0.0, 2 * kPi, 1.0}}), ConstructionError);
  CHECK_THROWS_AS(build_reciprocal_lattice({-1.0, {0.0, 2.0, 4.0}}), ConstructionError);
  CHECK_THROWS_AS(ReciprocalLattice(Vec2(1.0, 2.0), Vec2(2.0, 4.0)), ConstructionError);
}

TEST_CASE("fold_to_fbz examples") {
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  CHECK(fold_to_fbz(Vec2::Zero(), lat).norm() == 0.0);
  CHECK(fold_to_fbz(lat.b1(), lat).norm() < 1e-9);
  const Vec2 q = 0.6 * lat.b1();
  const Vec2 oracle = brute_fold(q, lat);
  CHECK((oracle - (-0.4 * lat.b1())).norm() < 1e-9);
  CHECK((fold_to_fbz(q, lat) - oracle).norm() < 1e-9);
}

TEST_CASE("fold_to_fbz agrees with brute force, is idempotent and periodic") {
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  const auto shells = lattice_shells(lat, 3);
  for (int t = 0; t < 2000; ++t) {
    const Vec2 q = Vec2(u(rng), u(rng)) * lat.b1().norm();
    const Vec2 f = fold_to_fbz(q, lat);
    CHECK((f - brute_fold(q, lat)).norm() < 1e-9 * kK);
    CHECK((fold_to_fbz(f, lat) - f).norm() < 1e-9 * kK);
    const Vec2 g = shells[static_cast<std::size_t>(t) % shells.size()].g;
    CHECK((fold_to_fbz(q + g, lat) - f).norm() < 1e-9 * kK);
  }
}

TEST_CASE("folding commutes with a 60-degree rotation") {
  const BeamGeometry g0;
  BeamGeometry g1 = g0;
  for (auto& a : g1.beam_angles_rad) a += kPi / 3;
  const auto l0 = build_reciprocal_lattice(g0);
  const auto l1 = build_reciprocal_lattice(g1);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 500; ++t) {
    const Vec2 q = Vec2(u(rng), u(rng)) * kK;
    CHECK((fold_to_fbz(rotate(q, kPi / 3), l1) - rotate(fold_to_fbz(q, l0), kPi / 3)).norm() < 1e-8 * kK);
  }
}

TEST_CASE("boundary ties resolve to the lexicographically smallest image") {
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  const Vec2 mid = 0.5 * lat.b1();
  const Vec2 f = fold_to_fbz(mid, lat);
  const Vec2 other = -mid;
  CHECK(f.norm() == doctest::Approx(mid.norm()).epsilon(1e-12));
  const Vec2 expected = (mid.x() < other.x() || (mid.x() == other.x() && mid.y() < other.y())) ? mid : other;
  CHECK((f - expected).norm() < 1e-9);
  CHECK((fold_to_fbz(f, lat) - f).norm() < 1e-9);
}

TEST_CASE("bragg_peak_positions") {
  const auto lat = build_reciprocal_lattice(BeamGeometry{});
  const Vec2 q(1.0e6, -2.0e6);
  const auto p0 = bragg_peak_positions(lat, q, 0);
  REQUIRE(p0.size() == 1);
  CHECK((p0[0] - q).norm() == 0.0);

  const auto p1 = bragg_peak_positions(lat, Vec2::Zero(), 1);
  REQUIRE(p1.size() == 7);
  for (std::size_t i = 1; i < p1.size(); ++i) {
    CHECK(p1[i].norm() == doctest::Approx(std::sqrt(3.0) * kK).epsilon(1e-12));
  }
  CHECK(bragg_peak_positions(lat, Vec2::Zero(), 2).size() == 13);
  CHECK(bragg_peak_positions(lat, Vec2::Zero(), 3).size() == 19);

  const Vec2 shift = 0.1 * lat.b1();
  const auto p2 = bragg_peak_positions(lat, Vec2::Zero(), 2);
  const auto p2s = bragg_peak_positions(lat, shift, 2);
  REQUIRE(p2.size() == p2s.size());
  for (std::size_t i = 0; i < p2.size(); ++i) CHECK((p2s[i] - (p2[i] + shift)).norm() < 1e-9);
  for (std::size_t i = 1; i < p2.size(); ++i) CHECK(p2[i].norm() >= p2[i - 1].norm() * (1 - 1e-12));

  CHECK_THROWS_AS(lattice_shells(lat, -1), ArgumentError);
}
