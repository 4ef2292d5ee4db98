#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "kforce/error.hpp"
#include "kforce/imaging.hpp"

namespace kforce::imaging {
namespace {

constexpr int kMaxIterations = 100;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

using Params = Eigen::Matrix<double, 5, 1>;  // amplitude, x0, y0, sigma, offset (pixel units)
using Normal = Eigen::Matrix<double, 5, 5>;

struct Axis {
  std::vector<double> mass, d_centre, d_sigma;
};

Axis axis_terms(int lo, int hi, double centre, double sigma) {
  Axis a;
  const auto n = static_cast<std::size_t>(hi - lo + 1);
  a.mass.resize(n);
  a.d_centre.resize(n);
  a.d_sigma.resize(n);
  for (int i = lo; i <= hi; ++i) {
    const double up = (i + 0.5 - centre) / sigma;
    const double dn = (i - 0.5 - centre) / sigma;
    const double pu = kInvSqrt2Pi * std::exp(-0.5 * up * up);
    const double pd = kInvSqrt2Pi * std::exp(-0.5 * dn * dn);
    const double m = dn > 0.0 ? 0.5 * (std::erfc(dn / std::sqrt(2.0)) - std::erfc(up / std::sqrt(2.0)))
                              : 0.5 * (std::erfc(-up / std::sqrt(2.0)) - std::erfc(-dn / std::sqrt(2.0)));
    const auto k = static_cast<std::size_t>(i - lo);
    a.mass[k] = m;
    a.d_centre[k] = -(pu - pd) / sigma;
    a.d_sigma[k] = -(up * pu - dn * pd) / sigma;
  }
  return a;
}

struct Window {
  int x0, x1, y0, y1;
  int size() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

class GaussianProblem {
 public:
  GaussianProblem(const TofImage& img, const Window& w) : img_(img), w_(w) {}

  std::vector<double> model(const Params& p) const {
    const Axis ax = axis_terms(w_.x0, w_.x1, p[1], p[3]);
    const Axis ay = axis_terms(w_.y0, w_.y1, p[2], p[3]);
    std::vector<double> m;
    m.reserve(static_cast<std::size_t>(w_.size()));
    for (std::size_t j = 0; j < ay.mass.size(); ++j)
      for (std::size_t i = 0; i < ax.mass.size(); ++i) m.push_back(p[0] * ax.mass[i] * ay.mass[j] + p[4]);
    return m;
  }

  // Weighted chi^2, and optionally the normal matrix J^T W J and gradient J^T W r.
  double evaluate(const Params& p, const std::vector<double>& weights, Normal* jtj, Params* jtr) const {
    const Axis ax = axis_terms(w_.x0, w_.x1, p[1], p[3]);
    const Axis ay = axis_terms(w_.y0, w_.y1, p[2], p[3]);
    if (jtj) jtj->setZero();
    if (jtr) jtr->setZero();
    double chi2 = 0.0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < ay.mass.size(); ++j) {
      const int iy = w_.y0 + static_cast<int>(j);
      for (std::size_t i = 0; i < ax.mass.size(); ++i, ++k) {
        const int ix = w_.x0 + static_cast<int>(i);
        const double g = ax.mass[i] * ay.mass[j];
        const double r = img_.at(ix, iy) - (p[0] * g + p[4]);
        const double wt = weights[k];
        chi2 += wt * r * r;
        if (jtj) {
          Params jac;
          jac << g, p[0] * ax.d_centre[i] * ay.mass[j], p[0] * ax.mass[i] * ay.d_centre[j],
              p[0] * (ax.d_sigma[i] * ay.mass[j] + ax.mass[i] * ay.d_sigma[j]), 1.0;
          jtj->selfadjointView<Eigen::Lower>().rankUpdate(jac, wt);
          *jtr += wt * r * jac;
        }
      }
    }
    if (jtj) *jtj = jtj->selfadjointView<Eigen::Lower>();
    return chi2;
  }

  double data(std::size_t k) const {
    const int nxw = w_.x1 - w_.x0 + 1;
    return img_.at(w_.x0 + static_cast<int>(k) % nxw, w_.y0 + static_cast<int>(k) / nxw);
  }

 private:
  const TofImage& img_;
  Window w_;
};

struct LmOutcome {
  Params p;
  double chi2 = 0.0;
  bool converged = false;
  int iterations = 0;
};

LmOutcome levenberg_marquardt(const GaussianProblem& prob, Params p, const std::vector<double>& weights,
                              double min_sigma) {
  LmOutcome out;
  Normal jtj;
  Params jtr;
  double chi2 = prob.evaluate(p, weights, &jtj, &jtr);
  double lambda = 1e-3;
  for (int it = 1; it <= kMaxIterations; ++it) {
    out.iterations = it;
    bool accepted = false;
    while (!accepted) {
      Normal a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
      const Params step = a.ldlt().solve(jtr);
      const Params trial = p + step;
      double trial_chi2 = std::numeric_limits<double>::infinity();
      if (step.allFinite() && trial[3] > min_sigma) trial_chi2 = prob.evaluate(trial, weights, nullptr, nullptr);
      if (trial_chi2 <= chi2) {
        const double drop = chi2 - trial_chi2;
        const bool small_step = std::abs(step[1]) < 1e-10 && std::abs(step[2]) < 1e-10 &&
                                std::abs(step[3]) < 1e-10 * trial[3] &&
                                std::abs(step[0]) < 1e-10 * std::max(std::abs(trial[0]), 1.0);
        p = trial;
        chi2 = prob.evaluate(p, weights, &jtj, &jtr);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (small_step || drop <= 1e-13 * chi2) {
          out.p = p;
          out.chi2 = chi2;
          out.converged = true;
          return out;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          // No downhill step left: stationary point.
          out.p = p;
          out.chi2 = chi2;
          out.converged = true;
          return out;
        }
      }
    }
  }
  out.p = p;
  out.chi2 = chi2;
  return out;
}

}  // namespace

PeakFitResult fit_peak(const TofImage& img, const Wavevector& guess, double window_k) {
  if (!img.contains(guess)) throw ArgumentError("fit_peak: guess outside image");
  if (!(window_k > 0.0)) throw ArgumentError("fit_peak: window must be > 0");
  const Vec2 gp = img.to_pixel(guess);
  const double half = window_k / img.k_per_pixel;
  Window w{std::max(0, static_cast<int>(std::ceil(gp.x() - half))),
           std::min(img.nx - 1, static_cast<int>(std::floor(gp.x() + half))),
           std::max(0, static_cast<int>(std::ceil(gp.y() - half))),
           std::min(img.ny - 1, static_cast<int>(std::floor(gp.y() + half)))};
  if (w.x1 - w.x0 < 2 || w.y1 - w.y0 < 2) throw ArgumentError("fit_peak: window holds too few pixels");

  const GaussianProblem prob(img, w);
  const auto n = static_cast<std::size_t>(w.size());

  // Starting point: border mean as background, moments about the guess.
  double border = 0.0;
  int nb = 0;
  for (int iy = w.y0; iy <= w.y1; ++iy) {
    for (int ix = w.x0; ix <= w.x1; ++ix) {
      if (ix == w.x0 || ix == w.x1 || iy == w.y0 || iy == w.y1) {
        border += img.at(ix, iy);
        ++nb;
      }
    }
  }
  border /= nb;
  double mass = 0.0, m2 = 0.0;
  for (int iy = w.y0; iy <= w.y1; ++iy) {
    for (int ix = w.x0; ix <= w.x1; ++ix) {
      const double s = std::max(img.at(ix, iy) - border, 0.0);
      mass += s;
      m2 += s * ((ix - gp.x()) * (ix - gp.x()) + (iy - gp.y()) * (iy - gp.y()));
    }
  }
  PeakFitResult res;
  if (!(mass > 0.0)) return res;
  const double min_sigma = 0.05;
  Params p;
  p << mass, gp.x(), gp.y(), std::clamp(std::sqrt(0.5 * m2 / mass), 0.5, std::max(0.5, half / 2)), border;

  // Pass 1: weights from data. Pass 2: weights frozen from the pass-1 model.
  std::vector<double> weights(n);
  for (std::size_t k = 0; k < n; ++k) weights[k] = 1.0 / std::max(prob.data(k), 1.0);
  LmOutcome lm = levenberg_marquardt(prob, p, weights, min_sigma);
  int iterations = lm.iterations;
  if (lm.converged) {
    const auto m = prob.model(lm.p);
    for (std::size_t k = 0; k < n; ++k) weights[k] = 1.0 / std::max(m[k], 1.0);
    lm = levenberg_marquardt(prob, lm.p, weights, min_sigma);
    iterations += lm.iterations;
  }

  Normal jtj;
  Params jtr;
  const double chi2 = prob.evaluate(lm.p, weights, &jtj, &jtr);
  res.iterations = iterations;
  res.amplitude = lm.p[0];
  res.offset = lm.p[4];
  res.width_k = lm.p[3] * img.k_per_pixel;
  res.k_hat = img.to_k(Vec2(lm.p[1], lm.p[2]));
  res.residual_norm = std::sqrt(chi2 / std::max<double>(static_cast<double>(n) - 5.0, 1.0));

  Eigen::LLT<Normal> llt(jtj);
  bool pd = llt.info() == Eigen::Success;
  Normal cov;
  if (pd) {
    cov = llt.solve(Normal::Identity());
    pd = cov.allFinite() && cov(1, 1) > 0.0 && cov(2, 2) > 0.0;
  }
  if (pd) res.sigma_k = Vec2(std::sqrt(cov(1, 1)), std::sqrt(cov(2, 2))) * img.k_per_pixel;
  res.converged = lm.converged && pd && img.contains(res.k_hat);
  return res;
}

}  // namespace kforce::imaging
