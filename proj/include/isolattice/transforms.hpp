#pragma once

// Polynomial conserved quantities, Darboux transforms by parallel null line
// bundles, Baecklund initial conditions and the gauge-transformed conserved
// quantity of a transform.

#include "pseudo_linear.hpp"
#include "smooth_isothermic.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace isolattice {

/// p(t) = sum_k coeffs[k] t^k with vector coefficients.
struct Polynomial {
  std::vector<Eigen::VectorXd> coeffs;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }

  Eigen::VectorXd operator()(double t) const {
    Eigen::VectorXd out = coeffs.back();
    for (int k = degree() - 1; k >= 0; --k) out = out * t + coeffs[k];
    return out;
  }

  double scale() const {
    double s = 0.0;
    for (const auto& c : coeffs) s = std::max(s, c.norm());
    return s;
  }

  /// Highest index whose coefficient exceeds rel * scale.
  int effective_degree(double rel = 1e-9) const {
    const double s = scale();
    for (int k = degree(); k > 0; --k) {
      if (coeffs[k].norm() > rel * s) return k;
    }
    return 0;
  }

  Polynomial scaled(double s) const {
    Polynomial p = *this;
    for (auto& c : p.coeffs) c *= s;
    return p;
  }
};

struct PolyFit {
  Polynomial poly;
  double residual = 0.0;  // max sample misfit / coefficient scale
};

/// Least-squares fit of a degree-d polynomial to vector samples.
inline PolyFit fit_polynomial(const std::vector<double>& ts, const std::vector<Eigen::VectorXd>& values, int degree) {
  const int n = static_cast<int>(ts.size());
  const int dim = static_cast<int>(values.front().size());
  Eigen::MatrixXd vander(n, degree + 1);
  Eigen::MatrixXd rhs(n, dim);
  for (int i = 0; i < n; ++i) {
    double pw = 1.0;
    for (int k = 0; k <= degree; ++k, pw *= ts[i]) vander(i, k) = pw;
    rhs.row(i) = values[i].transpose();
  }
  const Eigen::MatrixXd sol = vander.colPivHouseholderQr().solve(rhs);
  PolyFit fit;
  for (int k = 0; k <= degree; ++k) fit.poly.coeffs.emplace_back(sol.row(k).transpose());
  const Eigen::MatrixXd misfit = vander * sol - rhs;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) worst = std::max(worst, misfit.row(i).norm());
  fit.residual = worst / std::max(fit.poly.scale(), std::numeric_limits<double>::min());
  return fit;
}

/// Sample parameters {0, +-1/4, +-1/2, 3mu/4} with anything within 10% of
/// the pole mu dropped and replaced, so at least degree + 3 samples remain.
inline std::vector<double> polynomial_samples(double mu, int degree) {
  const double guard = 0.1 * std::abs(mu);
  std::vector<double> ts;
  auto add = [&](double t) {
    if (std::abs(t - mu) < guard) return;
    for (double s : ts) {
      if (std::abs(s - t) < 1e-6) return;
    }
    ts.push_back(t);
  };
  for (double t : {0.0, 0.25, -0.25, 0.5, -0.5, 0.75 * mu}) add(t);
  for (double t : {-0.75, 0.125, -1.0, 0.375, -1.25, -1.5}) {
    if (static_cast<int>(ts.size()) >= degree + 3) break;
    add(t);
  }
  return ts;
}

inline constexpr double kPolyfitTol = 1e-7;

/// p_hat(t) = boost(f, fhat, 1 - t/mu) p(t), refit as a polynomial of the
/// same degree. The fit residual measures the failure of polynomiality.
inline PolyFit gauge_conserved_quantity(const Signature& sig, const Polynomial& p, const Eigen::VectorXd& f,
                                        const Eigen::VectorXd& fhat, double mu) {
  const std::vector<double> ts = polynomial_samples(mu, p.degree());
  std::vector<Eigen::VectorXd> vals;
  vals.reserve(ts.size());
  for (double t : ts) vals.push_back(detail::boost_matrix(sig, f, fhat, 1.0 - t / mu) * p(t));
  return fit_polynomial(ts, vals, p.degree());
}

/// Coefficient fields p^(0..d) of a conserved quantity on a smooth surface.
class PolyConservedQuantity {
 public:
  using Field = std::function<Eigen::VectorXd(double, double)>;

  PolyConservedQuantity(Signature sig, std::vector<Field> coeffs) : sig_(sig), coeffs_(std::move(coeffs)) {
    if (coeffs_.empty()) throw Error(ErrorKind::DegreeMismatch, "transforms", "conserved quantity needs a coefficient");
  }

  const Signature& signature() const { return sig_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const Field& coefficient(int k) const { return coeffs_.at(k); }

  Polynomial at(double u, double v) const {
    Polynomial p;
    for (const auto& c : coeffs_) p.coeffs.push_back(c(u, v));
    return p;
  }
  Eigen::VectorXd evaluate(double t, double u, double v) const { return at(u, v)(t); }

 private:
  Signature sig_;
  std::vector<Field> coeffs_;
};

/// Max over the grid of |dp^(0)|, |dp^(k) + eta p^(k-1)| and |eta p^(d)|,
/// with central differences of step h in both coordinate directions.
inline double check_conserved(const PolyConservedQuantity& p, const ConnectionFamily& c, const SampleGrid& grid,
                              double h = 1e-5) {
  const RetractionForm& eta = c.eta();
  const int d = p.degree();
  double worst = 0.0;
  for (int i = 0; i < grid.nu; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const Param x = grid.node(i, j);
      const Eigen::MatrixXd eu = eta.eta_u_matrix(x.u, x.v);
      const Eigen::MatrixXd ev = eta.eta_v_matrix(x.u, x.v);
      for (int k = 0; k <= d + 1; ++k) {
        Eigen::VectorXd ru = Eigen::VectorXd::Zero(5), rv = Eigen::VectorXd::Zero(5);
        if (k <= d) {
          const auto& ck = p.coefficient(k);
          ru += (ck(x.u + h, x.v) - ck(x.u - h, x.v)) / (2 * h);
          rv += (ck(x.u, x.v + h) - ck(x.u, x.v - h)) / (2 * h);
        }
        if (k >= 1) {
          const Eigen::VectorXd prev = p.coefficient(k - 1)(x.u, x.v);
          ru += eu * prev;
          rv += ev * prev;
        }
        worst = std::max({worst, ru.norm(), rv.norm()});
      }
    }
  }
  return worst;
}

namespace detail {

inline SampleGrid interior_grid(const Domain& d, int n) {
  const double mu = 0.05 * (d.u1 - d.u0), mv = 0.05 * (d.v1 - d.v0);
  return {{d.u0 + mu, d.u1 - mu, d.v0 + mv, d.v1 - mv}, n, n};
}

}  // namespace detail

/// Linear conserved quantity q + t Y of a cmc H surface in the Euclidean
/// chart, Y = nu + H sigma with nu the lifted unit normal.
inline PolyConservedQuantity cmc_linear_cq(const ParametrizedSurface& s, double mean_curvature,
                                           const SpaceFormVector& q, double tol_h = 1e-6) {
  const Eigen::VectorXd qe = SpaceFormVector::euclidean().q_vec.coords();
  if ((q.q_vec.coords() - qe).norm() > 1e-14) {
    throw Error(ErrorKind::InvalidConfig, "transforms", "cmc conserved quantity is built in the Euclidean chart q = 2 einf");
  }
  const SampleGrid grid = detail::interior_grid(s.domain(), 9);
  for (int i = 0; i < grid.nu; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const Param x = grid.node(i, j);
      const double h = s.mean_curvature(x.u, x.v);
      if (std::abs(h - mean_curvature) > tol_h) {
        throw Error(ErrorKind::NonCmc, "transforms",
                    s.name() + " has mean curvature " + std::to_string(h) + " at (" + std::to_string(x.u) + ", " +
                        std::to_string(x.v) + "), expected " + std::to_string(mean_curvature));
      }
    }
  }
  auto surface = std::make_shared<const ParametrizedSurface>(s);
  const double hval = mean_curvature;
  PolyConservedQuantity::Field p0 = [qe](double, double) { return qe; };
  PolyConservedQuantity::Field p1 = [surface, hval](double u, double v) {
    const Vec3 x = surface->position(u, v);
    return Eigen::VectorXd(lift_differential(x, surface->normal(u, v)) + hval * lift_coords(x));
  };
  return {Signature::conformal3(), {p0, p1}};
}

struct EtaCalibration {
  double scale = 0.0;
  double residual = 0.0;
  bool from_candidates = false;
};

/// Chooses the global scale of eta so that the cmc linear conserved quantity
/// is Gamma(t)-parallel. Tries {+-1, +-1/2} first, then the least-squares
/// optimum.
inline EtaCalibration calibrate_eta_scale(const ParametrizedSurface& s, double mean_curvature, double tol = 1e-6) {
  const PolyConservedQuantity p = cmc_linear_cq(s, mean_curvature, SpaceFormVector::euclidean());
  const SampleGrid grid = detail::interior_grid(s.domain(), 5);
  const RetractionForm unit = retraction_form(s, 1.0);
  EtaCalibration best{0.0, std::numeric_limits<double>::infinity(), true};
  for (double c : {1.0, -1.0, 0.5, -0.5}) {
    const double r = check_conserved(p, ConnectionFamily(unit.with_scale(c)), grid);
    if (r < best.residual) best = {c, r, true};
  }
  if (best.residual < tol) return best;

  // The t^1 condition dY + c eta_1 q = 0 is linear in c.
  double num = 0.0, den = 0.0;
  const double h = 1e-5;
  for (int i = 0; i < grid.nu; ++i) {
    for (int j = 0; j < grid.nv; ++j) {
      const Param x = grid.node(i, j);
      const Eigen::VectorXd q = p.coefficient(0)(x.u, x.v);
      const Eigen::VectorXd yu = (p.coefficient(1)(x.u + h, x.v) - p.coefficient(1)(x.u - h, x.v)) / (2 * h);
      const Eigen::VectorXd yv = (p.coefficient(1)(x.u, x.v + h) - p.coefficient(1)(x.u, x.v - h)) / (2 * h);
      const Eigen::VectorXd au = unit.eta_u_matrix(x.u, x.v) * q;
      const Eigen::VectorXd av = unit.eta_v_matrix(x.u, x.v) * q;
      num -= yu.dot(au) + yv.dot(av);
      den += au.squaredNorm() + av.squaredNorm();
    }
  }
  const double c = num / den;
  const double r = check_conserved(p, ConnectionFamily(unit.with_scale(c)), grid);
  if (r >= tol) {
    throw Error(ErrorKind::NonCmc, "transforms",
                "no eta scale makes the cmc quantity conserved (best residual " + std::to_string(r) + ")");
  }
  return {c, r, false};
}

struct DarbouxOptions {
  TransportOptions transport{};
  double singular_tol = 1e-9;  // |(f, fhat)| for unit representatives
};

/// A Gamma(mu)-parallel null line bundle, evaluated by transport from the
/// basepoint (along the L-shaped path u first, then v, unless a path is given).
class DarbouxTransform {
 public:
  DarbouxTransform(ConnectionFamily family, double mu, NullLine initial, Param basepoint, DarbouxOptions opt = {})
      : family_(std::move(family)), mu_(mu), initial_(std::move(initial)), base_(basepoint), opt_(opt) {}

  const ConnectionFamily& family() const { return family_; }
  double mu() const { return mu_; }
  const NullLine& initial() const { return initial_; }
  Param basepoint() const { return base_; }

  NullLine at(Param x) const { return along(l_path(base_, x)); }

  NullLine along(const Path& path) const {
    if (path.empty() || !(path.front() == base_)) {
      throw Error(ErrorKind::PathOutsideDomain, "transforms", "Darboux transport must start at the basepoint");
    }
    const ParametrizedSurface& s = family_.base();
    const Signature sig = Signature::conformal3();
    Eigen::VectorXd y = initial_.coords();
    auto check_point = [&](Param x, const Eigen::VectorXd& state) {
      const Eigen::VectorXd sigma = detail::canonical(lift_coords(s.position(x.u, x.v)));
      const double c = detail::inner(sig, sigma, state) / state.norm();
      if (std::abs(c) < opt_.singular_tol) {
        throw Error(ErrorKind::BianchiSingularity, "transforms",
                    "transform meets the orthogonal complement of f at (" + std::to_string(x.u) + ", " +
                        std::to_string(x.v) + ")");
      }
    };
    check_point(base_, y);
    const int every = std::max(1, opt_.transport.renormalize_every);
    y = detail::integrate(family_, mu_, path, y, opt_.transport, [&](int step, Param x, Eigen::VectorXd& state) {
      if (step % every == 0) state /= state.norm();
      check_point(x, state);
    });
    return NullLine(PseudoVector(sig, y));
  }

 private:
  ConnectionFamily family_;
  double mu_;
  NullLine initial_;
  Param base_;
  DarbouxOptions opt_;
};

inline DarbouxTransform darboux_transform(const ConnectionFamily& c, double mu, const NullLine& fhat0, Param x0,
                                          DarbouxOptions opt = {}) {
  if (mu == 0.0 || !std::isfinite(mu)) {
    throw Error(ErrorKind::ZeroLambda, "transforms", "spectral parameter must be finite and nonzero");
  }
  if (!c.base().domain().contains(x0)) {
    throw Error(ErrorKind::PathOutsideDomain, "transforms", "basepoint outside the domain");
  }
  const NullLine f0 = euclidean_lift(c.base().position(x0.u, x0.v));
  if (std::abs(line_inner(f0, fhat0)) < opt.singular_tol) {
    throw Error(ErrorKind::OrthogonalLines, "transforms", "initial line is orthogonal to f at the basepoint");
  }
  return {c, mu, fhat0, x0, opt};
}

/// Uniform doubles in [0, 1) from raw 64-bit draws, independent of the
/// standard library's distribution implementations.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    const double a = 1.0 - uniform();  // (0, 1]
    const double b = uniform();
    return std::sqrt(-2.0 * std::log(a)) * std::cos(2.0 * std::numbers::pi * b);
  }

 private:
  std::mt19937_64 engine_;
};

/// Null lines L with (p(mu), L) = 0 and (L, f(x0)) != 0.
///
/// p(mu)^perp is decomposed into pseudo-orthonormal positive and negative
/// parts; its null lines are x + y with x, y unit in the respective parts.
/// When p(mu) is itself null the only candidate is p(mu).
class AdmissibleLines {
 public:
  AdmissibleLines(Signature sig, Eigen::VectorXd p_mu, Eigen::VectorXd f0, double singular_tol = 1e-9)
      : sig_(sig), p_(std::move(p_mu)), f0_(detail::canonical(f0)), singular_tol_(singular_tol) {
    if (p_.norm() == 0.0) throw Error(ErrorKind::DegenerateConfiguration, "transforms", "p(mu) vanishes");
    const double pp = detail::inner(sig_, p_, p_) / p_.squaredNorm();
    if (std::abs(pp) < 1e-12) {
      null_case_ = true;
      if (std::abs(detail::inner(sig_, detail::canonical(p_), f0_)) < singular_tol_) {
        throw Error(ErrorKind::EmptyAdmissibleSet, "transforms", "p(mu) is null and orthogonal to f");
      }
      return;
    }
    // Euclidean basis of p^perp = ker (J p)^T, then diagonalize the metric on it.
    const Eigen::VectorXd jp = detail::lower(sig_, p_);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(jp.transpose()), Eigen::ComputeFullV);
    const Eigen::MatrixXd basis = svd.matrixV().rightCols(sig_.dim() - 1);
    const Eigen::MatrixXd gram = basis.transpose() * sig_.metric_diagonal().asDiagonal() * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    for (int k = 0; k < eig.eigenvalues().size(); ++k) {
      const double ev = eig.eigenvalues()[k];
      const Eigen::VectorXd w = basis * eig.eigenvectors().col(k) / std::sqrt(std::abs(ev));
      (ev > 0 ? positive_ : negative_).push_back(w);
    }
    if (negative_.empty() || positive_.empty()) {
      throw Error(ErrorKind::EmptyAdmissibleSet, "transforms",
                  "p(mu)^perp is definite: (p(mu), p(mu)) = " + std::to_string(detail::inner(sig_, p_, p_)));
    }
  }

  bool singleton() const { return null_case_; }
  const Eigen::VectorXd& p_mu() const { return p_; }

  /// The null line x + y for unit-normalized direction coefficients.
  NullLine line(const Eigen::VectorXd& pos_dir, const Eigen::VectorXd& neg_dir) const {
    if (null_case_) return NullLine(PseudoVector(sig_, p_));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(sig_.dim());
    const double pn = pos_dir.norm(), nn = neg_dir.norm();
    for (std::size_t k = 0; k < positive_.size(); ++k) v += pos_dir[k] / pn * positive_[k];
    for (std::size_t k = 0; k < negative_.size(); ++k) v += neg_dir[k] / nn * negative_[k];
    return NullLine(PseudoVector(sig_, v));
  }

  /// One admissible line per draw; redraws lines too close to f(x0).
  NullLine sample(SplitRng& rng) const {
    if (null_case_) return NullLine(PseudoVector(sig_, p_));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Eigen::VectorXd a(positive_.size()), b(negative_.size());
      for (auto& x : a) x = rng.normal();
      for (auto& x : b) x = rng.normal();
      if (a.norm() == 0.0 || b.norm() == 0.0) continue;
      NullLine l = line(a, b);
      if (std::abs(line_inner(l, NullLine(PseudoVector(sig_, f0_)))) > singular_tol_) return l;
    }
    throw Error(ErrorKind::EmptyAdmissibleSet, "transforms", "no admissible line away from f(x0) after 1000 draws");
  }

  NullLine sample(std::uint64_t seed) const {
    SplitRng rng(seed);
    return sample(rng);
  }

  /// Among `candidates` draws, the line farthest from f(x0) in the sense of
  /// the largest |(L, f(x0))|.
  NullLine sample_well_conditioned(std::uint64_t seed, int candidates = 16) const {
    SplitRng rng(seed);
    NullLine best = sample(rng);
    const NullLine f(PseudoVector(sig_, f0_));
    for (int k = 1; k < candidates && !null_case_; ++k) {
      NullLine l = sample(rng);
      if (std::abs(line_inner(l, f)) > std::abs(line_inner(best, f))) best = l;
    }
    return best;
  }

  /// Normalized |(p(mu), L)|.
  double orthogonality_residual(const NullLine& l) const {
    return std::abs(detail::inner(sig_, p_, l.coords())) / p_.norm();
  }

 private:
  Signature sig_;
  Eigen::VectorXd p_;
  Eigen::VectorXd f0_;
  double singular_tol_;
  bool null_case_ = false;
  std::vector<Eigen::VectorXd> positive_;
  std::vector<Eigen::VectorXd> negative_;
};

inline AdmissibleLines backlund_initial_lines(const Polynomial& p_at_x0, double mu, const NullLine& f_x0) {
  return {f_x0.signature(), p_at_x0(mu), f_x0.coords()};
}

inline AdmissibleLines backlund_initial_lines(const PolyConservedQuantity& p, const ParametrizedSurface& s, double mu,
                                              Param x0) {
  return backlund_initial_lines(p.at(x0.u, x0.v), mu, euclidean_lift(s.position(x0.u, x0.v)));
}

/// Conserved quantity of the transform fhat: p_hat(t) = boost(f, fhat, 1 - t/mu) p(t).
/// Each evaluation transports fhat to the point. Throws NonPolynomial where
/// the gauge image is not polynomial within tolerance.
inline PolyConservedQuantity transform_cq(const PolyConservedQuantity& p, const DarbouxTransform& d,
                                          double tol_polyfit = kPolyfitTol) {
  auto pp = std::make_shared<const PolyConservedQuantity>(p);
  auto dd = std::make_shared<const DarbouxTransform>(d);
  std::vector<PolyConservedQuantity::Field> fields;
  for (int k = 0; k <= p.degree(); ++k) {
    fields.push_back([pp, dd, k, tol_polyfit](double u, double v) {
      const Vec3 x = dd->family().base().position(u, v);
      const Eigen::VectorXd f = lift_coords(x);
      const NullLine fhat = dd->at({u, v});
      const PolyFit fit = gauge_conserved_quantity(pp->signature(), pp->at(u, v), f, fhat.coords(), dd->mu());
      if (fit.residual > tol_polyfit) {
        throw Error(ErrorKind::NonPolynomial, "transforms",
                    "gauged conserved quantity is not polynomial at (" + std::to_string(u) + ", " + std::to_string(v) +
                        "), fit residual " + std::to_string(fit.residual));
      }
      return fit.poly.coeffs[k];
    });
  }
  return {p.signature(), std::move(fields)};
}

}  // namespace isolattice
