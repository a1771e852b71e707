#pragma once

// Smooth isothermic surfaces in Euclidean 3-space, their light-cone lifts,
// the closed retraction form eta and the associated family of flat
// connections d + t eta with numerical parallel transport.

#include "pseudo_linear.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace isolattice {

using Vec3 = Eigen::Vector3d;

/// A point (u, v) of the parameter domain.
struct Param {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const Param&, const Param&) = default;
};

struct Domain {
  double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;

  bool contains(Param x, double slack = 1e-12) const {
    return x.u >= u0 - slack && x.u <= u1 + slack && x.v >= v0 - slack && x.v <= v1 + slack;
  }
  double diameter() const { return std::hypot(u1 - u0, v1 - v0); }
};

/// Regular nu x nv grid of nodes spanning `rect` (boundaries included).
struct SampleGrid {
  Domain rect;
  int nu = 2;
  int nv = 2;

  Param node(int i, int j) const {
    return {nu > 1 ? rect.u0 + (rect.u1 - rect.u0) * i / (nu - 1) : rect.u0,
            nv > 1 ? rect.v0 + (rect.v1 - rect.v0) * j / (nv - 1) : rect.v0};
  }
  int size() const { return nu * nv; }
  int index(int i, int j) const { return i * nv + j; }
  bool valid(int i, int j) const { return i >= 0 && i < nu && j >= 0 && j < nv; }
};

struct SpaceFormVector {
  PseudoVector q_vec;

  explicit SpaceFormVector(PseudoVector q) : q_vec(std::move(q)) {
    if (q_vec.coords().norm() == 0.0) {
      throw Error(ErrorKind::InvalidConfig, "smooth_isothermic", "space form vector must be nonzero");
    }
  }

  /// q = 2 einf: the Euclidean chart M = R^3.
  static SpaceFormVector euclidean() {
    return SpaceFormVector(2.0 * PseudoVector::e_inf(Signature::conformal3()));
  }
};

/// sigma = e0 + x + |x|^2 einf, normalized by (sigma, 2 einf) = -1.
inline Eigen::VectorXd lift_coords(const Vec3& x) {
  Eigen::VectorXd s(5);
  const double x2 = x.squaredNorm();
  s << x[0], x[1], x[2], 0.5 * (1.0 - x2), 0.5 * (1.0 + x2);
  return s;
}

/// Light-cone differential of a tangent vector w at x: w + 2 (x.w) einf.
inline Eigen::VectorXd lift_differential(const Vec3& x, const Vec3& w) {
  Eigen::VectorXd s(5);
  const double xw = x.dot(w);
  s << w[0], w[1], w[2], -xw, xw;
  return s;
}

inline PseudoVector euclidean_lift_vector(const Vec3& x) {
  return {Signature::conformal3(), lift_coords(x)};
}

inline NullLine euclidean_lift(const Vec3& x) { return NullLine(euclidean_lift_vector(x)); }

/// Point of the space form slice {X : (X, q) = -1} read in the Euclidean chart.
inline Vec3 project_to_spaceform(const NullLine& f, const SpaceFormVector& q) {
  const double fq = inner(f.rep(), q.q_vec);
  if (std::abs(fq) < tol::orth) {
    throw Error(ErrorKind::OrthogonalToSpaceForm, "smooth_isothermic",
                "point is orthogonal to the space form vector (point at infinity)");
  }
  const Eigen::VectorXd x = -f.coords() / fq;
  return {x[0], x[1], x[2]};
}

/// Immersion of a rectangle into R^3 with optional analytic derivatives.
/// Missing derivatives fall back to central differences.
class ParametrizedSurface {
 public:
  using Map = std::function<Vec3(double, double)>;

  struct Derivatives {
    Map du, dv, duu, duv, dvv;
  };

  ParametrizedSurface(std::string name, Domain domain, Map immersion, Derivatives d = {},
                      int normal_orientation = 1)
      : name_(std::move(name)),
        domain_(domain),
        f_(std::move(immersion)),
        d_(std::move(d)),
        orientation_(normal_orientation >= 0 ? 1 : -1),
        h_fd_(1e-4 * std::max(1.0, domain.diameter())) {}

  const std::string& name() const { return name_; }
  const Domain& domain() const { return domain_; }
  int normal_orientation() const { return orientation_; }
  double fd_step() const { return h_fd_; }

  ParametrizedSurface with_normal_orientation(int orientation) const {
    ParametrizedSurface s = *this;
    s.orientation_ = orientation >= 0 ? 1 : -1;
    return s;
  }

  Vec3 position(double u, double v) const { return f_(u, v); }

  Vec3 f_u(double u, double v) const {
    if (d_.du) return d_.du(u, v);
    return (f_(u + h_fd_, v) - f_(u - h_fd_, v)) / (2 * h_fd_);
  }
  Vec3 f_v(double u, double v) const {
    if (d_.dv) return d_.dv(u, v);
    return (f_(u, v + h_fd_) - f_(u, v - h_fd_)) / (2 * h_fd_);
  }
  Vec3 f_uu(double u, double v) const {
    if (d_.duu) return d_.duu(u, v);
    return (f_u(u + h_fd_, v) - f_u(u - h_fd_, v)) / (2 * h_fd_);
  }
  Vec3 f_uv(double u, double v) const {
    if (d_.duv) return d_.duv(u, v);
    return (f_u(u, v + h_fd_) - f_u(u, v - h_fd_)) / (2 * h_fd_);
  }
  Vec3 f_vv(double u, double v) const {
    if (d_.dvv) return d_.dvv(u, v);
    return (f_v(u, v + h_fd_) - f_v(u, v - h_fd_)) / (2 * h_fd_);
  }

  /// Unit normal orientation * (f_u x f_v) / |f_u x f_v|.
  Vec3 normal(double u, double v) const {
    const Vec3 n = f_u(u, v).cross(f_v(u, v));
    return orientation_ * n / n.norm();
  }

  /// e^{2 omega} = |f_u|^2.
  double conformal_factor(double u, double v) const { return f_u(u, v).squaredNorm(); }

  /// Curvatures along the coordinate directions (principal in curvature-line
  /// coordinates), with the sign convention dN = -kappa df.
  std::pair<double, double> principal_curvatures(double u, double v) const {
    const Vec3 n = normal(u, v);
    return {f_uu(u, v).dot(n) / f_u(u, v).squaredNorm(), f_vv(u, v).dot(n) / f_v(u, v).squaredNorm()};
  }

  double mean_curvature(double u, double v) const {
    const auto [k1, k2] = principal_curvatures(u, v);
    return 0.5 * (k1 + k2);
  }

 private:
  std::string name_;
  Domain domain_;
  Map f_;
  Derivatives d_;
  int orientation_;
  double h_fd_;
};

/// (cos u, sin u, v) scaled by the radius. Orientation +1 is the outward normal.
inline ParametrizedSurface make_cylinder(double radius = 1.0, int normal_orientation = -1,
                                         Domain domain = {-3.0, 3.0, -2.0, 2.0}) {
  const double r = radius;
  ParametrizedSurface::Derivatives d;
  d.du = [r](double u, double) { return Vec3(-r * std::sin(u), r * std::cos(u), 0.0); };
  d.dv = [r](double, double) { return Vec3(0.0, 0.0, r); };
  d.duu = [r](double u, double) { return Vec3(-r * std::cos(u), -r * std::sin(u), 0.0); };
  d.duv = [](double, double) { return Vec3::Zero().eval(); };
  d.dvv = [](double, double) { return Vec3::Zero().eval(); };
  return {"cylinder", domain,
          [r](double u, double v) { return Vec3(r * std::cos(u), r * std::sin(u), r * v); }, d,
          normal_orientation};
}

/// (cosh v cos u, cosh v sin u, v): minimal, conformal factor cosh^2 v.
inline ParametrizedSurface make_catenoid(int normal_orientation = 1, Domain domain = {-3.0, 3.0, -1.5, 1.5}) {
  ParametrizedSurface::Derivatives d;
  d.du = [](double u, double v) { return Vec3(-std::cosh(v) * std::sin(u), std::cosh(v) * std::cos(u), 0.0); };
  d.dv = [](double u, double v) { return Vec3(std::sinh(v) * std::cos(u), std::sinh(v) * std::sin(u), 1.0); };
  d.duu = [](double u, double v) { return Vec3(-std::cosh(v) * std::cos(u), -std::cosh(v) * std::sin(u), 0.0); };
  d.duv = [](double u, double v) { return Vec3(-std::sinh(v) * std::sin(u), std::sinh(v) * std::cos(u), 0.0); };
  d.dvv = [](double u, double v) { return Vec3(std::cosh(v) * std::cos(u), std::cosh(v) * std::sin(u), 0.0); };
  return {"catenoid", domain,
          [](double u, double v) { return Vec3(std::cosh(v) * std::cos(u), std::cosh(v) * std::sin(u), v); },
          d, normal_orientation};
}

struct CoordinateTolerances {
  double coord = 1e-6;    // relative off-diagonal / conformality defect
  double umbilic = 1e-6;  // relative principal curvature gap
};

struct CoordinateReport {
  double max_first_offdiag = 0.0;   // |I(du,dv)| / (|f_u|^2 + |f_v|^2)
  double max_second_offdiag = 0.0;  // |II(du,dv)| / (|II_11| + |II_22|)
  double max_conformal_defect = 0.0;
  double min_umbilic_gap = std::numeric_limits<double>::infinity();
  Param worst{};
  bool ok = false;
};

/// Samples an n x n grid of the domain interior and checks the conformal
/// curvature-line conditions and absence of umbilics.
inline CoordinateReport validate_coordinates(const ParametrizedSurface& s, int samples = 7,
                                             CoordinateTolerances tolerances = {}) {
  CoordinateReport rep;
  const Domain& d = s.domain();
  double worst = -1.0;
  for (int i = 0; i < samples; ++i) {
    for (int j = 0; j < samples; ++j) {
      const double u = d.u0 + (d.u1 - d.u0) * (i + 0.5) / samples;
      const double v = d.v0 + (d.v1 - d.v0) * (j + 0.5) / samples;
      const Vec3 fu = s.f_u(u, v), fv = s.f_v(u, v), n = s.normal(u, v);
      const double g11 = fu.squaredNorm(), g22 = fv.squaredNorm();
      const double b11 = s.f_uu(u, v).dot(n), b22 = s.f_vv(u, v).dot(n), b12 = s.f_uv(u, v).dot(n);
      const double first = std::abs(fu.dot(fv)) / (g11 + g22);
      const double conf = std::abs(g11 - g22) / (g11 + g22);
      const double second = std::abs(b12) / (std::abs(b11) + std::abs(b22) + 1e-300);
      const double k1 = b11 / g11, k2 = b22 / g22;
      const double gap = std::abs(k1 - k2) / std::max({std::abs(k1), std::abs(k2), 1e-300});
      rep.max_first_offdiag = std::max(rep.max_first_offdiag, first);
      rep.max_conformal_defect = std::max(rep.max_conformal_defect, conf);
      rep.max_second_offdiag = std::max(rep.max_second_offdiag, second);
      rep.min_umbilic_gap = std::min(rep.min_umbilic_gap, gap);
      const double badness = std::max({first, conf, second});
      if (badness > worst) {
        worst = badness;
        rep.worst = {u, v};
      }
    }
  }
  rep.ok = rep.max_first_offdiag < tolerances.coord && rep.max_conformal_defect < tolerances.coord &&
           rep.max_second_offdiag < tolerances.coord && rep.min_umbilic_gap > tolerances.umbilic;
  return rep;
}

inline void require_isothermic(const ParametrizedSurface& s, CoordinateTolerances tolerances = {}) {
  const CoordinateReport r = validate_coordinates(s, 7, tolerances);
  if (!r.ok) {
    throw Error(ErrorKind::CoordinateViolation, "smooth_isothermic",
                s.name() + " is not in umbilic-free conformal curvature-line coordinates (I12=" +
                    std::to_string(r.max_first_offdiag) + ", II12=" + std::to_string(r.max_second_offdiag) +
                    ", conformal=" + std::to_string(r.max_conformal_defect) +
                    ", umbilic gap=" + std::to_string(r.min_umbilic_gap) + ") near (" +
                    std::to_string(r.worst.u) + ", " + std::to_string(r.worst.v) + ")");
  }
}

/// Differential of the Christoffel dual: (e^{-2w} f_u, -e^{-2w} f_v).
inline std::pair<Vec3, Vec3> christoffel_dual_diff(const ParametrizedSurface& s, double u, double v,
                                                   double tol_metric = 1e-12) {
  const double e2w = s.conformal_factor(u, v);
  if (e2w < tol_metric) {
    throw Error(ErrorKind::DegenerateMetric, "smooth_isothermic",
                "conformal factor vanishes at (" + std::to_string(u) + ", " + std::to_string(v) + ")");
  }
  return {s.f_u(u, v) / e2w, -s.f_v(u, v) / e2w};
}

/// eta = c sigma ^ d(sigma*), where d(sigma*) lifts the Christoffel dual's
/// differential so that both factors lie in f^perp.
class RetractionForm {
 public:
  RetractionForm(std::shared_ptr<const ParametrizedSurface> surface, double scale)
      : surface_(std::move(surface)), scale_(scale) {}

  const ParametrizedSurface& surface() const { return *surface_; }
  std::shared_ptr<const ParametrizedSurface> surface_ptr() const { return surface_; }
  double scale() const { return scale_; }

  RetractionForm with_scale(double scale) const {
    RetractionForm r = *this;
    r.scale_ = scale;
    return r;
  }

  /// Scales the du and dv components independently. Only (1, 1) gives a
  /// closed form; anything else is a deliberately broken control.
  RetractionForm with_component_scales(double su, double sv) const {
    RetractionForm r = *this;
    r.su_ = su;
    r.sv_ = sv;
    return r;
  }

  Bivector eta_u(double u, double v) const { return component(u, v, true); }
  Bivector eta_v(double u, double v) const { return component(u, v, false); }

  Eigen::MatrixXd eta_u_matrix(double u, double v) const { return component(u, v, true).matrix(); }
  Eigen::MatrixXd eta_v_matrix(double u, double v) const { return component(u, v, false).matrix(); }

  /// eta applied to the tangent vector (du, dv) at (u, v).
  Eigen::MatrixXd matrix(double u, double v, double du, double dv) const {
    const Signature sig = Signature::conformal3();
    const Vec3 x = surface_->position(u, v);
    const auto [su, sv] = christoffel_dual_diff(*surface_, u, v);
    const Eigen::VectorXd tau = lift_differential(x, su_ * du * su + sv_ * dv * sv);
    return scale_ * detail::wedge_matrix(sig, lift_coords(x), tau);
  }

 private:
  Bivector component(double u, double v, bool along_u) const {
    const Vec3 x = surface_->position(u, v);
    const auto [su, sv] = christoffel_dual_diff(*surface_, u, v);
    const Signature sig = Signature::conformal3();
    return Bivector::wedge(PseudoVector(sig, scale_ * lift_coords(x)),
                           PseudoVector(sig, along_u ? su_ * lift_differential(x, su)
                                                     : sv_ * lift_differential(x, sv)));
  }

  std::shared_ptr<const ParametrizedSurface> surface_;
  double scale_;
  double su_ = 1.0;
  double sv_ = 1.0;
};

/// Builds eta for a validated surface. Rejects surfaces outside umbilic-free
/// conformal curvature-line coordinates.
inline RetractionForm retraction_form(const ParametrizedSurface& s, double scale = 1.0) {
  require_isothermic(s);
  return {std::make_shared<const ParametrizedSurface>(s), scale};
}

/// Central-difference curl d_v eta_u - d_u eta_v, max Frobenius norm over an
/// n x n grid of the domain interior.
inline double closedness_residual(const RetractionForm& eta, int samples = 20, double h = 1e-4) {
  const Domain& d = eta.surface().domain();
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    for (int j = 0; j < samples; ++j) {
      const double u = d.u0 + (d.u1 - d.u0) * (i + 0.5) / samples;
      const double v = d.v0 + (d.v1 - d.v0) * (j + 0.5) / samples;
      const Eigen::MatrixXd curl = (eta.eta_u_matrix(u, v + h) - eta.eta_u_matrix(u, v - h)) / (2 * h) -
                                   (eta.eta_v_matrix(u + h, v) - eta.eta_v_matrix(u - h, v)) / (2 * h);
      worst = std::max(worst, curl.norm());
    }
  }
  return worst;
}

using Path = std::vector<Param>;

inline Path rectangle_loop(Param corner, double du, double dv) {
  return {corner, {corner.u + du, corner.v}, {corner.u + du, corner.v + dv}, {corner.u, corner.v + dv}, corner};
}

/// Axis-aligned path x0 -> (x.u, x0.v) -> x.
inline Path l_path(Param x0, Param x) { return {x0, {x.u, x0.v}, x}; }

struct TransportOptions {
  double rel_step = 1e-3;      // step = rel_step * path length
  int steps_per_segment = 0;   // when > 0, overrides rel_step
  int renormalize_every = 32;  // projective renormalization of single-vector transports
};

/// Gamma(t) = d + t eta.
class ConnectionFamily {
 public:
  explicit ConnectionFamily(RetractionForm eta) : eta_(std::move(eta)) {}

  const RetractionForm& eta() const { return eta_; }
  const ParametrizedSurface& base() const { return eta_.surface(); }

 private:
  RetractionForm eta_;
};

namespace detail {

inline double path_length(const Path& path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += std::hypot(path[i].u - path[i - 1].u, path[i].v - path[i - 1].v);
  return len;
}

inline void check_path(const ConnectionFamily& c, const Path& path) {
  for (const Param& x : path) {
    if (!c.base().domain().contains(x)) {
      throw Error(ErrorKind::PathOutsideDomain, "smooth_isothermic",
                  "path vertex (" + std::to_string(x.u) + ", " + std::to_string(x.v) + ") leaves the domain");
    }
  }
}

/// Classical RK4 for dM/ds = -t eta(dx/ds) M along each straight segment.
/// `on_step(step, x, state)` runs after every step and may rescale the state.
template <class State, class OnStep>
State integrate(const ConnectionFamily& c, double t, const Path& path, State m, const TransportOptions& opt,
                OnStep on_step) {
  check_path(c, path);
  if (t == 0.0 || path.size() < 2) return m;
  const double length = path_length(path);
  if (length == 0.0) return m;
  const double h_target = opt.rel_step * length;
  const RetractionForm& eta = c.eta();
  int step_count = 0;
  for (std::size_t seg = 1; seg < path.size(); ++seg) {
    const Param p0 = path[seg - 1], p1 = path[seg];
    const double du = p1.u - p0.u, dv = p1.v - p0.v;
    const double seg_len = std::hypot(du, dv);
    if (seg_len == 0.0) continue;
    const int n = opt.steps_per_segment > 0 ? opt.steps_per_segment
                                            : std::max(1, static_cast<int>(std::ceil(seg_len / h_target - 1e-9)));
    const double h = 1.0 / n;
    auto rhs = [&](double s, const State& y) -> State {
      return -t * (eta.matrix(p0.u + s * du, p0.v + s * dv, du, dv) * y);
    };
    for (int k = 0; k < n; ++k) {
      const double s = k * h;
      const State k1 = rhs(s, m);
      const State k2 = rhs(s + h / 2, m + (h / 2) * k1);
      const State k3 = rhs(s + h / 2, m + (h / 2) * k2);
      const State k4 = rhs(s + h, m + h * k3);
      m += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
      on_step(++step_count, Param{p0.u + (s + h) * du, p0.v + (s + h) * dv}, m);
    }
  }
  return m;
}

}  // namespace detail

/// Transport matrix of Gamma(t) along the path: Y(end) = T Y(start).
inline Eigen::MatrixXd transport_matrix(const ConnectionFamily& c, double t, const Path& path,
                                        const TransportOptions& opt = {}) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(5, 5);
  return detail::integrate(c, t, path, m, opt, [](int, Param, Eigen::MatrixXd&) {});
}

inline PseudoVector parallel_transport(const ConnectionFamily& c, double t, const Path& path,
                                       const PseudoVector& y0, const TransportOptions& opt = {}) {
  if (!(y0.signature() == Signature::conformal3())) {
    throw Error(ErrorKind::SignatureMismatch, "smooth_isothermic", "transport acts on R^{4,1}");
  }
  Eigen::VectorXd y = y0.coords();
  y = detail::integrate(c, t, path, y, opt, [](int, Param, Eigen::VectorXd&) {});
  return {y0.signature(), y};
}

struct HolonomyEntry {
  double t = 0.0;
  std::size_t loop = 0;
  double deviation = 0.0;
};

struct FlatnessReport {
  double max_deviation = 0.0;
  std::vector<HolonomyEntry> entries;
};

/// Holonomy of Gamma(t) around each loop, measured as max |T - I| entry.
inline FlatnessReport flatness_check(const ConnectionFamily& c, const std::vector<double>& t_samples,
                                     const std::vector<Path>& loops, const TransportOptions& opt = {}) {
  FlatnessReport rep;
  for (double t : t_samples) {
    for (std::size_t i = 0; i < loops.size(); ++i) {
      const Eigen::MatrixXd hol = transport_matrix(c, t, loops[i], opt);
      const double dev = (hol - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff();
      rep.entries.push_back({t, i, dev});
      rep.max_deviation = std::max(rep.max_deviation, dev);
    }
  }
  return rep;
}

}  // namespace isolattice
