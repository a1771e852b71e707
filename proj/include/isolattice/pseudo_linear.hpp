#pragma once

// Pseudo-Euclidean linear algebra on R^{p+1,q+1}: inner products, null
// lines of the light cone, rank-2 skew actions, Lorentz boosts, circles and
// cross-ratios.
//
// Coordinates are taken in a pseudo-orthonormal basis with metric
// diag(+1,...,+1,-1,...,-1). The last two slots carry the null pair
//   e0   = (0,...,0,  1/2, 1/2)
//   einf = (0,...,0, -1/2, 1/2)
// so that (e0, einf) = -1/2.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace isolattice {

enum class ErrorKind {
  SignatureMismatch,
  InvalidSignature,
  NonFinite,
  NotNull,
  OrthogonalLines,
  ZeroLambda,
  DegenerateSpan,
  NotConcircular,
  CoincidentPoints,
  OrthogonalToSpaceForm,
  DegenerateMetric,
  CoordinateViolation,
  PathOutsideDomain,
  NonCmc,
  BianchiSingularity,
  EmptyAdmissibleSet,
  NonPolynomial,
  DegenerateConfiguration,
  PoleAtT,
  MissingCq,
  DegreeMismatch,
  NotNormalizable,
  OutsideGrid,
  Schema,
  InvalidConfig,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SignatureMismatch: return "signature-mismatch";
    case ErrorKind::InvalidSignature: return "invalid-signature";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::NotNull: return "not-null";
    case ErrorKind::OrthogonalLines: return "orthogonal-lines";
    case ErrorKind::ZeroLambda: return "zero-lambda";
    case ErrorKind::DegenerateSpan: return "degenerate-span";
    case ErrorKind::NotConcircular: return "not-concircular";
    case ErrorKind::CoincidentPoints: return "coincident-points";
    case ErrorKind::OrthogonalToSpaceForm: return "orthogonal-to-space-form";
    case ErrorKind::DegenerateMetric: return "degenerate-metric";
    case ErrorKind::CoordinateViolation: return "coordinate-violation";
    case ErrorKind::PathOutsideDomain: return "path-outside-domain";
    case ErrorKind::NonCmc: return "non-cmc";
    case ErrorKind::BianchiSingularity: return "bianchi-singularity";
    case ErrorKind::EmptyAdmissibleSet: return "empty-admissible-set";
    case ErrorKind::NonPolynomial: return "non-polynomial";
    case ErrorKind::DegenerateConfiguration: return "degenerate-configuration";
    case ErrorKind::PoleAtT: return "pole-at-t";
    case ErrorKind::MissingCq: return "missing-cq";
    case ErrorKind::DegreeMismatch: return "degree-mismatch";
    case ErrorKind::NotNormalizable: return "not-normalizable";
    case ErrorKind::OutsideGrid: return "outside-grid";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::InvalidConfig: return "invalid-config";
  }
  return "unknown";
}

/// Every failure in the library is reported through this type; `module()`
/// names the component that raised it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(module + ": " + to_string(kind) + ": " + message),
        kind_(kind),
        module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

namespace tol {
inline constexpr double null_rel = 1e-10;  // |(x,x)| relative to |x|^2
inline constexpr double proj = 1e-9;       // projective equality
inline constexpr double orth = 1e-12;      // |(a,b)| for unit representatives
inline constexpr double span = 1e-9;       // relative singular value floor
}  // namespace tol

class Signature {
 public:
  Signature(int p_plus, int q_minus) : p_plus_(p_plus), q_minus_(q_minus) {
    if (p_plus < 1 || q_minus < 1 || p_plus + q_minus < 4) {
      throw Error(ErrorKind::InvalidSignature, "pseudo_linear",
                  "signature (" + std::to_string(p_plus) + "," + std::to_string(q_minus) +
                      ") needs p_plus >= 1, q_minus >= 1, dimension >= 4");
    }
  }

  /// R^{4,1}: the conformal 3-sphere.
  static Signature conformal3() { return {4, 1}; }

  int p_plus() const { return p_plus_; }
  int q_minus() const { return q_minus_; }
  int dim() const { return p_plus_ + q_minus_; }
  double metric(int i) const { return i < p_plus_ ? 1.0 : -1.0; }

  Eigen::VectorXd metric_diagonal() const {
    Eigen::VectorXd d(dim());
    for (int i = 0; i < dim(); ++i) d[i] = metric(i);
    return d;
  }

  friend bool operator==(const Signature&, const Signature&) = default;

 private:
  int p_plus_;
  int q_minus_;
};

namespace detail {

inline double inner(const Signature& sig, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double s = 0.0;
  const int p = sig.p_plus();
  for (int i = 0; i < p; ++i) s += x[i] * y[i];
  for (int i = p; i < sig.dim(); ++i) s -= x[i] * y[i];
  return s;
}

/// J x, so that (x, y) = x^T J y.
inline Eigen::VectorXd lower(const Signature& sig, const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x;
  for (int i = sig.p_plus(); i < sig.dim(); ++i) y[i] = -y[i];
  return y;
}

/// Matrix of Y -> (a,Y) b - (b,Y) a.
inline Eigen::MatrixXd wedge_matrix(const Signature& sig, const Eigen::VectorXd& a,
                                    const Eigen::VectorXd& b) {
  return b * lower(sig, a).transpose() - a * lower(sig, b).transpose();
}

/// Boost with eigenvalue lam on span{b}, 1/lam on span{a}, identity on {a,b}^perp.
inline Eigen::MatrixXd boost_matrix(const Signature& sig, const Eigen::VectorXd& a,
                                    const Eigen::VectorXd& b, double lam) {
  const double ab = inner(sig, a, b);
  const int n = sig.dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  m += ((1.0 / lam - 1.0) / ab) * a * lower(sig, b).transpose();
  m += ((lam - 1.0) / ab) * b * lower(sig, a).transpose();
  return m;
}

/// Unit Euclidean norm with the first clearly nonzero coordinate positive.
inline Eigen::VectorXd canonical(const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x / x.norm();
  for (int i = 0; i < y.size(); ++i) {
    if (std::abs(y[i]) > 1e-12) {
      if (y[i] < 0) y = -y;
      break;
    }
  }
  return y;
}

}  // namespace detail

class PseudoVector {
 public:
  PseudoVector(Signature sig, Eigen::VectorXd coords) : sig_(sig), coords_(std::move(coords)) {
    if (coords_.size() != sig_.dim()) {
      throw Error(ErrorKind::SignatureMismatch, "pseudo_linear",
                  "coordinate length " + std::to_string(coords_.size()) +
                      " does not match dimension " + std::to_string(sig_.dim()));
    }
    if (!coords_.allFinite()) {
      throw Error(ErrorKind::NonFinite, "pseudo_linear", "non-finite coordinate");
    }
  }

  static PseudoVector zero(Signature sig) { return {sig, Eigen::VectorXd::Zero(sig.dim())}; }

  static PseudoVector basis(Signature sig, int i) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(sig.dim());
    c[i] = 1.0;
    return {sig, c};
  }

  static PseudoVector e0(Signature sig) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(sig.dim());
    c[sig.dim() - 2] = 0.5;
    c[sig.dim() - 1] = 0.5;
    return {sig, c};
  }

  static PseudoVector e_inf(Signature sig) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(sig.dim());
    c[sig.dim() - 2] = -0.5;
    c[sig.dim() - 1] = 0.5;
    return {sig, c};
  }

  const Signature& signature() const { return sig_; }
  const Eigen::VectorXd& coords() const { return coords_; }
  double operator[](int i) const { return coords_[i]; }
  int dim() const { return sig_.dim(); }

  PseudoVector operator+(const PseudoVector& o) const {
    check_same(o);
    return {sig_, coords_ + o.coords_};
  }
  PseudoVector operator-(const PseudoVector& o) const {
    check_same(o);
    return {sig_, coords_ - o.coords_};
  }
  PseudoVector operator-() const { return {sig_, -coords_}; }
  PseudoVector operator*(double s) const { return {sig_, coords_ * s}; }
  friend PseudoVector operator*(double s, const PseudoVector& v) { return v * s; }

  void check_same(const PseudoVector& o) const {
    if (!(sig_ == o.sig_)) {
      throw Error(ErrorKind::SignatureMismatch, "pseudo_linear", "operands carry different signatures");
    }
  }

 private:
  Signature sig_;
  Eigen::VectorXd coords_;
};

inline double inner(const PseudoVector& x, const PseudoVector& y) {
  x.check_same(y);
  return detail::inner(x.signature(), x.coords(), y.coords());
}

/// A point of the projectivized light cone. The stored representative has
/// unit Euclidean norm and its first nonzero coordinate positive.
class NullLine {
 public:
  explicit NullLine(const PseudoVector& rep) : rep_(check(rep)) {}

  /// Keeps the representative bit-for-bit when it is already canonical.
  static NullLine exact(const PseudoVector& rep) {
    NullLine line(rep);
    const double n = rep.coords().norm();
    if (std::abs(n - 1.0) < 1e-14 && (line.rep_.coords() - rep.coords()).norm() < 1e-14) {
      line.rep_ = rep;
    }
    return line;
  }

  const PseudoVector& rep() const { return rep_; }
  const Signature& signature() const { return rep_.signature(); }
  const Eigen::VectorXd& coords() const { return rep_.coords(); }

  bool approx_equal(const NullLine& o, double tolerance = tol::proj) const;

 private:
  static PseudoVector check(const PseudoVector& rep) {
    const double n2 = rep.coords().squaredNorm();
    if (n2 == 0.0) throw Error(ErrorKind::NotNull, "pseudo_linear", "zero representative");
    const double q = inner(rep, rep);
    if (std::abs(q) > tol::null_rel * n2) {
      throw Error(ErrorKind::NotNull, "pseudo_linear",
                  "representative is not null: (x,x)/|x|^2 = " + std::to_string(q / n2));
    }
    return {rep.signature(), detail::canonical(rep.coords())};
  }

  PseudoVector rep_;
};

/// Sine of the Euclidean angle between representatives; 0 iff the lines agree.
inline double projective_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ah = a / a.norm(), bh = b / b.norm();
  return (ah - ah.dot(bh) * bh).norm();
}

inline double projective_distance(const NullLine& a, const NullLine& b) {
  a.rep().check_same(b.rep());
  return projective_distance(a.coords(), b.coords());
}

inline bool NullLine::approx_equal(const NullLine& o, double tolerance) const {
  return projective_distance(*this, o) < tolerance;
}

/// Inner product of the canonical (unit) representatives.
inline double line_inner(const NullLine& a, const NullLine& b) { return inner(a.rep(), b.rep()); }

/// Finite sum of simple bivectors acting as a skew endomorphism.
class Bivector {
 public:
  explicit Bivector(Signature sig) : sig_(sig) {}

  static Bivector wedge(const PseudoVector& a, const PseudoVector& b) {
    a.check_same(b);
    Bivector w(a.signature());
    w.terms_.emplace_back(a, b);
    return w;
  }

  Bivector& add(const PseudoVector& a, const PseudoVector& b) {
    if (!(a.signature() == sig_) || !(b.signature() == sig_)) {
      throw Error(ErrorKind::SignatureMismatch, "pseudo_linear", "wedge factor signature");
    }
    terms_.emplace_back(a, b);
    return *this;
  }

  const Signature& signature() const { return sig_; }
  const std::vector<std::pair<PseudoVector, PseudoVector>>& terms() const { return terms_; }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(sig_.dim(), sig_.dim());
    for (const auto& [a, b] : terms_) m += detail::wedge_matrix(sig_, a.coords(), b.coords());
    return m;
  }

 private:
  Signature sig_;
  std::vector<std::pair<PseudoVector, PseudoVector>> terms_;
};

/// (a^b) Y = (a,Y) b - (b,Y) a, summed over terms.
inline PseudoVector wedge_apply(const Bivector& w, const PseudoVector& y) {
  if (!(w.signature() == y.signature())) {
    throw Error(ErrorKind::SignatureMismatch, "pseudo_linear", "bivector and vector signatures differ");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(y.dim());
  for (const auto& [a, b] : w.terms()) out += inner(a, y) * b.coords() - inner(b, y) * a.coords();
  return {y.signature(), out};
}

/// Matrix of the Lorentz boost scaling fhat by lam and f by 1/lam.
inline Eigen::MatrixXd boost_matrix(const NullLine& f, const NullLine& fhat, double lam) {
  f.rep().check_same(fhat.rep());
  if (lam == 0.0 || !std::isfinite(lam)) {
    throw Error(ErrorKind::ZeroLambda, "pseudo_linear", "boost parameter must be finite and nonzero");
  }
  if (std::abs(line_inner(f, fhat)) < tol::orth) {
    throw Error(ErrorKind::OrthogonalLines, "pseudo_linear", "boost between orthogonal null lines");
  }
  return detail::boost_matrix(f.signature(), f.coords(), fhat.coords(), lam);
}

inline PseudoVector boost(const NullLine& f, const NullLine& fhat, double lam, const PseudoVector& y) {
  f.rep().check_same(y);
  return {y.signature(), boost_matrix(f, fhat, lam) * y.coords()};
}

/// Euclidean-orthonormal basis of the 3-space spanned by three points; its
/// null directions form the circle through them.
class CircleSpan {
 public:
  CircleSpan(Signature sig, Eigen::Matrix<double, Eigen::Dynamic, 3> basis)
      : sig_(sig), basis_(std::move(basis)) {}

  std::array<PseudoVector, 3> basis() const {
    return {PseudoVector(sig_, basis_.col(0)), PseudoVector(sig_, basis_.col(1)),
            PseudoVector(sig_, basis_.col(2))};
  }

  /// Relative distance of x from the span.
  double residual(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = x - basis_ * (basis_.transpose() * x);
    return r.norm() / x.norm();
  }
  double residual(const PseudoVector& x) const { return residual(x.coords()); }
  bool contains(const NullLine& x, double tolerance = 1e-10) const {
    return residual(x.coords()) < tolerance;
  }

 private:
  Signature sig_;
  Eigen::Matrix<double, Eigen::Dynamic, 3> basis_;
};

inline CircleSpan circle_span(const NullLine& a, const NullLine& b, const NullLine& c) {
  a.rep().check_same(b.rep());
  a.rep().check_same(c.rep());
  Eigen::Matrix<double, Eigen::Dynamic, 3> m(a.signature().dim(), 3);
  m << a.coords(), b.coords(), c.coords();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  if (s[2] < tol::span * s[0]) {
    throw Error(ErrorKind::DegenerateSpan, "pseudo_linear",
                "three points do not span a 3-space (coincident lines)");
  }
  return {a.signature(), svd.matrixU().leftCols(3)};
}

/// Real cross-ratio of four concircular points, normalized so that a flat
/// quad (i,j,k,l) with edge labels m_ij, m_il gives m_ij / m_il. In a
/// planar chart it equals (zj - zk)(zl - zi) / ((zi - zj)(zk - zl)).
///
/// Computed in the affine chart of the circle that sends Fi, Fj, Fl to
/// 0, 1, infinity; the result is 1 - (chart parameter of Fk).
inline double cross_ratio(const NullLine& fi, const NullLine& fj, const NullLine& fk, const NullLine& fl) {
  const Signature& sig = fi.signature();
  for (const NullLine* x : {&fj, &fk, &fl}) fi.rep().check_same(x->rep());

  const std::array<const NullLine*, 4> pts{&fi, &fj, &fk, &fl};
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      if (projective_distance(*pts[i], *pts[j]) < tol::proj) {
        throw Error(ErrorKind::CoincidentPoints, "pseudo_linear", "cross-ratio of coincident points");
      }
    }
  }

  Eigen::MatrixXd m(sig.dim(), 4);
  m << fi.coords(), fj.coords(), fk.coords(), fl.coords();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s[3] > 1e-8 * s[0]) {
    throw Error(ErrorKind::NotConcircular, "pseudo_linear",
                "points do not lie in a common 3-space (sigma_4/sigma_1 = " + std::to_string(s[3] / s[0]) + ")");
  }

  const Eigen::VectorXd& d = fl.coords();
  auto chart = [&](const Eigen::VectorXd& x) {
    const double xd = detail::inner(sig, x, d);
    if (std::abs(xd) < tol::orth) {
      throw Error(ErrorKind::OrthogonalLines, "pseudo_linear", "point orthogonal to the chart's point at infinity");
    }
    return Eigen::VectorXd(-x / xd);
  };
  const Eigen::VectorXd a = chart(fi.coords());
  const Eigen::VectorXd b = chart(fj.coords());
  const Eigen::VectorXd c = chart(fk.coords());
  const double ab = detail::inner(sig, a, b);
  const double s_param = (detail::inner(sig, c, b) - detail::inner(sig, c, a) - ab) / (-2.0 * ab);
  return 1.0 - s_param;
}

}  // namespace isolattice
