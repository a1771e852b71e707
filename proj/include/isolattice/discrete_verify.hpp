#pragma once

// Discrete nets in the light cone and their certification as discrete
// special isothermic surfaces of type d: flatness of the edge-labelled boost
// connections and the degree-d edge property of a polynomial conserved
// quantity.

#include "pseudo_linear.hpp"
#include "smooth_isothermic.hpp"
#include "transforms.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace isolattice {

/// Lattice coordinates (m, n) of a vertex.
struct Index2 {
  int m = 0;
  int n = 0;
  auto operator<=>(const Index2&) const = default;
};

inline std::string to_string(Index2 i) { return "(" + std::to_string(i.m) + "," + std::to_string(i.n) + ")"; }

/// Unoriented unit edge, stored with the smaller endpoint first.
struct UnitEdge {
  Index2 lo;
  Index2 hi;

  UnitEdge(Index2 a, Index2 b) : lo(std::min(a, b)), hi(std::max(a, b)) {}
  bool horizontal() const { return hi.m == lo.m + 1; }
  auto operator<=>(const UnitEdge&) const = default;
};

class DiscreteNet {
 public:
  explicit DiscreteNet(Signature sig) : sig_(sig) {}

  const Signature& signature() const { return sig_; }

  void set_vertex(Index2 i, const NullLine& f) {
    if (!(f.signature() == sig_)) throw Error(ErrorKind::SignatureMismatch, "discrete_verify", "vertex signature");
    vertices_.insert_or_assign(i, f);
  }

  void set_label(Index2 a, Index2 b, double label) {
    if (std::abs(a.m - b.m) + std::abs(a.n - b.n) != 1) {
      throw Error(ErrorKind::Schema, "discrete_verify", "labels live on unit edges " + to_string(a) + "-" + to_string(b));
    }
    labels_.insert_or_assign(UnitEdge(a, b), label);
  }

  void set_cq(Index2 i, Polynomial p) { cq_.insert_or_assign(i, std::move(p)); }
  void clear_cq() { cq_.clear(); }

  const std::map<Index2, NullLine>& vertices() const { return vertices_; }
  const std::map<UnitEdge, double>& labels() const { return labels_; }
  const std::map<Index2, Polynomial>& cq() const { return cq_; }
  bool has_cq() const { return !cq_.empty(); }

  bool has_vertex(Index2 i) const { return vertices_.count(i) != 0; }
  const NullLine& vertex(Index2 i) const {
    auto it = vertices_.find(i);
    if (it == vertices_.end()) throw Error(ErrorKind::OutsideGrid, "discrete_verify", "no vertex " + to_string(i));
    return it->second;
  }

  double label(Index2 a, Index2 b) const {
    auto it = labels_.find(UnitEdge(a, b));
    if (it == labels_.end()) {
      throw Error(ErrorKind::Schema, "discrete_verify", "missing label on edge " + to_string(a) + "-" + to_string(b));
    }
    return it->second;
  }

  const Polynomial& cq_at(Index2 i) const {
    auto it = cq_.find(i);
    if (it == cq_.end()) throw Error(ErrorKind::MissingCq, "discrete_verify", "no conserved quantity at " + to_string(i));
    return it->second;
  }

  /// Lower-left corners of the unit squares whose four vertices are present.
  std::vector<Index2> quads() const {
    std::vector<Index2> out;
    for (const auto& [i, f] : vertices_) {
      if (has_vertex({i.m + 1, i.n}) && has_vertex({i.m + 1, i.n + 1}) && has_vertex({i.m, i.n + 1})) out.push_back(i);
    }
    return out;
  }

  /// Unit edges of the quads, plus any labelled edge between present vertices.
  std::vector<UnitEdge> edges() const {
    std::set<UnitEdge> out;
    for (Index2 q : quads()) {
      out.insert(UnitEdge(q, {q.m + 1, q.n}));
      out.insert(UnitEdge(q, {q.m, q.n + 1}));
      out.insert(UnitEdge({q.m + 1, q.n}, {q.m + 1, q.n + 1}));
      out.insert(UnitEdge({q.m, q.n + 1}, {q.m + 1, q.n + 1}));
    }
    for (const auto& [e, l] : labels_) {
      if (has_vertex(e.lo) && has_vertex(e.hi)) out.insert(e);
    }
    return {out.begin(), out.end()};
  }

  /// Invariant violations: zero or non-finite labels, labels differing across
  /// opposite quad edges, adjacent orthogonal vertices, non-null vertices.
  std::vector<std::string> validate(double orth_tol = 1e-9) const {
    std::vector<std::string> problems;
    for (const auto& [e, l] : labels_) {
      if (l == 0.0 || !std::isfinite(l)) problems.push_back("label on " + to_string(e.lo) + "-" + to_string(e.hi) + " is zero or non-finite");
    }
    for (const auto& [i, f] : vertices_) {
      const double n2 = f.coords().squaredNorm();
      if (std::abs(inner(f.rep(), f.rep())) > tol::null_rel * n2) problems.push_back("vertex " + to_string(i) + " is not null");
    }
    for (const UnitEdge& e : edges()) {
      if (labels_.count(e) == 0) {
        problems.push_back("edge " + to_string(e.lo) + "-" + to_string(e.hi) + " has no label");
        continue;
      }
      if (std::abs(line_inner(vertex(e.lo), vertex(e.hi))) < orth_tol) {
        problems.push_back("adjacent vertices " + to_string(e.lo) + ", " + to_string(e.hi) + " are orthogonal");
      }
    }
    for (Index2 q : quads()) {
      const Index2 j{q.m + 1, q.n}, k{q.m + 1, q.n + 1}, l{q.m, q.n + 1};
      auto get = [&](Index2 a, Index2 b) -> std::optional<double> {
        auto it = labels_.find(UnitEdge(a, b));
        if (it == labels_.end()) return std::nullopt;
        return it->second;
      };
      const auto ij = get(q, j), lk = get(l, k), il = get(q, l), jk = get(j, k);
      if (ij && lk && *ij != *lk) problems.push_back("quad " + to_string(q) + ": m_ij != m_lk");
      if (il && jk && *il != *jk) problems.push_back("quad " + to_string(q) + ": m_il != m_jk");
    }
    return problems;
  }

 private:
  Signature sig_;
  std::map<Index2, NullLine> vertices_;
  std::map<UnitEdge, double> labels_;
  std::map<Index2, Polynomial> cq_;
};

/// Gamma(t)_{ji} = boost(F_i, F_j, 1 - t/m_ij): maps the fiber at i to j.
inline Eigen::MatrixXd discrete_connection(const DiscreteNet& net, Index2 i, Index2 j, double t) {
  const double m = net.label(i, j);
  if (std::abs(t - m) <= 1e-12 * std::abs(m)) {
    throw Error(ErrorKind::PoleAtT, "discrete_verify", "t coincides with the edge label " + std::to_string(m));
  }
  return boost_matrix(net.vertex(i), net.vertex(j), 1.0 - t / m);
}

/// {0.31, 0.97, 1.73}, rescaled until every sample keeps a distance of at
/// least 10% of the smallest label gap from every label.
inline std::vector<double> flatness_samples(const DiscreteNet& net) {
  std::vector<double> labels;
  for (const auto& [e, l] : net.labels()) labels.push_back(l);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < labels.size(); ++k) {
    gap = std::min(gap, std::abs(labels[k]));
    if (k > 0) gap = std::min(gap, labels[k] - labels[k - 1]);
  }
  const double guard = std::isfinite(gap) ? 0.1 * gap : 0.0;
  const std::vector<double> base{0.31, 0.97, 1.73};
  for (double scale : {1.0, 1.07, 0.93, 1.19, 0.83, 1.31, 0.71, 1.47, 0.59, 1.63}) {
    bool ok = true;
    for (double t : base) {
      for (double l : labels) ok = ok && std::abs(t * scale - l) >= guard;
    }
    if (ok) {
      std::vector<double> out;
      for (double t : base) out.push_back(t * scale);
      return out;
    }
  }
  return base;
}

struct QuadResidual {
  Index2 corner;
  double residual = 0.0;
};

struct FlatnessResult {
  std::vector<double> t_samples;
  std::vector<QuadResidual> quads;
  double max_residual = 0.0;
};

/// Relative Frobenius deviation between Gamma_kj Gamma_ji and Gamma_kl Gamma_li.
inline FlatnessResult check_flatness(const DiscreteNet& net, std::vector<double> t_samples = {}) {
  FlatnessResult res;
  res.t_samples = t_samples.empty() ? flatness_samples(net) : std::move(t_samples);
  for (Index2 i : net.quads()) {
    const Index2 j{i.m + 1, i.n}, k{i.m + 1, i.n + 1}, l{i.m, i.n + 1};
    double worst = 0.0;
    for (double t : res.t_samples) {
      const Eigen::MatrixXd lhs = discrete_connection(net, j, k, t) * discrete_connection(net, i, j, t);
      const Eigen::MatrixXd rhs = discrete_connection(net, l, k, t) * discrete_connection(net, i, l, t);
      worst = std::max(worst, (lhs - rhs).norm() / std::max(1.0, lhs.norm()));
    }
    res.quads.push_back({i, worst});
    res.max_residual = std::max(res.max_residual, worst);
  }
  return res;
}

struct EdgeCheck {
  Index2 from;
  Index2 to;
  double label = 0.0;
  int fitted_degree = 0;
  double fit_residual = 0.0;           // non-polynomiality of Gamma_ji P_i
  double coefficient_mismatch = 0.0;   // fitted coefficients vs P_j
  double pole_residual = 0.0;          // |(P_i(m_ij), F_j)| / |P_i(m_ij)|
  bool polynomial = false;             // fit residual within tolerance
  bool pole_cancels = false;
  bool pass = false;
};

struct EdgePropertyResult {
  std::vector<EdgeCheck> edges;
  int degree = 0;
  double max_fit_residual = 0.0;
  double max_mismatch = 0.0;
  double max_pole_residual = 0.0;
  bool pass = true;
};

inline EdgeCheck check_edge(const DiscreteNet& net, Index2 i, Index2 j, double tol) {
  EdgeCheck c;
  c.from = i;
  c.to = j;
  c.label = net.label(i, j);
  const Polynomial& pi = net.cq_at(i);
  const Polynomial& pj = net.cq_at(j);
  if (pi.degree() != pj.degree()) {
    throw Error(ErrorKind::DegreeMismatch, "discrete_verify", "cq degree differs between " + to_string(i) + " and " + to_string(j));
  }
  const PolyFit fit = gauge_conserved_quantity(net.signature(), pi, net.vertex(i).coords(), net.vertex(j).coords(), c.label);
  c.fit_residual = fit.residual;
  c.fitted_degree = fit.poly.effective_degree();
  double mism = 0.0;
  for (int k = 0; k <= pi.degree(); ++k) mism = std::max(mism, (fit.poly.coeffs[k] - pj.coeffs[k]).norm());
  c.coefficient_mismatch = mism / std::max({pj.scale(), fit.poly.scale(), std::numeric_limits<double>::min()});
  const Eigen::VectorXd pm = pi(c.label);
  c.pole_residual = std::abs(detail::inner(net.signature(), pm, net.vertex(j).coords())) / std::max(pm.norm(), 1e-300);
  c.polynomial = c.fit_residual < tol;
  c.pole_cancels = c.pole_residual < tol;
  c.pass = c.polynomial && c.pole_cancels && c.coefficient_mismatch < tol;
  return c;
}

/// Degree-d edge property Gamma(t)_{ji} P(t)_i = P(t)_j on every edge,
/// oriented from the smaller to the larger lattice index.
inline EdgePropertyResult check_edge_property(const DiscreteNet& net, double tol = 1e-7) {
  if (!net.has_cq()) throw Error(ErrorKind::MissingCq, "discrete_verify", "net carries no conserved quantity");
  EdgePropertyResult res;
  for (const UnitEdge& e : net.edges()) {
    EdgeCheck c = check_edge(net, e.lo, e.hi, tol);
    res.degree = std::max(res.degree, c.fitted_degree);
    res.max_fit_residual = std::max(res.max_fit_residual, c.fit_residual);
    res.max_mismatch = std::max(res.max_mismatch, c.coefficient_mismatch);
    res.max_pole_residual = std::max(res.max_pole_residual, c.pole_residual);
    res.pass = res.pass && c.pass;
    res.edges.push_back(c);
  }
  return res;
}

struct VerifyTolerances {
  double flat = 1e-6;
  double edge = 1e-7;
  double cmc = 1e-6;
  double marginal_nonorthogonality = 1e-6;
};

struct Certificate {
  bool flat = false;
  std::optional<bool> edge_property;  // absent without a conserved quantity
  std::optional<int> degree;
  FlatnessResult flatness;
  std::optional<EdgePropertyResult> edges;
  std::vector<std::string> invariant_violations;
  std::vector<std::string> marginal;
  VerifyTolerances tolerances;

  bool certified() const { return flat && edge_property.value_or(false) && invariant_violations.empty(); }
};

inline Certificate certify_type_d(const DiscreteNet& net, VerifyTolerances tol = {}) {
  Certificate cert;
  cert.tolerances = tol;
  cert.invariant_violations = net.validate();
  for (const UnitEdge& e : net.edges()) {
    if (!net.has_vertex(e.lo) || !net.has_vertex(e.hi)) continue;
    const double c = std::abs(line_inner(net.vertex(e.lo), net.vertex(e.hi)));
    if (c < tol.marginal_nonorthogonality) {
      cert.marginal.push_back("edge " + to_string(e.lo) + "-" + to_string(e.hi) + " is nearly orthogonal (" + std::to_string(c) + ")");
    }
  }
  if (!cert.invariant_violations.empty()) return cert;
  cert.flatness = check_flatness(net);
  cert.flat = cert.flatness.max_residual < tol.flat;
  if (net.has_cq()) {
    cert.edges = check_edge_property(net, tol.edge);
    cert.edge_property = cert.edges->pass;
    cert.degree = cert.edges->degree;
  }
  return cert;
}

/// H at each vertex after normalizing P^(0) = q and (P^(1), P^(1)) = 1:
/// H = -(q, P^(1)).
inline std::map<Index2, double> discrete_cmc_readout(const DiscreteNet& net, const SpaceFormVector& q) {
  if (!net.has_cq()) throw Error(ErrorKind::MissingCq, "discrete_verify", "cmc readout needs a conserved quantity");
  const Eigen::VectorXd& qv = q.q_vec.coords();
  std::map<Index2, double> out;
  for (const auto& [i, p] : net.cq()) {
    if (p.degree() != 1) {
      throw Error(ErrorKind::DegreeMismatch, "discrete_verify", "cmc readout needs degree 1, got " + std::to_string(p.degree()));
    }
    const double s = p.coeffs[0].dot(qv) / qv.squaredNorm();
    if (s == 0.0 || (p.coeffs[0] - s * qv).norm() > 1e-8 * p.coeffs[0].norm()) {
      throw Error(ErrorKind::NotNormalizable, "discrete_verify", "constant term at " + to_string(i) + " is not a multiple of q");
    }
    const Eigen::VectorXd y = p.coeffs[1] / s;
    const double yy = detail::inner(net.signature(), y, y);
    if (yy <= 0.0) {
      throw Error(ErrorKind::NotNormalizable, "discrete_verify", "linear term at " + to_string(i) + " is not spacelike");
    }
    out[i] = -detail::inner(net.signature(), qv, y) / std::sqrt(yy);
  }
  return out;
}

}  // namespace isolattice
