#pragma once

// Bianchi permutability: the fourth point of a quadrilateral, lattices of
// Baecklund transforms of a smooth surface, and the discrete nets obtained by
// sampling such a lattice at one parameter point.
//
// Row and column legs f_{m,0}, f_{0,n} are built by transport. The connection
// of a transform is the gauge image of the base connection,
//   Gamma_{m,n}(t) = G_{m,n}(t) . Gamma(t),
// where G_{m,n}(t, x) is the product of the boosts
// boost(f_i(x), f_j(x), 1 - t/m_ij) along the lattice path
// (0,0) -> (m,0) -> (m,n). Only transports of the base surface are
// integrated; they are cached on the sample grid for every spectral
// parameter. Interior surfaces come from fourth_point, pointwise.

#include "discrete_verify.hpp"
#include "pseudo_linear.hpp"
#include "smooth_isothermic.hpp"
#include "transforms.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace isolattice {

/// Horizontal labels a_1..a_M and vertical labels b_1..b_N.
struct EdgeParams {
  std::vector<double> a;
  std::vector<double> b;

  int M() const { return static_cast<int>(a.size()); }
  int N() const { return static_cast<int>(b.size()); }

  /// Label of the horizontal edge (m-1, n) - (m, n).
  double horizontal(int m) const { return a.at(m - 1); }
  /// Label of the vertical edge (m, n-1) - (m, n).
  double vertical(int n) const { return b.at(n - 1); }

  void validate() const {
    auto check = [](const std::vector<double>& xs, const char* name) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] == 0.0 || !std::isfinite(xs[i])) {
          throw Error(ErrorKind::InvalidConfig, "lattice", std::string(name) + " labels must be finite and nonzero");
        }
        for (std::size_t j = 0; j < i; ++j) {
          if (xs[i] == xs[j]) {
            throw Error(ErrorKind::InvalidConfig, "lattice",
                        std::string(name) + " labels must be pairwise distinct (" + std::to_string(xs[i]) + " repeats)");
          }
        }
      }
    };
    check(a, "horizontal");
    check(b, "vertical");
  }
};

namespace detail {

/// Euclidean point of a line comfortably inside the chart of R^3.
inline std::optional<Vec3> chart_point(const NullLine& f) {
  if (!(f.signature() == Signature::conformal3())) return std::nullopt;
  const double fq = inner(f.rep(), SpaceFormVector::euclidean().q_vec);
  if (std::abs(fq) < 1e-6 * f.coords().norm()) return std::nullopt;
  return Vec3(-f.coords().head<3>() / fq);
}

}  // namespace detail

/// Fk from Fi, Fj, Fl and the labels m_ij = m_lk, m_il = m_jk.
///
/// Closed form Fk = boost(Fi, Fl, 1 - m_ij/m_il) Fj: the quad's connection
/// Gamma(t)_{li} evaluated at the label of the opposite edge.
inline NullLine fourth_point(const NullLine& fi, const NullLine& fj, const NullLine& fl, double m_ij, double m_il) {
  fi.rep().check_same(fj.rep());
  fi.rep().check_same(fl.rep());
  if (m_ij == 0.0 || m_il == 0.0 || !std::isfinite(m_ij) || !std::isfinite(m_il)) {
    throw Error(ErrorKind::ZeroLambda, "lattice", "edge labels must be finite and nonzero");
  }
  if (m_ij == m_il) {
    throw Error(ErrorKind::DegenerateConfiguration, "lattice",
                "fourth point undefined for equal labels m_ij = m_il = " + std::to_string(m_ij));
  }
  for (const auto& [x, y] : {std::pair{&fi, &fj}, std::pair{&fi, &fl}, std::pair{&fj, &fl}}) {
    if (std::abs(line_inner(*x, *y)) < tol::orth) {
      throw Error(ErrorKind::OrthogonalLines, "lattice", "fourth point needs pairwise non-orthogonal lines");
    }
  }
  const double lam = 1.0 - m_ij / m_il;
  // For clustered points the boost cancels catastrophically. Evaluate it for
  // the cluster moved to the origin and scaled to unit size, then map back.
  std::optional<Eigen::VectorXd> k;
  const auto pi = detail::chart_point(fi), pj = detail::chart_point(fj), pl = detail::chart_point(fl);
  if (pi && pj && pl) {
    const double h = std::max((*pj - *pi).norm(), (*pl - *pi).norm());
    if (h > 0.0) {
      const Signature sig = fi.signature();
      const Eigen::VectorXd kc = detail::boost_matrix(sig, lift_coords(Vec3::Zero()), lift_coords((*pl - *pi) / h), lam) *
                                 lift_coords((*pj - *pi) / h);
      const double kq = detail::inner(sig, kc, SpaceFormVector::euclidean().q_vec.coords());
      if (std::abs(kq) > 1e-6 * kc.norm()) k = lift_coords(*pi + h * Vec3(-kc.head<3>() / kq));
    }
  }
  if (!k) k = boost_matrix(fi, fl, lam) * fj.coords();
  if (k->norm() == 0.0) throw Error(ErrorKind::DegenerateConfiguration, "lattice", "fourth point vanishes");
  NullLine fk(PseudoVector(fi.signature(), *k));
  if (projective_distance(fk, fi) < tol::proj) {
    throw Error(ErrorKind::DegenerateConfiguration, "lattice", "fourth point coincides with Fi");
  }
  return fk;
}

/// Pointwise data of one surface on the sample grid, indexed by SampleGrid::index.
struct SurfaceSamples {
  std::vector<NullLine> lines;
  std::vector<Polynomial> cq;
  std::vector<double> cq_fit;  // residual of the gauge fit that produced cq

  bool has_cq() const { return !cq.empty(); }
};

struct FourthSurface {
  SurfaceSamples surface;
  double leg_agreement = 0.0;  // max relative gap between cq via leg j and via leg l
};

inline std::string node_suffix(std::size_t g, const SampleGrid* grid) {
  if (!grid) return " at sample " + std::to_string(g);
  const int i = static_cast<int>(g) / grid->nv, j = static_cast<int>(g) % grid->nv;
  return " at grid node (" + std::to_string(i) + "," + std::to_string(j) + ")";
}

/// fourth_point at every sample; cq carried across the leg through j, and
/// cross-checked against the leg through l.
inline FourthSurface fourth_surface(const SurfaceSamples& fi, const SurfaceSamples& fj, const SurfaceSamples& fl,
                                    double m_ij, double m_il, const SampleGrid* grid = nullptr) {
  if (m_ij == m_il) {
    throw Error(ErrorKind::DegenerateConfiguration, "lattice",
                "fourth surface undefined for equal labels m_ij = m_il = " + std::to_string(m_ij));
  }
  const std::size_t n = fi.lines.size();
  if (fj.lines.size() != n || fl.lines.size() != n) {
    throw Error(ErrorKind::Schema, "lattice", "surfaces sampled on different grids");
  }
  const bool with_cq = fj.has_cq() && fl.has_cq();
  FourthSurface out;
  out.surface.lines.reserve(n);
  for (std::size_t g = 0; g < n; ++g) {
    try {
      const NullLine fk = fourth_point(fi.lines[g], fj.lines[g], fl.lines[g], m_ij, m_il);
      out.surface.lines.push_back(fk);
      if (!with_cq) continue;
      const Signature& sig = fk.signature();
      const PolyFit via_j = gauge_conserved_quantity(sig, fj.cq[g], fj.lines[g].coords(), fk.coords(), m_il);
      const PolyFit via_l = gauge_conserved_quantity(sig, fl.cq[g], fl.lines[g].coords(), fk.coords(), m_ij);
      double gap = 0.0;
      for (int k = 0; k <= via_j.poly.degree(); ++k) gap = std::max(gap, (via_j.poly.coeffs[k] - via_l.poly.coeffs[k]).norm());
      out.leg_agreement = std::max(out.leg_agreement, gap / std::max(via_j.poly.scale(), 1e-300));
      out.surface.cq.push_back(via_j.poly);
      out.surface.cq_fit.push_back(std::max(via_j.residual, via_l.residual));
    } catch (const Error& e) {
      throw Error(e.kind(), "lattice", std::string(e.what()) + node_suffix(g, grid));
    }
  }
  return out;
}

/// Transport matrices of the base connection Gamma(t) from the base node to
/// every grid node, along u first (then v) or v first (then u).
class BaseTransports {
 public:
  enum class Order { UFirst, VFirst };

  BaseTransports(const ConnectionFamily& c, const SampleGrid& grid, int i0, int j0, const std::vector<double>& ts,
                 Order order, double rel_step = 1e-3)
      : grid_(grid), order_(order) {
    const double h = rel_step * std::max(grid.rect.diameter(), 1e-12);
    auto segment = [&](double t, Param p, Param q) {
      TransportOptions opt;
      opt.steps_per_segment = std::max(1, static_cast<int>(std::ceil(std::hypot(q.u - p.u, q.v - p.v) / h - 1e-9)));
      return transport_matrix(c, t, {p, q}, opt);
    };
    for (double t : ts) {
      if (mats_.count(t)) continue;
      std::vector<Eigen::MatrixXd> m(grid.size(), Eigen::MatrixXd::Identity(5, 5));
      // First leg along the line through the base node, then fan out.
      auto idx = [&](int a, int b) { return order == Order::UFirst ? grid.index(a, b) : grid.index(b, a); };
      auto pt = [&](int a, int b) { return order == Order::UFirst ? grid.node(a, b) : grid.node(b, a); };
      const int na = order == Order::UFirst ? grid.nu : grid.nv;
      const int nb = order == Order::UFirst ? grid.nv : grid.nu;
      const int a0 = order == Order::UFirst ? i0 : j0;
      const int b0 = order == Order::UFirst ? j0 : i0;
      for (int a = a0 + 1; a < na; ++a) m[idx(a, b0)] = segment(t, pt(a - 1, b0), pt(a, b0)) * m[idx(a - 1, b0)];
      for (int a = a0 - 1; a >= 0; --a) m[idx(a, b0)] = segment(t, pt(a + 1, b0), pt(a, b0)) * m[idx(a + 1, b0)];
      for (int a = 0; a < na; ++a) {
        for (int b = b0 + 1; b < nb; ++b) m[idx(a, b)] = segment(t, pt(a, b - 1), pt(a, b)) * m[idx(a, b - 1)];
        for (int b = b0 - 1; b >= 0; --b) m[idx(a, b)] = segment(t, pt(a, b + 1), pt(a, b)) * m[idx(a, b + 1)];
      }
      mats_.emplace(t, std::move(m));
    }
  }

  Order order() const { return order_; }

  const Eigen::MatrixXd& at(double t, int node) const {
    auto it = mats_.find(t);
    if (it == mats_.end()) throw Error(ErrorKind::InvalidConfig, "lattice", "no cached transport for t = " + std::to_string(t));
    return it->second.at(node);
  }

 private:
  SampleGrid grid_;
  Order order_;
  std::map<double, std::vector<Eigen::MatrixXd>> mats_;
};

enum class Provenance { Base, Transport, Permutability };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::Base: return "base";
    case Provenance::Transport: return "transport";
    case Provenance::Permutability: return "permutability";
  }
  return "unknown";
}

enum class EdgeOrigin { BacklundSeed, NonBacklundSeed, OverrideSeed, Permutability };

inline const char* to_string(EdgeOrigin o) {
  switch (o) {
    case EdgeOrigin::BacklundSeed: return "backlund-seed";
    case EdgeOrigin::NonBacklundSeed: return "non-backlund-seed";
    case EdgeOrigin::OverrideSeed: return "override-seed";
    case EdgeOrigin::Permutability: return "permutability";
  }
  return "unknown";
}

struct LatticeEdge {
  Index2 from;
  Index2 to;
  double label = 0.0;
  EdgeOrigin origin = EdgeOrigin::Permutability;
  bool backlund_lineage = true;       // every leg upstream of both ends was Baecklund-seeded
  double darboux_residual = 0.0;      // v-first transport of f_to(x0) vs stored f_to, projective
  double backlund_residual = 0.0;     // |(p_from(x)(label), f_to(x))| / |p_from(x)(label)|
  double cq_fit_residual = 0.0;       // polynomial fit of the gauged cq across the edge
  double min_nonorthogonality = 0.0;  // min |(f_from, f_to)| over the grid
};

struct SeedOverride {
  enum class Kind { Line, NonBacklund };
  Kind kind = Kind::NonBacklund;
  std::optional<NullLine> line;
};

/// Initial lines of the row legs (m,0) and column legs (0,n), drawn
/// deterministically from `seed` unless overridden for a leg.
struct LatticeSeeds {
  std::uint64_t seed = 0;
  std::map<Index2, SeedOverride> overrides;  // keyed by the leg's target node
};

struct LatticeOptions {
  SampleGrid grid{{0.0, 0.4, 0.0, 0.4}, 9, 9};
  int base_i = 0;
  int base_j = 0;
  double rel_step = 1e-3;      // integration step relative to the grid diameter
  double singular_tol = 1e-9;  // |(f, fhat)| below this is a Bianchi-type singularity
  int seed_candidates = 16;
};

struct SurfaceLattice {
  EdgeParams params;
  SampleGrid grid;
  int base_i = 0;
  int base_j = 0;
  std::vector<std::vector<SurfaceSamples>> surfaces;  // [m][n]
  std::vector<std::vector<Provenance>> provenance;
  std::vector<std::vector<double>> leg_agreement;  // interior nodes only
  std::vector<std::vector<double>> two_route;      // interior nodes only
  std::vector<LatticeEdge> edges;
  std::map<Index2, NullLine> seeds;

  const SurfaceSamples& at(int m, int n) const { return surfaces.at(m).at(n); }
  int base_node() const { return grid.index(base_i, base_j); }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t leg_seed(std::uint64_t seed, Index2 leg) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(leg.m) * 1000003ULL + static_cast<std::uint64_t>(leg.n)));
}

/// A null line deliberately away from p(mu)^perp and from f(x0).
inline NullLine generic_line(const Eigen::VectorXd& p_mu, const NullLine& f0, std::uint64_t seed) {
  const Signature sig = f0.signature();
  SplitRng rng(seed);
  std::optional<NullLine> best;
  double best_score = -1.0;
  for (int k = 0; k < 16; ++k) {
    const Vec3 y(rng.normal(), rng.normal(), rng.normal());
    const NullLine l = euclidean_lift(y);
    const double score = std::min(std::abs(inner(sig, p_mu, l.coords())) / p_mu.norm(), std::abs(line_inner(l, f0)));
    if (score > best_score) {
      best_score = score;
      best = l;
    }
  }
  return *best;
}

}  // namespace detail

/// G_{m,n}(t, x) at grid sample g: product of the edge boosts along
/// (0,0) -> (m,0) -> (m,n).
inline Eigen::MatrixXd lattice_gauge(const SurfaceLattice& L, Index2 node, double t, std::size_t g) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(5, 5);
  for (int k = 1; k <= node.m; ++k) {
    m = boost_matrix(L.at(k - 1, 0).lines[g], L.at(k, 0).lines[g], 1.0 - t / L.params.horizontal(k)) * m;
  }
  for (int k = 1; k <= node.n; ++k) {
    m = boost_matrix(L.at(node.m, k - 1).lines[g], L.at(node.m, k).lines[g], 1.0 - t / L.params.vertical(k)) * m;
  }
  return m;
}

/// Transport of Gamma_{node}(t) from the base node to grid sample g.
inline Eigen::MatrixXd lattice_transport(const SurfaceLattice& L, const BaseTransports& T, Index2 node, double t,
                                         std::size_t g) {
  const std::size_t g0 = static_cast<std::size_t>(L.base_node());
  const Eigen::MatrixXd g_x = lattice_gauge(L, node, t, g);
  const Eigen::MatrixXd g_x0 = lattice_gauge(L, node, t, g0);
  return g_x * T.at(t, static_cast<int>(g)) * g_x0.inverse();
}

namespace detail {

inline std::string edge_name(Index2 a, Index2 b) { return "lattice edge " + to_string(a) + "-" + to_string(b); }

inline void fill_edge_residuals(const SurfaceLattice& L, const BaseTransports& tv, LatticeEdge& e) {
  const SurfaceSamples& from = L.at(e.from.m, e.from.n);
  const SurfaceSamples& to = L.at(e.to.m, e.to.n);
  const std::size_t g0 = static_cast<std::size_t>(L.base_node());
  const Signature sig = to.lines[g0].signature();
  e.darboux_residual = e.backlund_residual = e.cq_fit_residual = 0.0;
  e.min_nonorthogonality = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < to.lines.size(); ++g) {
    const Eigen::VectorXd pred = lattice_transport(L, tv, e.from, e.label, g) * to.lines[g0].coords();
    e.darboux_residual = std::max(e.darboux_residual, projective_distance(pred, to.lines[g].coords()));
    e.min_nonorthogonality = std::min(e.min_nonorthogonality, std::abs(line_inner(from.lines[g], to.lines[g])));
    if (from.has_cq()) {
      const Eigen::VectorXd pm = from.cq[g](e.label);
      e.backlund_residual = std::max(e.backlund_residual, std::abs(inner(sig, pm, to.lines[g].coords())) / pm.norm());
      const PolyFit fit = gauge_conserved_quantity(sig, from.cq[g], from.lines[g].coords(), to.lines[g].coords(), e.label);
      e.cq_fit_residual = std::max(e.cq_fit_residual, fit.residual);
    }
  }
}

}  // namespace detail

/// Row and column legs by transport, interior by permutability, every edge
/// annotated with its residuals.
inline SurfaceLattice build_lattice(const ConnectionFamily& c, const PolyConservedQuantity& p, const EdgeParams& params,
                                    const LatticeSeeds& seeds = {}, const LatticeOptions& opt = {}) {
  params.validate();
  for (int m = 1; m <= params.M(); ++m) {
    for (int n = 1; n <= params.N(); ++n) {
      if (params.horizontal(m) == params.vertical(n)) {
        throw Error(ErrorKind::DegenerateConfiguration, "lattice",
                    "fourth point of quad " + to_string(Index2{m, n}) + " is degenerate: a_" + std::to_string(m) +
                        " = b_" + std::to_string(n) + " = " + std::to_string(params.horizontal(m)));
      }
    }
  }
  const SampleGrid& grid = opt.grid;
  if (grid.nu < 1 || grid.nv < 1 || !grid.valid(opt.base_i, opt.base_j)) {
    throw Error(ErrorKind::OutsideGrid, "lattice", "base node outside the sample grid");
  }
  const Domain& dom = c.base().domain();
  for (Param corner : {grid.node(0, 0), grid.node(grid.nu - 1, grid.nv - 1)}) {
    if (!dom.contains(corner)) throw Error(ErrorKind::PathOutsideDomain, "lattice", "sample grid leaves the surface domain");
  }

  SurfaceLattice L;
  L.params = params;
  L.grid = grid;
  L.base_i = opt.base_i;
  L.base_j = opt.base_j;
  const int M = params.M(), N = params.N();
  L.surfaces.assign(M + 1, std::vector<SurfaceSamples>(N + 1));
  L.provenance.assign(M + 1, std::vector<Provenance>(N + 1, Provenance::Permutability));
  L.leg_agreement.assign(M + 1, std::vector<double>(N + 1, 0.0));
  L.two_route.assign(M + 1, std::vector<double>(N + 1, 0.0));
  std::vector<std::vector<bool>> lineage(M + 1, std::vector<bool>(N + 1, true));
  std::map<std::pair<Index2, Index2>, EdgeOrigin> origins;

  std::vector<double> ts = params.a;
  ts.insert(ts.end(), params.b.begin(), params.b.end());
  const BaseTransports tu(c, grid, opt.base_i, opt.base_j, ts, BaseTransports::Order::UFirst, opt.rel_step);

  const Signature sig = Signature::conformal3();
  const std::size_t ng = static_cast<std::size_t>(grid.size());
  const std::size_t g0 = static_cast<std::size_t>(L.base_node());
  SurfaceSamples& base = L.surfaces[0][0];
  for (std::size_t g = 0; g < ng; ++g) {
    const Param x = grid.node(static_cast<int>(g) / grid.nv, static_cast<int>(g) % grid.nv);
    base.lines.push_back(euclidean_lift(c.base().position(x.u, x.v)));
    base.cq.push_back(p.at(x.u, x.v));
    base.cq_fit.push_back(0.0);
  }
  L.provenance[0][0] = Provenance::Base;

  auto build_leg = [&](Index2 from, Index2 to, double mu) {
    const SurfaceSamples& src = L.at(from.m, from.n);
    const NullLine& f0 = src.lines[g0];
    const Eigen::VectorXd p_mu = src.cq[g0](mu);
    EdgeOrigin origin = EdgeOrigin::BacklundSeed;
    std::optional<NullLine> seed;
    auto ov = seeds.overrides.find(to);
    if (ov != seeds.overrides.end() && ov->second.kind == SeedOverride::Kind::Line && ov->second.line) {
      seed = *ov->second.line;
      origin = EdgeOrigin::OverrideSeed;
    } else if (ov != seeds.overrides.end()) {
      seed = detail::generic_line(p_mu, f0, detail::leg_seed(seeds.seed, to));
      origin = EdgeOrigin::NonBacklundSeed;
    } else {
      try {
        const AdmissibleLines adm(sig, p_mu, f0.coords(), opt.singular_tol);
        seed = adm.sample_well_conditioned(detail::leg_seed(seeds.seed, to), opt.seed_candidates);
      } catch (const Error& e) {
        throw Error(e.kind(), "lattice", detail::edge_name(from, to) + ": " + e.what());
      }
    }
    const bool backlund =
        std::abs(detail::inner(sig, p_mu, seed->coords())) / p_mu.norm() < 1e-9 && origin != EdgeOrigin::NonBacklundSeed;
    lineage[to.m][to.n] = lineage[from.m][from.n] && backlund;
    origins[{from, to}] = origin;
    L.seeds.insert_or_assign(to, *seed);

    SurfaceSamples out;
    out.lines.reserve(ng);
    const Eigen::MatrixXd g_x0_inv = lattice_gauge(L, from, mu, g0).inverse();
    for (std::size_t g = 0; g < ng; ++g) {
      try {
        const Eigen::VectorXd y = lattice_gauge(L, from, mu, g) * tu.at(mu, static_cast<int>(g)) * g_x0_inv * seed->coords();
        NullLine fhat(PseudoVector(sig, y));
        if (std::abs(line_inner(src.lines[g], fhat)) < opt.singular_tol) {
          throw Error(ErrorKind::BianchiSingularity, "lattice", "transform meets the orthogonal complement of the source");
        }
        const PolyFit fit = gauge_conserved_quantity(sig, src.cq[g], src.lines[g].coords(), fhat.coords(), mu);
        out.lines.push_back(fhat);
        out.cq.push_back(fit.poly);
        out.cq_fit.push_back(fit.residual);
      } catch (const Error& e) {
        throw Error(e.kind(), "lattice", detail::edge_name(from, to) + ": " + e.what() + node_suffix(g, &grid));
      }
    }
    L.surfaces[to.m][to.n] = std::move(out);
    L.provenance[to.m][to.n] = Provenance::Transport;
  };

  for (int m = 1; m <= M; ++m) build_leg({m - 1, 0}, {m, 0}, params.horizontal(m));
  for (int n = 1; n <= N; ++n) build_leg({0, n - 1}, {0, n}, params.vertical(n));

  for (int m = 1; m <= M; ++m) {
    for (int n = 1; n <= N; ++n) {
      try {
        FourthSurface k = fourth_surface(L.at(m - 1, n - 1), L.at(m, n - 1), L.at(m - 1, n), params.horizontal(m),
                                         params.vertical(n), &grid);
        L.surfaces[m][n] = std::move(k.surface);
        L.leg_agreement[m][n] = k.leg_agreement;
      } catch (const Error& e) {
        throw Error(e.kind(), "lattice", "quad " + to_string(Index2{m, n}) + ": " + e.what());
      }
      lineage[m][n] = lineage[m - 1][n - 1] && lineage[m][n - 1] && lineage[m - 1][n];
    }
  }

  const BaseTransports tv(c, grid, opt.base_i, opt.base_j, ts, BaseTransports::Order::VFirst, opt.rel_step);
  for (int m = 0; m <= M; ++m) {
    for (int n = 0; n <= N; ++n) {
      for (const auto& [to, label] : {std::pair{Index2{m + 1, n}, m < M ? params.horizontal(m + 1) : 0.0},
                                      std::pair{Index2{m, n + 1}, n < N ? params.vertical(n + 1) : 0.0}}) {
        if (to.m > M || to.n > N) continue;
        LatticeEdge e;
        e.from = {m, n};
        e.to = to;
        e.label = label;
        auto o = origins.find({e.from, to});
        e.origin = o == origins.end() ? EdgeOrigin::Permutability : o->second;
        e.backlund_lineage = lineage[m][n] && lineage[to.m][to.n];
        try {
          detail::fill_edge_residuals(L, tv, e);
        } catch (const Error& err) {
          throw Error(err.kind(), "lattice", detail::edge_name(e.from, to) + ": " + err.what());
        }
        L.edges.push_back(e);
      }
    }
  }
  for (const LatticeEdge& e : L.edges) {
    if (e.to.m >= 1 && e.to.n >= 1) L.two_route[e.to.m][e.to.n] = std::max(L.two_route[e.to.m][e.to.n], e.darboux_residual);
  }
  return L;
}

/// The discrete net F_{m,n} = f_{m,n}(x) at grid node (i, j), with labels
/// a_m on horizontal and b_n on vertical edges and P_{m,n} = p_{m,n}(x).
inline DiscreteNet extract_discrete(const SurfaceLattice& L, int i, int j) {
  if (!L.grid.valid(i, j)) {
    throw Error(ErrorKind::OutsideGrid, "lattice",
                "sample node (" + std::to_string(i) + "," + std::to_string(j) + ") is not a grid node");
  }
  const std::size_t g = static_cast<std::size_t>(L.grid.index(i, j));
  DiscreteNet net(Signature::conformal3());
  for (int m = 0; m <= L.params.M(); ++m) {
    for (int n = 0; n <= L.params.N(); ++n) {
      const SurfaceSamples& s = L.at(m, n);
      net.set_vertex({m, n}, s.lines[g]);
      if (s.has_cq()) net.set_cq({m, n}, s.cq[g]);
      if (m > 0) net.set_label({m - 1, n}, {m, n}, L.params.horizontal(m));
      if (n > 0) net.set_label({m, n - 1}, {m, n}, L.params.vertical(n));
    }
  }
  return net;
}

}  // namespace isolattice
