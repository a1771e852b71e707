#pragma once

// Experiment configs, the end-to-end pipeline, net files, certificates and
// OBJ export.

#include "discrete_verify.hpp"
#include "lattice.hpp"
#include "pseudo_linear.hpp"
#include "smooth_isothermic.hpp"
#include "transforms.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace isolattice {

using json = nlohmann::json;

struct SurfaceSpec {
  std::string name = "cylinder";
  double radius = 1.0;
  int normal_orientation = 1;  // +1 outward, -1 inward
  std::optional<Domain> domain;
};

struct ExperimentConfig {
  SurfaceSpec surface;
  double H = 0.0;
  EdgeParams params;
  std::uint64_t seed = 0;
  LatticeOptions lattice;
  int sample_i = 0;
  int sample_j = 0;
  VerifyTolerances tolerances;
  std::map<Index2, SeedOverride> seed_overrides;
  json source;  // the document the config was parsed from
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(c.source.dump())); }

namespace detail {

[[noreturn]] inline void schema_error(const std::string& what) { throw Error(ErrorKind::Schema, "cli_io", what); }

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  return j.at(key);
}

inline double number(const json& j, const char* what) {
  if (!j.is_number()) schema_error(std::string(what) + " must be a number");
  return j.get<double>();
}

inline int integer(const json& j, const char* what) {
  if (!j.is_number_integer()) schema_error(std::string(what) + " must be an integer");
  return j.get<int>();
}

inline std::vector<double> numbers(const json& j, const char* what) {
  if (!j.is_array()) schema_error(std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  for (const json& x : j) out.push_back(number(x, what));
  return out;
}

inline std::pair<int, int> index_pair(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) schema_error(std::string(what) + " must be [i, j]");
  return {integer(j[0], what), integer(j[1], what)};
}

inline std::pair<double, double> range(const json& j, const char* what) {
  const std::vector<double> r = numbers(j, what);
  if (r.size() != 2 || !(r[0] < r[1])) schema_error(std::string(what) + " must be [lo, hi] with lo < hi");
  return {r[0], r[1]};
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using namespace detail;
  ExperimentConfig c;
  c.source = j;
  const json& s = require(j, "surface");
  c.surface.name = require(s, "name").get<std::string>();
  if (c.surface.name != "cylinder" && c.surface.name != "catenoid") {
    throw Error(ErrorKind::InvalidConfig, "cli_io", "unknown surface '" + c.surface.name + "' (cylinder, catenoid)");
  }
  if (s.contains("radius")) c.surface.radius = number(s["radius"], "surface.radius");
  if (!(c.surface.radius > 0.0) || !std::isfinite(c.surface.radius)) {
    throw Error(ErrorKind::InvalidConfig, "cli_io", "surface.radius must be positive");
  }
  if (s.contains("normal")) {
    const std::string n = s["normal"].get<std::string>();
    if (n != "inward" && n != "outward") throw Error(ErrorKind::InvalidConfig, "cli_io", "surface.normal is inward or outward");
    c.surface.normal_orientation = n == "outward" ? 1 : -1;
  }
  if (s.contains("domain")) {
    const std::vector<double> d = numbers(s["domain"], "surface.domain");
    if (d.size() != 4 || !(d[0] < d[1]) || !(d[2] < d[3])) schema_error("surface.domain must be [u0, u1, v0, v1]");
    c.surface.domain = Domain{d[0], d[1], d[2], d[3]};
  }
  if (j.contains("space_form") && j["space_form"] != "euclidean") {
    throw Error(ErrorKind::InvalidConfig, "cli_io", "only the euclidean space form (q = 2 einf) is supported");
  }
  c.H = number(require(j, "H"), "H");

  const json& lat = require(j, "lattice");
  c.params.a = numbers(require(lat, "a"), "lattice.a");
  c.params.b = numbers(require(lat, "b"), "lattice.b");
  if (lat.contains("M") && integer(lat["M"], "lattice.M") != c.params.M()) schema_error("lattice.M does not match lattice.a");
  if (lat.contains("N") && integer(lat["N"], "lattice.N") != c.params.N()) schema_error("lattice.N does not match lattice.b");
  if (c.params.M() < 1 || c.params.N() < 1) throw Error(ErrorKind::InvalidConfig, "cli_io", "lattice needs M, N >= 1");
  c.params.validate();

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) schema_error("seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }

  const json& g = require(j, "grid");
  const auto [u0, u1] = range(require(g, "u"), "grid.u");
  const auto [v0, v1] = range(require(g, "v"), "grid.v");
  c.lattice.grid = {{u0, u1, v0, v1}, integer(require(g, "nu"), "grid.nu"), integer(require(g, "nv"), "grid.nv")};
  if (c.lattice.grid.nu < 1 || c.lattice.grid.nv < 1) throw Error(ErrorKind::InvalidConfig, "cli_io", "grid needs nu, nv >= 1");
  if (g.contains("base")) std::tie(c.lattice.base_i, c.lattice.base_j) = index_pair(g["base"], "grid.base");
  if (g.contains("rel_step")) c.lattice.rel_step = number(g["rel_step"], "grid.rel_step");
  if (!c.lattice.grid.valid(c.lattice.base_i, c.lattice.base_j)) {
    throw Error(ErrorKind::OutsideGrid, "cli_io", "grid.base is not a grid node");
  }
  std::tie(c.sample_i, c.sample_j) = index_pair(require(j, "sample_point"), "sample_point");

  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (t.contains("flat")) c.tolerances.flat = number(t["flat"], "tolerances.flat");
    if (t.contains("edge")) c.tolerances.edge = number(t["edge"], "tolerances.edge");
    if (t.contains("cmc")) c.tolerances.cmc = number(t["cmc"], "tolerances.cmc");
  }

  if (j.contains("seed_overrides")) {
    for (const json& o : j["seed_overrides"]) {
      const auto [m, n] = index_pair(require(o, "leg"), "seed_overrides.leg");
      if (!((m >= 1 && n == 0) || (m == 0 && n >= 1))) schema_error("seed_overrides.leg must name a row (m,0) or column (0,n) leg");
      SeedOverride ov;
      const std::string kind = require(o, "kind").get<std::string>();
      if (kind == "non_backlund") {
        ov.kind = SeedOverride::Kind::NonBacklund;
      } else if (kind == "line") {
        ov.kind = SeedOverride::Kind::Line;
        const std::vector<double> x = numbers(require(o, "coords"), "seed_overrides.coords");
        if (x.size() != 5) schema_error("seed_overrides.coords needs 5 coordinates");
        ov.line = NullLine(PseudoVector(Signature::conformal3(), Eigen::Map<const Eigen::VectorXd>(x.data(), 5)));
      } else {
        schema_error("seed_overrides.kind is non_backlund or line");
      }
      c.seed_overrides[{m, n}] = ov;
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cli_io", "cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, "cli_io", path + ": " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, "cli_io", path + ": " + e.what());
  }
}

inline ParametrizedSurface make_surface(const SurfaceSpec& s) {
  if (s.name == "cylinder") {
    return s.domain ? make_cylinder(s.radius, s.normal_orientation, *s.domain) : make_cylinder(s.radius, s.normal_orientation);
  }
  return s.domain ? make_catenoid(s.normal_orientation, *s.domain) : make_catenoid(s.normal_orientation);
}

// Net files ---------------------------------------------------------------

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json net_to_json(const DiscreteNet& net, const json& metadata = json::object()) {
  json j;
  j["format"] = "isolattice-net";
  j["version"] = 1;
  j["signature"] = {net.signature().p_plus(), net.signature().q_minus()};
  json verts = json::array();
  for (const auto& [i, f] : net.vertices()) verts.push_back({{"m", i.m}, {"n", i.n}, {"coords", vector_json(f.coords())}});
  j["vertices"] = verts;
  json h = json::array(), v = json::array();
  for (const auto& [e, l] : net.labels()) {
    (e.horizontal() ? h : v).push_back({{"m", e.lo.m}, {"n", e.lo.n}, {"label", l}});
  }
  j["edge_labels"] = {{"horizontal", h}, {"vertical", v}};
  if (net.has_cq()) {
    json cq = json::array();
    for (const auto& [i, p] : net.cq()) {
      json coeffs = json::array();
      for (const auto& c : p.coeffs) coeffs.push_back(vector_json(c));
      cq.push_back({{"m", i.m}, {"n", i.n}, {"coeffs", coeffs}});
    }
    j["cq"] = cq;
  }
  j["metadata"] = metadata;
  return j;
}

/// Numbers are written in shortest round-trip form, which reloads bit-exactly.
inline std::string save_net(const DiscreteNet& net, const json& metadata = json::object()) {
  return net_to_json(net, metadata).dump(2) + "\n";
}

struct LoadedNet {
  DiscreteNet net;
  json metadata;
  std::vector<std::string> violations;
  bool verified() const { return violations.empty(); }
};

inline LoadedNet load_net_json(const json& j) {
  using namespace detail;
  try {
    if (require(j, "format") != "isolattice-net") schema_error("not an isolattice net file");
    const auto [p, q] = index_pair(require(j, "signature"), "signature");
    const Signature sig(p, q);
    LoadedNet out{DiscreteNet(sig), j.value("metadata", json::object()), {}};
    for (const json& v : require(j, "vertices")) {
      const std::vector<double> x = numbers(require(v, "coords"), "vertex coords");
      if (static_cast<int>(x.size()) != sig.dim()) schema_error("vertex coords do not match the signature");
      const Index2 i{integer(require(v, "m"), "m"), integer(require(v, "n"), "n")};
      if (out.net.has_vertex(i)) schema_error("duplicate vertex " + to_string(i));
      out.net.set_vertex(i, NullLine::exact(PseudoVector(sig, Eigen::Map<const Eigen::VectorXd>(x.data(), sig.dim()))));
    }
    const json& labels = require(j, "edge_labels");
    for (const char* dir : {"horizontal", "vertical"}) {
      for (const json& e : require(labels, dir)) {
        const Index2 a{integer(require(e, "m"), "m"), integer(require(e, "n"), "n")};
        const Index2 b = std::string(dir) == "horizontal" ? Index2{a.m + 1, a.n} : Index2{a.m, a.n + 1};
        out.net.set_label(a, b, number(require(e, "label"), "label"));
      }
    }
    if (j.contains("cq")) {
      for (const json& c : j["cq"]) {
        Polynomial poly;
        for (const json& k : require(c, "coeffs")) {
          const std::vector<double> x = numbers(k, "cq coefficient");
          if (static_cast<int>(x.size()) != sig.dim()) schema_error("cq coefficient does not match the signature");
          poly.coeffs.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), sig.dim()));
        }
        if (poly.coeffs.empty()) schema_error("cq entry without coefficients");
        out.net.set_cq({integer(require(c, "m"), "m"), integer(require(c, "n"), "n")}, std::move(poly));
      }
    }
    out.violations = out.net.validate();
    for (const auto& [i, p] : out.net.cq()) {
      if (!out.net.has_vertex(i)) out.violations.push_back("cq at " + to_string(i) + " has no vertex");
    }
    return out;
  } catch (const json::exception& e) {
    schema_error(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Schema) throw;
    throw Error(ErrorKind::Schema, "cli_io", e.what());
  }
}

inline LoadedNet load_net(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    detail::schema_error(e.what());
  }
  return load_net_json(j);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cli_io", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidConfig, "cli_io", "cannot write " + path);
  out << text;
}

inline LoadedNet load_net_file(const std::string& path) { return load_net(read_file(path)); }
inline void save_net_file(const DiscreteNet& net, const std::string& path, const json& metadata = json::object()) {
  write_file(path, save_net(net, metadata));
}

// Certificates --------------------------------------------------------------

inline json certificate_json(const Certificate& c) {
  json j;
  j["flat"] = c.flat;
  j["edge_property"] = c.edge_property ? json(*c.edge_property) : json(nullptr);
  j["degree"] = c.degree ? json(*c.degree) : json(nullptr);
  j["certified"] = c.certified();
  j["tolerances"] = {{"flat", c.tolerances.flat}, {"edge", c.tolerances.edge}, {"cmc", c.tolerances.cmc}};
  j["invariant_violations"] = c.invariant_violations;
  j["marginal"] = c.marginal;
  json quads = json::array();
  for (const auto& q : c.flatness.quads) quads.push_back({{"m", q.corner.m}, {"n", q.corner.n}, {"residual", q.residual}});
  json res;
  res["t_samples"] = c.flatness.t_samples;
  res["flatness_max"] = c.flatness.max_residual;
  res["quads"] = quads;
  if (c.edges) {
    json edges = json::array();
    for (const auto& e : c.edges->edges) {
      edges.push_back({{"from", {e.from.m, e.from.n}},
                       {"to", {e.to.m, e.to.n}},
                       {"label", e.label},
                       {"fitted_degree", e.fitted_degree},
                       {"fit_residual", e.fit_residual},
                       {"coefficient_mismatch", e.coefficient_mismatch},
                       {"pole_residual", e.pole_residual},
                       {"pass", e.pass}});
    }
    res["edge_fit_max"] = c.edges->max_fit_residual;
    res["edge_mismatch_max"] = c.edges->max_mismatch;
    res["edge_pole_max"] = c.edges->max_pole_residual;
    res["edges"] = edges;
  }
  j["residuals"] = res;
  return j;
}

// Mesh export ---------------------------------------------------------------

struct MeshExport {
  std::string obj;
  std::vector<std::string> warnings;
  int vertex_count = 0;
  int face_count = 0;
};

inline MeshExport export_mesh(const DiscreteNet& net, const SpaceFormVector& q) {
  MeshExport out;
  std::map<Index2, int> slot;
  std::string body;
  char buf[128];
  for (const auto& [i, f] : net.vertices()) {
    try {
      const Vec3 x = project_to_spaceform(f, q);
      std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", x[0], x[1], x[2]);
      body += buf;
      slot[i] = ++out.vertex_count;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::OrthogonalToSpaceForm) throw;
      out.warnings.push_back("vertex " + to_string(i) + " is at infinity; skipped");
    }
  }
  for (Index2 i : net.quads()) {
    const std::array<Index2, 4> c{i, Index2{i.m + 1, i.n}, Index2{i.m + 1, i.n + 1}, Index2{i.m, i.n + 1}};
    bool ok = true;
    for (Index2 x : c) ok = ok && slot.count(x);
    if (!ok) {
      out.warnings.push_back("face at " + to_string(i) + " touches a skipped vertex; skipped");
      continue;
    }
    std::snprintf(buf, sizeof buf, "f %d %d %d %d\n", slot[c[0]], slot[c[1]], slot[c[2]], slot[c[3]]);
    body += buf;
    ++out.face_count;
  }
  out.obj = "# isolattice discrete net\n" + body;
  return out;
}

// Pipeline ------------------------------------------------------------------

namespace exit_code {
inline constexpr int certified = 0;
inline constexpr int verification_failure = 1;
inline constexpr int construction_error = 2;
}  // namespace exit_code

struct PipelineResult {
  int exit_code = exit_code::construction_error;
  json certificate;
  std::string net;  // NetFile text; empty on construction errors
  MeshExport mesh;
};

inline json error_json(const Error& e) { return {{"kind", to_string(e.kind())}, {"module", e.module()}, {"message", e.what()}}; }

inline json lattice_json(const SurfaceLattice& L) {
  json edges = json::array();
  double dar = 0.0, bl = 0.0, fit = 0.0, two = 0.0, leg = 0.0;
  for (const LatticeEdge& e : L.edges) {
    edges.push_back({{"from", {e.from.m, e.from.n}},
                     {"to", {e.to.m, e.to.n}},
                     {"label", e.label},
                     {"origin", to_string(e.origin)},
                     {"backlund_lineage", e.backlund_lineage},
                     {"darboux_residual", e.darboux_residual},
                     {"backlund_residual", e.backlund_residual},
                     {"cq_fit_residual", e.cq_fit_residual},
                     {"min_nonorthogonality", e.min_nonorthogonality}});
    dar = std::max(dar, e.darboux_residual);
    bl = std::max(bl, e.backlund_residual);
    fit = std::max(fit, e.cq_fit_residual);
  }
  json prov = json::array();
  for (int m = 0; m <= L.params.M(); ++m) {
    for (int n = 0; n <= L.params.N(); ++n) {
      prov.push_back({{"m", m}, {"n", n}, {"source", to_string(L.provenance[m][n])}});
      two = std::max(two, L.two_route[m][n]);
      leg = std::max(leg, L.leg_agreement[m][n]);
    }
  }
  return {{"edges", edges},
          {"provenance", prov},
          {"darboux_max", dar},
          {"backlund_max", bl},
          {"cq_fit_max", fit},
          {"two_route_max", two},
          {"leg_agreement_max", leg}};
}

/// Surface, cq, lattice, extraction, certification and export. Exit code 0
/// when the net is certified and its cmc readout is constant, 1 on a failed
/// check, 2 when construction fails.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  PipelineResult out;
  out.certificate["config_hash"] = config_hash(cfg);
  out.certificate["seed"] = cfg.seed;
  try {
    const ParametrizedSurface surface = make_surface(cfg.surface);
    const SpaceFormVector q = SpaceFormVector::euclidean();
    const EtaCalibration cal = calibrate_eta_scale(surface, cfg.H);
    const ConnectionFamily family(retraction_form(surface, cal.scale));
    const PolyConservedQuantity p = cmc_linear_cq(surface, cfg.H, q);
    LatticeSeeds seeds{cfg.seed, cfg.seed_overrides};
    const SurfaceLattice L = build_lattice(family, p, cfg.params, seeds, cfg.lattice);
    const DiscreteNet net = extract_discrete(L, cfg.sample_i, cfg.sample_j);
    const Certificate cert = certify_type_d(net, cfg.tolerances);

    json cmc;
    bool cmc_ok = false;
    try {
      const std::map<Index2, double> h = discrete_cmc_readout(net, q);
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      json values = json::array();
      for (const auto& [i, v] : h) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        values.push_back({{"m", i.m}, {"n", i.n}, {"H", v}});
      }
      cmc = {{"values", values}, {"spread", hi - lo}, {"expected", cfg.H}, {"max_deviation", std::max(hi - cfg.H, cfg.H - lo)}};
      cmc_ok = hi - lo < cfg.tolerances.cmc;
    } catch (const Error& e) {
      cmc = {{"error", error_json(e)}};
    }
    cmc["constant"] = cmc_ok;

    const Param x = L.grid.node(cfg.sample_i, cfg.sample_j);
    json meta;
    meta["config_hash"] = out.certificate["config_hash"];
    meta["sample_point"] = {{"node", {cfg.sample_i, cfg.sample_j}}, {"u", x.u}, {"v", x.v}};
    meta["eta_scale"] = cal.scale;
    meta["lattice"] = lattice_json(L);
    out.net = save_net(net, meta);

    out.certificate["surface"] = {{"name", cfg.surface.name}, {"H", cfg.H}, {"eta_scale", cal.scale}};
    out.certificate["net"] = certificate_json(cert);
    out.certificate["cmc"] = cmc;
    out.certificate["lattice"] = meta["lattice"];
    out.certificate["flat"] = cert.flat;
    out.certificate["edge_property"] = cert.edge_property ? json(*cert.edge_property) : json(nullptr);
    out.certificate["degree"] = cert.degree ? json(*cert.degree) : json(nullptr);
    const bool ok = cert.certified() && cmc_ok;
    out.certificate["certified"] = ok;
    out.mesh = export_mesh(net, q);
    out.certificate["mesh_warnings"] = out.mesh.warnings;
    out.exit_code = ok ? exit_code::certified : exit_code::verification_failure;
  } catch (const Error& e) {
    out.certificate["certified"] = false;
    out.certificate["error"] = error_json(e);
    out.exit_code = exit_code::construction_error;
  }
  return out;
}

}  // namespace isolattice
