// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "isolattice/cli_io.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

using namespace isolattice;

namespace {

const Signature kSig = Signature::conformal3();
const std::string kConfigs = ISOLATTICE_CONFIG_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

int failures = 0;

void run(int id, const std::string& name, double time_limit, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(secs < time_limit, "runtime " + fmt("%.2f", secs) + " s over " + fmt("%g", time_limit) + " s");
  if (!o.pass) ++failures;
  std::printf("%s %d %s [%.2f s]%s%s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.empty() ? "" : ": ",
              o.detail.c_str());
  std::fflush(stdout);
}

NullLine random_point(SplitRng& rng) { return euclidean_lift(Vec3(rng.normal(), rng.normal(), rng.normal())); }

struct Cmc {
  ParametrizedSurface surface;
  ConnectionFamily family;
  PolyConservedQuantity p;
};

Cmc cylinder(double H, int orientation) {
  ParametrizedSurface s = make_cylinder(1.0, orientation);
  ConnectionFamily c(retraction_form(s, calibrate_eta_scale(s, H).scale));
  return {s, c, cmc_linear_cq(s, H, SpaceFormVector::euclidean())};
}

Outcome boost_algebra() {
  Outcome o;
  SplitRng rng(1001);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(5, 5);
  const Eigen::MatrixXd J = kSig.metric_diagonal().asDiagonal();
  // Residuals relative to the operands: boosts of nearby lines have norms in
  // the hundreds, and products of them only resolve eps * |B1| |B2|.
  double worst = 0.0, worst_abs = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const NullLine f = random_point(rng), fh = random_point(rng);
    const double l1 = (rng.uniform() < 0.5 ? 1 : -1) * (0.2 + 2 * rng.uniform());
    const double l2 = (rng.uniform() < 0.5 ? 1 : -1) * (0.2 + 2 * rng.uniform());
    const Eigen::MatrixXd b1 = boost_matrix(f, fh, l1), b2 = boost_matrix(f, fh, l2);
    const double n1 = b1.norm(), n2 = b2.norm();
    const double abs[5] = {(boost_matrix(f, fh, 1.0) - I).norm(), (b1 * b2 - boost_matrix(f, fh, l1 * l2)).norm(),
                           (b1.transpose() * J * b1 - J).norm(), (b1 * f.coords() - f.coords() / l1).norm(),
                           (b1 * fh.coords() - l1 * fh.coords()).norm()};
    const double scale[5] = {1.0, n1 * n2, n1 * n1, n1, n1};
    for (int c = 0; c < 5; ++c) {
      worst = std::max(worst, abs[c] / scale[c]);
      worst_abs = std::max(worst_abs, abs[c]);
    }
  }
  o.require(worst < 1e-12, "max relative residual " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max relative residual " + fmt("%.3g", worst) + " (absolute " + fmt("%.3g", worst_abs) + ")";
  return o;
}

Outcome smooth_flatness() {
  Outcome o;
  const ConnectionFamily c(retraction_form(make_cylinder(), -0.5));
  std::vector<Path> loops;
  for (int k = 0; k < 10; ++k) {
    const double u = -2.5 + 0.45 * k, v = -1.5 + 0.25 * k;
    loops.push_back(rectangle_loop({u, v}, 0.3 + 0.05 * k, 0.4 + 0.1 * (k % 3)));
  }
  const FlatnessReport r = flatness_check(c, {-1.5, -0.4, 0.3, 1.0, 2.5}, loops);
  o.require(r.max_deviation < 1e-7, "holonomy " + fmt("%.3g", r.max_deviation));

  // Step halving on an open path against a fine reference.
  const Path open{{-1.0, -0.8}, {1.2, -0.8}, {1.2, 1.0}, {-0.5, 0.4}};
  TransportOptions fine;
  fine.steps_per_segment = 4096;
  const Eigen::MatrixXd ref = transport_matrix(c, 2.0, open, fine);
  std::vector<double> err;
  for (int n : {4, 8, 16, 32}) {
    TransportOptions opt;
    opt.steps_per_segment = n;
    err.push_back((transport_matrix(c, 2.0, open, opt) - ref).norm());
  }
  double min_order = 1e9;
  for (std::size_t k = 1; k < err.size(); ++k) min_order = std::min(min_order, std::log2(err[k - 1] / err[k]));
  o.require(min_order > 3.5, "observed order " + fmt("%.2f", min_order));
  if (o.pass) o.detail = "holonomy " + fmt("%.3g", r.max_deviation) + ", observed order " + fmt("%.2f", min_order);
  return o;
}

Outcome cmc_conserved_quantity() {
  Outcome o;
  const Cmc c = cylinder(0.5, -1);
  const Domain d = c.surface.domain();
  const double res = check_conserved(c.p, c.family, {{d.u0 + 0.1, d.u1 - 0.1, d.v0 + 0.1, d.v1 - 0.1}, 20, 20});
  double qy = 0.0;
  const Eigen::VectorXd q = SpaceFormVector::euclidean().q_vec.coords();
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) {
      const double u = d.u0 + (d.u1 - d.u0) * i / 19.0, v = d.v0 + (d.v1 - d.v0) * j / 19.0;
      qy = std::max(qy, std::abs(detail::inner(kSig, q, c.p.coefficient(1)(u, v)) + 0.5));
    }
  }
  o.require(res < 1e-6, "transport residual " + fmt("%.3g", res));
  o.require(qy < 1e-10, "(q,Y)+1/2 = " + fmt("%.3g", qy));
  if (o.pass) o.detail = "residual " + fmt("%.3g", res) + ", |(q,Y)+1/2| " + fmt("%.3g", qy);
  return o;
}

Outcome backlund_propagation() {
  Outcome o;
  const Cmc c = cylinder(0.5, -1);
  const double mu = 1.6;
  const Param x0{0.0, 0.0};
  const DarbouxTransform d =
      darboux_transform(c.family, mu, backlund_initial_lines(c.p, c.surface, mu, x0).sample_well_conditioned(5), x0);
  const PolyConservedQuantity phat = transform_cq(c.p, d);
  const Eigen::VectorXd q = SpaceFormVector::euclidean().q_vec.coords();
  double orth = 0.0, fit = 0.0, dh = 0.0;
  int degree = 0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const Param x{-2.5 + 1.25 * i, -1.5 + 0.75 * j};
      const NullLine f = d.at(x);
      const Eigen::VectorXd pm = c.p.evaluate(mu, x.u, x.v);
      orth = std::max(orth, std::abs(detail::inner(kSig, pm, f.coords())) / pm.norm());
      const PolyFit pf =
          gauge_conserved_quantity(kSig, c.p.at(x.u, x.v), lift_coords(c.surface.position(x.u, x.v)), f.coords(), mu);
      fit = std::max(fit, pf.residual);
      degree = std::max(degree, pf.poly.effective_degree());
      const Polynomial ph = phat.at(x.u, x.v);
      // H of the transform from its normalized linear coefficient.
      const double y2 = detail::inner(kSig, ph.coeffs[1], ph.coeffs[1]);
      dh = std::max(dh, std::abs(-detail::inner(kSig, q, ph.coeffs[1]) / std::sqrt(y2) - 0.5));
    }
  }
  o.require(orth < 1e-7, "orthogonality " + fmt("%.3g", orth));
  o.require(fit < 1e-7 && degree <= 1, "fit " + fmt("%.3g", fit) + " degree " + std::to_string(degree));
  o.require(dh < 1e-6, "|H' - 1/2| " + fmt("%.3g", dh));
  if (o.pass) o.detail = "orth " + fmt("%.3g", orth) + ", fit " + fmt("%.3g", fit) + ", |H'-1/2| " + fmt("%.3g", dh);
  return o;
}

Outcome fourth_point_solver() {
  Outcome o;
  SplitRng rng(505);
  const std::vector<double> ts{0.3, 0.9, 1.7};
  double flat = 0.0, cr = 0.0;
  for (int k = 0; k < 500; ++k) {
    const NullLine fi = random_point(rng), fj = random_point(rng), fl = random_point(rng);
    const double a = (rng.uniform() < 0.5 ? 1 : -1) * (2.0 + 2 * rng.uniform());
    double b = (rng.uniform() < 0.5 ? 1 : -1) * (2.0 + 2 * rng.uniform());
    if (std::abs(a - b) < 0.2) b += 0.5;
    const NullLine fk = fourth_point(fi, fj, fl, a, b);
    DiscreteNet net(kSig);
    net.set_vertex({0, 0}, fi);
    net.set_vertex({1, 0}, fj);
    net.set_vertex({1, 1}, fk);
    net.set_vertex({0, 1}, fl);
    net.set_label({0, 0}, {1, 0}, a);
    net.set_label({0, 1}, {1, 1}, a);
    net.set_label({0, 0}, {0, 1}, b);
    net.set_label({1, 0}, {1, 1}, b);
    flat = std::max(flat, check_flatness(net, ts).max_residual);
    cr = std::max(cr, std::abs(cross_ratio(fi, fj, fk, fl) - a / b) / (1 + std::abs(a / b)));
  }
  o.require(flat < 1e-9, "flatness " + fmt("%.3g", flat));
  o.require(cr < 1e-9, "cross-ratio " + fmt("%.3g", cr));
  if (o.pass) o.detail = "flatness " + fmt("%.3g", flat) + ", cross-ratio " + fmt("%.3g", cr);
  return o;
}

Outcome end_to_end() {
  Outcome o;
  const PipelineResult r = run_pipeline(load_config(kConfigs + "/cylinder_3x3.json"));
  const json& c = r.certificate;
  o.require(r.exit_code == exit_code::certified, "exit code " + std::to_string(r.exit_code));
  if (c.contains("error")) {
    o.require(false, c["error"]["message"].get<std::string>());
    return o;
  }
  o.require(c["flat"] == true && c["edge_property"] == true && c["degree"] == 1, "certificate " + c["net"].dump());
  const json& res = c["net"]["residuals"];
  const json& lat = c["lattice"];
  double worst = 0.0;
  for (const json* v : {&res["flatness_max"], &res["edge_fit_max"], &res["edge_mismatch_max"], &res["edge_pole_max"],
                        &lat["darboux_max"], &lat["backlund_max"], &lat["cq_fit_max"]}) {
    worst = std::max(worst, v->get<double>());
  }
  o.require(worst < 1e-6, "max residual " + fmt("%.3g", worst));
  const double spread = c["cmc"].value("spread", 1.0);
  o.require(c["cmc"]["constant"] == true && spread < 1e-6, "cmc spread " + fmt("%.3g", spread));
  if (o.pass) o.detail = "max residual " + fmt("%.3g", worst) + ", cmc spread " + fmt("%.3g", spread);
  return o;
}

Outcome edge_property_both_directions() {
  Outcome o;
  const ExperimentConfig cfg = load_config(kConfigs + "/cylinder_non_backlund.json");
  const Cmc c = cylinder(cfg.H, cfg.surface.normal_orientation);
  const SurfaceLattice L = build_lattice(c.family, c.p, cfg.params, {cfg.seed, cfg.seed_overrides}, cfg.lattice);
  const DiscreteNet net = extract_discrete(L, cfg.sample_i, cfg.sample_j);
  const Certificate cert = certify_type_d(net, cfg.tolerances);
  o.require(cert.flat, "flatness fails: " + fmt("%.3g", cert.flatness.max_residual));
  // Discrete edges lie on lattice edges; lineage decides which must pass.
  double good_fit = 0.0, bad_fit = 1e300, darboux = 0.0;
  int n_bad = 0;
  for (const LatticeEdge& e : L.edges) {
    const EdgeCheck ec = check_edge(net, e.from, e.to, cfg.tolerances.edge);
    darboux = std::max(darboux, e.darboux_residual);
    if (e.backlund_lineage) {
      good_fit = std::max(good_fit, ec.fit_residual);
      o.require(ec.pass, "Baecklund edge " + to_string(e.from) + "-" + to_string(e.to) + " fails");
    } else {
      ++n_bad;
      bad_fit = std::min(bad_fit, ec.fit_residual);
    }
  }
  o.require(n_bad > 0, "no non-Baecklund edges");
  o.require(bad_fit > 1e-3, "non-Baecklund fit residual " + fmt("%.3g", bad_fit));
  o.require(darboux < 1e-6, "Darboux residual " + fmt("%.3g", darboux));
  if (o.pass) {
    o.detail = "Baecklund fit " + fmt("%.3g", good_fit) + ", non-Baecklund min fit " + fmt("%.3g", bad_fit) + " on " +
               std::to_string(n_bad) + " edges, flatness " + fmt("%.3g", cert.flatness.max_residual);
  }
  return o;
}

Outcome two_route() {
  Outcome o;
  const ExperimentConfig cfg = load_config(kConfigs + "/cylinder_3x3.json");
  const Cmc c = cylinder(cfg.H, cfg.surface.normal_orientation);
  const SurfaceLattice L = build_lattice(c.family, c.p, cfg.params, {cfg.seed, cfg.seed_overrides}, cfg.lattice);
  double internal = 0.0;
  for (int m = 1; m <= L.params.M(); ++m)
    for (int n = 1; n <= L.params.N(); ++n) internal = std::max(internal, L.two_route[m][n]);
  // Independent route: transport along a polyline through the interior.
  const std::size_t g0 = static_cast<std::size_t>(L.base_node());
  const int gi = L.grid.nu - 1, gj = L.grid.nv - 1;
  const std::size_t g = static_cast<std::size_t>(L.grid.index(gi, gj));
  const Path path{L.grid.node(L.base_i, L.base_j), {0.3, 0.05}, {0.1, 0.35}, L.grid.node(gi, gj)};
  TransportOptions opt;
  opt.steps_per_segment = 400;
  double polyline = 0.0;
  for (int m = 1; m <= L.params.M(); ++m) {
    for (int n = 1; n <= L.params.N(); ++n) {
      const double t = L.params.vertical(n);
      const Eigen::MatrixXd T = transport_matrix(c.family, t, path, opt);
      const Eigen::MatrixXd Pi = lattice_gauge(L, {m, n - 1}, t, g) * T * lattice_gauge(L, {m, n - 1}, t, g0).inverse();
      const NullLine moved(PseudoVector(kSig, Pi * L.at(m, n).lines[g0].coords()));
      polyline = std::max(polyline, projective_distance(moved, L.at(m, n).lines[g]));
    }
  }
  o.require(internal < 1e-5, "v-first route " + fmt("%.3g", internal));
  o.require(polyline < 1e-5, "polyline route " + fmt("%.3g", polyline));
  if (o.pass) o.detail = "v-first " + fmt("%.3g", internal) + ", polyline " + fmt("%.3g", polyline);
  return o;
}

Outcome io_determinism() {
  Outcome o;
  const ExperimentConfig cfg = load_config(kConfigs + "/cylinder_3x3.json");
  const PipelineResult a = run_pipeline(cfg), b = run_pipeline(load_config(kConfigs + "/cylinder_3x3.json"));
  o.require(a.net == b.net, "net differs between runs");
  o.require(a.certificate.dump(2) == b.certificate.dump(2), "certificate differs between runs");
  o.require(a.mesh.obj == b.mesh.obj, "mesh differs between runs");
  const LoadedNet l = load_net(a.net);
  o.require(save_net(l.net, l.metadata) == a.net, "save/load/save is not byte-identical");
  bool exact = true;
  for (const auto& [i, f] : l.net.vertices()) {
    exact = exact && f.coords() == load_net(a.net).net.vertex(i).coords();
  }
  o.require(exact, "vertices change on reload");
  o.require(export_mesh(l.net, SpaceFormVector::euclidean()).obj == a.mesh.obj, "re-exported mesh differs");
  if (o.pass) o.detail = std::to_string(a.net.size()) + " byte net reproduced";
  return o;
}

}  // namespace

int main() {
  run(1, "boost algebra", 1.0, boost_algebra);
  run(2, "smooth flatness", 30.0, smooth_flatness);
  run(3, "cmc conserved quantity", 60.0, cmc_conserved_quantity);
  run(4, "Baecklund propagation", 60.0, backlund_propagation);
  run(5, "fourth-point solver", 5.0, fourth_point_solver);
  run(6, "3x3 lattice end to end", 300.0, end_to_end);
  run(7, "edge property both directions", 300.0, edge_property_both_directions);
  run(8, "two-route consistency", 300.0, two_route);
  run(9, "IO determinism", 300.0, io_determinism);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
