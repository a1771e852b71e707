#include "isolattice/cli_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace isolattice;

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

/// Three numbers are a point of R^3 (lifted), five are light-cone coordinates.
NullLine parse_point(const std::string& s) {
  const std::vector<double> x = parse_list(s);
  if (x.size() == 3) return euclidean_lift(Vec3(x[0], x[1], x[2]));
  if (x.size() == 5) return NullLine(PseudoVector(Signature::conformal3(), Eigen::Map<const Eigen::VectorXd>(x.data(), 5)));
  throw Error(ErrorKind::Schema, "cli", "a point needs 3 (Euclidean) or 5 (light-cone) comma-separated numbers");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattices of Baecklund transforms and discrete isothermic nets"};
  app.require_subcommand(1);

  auto* pipeline = app.add_subcommand("pipeline", "build, extract, certify and export from a config");
  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> tol_flat, tol_edge, tol_cmc;
  pipeline->add_option("--config", config_path, "experiment config (JSON)")->required();
  pipeline->add_option("--out", out_dir, "output directory for net.json, certificate.json, mesh.obj");
  pipeline->add_option("--seed", seed, "override the config seed");
  pipeline->add_option("--tol-flat", tol_flat);
  pipeline->add_option("--tol-edge", tol_edge);
  pipeline->add_option("--tol-cmc", tol_cmc);

  auto* verify = app.add_subcommand("verify", "certify a saved net");
  std::string net_path;
  bool cmc = false;
  verify->add_option("--net", net_path)->required();
  verify->add_flag("--cmc", cmc, "also read out H from a degree-1 conserved quantity");
  verify->add_option("--tol-flat", tol_flat);
  verify->add_option("--tol-edge", tol_edge);
  verify->add_option("--tol-cmc", tol_cmc);

  auto* exporter = app.add_subcommand("export", "write a saved net as an OBJ quad mesh");
  std::string obj_path;
  exporter->add_option("--net", net_path)->required();
  exporter->add_option("--obj", obj_path)->required();

  auto* fourth = app.add_subcommand("fourth-point", "complete a single quad");
  std::string fi, fj, fl;
  double m_ij = 0.0, m_il = 0.0;
  fourth->add_option("--fi", fi)->required();
  fourth->add_option("--fj", fj)->required();
  fourth->add_option("--fl", fl)->required();
  fourth->add_option("--mij", m_ij)->required();
  fourth->add_option("--mil", m_il)->required();

  CLI11_PARSE(app, argc, argv);

  auto apply_tolerances = [&](VerifyTolerances& t) {
    if (tol_flat) t.flat = *tol_flat;
    if (tol_edge) t.edge = *tol_edge;
    if (tol_cmc) t.cmc = *tol_cmc;
  };

  try {
    if (*pipeline) {
      ExperimentConfig cfg = load_config(config_path);
      if (seed) cfg.seed = *seed;
      apply_tolerances(cfg.tolerances);
      const PipelineResult r = run_pipeline(cfg);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      write_file((dir / "certificate.json").string(), r.certificate.dump(2) + "\n");
      if (r.exit_code != exit_code::construction_error) {
        write_file((dir / "net.json").string(), r.net);
        write_file((dir / "mesh.obj").string(), r.mesh.obj);
      }
      for (const auto& w : r.mesh.warnings) std::cerr << "warning: " << w << "\n";
      if (r.certificate.contains("error")) std::cerr << "error: " << r.certificate["error"]["message"].get<std::string>() << "\n";
      std::cout << "flat=" << r.certificate.value("flat", json(false)) << " edge_property=" << r.certificate.value("edge_property", json(nullptr))
                << " degree=" << r.certificate.value("degree", json(nullptr)) << " certified=" << r.certificate["certified"] << "\n";
      return r.exit_code;
    }
    if (*verify) {
      const LoadedNet loaded = load_net_file(net_path);
      VerifyTolerances tol;
      apply_tolerances(tol);
      const Certificate cert = certify_type_d(loaded.net, tol);
      json out = certificate_json(cert);
      bool ok = cert.certified();
      if (cmc) {
        const std::map<Index2, double> h = discrete_cmc_readout(loaded.net, SpaceFormVector::euclidean());
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& [i, v] : h) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        out["cmc"] = {{"min", lo}, {"max", hi}, {"spread", hi - lo}};
        ok = ok && hi - lo < tol.cmc;
      }
      out["certified"] = ok;
      std::cout << out.dump(2) << "\n";
      return ok ? exit_code::certified : exit_code::verification_failure;
    }
    if (*exporter) {
      const LoadedNet loaded = load_net_file(net_path);
      const MeshExport mesh = export_mesh(loaded.net, SpaceFormVector::euclidean());
      write_file(obj_path, mesh.obj);
      for (const auto& w : mesh.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << mesh.vertex_count << " vertices, " << mesh.face_count << " faces\n";
      return 0;
    }
    if (*fourth) {
      const NullLine a = parse_point(fi), b = parse_point(fj), d = parse_point(fl);
      const NullLine k = fourth_point(a, b, d, m_ij, m_il);
      DiscreteNet net(Signature::conformal3());
      net.set_vertex({0, 0}, a);
      net.set_vertex({1, 0}, b);
      net.set_vertex({1, 1}, k);
      net.set_vertex({0, 1}, d);
      net.set_label({0, 0}, {1, 0}, m_ij);
      net.set_label({0, 1}, {1, 1}, m_ij);
      net.set_label({0, 0}, {0, 1}, m_il);
      net.set_label({1, 0}, {1, 1}, m_il);
      json out;
      out["fk"] = vector_json(k.coords());
      try {
        const Vec3 x = project_to_spaceform(k, SpaceFormVector::euclidean());
        out["fk_point"] = {x[0], x[1], x[2]};
      } catch (const Error&) {
        out["fk_point"] = nullptr;
      }
      out["cross_ratio"] = cross_ratio(a, b, k, d);
      out["expected_cross_ratio"] = m_ij / m_il;
      out["flatness_residual"] = check_flatness(net).max_residual;
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code::construction_error;
  }
  return 0;
}
