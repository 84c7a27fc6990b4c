#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "cli.hpp"
#include "rieszlab/spectral.hpp"

using namespace rieszlab::cli;

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<uint64_t> seed;
  std::optional<int64_t> max_vertices;
  std::optional<double> k, t, tol, k0, fault;
  std::optional<int> source, probes;
  std::vector<double> p;
  std::vector<int> R;
  std::optional<std::string> only;
  std::vector<std::string> verbs;
  bool report = false;
  bool k0_scan = false;
};

void common(CLI::App* s, Flags& f) {
  s->add_option("-c,--config", f.config, "RunConfig JSON file");
  s->add_option("--out", f.out, "output directory (scaling: table path)");
  s->add_option("--jobs", f.jobs, "parallel cells; RIESZLAB_JOBS overrides")->check(CLI::PositiveNumber);
  s->add_option("--seed", f.seed, "seed of the random witness fields");
  s->add_option("--max-vertices", f.max_vertices, "resource cap per model");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rieszlab: Riesz transform experiments on connected sums of lattice ends"};
  app.require_subcommand(1);
  Flags f;

  auto* run_cmd = app.add_subcommand("run", "execute the verbs listed in a config");
  common(run_cmd, f);
  run_cmd->add_option("--verbs", f.verbs, "override the verb list")->delimiter(',');

  std::map<std::string, CLI::App*> sub;
  const std::map<std::string, std::string> help{
      {"build", "build the models and write manifold JSON"},
      {"kernels-check", "Bessel identity table (a,k,r,lhs,rhs,relerr)"},
      {"heat", "heat semigroup column e^{-t Delta} delta_y"},
      {"resolve", "resolvent column (Delta + k^2)^{-1} delta_y"},
      {"multiplier", "Delta^{-1/2} delta_y by the F_< + F_> split"},
      {"parametrix", "parametrix diagnostics and resolvent column dumps"},
      {"riesz", "L^p lower bounds and the weak (1,1) functional"},
      {"scaling", "lower-bound scaling table over R"},
      {"verify-all", "acceptance criteria"}};
  for (const auto& v : known_verbs()) {
    auto* s = app.add_subcommand(v, help.at(v));
    common(s, f);
    sub[v] = s;
  }
  for (const char* v : {"heat", "resolve", "multiplier"}) {
    sub[v]->add_option("--k", f.k, "spectral parameter");
    sub[v]->add_option("--t", f.t, "heat time");
    sub[v]->add_option("--tol", f.tol, "solver tolerance");
    sub[v]->add_option("--source-vertex", f.source, "source vertex id");
  }
  sub["parametrix"]->add_option("--k", f.k, "spectral parameter");
  sub["parametrix"]->add_option("--probes", f.probes, "number of probe vertices");
  sub["parametrix"]->add_flag("--report", f.report, "print the JSON diagnostics");
  sub["parametrix"]->add_flag("--k0-scan", f.k0_scan, "choose k0 over the configured k-grid");
  sub["riesz"]->add_option("--k0", f.k0, "low/high energy split");
  sub["riesz"]->add_option("--p", f.p, "exponents")->delimiter(',');
  sub["scaling"]->add_option("--spec", f.config, "RunConfig JSON file");
  sub["scaling"]->add_option("--p", f.p, "exponents")->delimiter(',');
  sub["scaling"]->add_option("--R", f.R, "radii")->delimiter(',');
  sub["verify-all"]->add_option("--only", f.only, "criterion group or ids, e.g. bessel or 7,10");
  sub["verify-all"]->add_option("--fault-laplacian", f.fault, "perturb the Laplacian by this relative amount");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitSchema;
  }

  try {
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
    std::string verb = "run";
    for (const auto& [name, s] : sub)
      if (s->parsed()) verb = name;
    if (verb != "run") cfg.verbs = {verb};
    else if (!f.verbs.empty()) cfg.verbs = f.verbs;
    std::optional<std::filesystem::path> table;
    if (f.out) {
      // scaling --out table.csv: the manifest goes next to the table
      if (verb == "scaling" && std::filesystem::path(*f.out).has_extension()) {
        table = *f.out;
        cfg.output_dir = table->has_parent_path() ? table->parent_path().string() : ".";
      } else {
        cfg.output_dir = *f.out;
      }
    }
    if (f.jobs) cfg.jobs = *f.jobs;
    if (const char* e = std::getenv("RIESZLAB_JOBS")) {
      try {
        cfg.jobs = std::stoi(e);
      } catch (const std::exception&) {
        throw ConfigError(std::string("RIESZLAB_JOBS: not an integer: ") + e);
      }
    }
    if (f.seed) cfg.seed = *f.seed;
    if (f.max_vertices) cfg.max_vertices = *f.max_vertices;
    if (f.k) cfg.k = *f.k;
    if (f.t) cfg.t = *f.t;
    if (f.tol) cfg.tol_solver = cfg.tol_multiplier = *f.tol;
    if (f.k0) cfg.k0 = *f.k0;
    if (f.source) cfg.source_vertex = *f.source;
    if (f.probes) cfg.probes = *f.probes;
    if (!f.p.empty()) cfg.p_list = f.p;
    if (!f.R.empty()) cfg.R_list = f.R;
    if (f.only) cfg.only = *f.only;
    if (f.fault) cfg.fault_laplacian = *f.fault;
    if (f.k0_scan) cfg.k0_scan = true;
    check(cfg);

    const int rc = run(cfg, std::cerr);
    const std::filesystem::path dir = cfg.output_dir;
    if (table && table->filename() != "table.csv" && std::filesystem::exists(dir / "table.csv"))
      std::filesystem::rename(dir / "table.csv", *table);
    if (f.report)
      for (const auto& m : cfg.models) {
        std::ifstream is(dir / m.id / "parametrix.json");
        if (is) std::cout << is.rdbuf();
      }
    return rc;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const rieszlab::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  }
}
