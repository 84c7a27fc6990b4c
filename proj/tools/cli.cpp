#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "rieszlab/parametrix.hpp"
#include "rieszlab/riesz.hpp"
#include "rieszlab/special_fn.hpp"
#include "rieszlab/spectral.hpp"
#include "verify.hpp"

namespace rieszlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& known_verbs() {
  static const std::vector<std::string> v{"build",      "kernels-check", "heat",    "resolve",   "multiplier",
                                          "parametrix", "riesz",         "scaling", "verify-all"};
  return v;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

double number(const json& j, const std::string& key) {
  if (!j.is_number()) fail("field '" + key + "': expected a number");
  return j.get<double>();
}

int64_t integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) fail("field '" + key + "': expected an integer");
  return j.get<int64_t>();
}

std::string string(const json& j, const std::string& key) {
  if (!j.is_string()) fail("field '" + key + "': expected a string");
  return j.get<std::string>();
}

const json& array(const json& j, const std::string& key) {
  if (!j.is_array()) fail("field '" + key + "': expected an array");
  return j;
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; }))
      fail(where + ": unknown field '" + k + "'");
}

EndSpec parse_end(const json& j, const std::string& where) {
  only_keys(j, where, {"n", "factor", "R", "h"});
  EndSpec e;
  if (!j.contains("n") || !j.contains("R")) fail(where + ": 'n' and 'R' are required");
  e.n = int(integer(j["n"], where + ".n"));
  e.R = int(integer(j["R"], where + ".R"));
  if (j.contains("factor"))
    for (const auto& c : array(j["factor"], where + ".factor")) e.factor.push_back(int(integer(c, where + ".factor")));
  if (j.contains("h")) e.h = number(j["h"], where + ".h");
  try {
    validate(e);
  } catch (const GeometryError& ex) {
    fail(where + ": " + ex.what());
  }
  return e;
}

std::pair<int, int> line_column(const std::string& text, size_t byte) {
  int line = 1, col = 1;
  for (size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// Write to a temporary sibling, then rename over the target.
void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, p);
}

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

struct Context {
  const RunConfig& cfg;
  std::ostream& log;
  fs::path dir;
  std::string hash;
  json steps = json::array();
  bool partial = false;
};

ModelManifold build_model(const RunConfig& cfg, const ModelConfig& m) {
  if (vertex_count_bound(m.ends) > cfg.max_vertices)
    throw ResourceCap("model " + m.id + ": " + std::to_string(vertex_count_bound(m.ends)) + " vertices exceed max_vertices " +
                      std::to_string(cfg.max_vertices));
  std::vector<ModelManifold> frags;
  for (const auto& e : m.ends) frags.push_back(build_end(e));
  return connect_sum(frags);
}

int source_of(const RunConfig& cfg, const ModelManifold& M) {
  const int y = cfg.source_vertex;
  if (y < 0 || y >= M.num_vertices) throw ConfigError("source_vertex " + std::to_string(y) + " out of range");
  if (M.boundary[y]) throw ConfigError("source_vertex " + std::to_string(y) + " is on the Dirichlet ring");
  return y;
}

std::string vertex_csv(const ModelManifold& M, int y, const Vec& g) {
  std::ostringstream os;
  os << "vertex,end,distance,value\n";
  for (int v = 0; v < M.num_vertices; ++v)
    os << v << ',' << M.end_of(v) << ',' << num(routed_distance(M, y, v)) << ',' << num(g[v]) << '\n';
  return os.str();
}

Vec delta(const ModelManifold& M, int y) {
  Vec f = Vec::Zero(M.num_vertices);
  f[y] = 1;
  return f;
}

json fit_json(const std::vector<DecayFit>& fits) {
  json a = json::array();
  for (const auto& f : fits) a.push_back(f.points >= 2 ? json(f.slope) : json());
  return a;
}

void kernels_check(Context& c, json& step) {
  std::ostringstream os;
  os << "a,k,r,lhs,rhs,relerr\n";
  double worst = 0;
  for (double a : {3.0, 4.0, 5.0, 6.0})
    for (double k : {0.05, 0.2, 0.5, 1.0, 2.0})
      for (double r : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        const auto id = bessel_integral_identity(a, k, r);
        worst = std::max(worst, id.relerr());
        os << a << ',' << k << ',' << r << ',' << num(id.lhs) << ',' << num(id.rhs) << ',' << num(id.relerr()) << '\n';
      }
  write_file(c.dir / "kernels.csv", os.str());
  step["outputs"].push_back("kernels.csv");
  step["max_relerr"] = worst;
  step["provenance"] = {{"grid", "a {3,4,5,6} x k {0.05,0.2,0.5,1,2} x r {0.5,1,2,5,10}"}};
}

void model_verb(Context& c, const std::string& verb, const ModelConfig& m, json& step) {
  const RunConfig& cfg = c.cfg;
  const auto M = build_model(cfg, m);
  const fs::path sub = m.id;
  step["vertices"] = M.num_vertices;
  auto out = [&](const std::string& name, const std::string& content) {
    write_file(c.dir / sub / name, content);
    step["outputs"].push_back((sub / name).string());
  };
  if (verb == "build") {
    out("manifold.json", to_json(M));
    return;
  }
  const auto D = laplacian(M);
  if (verb == "heat") {
    const int y = source_of(cfg, M);
    out("heat.csv", vertex_csv(M, y, heat_apply(D, cfg.t, delta(M, y), cfg.tol_multiplier)));
    step["provenance"] = {{"source_vertex", y}, {"t", cfg.t}};
  } else if (verb == "resolve") {
    const int y = source_of(cfg, M);
    SolveStats st;
    const Vec g = resolvent_solve(D, cfg.k, delta(M, y), cfg.tol_solver, nullptr, &st);
    out("resolve.csv", vertex_csv(M, y, g));
    step["provenance"] = {{"source_vertex", y}, {"k", cfg.k}, {"tol", cfg.tol_solver}};
    step["iterations"] = st.iterations;
  } else if (verb == "multiplier") {
    const int y = source_of(cfg, M);
    MultiplierSpec spec;
    spec.k0 = cfg.k0;
    spec.tol = cfg.tol_multiplier;
    MultiplierOperator T(D, spec);
    out("multiplier.csv", vertex_csv(M, y, T.apply(delta(M, y))));
    step["provenance"] = {{"source_vertex", y}, {"k0", cfg.k0}, {"tol", cfg.tol_multiplier}};
  } else if (verb == "parametrix") {
    ParametrixConfig pc;
    pc.tol_rank = cfg.tol_rank;
    ParametrixModel P(M, pc);
    const auto B = assemble_parametrix(P, cfg.k);
    const auto probes = parametrix_probes(M, cfg.probes);
    const auto rep = verify_resolvent_decomposition(B, probes);
    int rmin = M.ends[0].R;
    for (const auto& e : M.ends) rmin = std::min(rmin, e.R);
    const double dmin = std::min(4.0, rmin / 4.0), dmax = rmin / 2.0;
    const auto w = weight_fits(B, dmin, dmax);
    json j{{"k", cfg.k},
           {"hs_norm_E", rep.hs_norm_E},
           {"hs_norm_S", rep.hs_norm_S},
           {"min_sv", rep.sigma_min},
           {"max_relerr", rep.max_relerr},
           {"probes", probes},
           {"relerr", rep.relerr},
           {"slopes",
            {{"E_right", fit_json(w.E_right)},
             {"GS_left", fit_json(w.GS_left)},
             {"GS_right", fit_json(w.GS_right)},
             {"gradGS_left", fit_json(w.gradGS_left)}}},
           {"G3_over_GS", w.G3_over_GS},
           {"fit_range", {dmin, dmax}},
           {"config_hash", c.hash}};
    if (cfg.k0_scan) {
      const auto ch = choose_k0(P, geometric_grid(cfg.k_lo, cfg.k_hi, cfg.k_per_decade));
      j["k0_choice"] = {{"k0", ch.k0}, {"grid", ch.grid}, {"min_sv", ch.sigma}};
    }
    out("parametrix.json", j.dump(2) + "\n");
    std::ostringstream os;
    os << "vertex,end";
    for (int y : probes) os << ",probe_" << y;
    os << '\n';
    std::vector<Vec> cols;
    for (int y : probes) cols.push_back(B.resolvent_column(y));
    for (int v = 0; v < M.num_vertices; ++v) {
      os << v << ',' << M.end_of(v);
      for (const auto& col : cols) os << ',' << num(col[v]);
      os << '\n';
    }
    out("columns.csv", os.str());
    step["provenance"] = {{"probes", probes}, {"k", cfg.k}, {"k_grid", {cfg.k_lo, cfg.k_hi, cfg.k_per_decade}}};
  } else if (verb == "riesz") {
    RieszOperator T(M, RieszMode::quadrature, cfg.k0, cfg.tol_multiplier);
    WitnessOptions wo;
    wo.seed = cfg.seed;
    const auto reps = lp_lower_bounds(T, cfg.p_list, wo);
    std::ostringstream os, ws;
    os << "model_id,p,lower_bound,witness_id\n";
    ws << "model_id,p,witness_id,ratio\n";
    json ids = json::array();
    for (const auto& r : reps) {
      os << m.id << ',' << r.p << ',' << num(r.value) << ',' << r.witness_id << '\n';
      for (const auto& [id, v] : r.ratios) ws << m.id << ',' << r.p << ',' << id << ',' << num(v) << '\n';
      ids.push_back(r.witness_id);
    }
    out("riesz.csv", os.str());
    out("witnesses.csv", ws.str());
    const auto weak = weak11_test(T, spread_sources(M));
    out("weak11.json", json{{"sources", weak.sources}, {"values", weak.values}, {"max", weak.max}}.dump(2) + "\n");
    step["provenance"] = {{"witness_ids", ids}, {"seed", cfg.seed}, {"p_list", cfg.p_list}};
  }
}

void scaling(Context& c, json& step) {
  const RunConfig& cfg = c.cfg;
  std::vector<ScalingModel> models;
  for (const auto& m : cfg.models) models.push_back({m.id, m.ends});
  ScalingOptions opt;
  opt.witnesses.seed = cfg.seed;
  opt.k0 = cfg.k0;
  opt.max_vertices = cfg.max_vertices;
  opt.jobs = cfg.jobs;
  const auto t = scaling_study(models, cfg.p_list, cfg.R_list, opt);
  write_file(c.dir / "table.csv", scaling_csv(t));
  step["outputs"].push_back("table.csv");
  step["complete"] = t.complete;
  json ids = json::array();
  for (const auto& r : t.rows) ids.push_back(r.witness_id);
  step["provenance"] = {{"witness_ids", ids}, {"R_list", cfg.R_list}, {"p_list", cfg.p_list}, {"seed", cfg.seed}};
  if (!t.complete) {
    c.partial = true;
    throw ResourceCap("scaling: cells above max_vertices were skipped");
  }
}

int verify(Context& c, json& step) {
  verify::VerifyOptions opt;
  if (!c.cfg.only.empty()) opt.only = verify::select(c.cfg.only);
  opt.fault_laplacian = c.cfg.fault_laplacian;
  json results = json::array();
  bool ok = true;
  for (const auto& info : verify::criteria()) {
    if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), info.id) == opt.only.end()) continue;
    const auto r = verify::run_criterion(info.id, opt);
    c.log << verify::format_line(r) << std::endl;
    results.push_back(verify::to_json(r));
    ok = ok && (r.pass() || r.known_failure());
  }
  write_file(c.dir / "verify.json", json{{"criteria", results}, {"config_hash", c.hash}}.dump(2) + "\n");
  step["outputs"].push_back("verify.json");
  return ok ? 0 : kExitFail;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    fail("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
  }
  only_keys(j, "config",
            {"models", "tolerances", "k_grid", "k0", "k", "t", "source_vertex", "p_list", "R_list", "probes",
             "output_dir", "seed", "verbs", "max_vertices", "jobs", "only", "fault_laplacian", "k0_scan"});
  RunConfig c;
  if (j.contains("models")) {
    c.models.clear();
    const auto& ms = array(j["models"], "models");
    for (size_t a = 0; a < ms.size(); ++a) {
      const std::string where = "models[" + std::to_string(a) + "]";
      only_keys(ms[a], where, {"id", "ends"});
      ModelConfig m;
      m.id = ms[a].contains("id") ? string(ms[a]["id"], where + ".id") : "model" + std::to_string(a);
      if (!ms[a].contains("ends")) fail(where + ": 'ends' is required");
      const auto& es = array(ms[a]["ends"], where + ".ends");
      for (size_t b = 0; b < es.size(); ++b) m.ends.push_back(parse_end(es[b], where + ".ends[" + std::to_string(b) + "]"));
      c.models.push_back(std::move(m));
    }
  }
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    only_keys(t, "tolerances", {"solver", "multiplier", "rank"});
    if (t.contains("solver")) c.tol_solver = number(t["solver"], "tolerances.solver");
    if (t.contains("multiplier")) c.tol_multiplier = number(t["multiplier"], "tolerances.multiplier");
    if (t.contains("rank")) c.tol_rank = number(t["rank"], "tolerances.rank");
  }
  if (j.contains("k_grid")) {
    const auto& g = j["k_grid"];
    only_keys(g, "k_grid", {"lo", "hi", "per_decade"});
    if (g.contains("lo")) c.k_lo = number(g["lo"], "k_grid.lo");
    if (g.contains("hi")) c.k_hi = number(g["hi"], "k_grid.hi");
    if (g.contains("per_decade")) c.k_per_decade = int(integer(g["per_decade"], "k_grid.per_decade"));
  }
  if (j.contains("k0")) c.k0 = number(j["k0"], "k0");
  if (j.contains("k")) c.k = number(j["k"], "k");
  if (j.contains("t")) c.t = number(j["t"], "t");
  if (j.contains("source_vertex")) c.source_vertex = int(integer(j["source_vertex"], "source_vertex"));
  if (j.contains("p_list")) {
    c.p_list.clear();
    for (const auto& p : array(j["p_list"], "p_list")) c.p_list.push_back(number(p, "p_list"));
  }
  if (j.contains("R_list")) {
    c.R_list.clear();
    for (const auto& r : array(j["R_list"], "R_list")) c.R_list.push_back(int(integer(r, "R_list")));
  }
  if (j.contains("probes")) c.probes = int(integer(j["probes"], "probes"));
  if (j.contains("output_dir")) c.output_dir = string(j["output_dir"], "output_dir");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail("field 'seed': expected a non-negative integer");
    c.seed = j["seed"].get<uint64_t>();
  }
  if (j.contains("verbs"))
    for (const auto& v : array(j["verbs"], "verbs")) c.verbs.push_back(string(v, "verbs"));
  if (j.contains("max_vertices")) c.max_vertices = integer(j["max_vertices"], "max_vertices");
  if (j.contains("jobs")) c.jobs = int(integer(j["jobs"], "jobs"));
  if (j.contains("only")) c.only = string(j["only"], "only");
  if (j.contains("fault_laplacian")) c.fault_laplacian = number(j["fault_laplacian"], "fault_laplacian");
  if (j.contains("k0_scan")) {
    if (!j["k0_scan"].is_boolean()) fail("field 'k0_scan': expected true or false");
    c.k0_scan = j["k0_scan"].get<bool>();
  }
  check(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void check(const RunConfig& c) {
  if (c.models.empty()) fail("models: at least one model is required");
  std::set<std::string> ids;
  for (const auto& m : c.models) {
    if (m.ends.empty()) fail("model " + m.id + ": no ends");
    if (m.id.empty() || m.id.find_first_of("/\\,\n") != std::string::npos) fail("model id '" + m.id + "' is not a plain name");
    if (!ids.insert(m.id).second) fail("duplicate model id " + m.id);
    for (const auto& e : m.ends) {
      try {
        validate(e);
      } catch (const GeometryError& ex) {
        fail("model " + m.id + ": " + ex.what());
      }
    }
  }
  for (auto [name, x] : {std::pair{"tolerances.solver", c.tol_solver}, {"tolerances.multiplier", c.tol_multiplier},
                         {"tolerances.rank", c.tol_rank}})
    if (!(x > 0)) fail(std::string(name) + ": tolerances must be > 0");
  if (!(c.k_lo > 0 && c.k_hi > c.k_lo)) fail("k_grid: need 0 < lo < hi");
  if (c.k_per_decade < 1) fail("k_grid.per_decade: must be >= 1");
  if (!(c.k0 > 0)) fail("k0: must be > 0");
  if (!(c.k >= 0)) fail("k: must be >= 0");
  if (!(c.t > 0)) fail("t: must be > 0");
  for (double p : c.p_list)
    if (!(p > 1)) fail("p_list: every p must be > 1");
  for (int R : c.R_list)
    if (R < 4) fail("R_list: every R must be >= 4");
  if (c.probes < 1) fail("probes: must be >= 1");
  if (c.max_vertices < 1) fail("max_vertices: must be >= 1");
  if (c.jobs < 1) fail("jobs: must be >= 1");
  for (const auto& v : c.verbs)
    if (std::find(known_verbs().begin(), known_verbs().end(), v) == known_verbs().end()) fail("unknown verb '" + v + "'");
  if (!c.only.empty()) {
    try {
      verify::select(c.only);
    } catch (const std::invalid_argument& e) {
      fail(std::string("only: ") + e.what());
    }
  }
}

json canonical(const RunConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) {
    json ends = json::array();
    for (const auto& e : m.ends) ends.push_back({{"n", e.n}, {"factor", e.factor}, {"R", e.R}, {"h", e.h}});
    models.push_back({{"id", m.id}, {"ends", ends}});
  }
  return {{"models", models},
          {"tolerances", {{"solver", c.tol_solver}, {"multiplier", c.tol_multiplier}, {"rank", c.tol_rank}}},
          {"k_grid", {{"lo", c.k_lo}, {"hi", c.k_hi}, {"per_decade", c.k_per_decade}}},
          {"k0", c.k0},
          {"k", c.k},
          {"t", c.t},
          {"source_vertex", c.source_vertex},
          {"p_list", c.p_list},
          {"R_list", c.R_list},
          {"probes", c.probes},
          {"seed", c.seed},
          {"verbs", c.verbs},
          {"max_vertices", c.max_vertices},
          {"only", c.only},
          {"fault_laplacian", c.fault_laplacian},
          {"k0_scan", c.k0_scan}};
}

std::string config_hash(const RunConfig& c) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : canonical(c).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const RunConfig& cfg, std::ostream& log) {
  check(cfg);
  Context c{cfg, log, fs::path(cfg.output_dir), config_hash(cfg)};
  fs::create_directories(c.dir);
  int code = 0;
  std::string status = "ok";
  json error;
  auto timed = [&](const std::string& verb, const std::string& model, auto&& body) {
    json step{{"verb", verb}, {"outputs", json::array()}};
    if (!model.empty()) step["model"] = model;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const int rc = body(step);
      if (rc != 0) {
        code = rc;
        status = "criteria-failed";
      }
    } catch (...) {
      step["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      c.steps.push_back(step);
      throw;
    }
    step["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << verb << (model.empty() ? "" : " [" + model + "]") << ": " << step["seconds"].get<double>() << " s\n";
    c.steps.push_back(step);
  };
  try {
    for (const auto& verb : cfg.verbs) {
      if (verb == "kernels-check") {
        timed(verb, "", [&](json& s) { return kernels_check(c, s), 0; });
      } else if (verb == "scaling") {
        timed(verb, "", [&](json& s) { return scaling(c, s), 0; });
      } else if (verb == "verify-all") {
        timed(verb, "", [&](json& s) { return verify(c, s); });
      } else {
        for (const auto& m : cfg.models) timed(verb, m.id, [&](json& s) { return model_verb(c, verb, m, s), 0; });
      }
    }
  } catch (const ResourceCap& e) {
    code = kExitResource;
    status = "resource-cap";
    c.partial = true;
    error = e.what();
  } catch (const SolverError& e) {
    code = kExitSolver;
    status = "solver-failure";
    error = e.what();
  } catch (const ConfigError& e) {
    code = kExitSchema;
    status = "schema-error";
    error = e.what();
  }
  json manifest{{"artifact_version", kArtifactVersion},
                {"config_hash", c.hash},
                {"seed", cfg.seed},
                {"config", canonical(cfg)},
                {"steps", c.steps},
                {"status", status},
                {"partial", c.partial}};
  if (!error.is_null()) {
    manifest["error"] = error;
    log << "error: " << error.get<std::string>() << "\n";
  }
  write_file(c.dir / "manifest.json", manifest.dump(2) + "\n");
  return code;
}

}  // namespace rieszlab::cli
