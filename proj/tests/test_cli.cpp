#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "rieszlab/spectral.hpp"
#include "verify.hpp"

using namespace rieszlab;
using namespace rieszlab::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rieszlab_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream is(p);
  for (std::string line; std::getline(is, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

RunConfig small(const fs::path& dir) {
  RunConfig c;
  c.models = {{"small", {{3, {}, 5}, {3, {}, 5}}}};
  c.output_dir = dir.string();
  return c;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("malformed JSON reports line and column") {
  const std::string e = error_of("{\n  \"k0\": 1,\n  \"seed\": ]\n}");
  CHECK(e.find("line 3, column 11") != std::string::npos);
  CHECK(error_of("{\"k0\": 1,}").find("line 1") != std::string::npos);
}

TEST_CASE("schema violations are rejected") {
  CHECK_FALSE(error_of(R"({"tolerances": {"solver": 0}})").empty());
  CHECK_FALSE(error_of(R"({"tolerances": {"rank": -1e-6}})").empty());
  CHECK_FALSE(error_of(R"({"unknown_key": 1})").empty());
  CHECK_FALSE(error_of(R"({"verbs": ["build", "plot"]})").empty());
  CHECK_FALSE(error_of(R"({"models": [{"id": "a", "ends": [{"n": 2, "R": 8}]}]})").empty());
  CHECK_FALSE(error_of(R"({"models": [{"id": "a", "ends": [{"n": 3}]}]})").empty());
  CHECK_FALSE(error_of(R"({"p_list": [1, 2]})").empty());
  CHECK_FALSE(error_of(R"({"seed": -3})").empty());
  CHECK_FALSE(error_of(R"({"k0": "1"})").empty());
  CHECK_FALSE(error_of(R"({"only": "nonsense"})").empty());
  CHECK(error_of(R"({"models": [{"id": "a", "ends": [{"n": 3, "R": 8, "factor": [5]}]}], "verbs": []})").empty());
}

TEST_CASE("config hash is canonical") {
  const auto a = parse_config(R"({"seed": 7, "p_list": [2, 3], "output_dir": "x"})");
  const auto b = parse_config("{\n  \"output_dir\": \"y\",\n  \"p_list\": [2, 3],\n  \"seed\": 7, \"jobs\": 4\n}");
  const auto c = parse_config(R"({"seed": 8, "p_list": [2, 3]})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
  // a config round-trips through its canonical form
  CHECK(config_hash(parse_config(canonical(a).dump())) == config_hash(a));
}

TEST_CASE("empty verb list writes only the manifest") {
  const auto dir = scratch("empty");
  auto cfg = small(dir);
  std::ostringstream log;
  CHECK(run(cfg, log) == 0);
  int files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["config_hash"] == config_hash(cfg));
  CHECK(m["seed"] == cfg.seed);
  CHECK(m["status"] == "ok");
  CHECK(m["steps"].empty());
  CHECK(m["artifact_version"] == kArtifactVersion);
}

TEST_CASE("build writes a loadable manifold") {
  const auto dir = scratch("build");
  auto cfg = small(dir);
  cfg.verbs = {"build"};
  std::ostringstream log;
  REQUIRE(run(cfg, log) == 0);
  const auto M = from_json(slurp(dir / "small" / "manifold.json"));
  CHECK(same_graph(M, connect_sum({build_end({3, {}, 5}), build_end({3, {}, 5})})));
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  REQUIRE(m["steps"].size() == 1);
  CHECK(m["steps"][0]["verb"] == "build");
  CHECK(m["steps"][0]["seconds"].get<double>() >= 0);
}

TEST_CASE("resource cap exits 4 and flags partial output") {
  const auto dir = scratch("cap");
  auto cfg = small(dir);
  cfg.models.push_back({"big", {{3, {}, 40}, {4, {}, 40}}});
  cfg.max_vertices = 10000;
  cfg.verbs = {"build"};
  std::ostringstream log;
  CHECK(run(cfg, log) == kExitResource);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["partial"] == true);
  CHECK(m["status"] == "resource-cap");
  CHECK(fs::exists(dir / "small" / "manifold.json"));
  CHECK_FALSE(fs::exists(dir / "big"));
}

TEST_CASE("solver failure exits 3") {
  const auto dir = scratch("solver");
  auto cfg = small(dir);
  // no Chebyshev degree reaches this; the fit hits its degree cap
  cfg.tol_multiplier = 1e-300;
  cfg.verbs = {"multiplier"};
  std::ostringstream log;
  CHECK(run(cfg, log) == kExitSolver);
  CHECK(nlohmann::json::parse(slurp(dir / "manifest.json"))["status"] == "solver-failure");
}

TEST_CASE("kernels-check table") {
  const auto dir = scratch("kernels");
  auto cfg = small(dir);
  cfg.verbs = {"kernels-check"};
  std::ostringstream log;
  REQUIRE(run(cfg, log) == 0);
  const auto rows = csv(dir / "kernels.csv");
  REQUIRE(rows.size() == 101);
  CHECK(rows[0] == std::vector<std::string>{"a", "k", "r", "lhs", "rhs", "relerr"});
  for (size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(rows[i][5]) <= 1e-6);
}

TEST_CASE("resolve column satisfies the resolvent equation") {
  const auto dir = scratch("resolve");
  auto cfg = small(dir);
  cfg.verbs = {"resolve"};
  cfg.k = 0.3;
  cfg.tol_solver = 1e-12;
  std::ostringstream log;
  REQUIRE(run(cfg, log) == 0);
  const auto rows = csv(dir / "small" / "resolve.csv");
  const auto M = connect_sum({build_end({3, {}, 5}), build_end({3, {}, 5})});
  REQUIRE(int(rows.size()) == M.num_vertices + 1);
  CHECK(rows[0] == std::vector<std::string>{"vertex", "end", "distance", "value"});
  Vec g(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v) g[v] = std::stod(rows[v + 1][3]);
  // independent residual: (Delta + k^2) g = delta_0 on the interior, g = 0 on the ring
  const auto D = laplacian(M);
  Vec r = D.apply(g) + cfg.k * cfg.k * D.restrict(g);
  r[0] -= 1;
  CHECK(r.norm() <= 1e-9);
  for (int v = 0; v < M.num_vertices; ++v)
    if (M.boundary[v]) CHECK(g[v] == 0.0);
}

TEST_CASE("scaling table has one row per (p, R) cell") {
  const auto dir = scratch("scaling");
  RunConfig cfg;
  cfg.models = {{"n3-n4", {{3, {}, 5}, {4, {}, 5}}}};
  cfg.p_list = {2, 3, 4};
  cfg.R_list = {5, 6, 7};
  cfg.output_dir = dir.string();
  cfg.verbs = {"scaling"};
  std::ostringstream log;
  REQUIRE(run(cfg, log) == 0);
  const auto rows = csv(dir / "table.csv");
  REQUIRE(rows.size() == 10);
  const std::vector<std::string> head{"model_id", "p", "R", "lower_bound", "witness_id", "slope", "classification"};
  CHECK(std::equal(head.begin(), head.end(), rows[0].begin()));
  for (size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i][0] == "n3-n4");
    CHECK(std::stod(rows[i][3]) > 0);
  }
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["steps"][0]["complete"] == true);
  CHECK(m["steps"][0]["provenance"]["witness_ids"].size() == 9);
}

TEST_CASE("verify selection by group and id") {
  CHECK(verify::select("bessel") == std::vector<int>{1, 2});
  CHECK(verify::select("7,10") == std::vector<int>{7, 10});
  CHECK(verify::select("bessel,1,12") == std::vector<int>{1, 2, 12});
  CHECK_THROWS_AS(verify::select("nope"), std::invalid_argument);
}

TEST_CASE("verify-all --only bessel runs the special-function checks") {
  const auto dir = scratch("verify");
  auto cfg = small(dir);
  cfg.verbs = {"verify-all"};
  cfg.only = "bessel";
  std::ostringstream log;
  REQUIRE(run(cfg, log) == 0);
  const auto v = nlohmann::json::parse(slurp(dir / "verify.json"));
  REQUIRE(v["criteria"].size() == 2);
  CHECK(v["criteria"][0]["id"] == 1);
  CHECK(v["criteria"][1]["id"] == 2);
  CHECK(v["criteria"][0]["status"] == "pass");
}

TEST_CASE("a perturbed Laplacian fails only the decomposition identity") {
  verify::VerifyOptions opt;
  opt.fault_laplacian = 1e-3;
  const auto bad = verify::run_criterion(7, opt);
  CHECK_FALSE(bad.pass());
  CHECK_FALSE(bad.known_failure());
  for (int id : {1, 3}) CHECK(verify::run_criterion(id, opt).pass());
}
