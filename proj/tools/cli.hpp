#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rieszlab/geometry.hpp"

namespace rieszlab::cli {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr int kExitFail = 1, kExitSchema = 2, kExitSolver = 3, kExitResource = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A model exceeds max_vertices.
struct ResourceCap : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::string id;
  std::vector<EndSpec> ends;
};

struct RunConfig {
  std::vector<ModelConfig> models{{"n3-n4", {{3, {}, 8}, {4, {}, 8}}}};
  double tol_solver = 1e-9;       // CG
  double tol_multiplier = 1e-11;  // F_< quadrature and F_> Chebyshev
  double tol_rank = 1e-6;
  double k_lo = 1e-3, k_hi = 1.0;
  int k_per_decade = 16;
  double k0 = 1.0;
  double k = 0.1;          // heat / resolve / parametrix
  double t = 10.0;         // heat
  int source_vertex = 0;   // heat / resolve / multiplier
  std::vector<double> p_list{2, 2.5, 3, 4};
  std::vector<int> R_list{8, 12, 16};
  int probes = 10;
  std::string output_dir = "rieszlab-out";
  uint64_t seed = 20240601;
  std::vector<std::string> verbs;
  int64_t max_vertices = 4000000;
  int jobs = 1;
  std::string only;            // verify-all selection
  double fault_laplacian = 0;  // verify-all fault injection
  bool k0_scan = false;        // parametrix: choose k0 over the k-grid
};

const std::vector<std::string>& known_verbs();

// Throws ConfigError; malformed JSON reports "line L, column C".
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
void check(const RunConfig& cfg);

// Everything that can change a reported number; output_dir and jobs are left out.
nlohmann::json canonical(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);  // FNV-1a 64 of canonical(cfg).dump(), hex

// Executes cfg.verbs in order and writes manifest.json. Returns the process exit code.
int run(const RunConfig& cfg, std::ostream& log);

}  // namespace rieszlab::cli
