#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rieszlab/geometry.hpp"
#include "rieszlab/parametrix.hpp"
#include "rieszlab/spectral.hpp"

namespace rieszlab {

// Values on the oriented edges of gradient(M).
using EdgeFunction = Vec;

enum class RieszMode { eigen, quadrature };

// T = grad Delta^{-1/2} on the Dirichlet space, either by a dense
// eigendecomposition or as grad (F_<(sqrt Delta) + F_>(sqrt Delta)).
class RieszOperator {
 public:
  RieszOperator(const ModelManifold& M, RieszMode mode, double k0 = 1.0, double tol = 1e-11);

  const ModelManifold& manifold() const { return M_; }
  const SparseOperator& laplacian() const { return D_; }
  const EdgeOperator& gradient() const { return grad_; }
  RieszMode mode() const { return mode_; }
  double k0() const { return k0_; }

  Vec inverse_sqrt(const Vec& f) const;  // Delta^{-1/2} f
  EdgeFunction apply(const Vec& f) const;
  Vec pointwise(const Vec& f) const;  // |Tf|(z)

 private:
  const ModelManifold& M_;
  SparseOperator D_;
  EdgeOperator grad_;
  RieszMode mode_;
  double k0_;
  std::unique_ptr<MultiplierOperator> mult_;
  std::unique_ptr<DenseSpectrum> dense_;
};

EdgeFunction riesz_apply(const RieszOperator& T, const Vec& f);

// (sum_z mu(z) |g(z)|^p)^{1/p}
double lp_norm(const Vec& g, const std::vector<double>& mu, double p);
inline double dual_exponent(double p) { return p / (p - 1); }

struct Witness {
  std::string id;
  Vec f;
};

struct WitnessOptions {
  bool deltas = true;  // delta columns at spread_sources
  bool ramps = true;   // b-profile of every end, dualised to p'
  bool bumps = true;   // smooth bump at R/4 on every end
  int random_fields = 2;
  uint64_t seed = 20240601;
  double envelope_rate = 0;  // c in 1 - exp(-c k0 d); 0 = fitted
};

// Inputs that do not depend on p, then the p-dependent ramp duals.
std::vector<Witness> base_witnesses(const RieszOperator& T, const WitnessOptions& opt = {});
std::vector<Witness> ramp_witnesses(const RieszOperator& T, double p, const WitnessOptions& opt = {});
std::vector<Witness> witness_family(const RieszOperator& T, double p, const WitnessOptions& opt = {});

struct NormReport {
  double p = 2;
  double value = 0;  // max ||Tf||_p / ||f||_p over the family
  std::string witness_id;
  Vec witness;  // the maximising f
  int R = 0;
  double slope = std::numeric_limits<double>::quiet_NaN();  // growth in log R, set by scaling fits
  double band_lo = 0.05, band_hi = 0.1;
  std::vector<std::pair<std::string, double>> ratios;  // every witness
};

NormReport lp_lower_bound(const RieszOperator& T, double p, const std::vector<Witness>& family);
// One application per witness shared over all exponents.
std::vector<NormReport> lp_lower_bounds(const RieszOperator& T, const std::vector<double>& ps,
                                        const WitnessOptions& opt = {});

// sup_lambda lambda mu{|g| > lambda}
double weak11_functional(const Vec& g, const std::vector<double>& mu);

struct Weak11Report {
  std::vector<int> sources;
  std::vector<double> values;  // functional of |T delta_y| / mu(y)
  double max = 0;
};
Weak11Report weak11_test(const RieszOperator& T, const std::vector<int>& sources);

// Ramp profile b(z') = <d>^{-(n_i-1)} (1 - exp(-c k0 d)) phi_i(z'), d the end radius.
Vec ramp_profile(const ModelManifold& M, int i, double k0, double c);
double envelope_rate(const EndSpec& end);
// Harmonic profile from scratch (no fragments): phi_i + Delta_D^{-1} v_i.
Vec harmonic_profile(const ModelManifold& M, int i, double tol = 1e-12);
// Smooth bump cos^2 of radius rho centred at x = (c, 0, ...) on end j.
Vec end_bump(const ModelManifold& M, int j, double c, double rho);

struct UnboundednessReport {
  int i = 1, j = 1;
  double p = 2;
  double a_norm = 0;             // ||a||_p
  double a_normalised = 0;       // ||a||_p / ||tau||_p
  double b_dual_norm = 0;        // ||b||_{p'}
  double product = 0;            // ||a||_p ||b||_{p'}
  double rank_one_ratio = 0;     // ||a <b, f>||_p / ||f||_p for the dual input
  double realized_ratio = 0;     // ||Tf||_p / ||f||_p
  double realized_on_tau = 0;    // same with |Tf| restricted to supp tau
  double realized_off_end = 0;   // same with |Tf| restricted to the ends other than i
  bool vanishes = false;         // grad Phi_i numerically zero on supp tau
  Vec a, b, f, tau;
};

// a = tau |grad Phi_i| with tau a bump at R/4 on end j (j = 0: the first end
// other than i, or i itself on a single end), b the ramp profile of end i.
UnboundednessReport unboundedness_witness(const RieszOperator& T, int i, double p, int j = 0);

struct TermDiagnostics {
  double k0 = 1;
  std::vector<double> nodes, weights;  // k-grid of the low-energy integral
  // G1 = sum phi_i R_i phi_i, split at d(z, z') <= 1
  std::vector<DecayFit> G1_far;      // per end: z-slope of |grad int R_i(., z')|
  std::vector<double> G1_near_mass;  // l1 mass of the truncated near part
  double G2_mass = 0;                // l1 mass of int G_int(., z') over the cap
  // G3 per source end i and per end of z: z-slope of |grad int G3(., z')|
  std::vector<std::vector<DecayFit>> G3_left;
  std::vector<DecayFit> GS_right;    // per end j: z'-slope of int |GS(z0, .)| dk
  int G4_rank = 0, null_basis = 0;
};

TermDiagnostics term_diagnostics(const ParametrixModel& P, double k0, double dmin, double dmax, int gl_order = 4);

struct HighEnergyReport {
  double k0 = 1;
  std::vector<int> sources;
  std::vector<double> rs;
  std::vector<std::vector<double>> annulus_mass;  // [source][r]: sum over r <= d < 2r of |grad G''_r|^2
  std::vector<double> rate;                       // per source: -slope of log mass against r
  std::vector<double> column_l1;                  // per source: sum_x |grad G''_{r*}|(x)
  std::vector<double> row_l1;                     // per source: sum_y |G''_{r*}(x, y)| by transposition
  double symmetry_defect = 0;                     // max |G''(x, y) - G''(y, x)| / max |G''|
  std::vector<double> cone_leakage;               // per source: G' l1 mass outside d <= 1.3 r_cone
  double r_cone = 6;
};

// Routed Euclidean distance between two vertices: end radius on a common end
// (or through the junction), sum of end radii across ends.
double routed_distance(const ModelManifold& M, int y, int v);

HighEnergyReport high_energy_schur_test(const ModelManifold& M, double k0, const std::vector<int>& sources,
                                        const std::vector<double>& rs = {2, 4, 8}, double r_star = 4,
                                        double r_cone = 6);

std::string classify_slope(double slope, double lo = 0.05, double hi = 0.1);

struct ScalingModel {
  std::string id;
  std::vector<EndSpec> ends;  // R is overridden per cell
};

struct ScalingRow {
  std::string model_id;
  double p = 2;
  int R = 0;
  double lower_bound = 0;
  std::string witness_id;
  double slope = 0;
  std::string classification;
  double triple_log = 0;  // slope of log value against log log R
  bool complete = true;
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
  bool complete = true;
};

struct ScalingOptions {
  WitnessOptions witnesses;
  double k0 = 1.0;
  int64_t max_vertices = 4000000;  // cells above this are skipped and flagged
  int jobs = 1;
};

ScalingTable scaling_study(const std::vector<ScalingModel>& models, const std::vector<double>& ps,
                           const std::vector<int>& Rs, const ScalingOptions& opt = {});
std::string scaling_csv(const ScalingTable& t);

}  // namespace rieszlab
