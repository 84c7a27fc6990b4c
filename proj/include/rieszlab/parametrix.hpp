#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rieszlab/fragment.hpp"
#include "rieszlab/geometry.hpp"
#include "rieszlab/spectral.hpp"

namespace rieszlab {

struct DecayFit {
  double slope = 0;
  double intercept = 0;  // log C
  int points = 0;
};

// Least squares of log(max |f| per unit radial bin) against log d over
// d in [dmin, dmax]; d is the radial distance from the base point of `end`,
// restricted to vertices of end `on_end` (same end by default) at graph
// distance >= min_graph from the hub of `on_end`.
DecayFit fit_decay(const ModelManifold& M, int end, const Vec& f, double dmin, double dmax, int on_end = 0,
                   double min_graph = 0);
DecayFit fit_loglog(const std::vector<double>& d, const std::vector<double>& y);

// Geometric grid, points_per_decade points per decade from lo to hi inclusive.
std::vector<double> geometric_grid(double lo, double hi, int points_per_decade = 16);

struct LemmaUVSolution {
  Vec v;
  std::vector<double> ks;
  std::vector<Vec> u;     // u(., k) per grid point
  std::vector<Vec> grad;  // |grad u(., k)| pointwise
  std::vector<double> residual;  // ||(Delta+k^2)u - v|| / ||v||
  std::vector<DecayFit> u_fit, grad_fit;  // k = ks[0], per end
  // sup_z |u(k) - u(k_ref)| / |k - k_ref| against the smallest grid point
  std::vector<double> lipschitz_u, lipschitz_grad;
};

LemmaUVSolution solve_lemma_uv(const ModelManifold& M, const Vec& v, const std::vector<double>& ks,
                               double tol = 1e-11);

struct ParametrixConfig {
  double r0 = 1.0, r1 = 2.0;  // collar of phi_i, graph distance from the hub
  int cap_width = 2;          // layers of each end kept beyond the collar in the cap graph
  double solve_tol = 1e-12;
  double tol_rank = 1e-6;
  double sv_threshold = 0.5;
};

// Everything about the construction that does not depend on k: cutoffs,
// v_i = -Delta phi_i, the fragments, the cap C = {sum phi_i = 0}, the cap graph
// C' used for G_int, and the row support chi of E.
class ParametrixModel {
 public:
  explicit ParametrixModel(const ModelManifold& M, ParametrixConfig cfg = {});

  const ModelManifold& manifold() const { return M_; }
  const SparseOperator& laplacian() const { return D_; }
  const ParametrixConfig& config() const { return cfg_; }
  int num_ends() const { return M_.num_ends(); }

  const Vec& phi(int i) const { return phi_[i - 1]; }
  const Vec& v(int i) const { return v_[i - 1]; }
  const FragmentOperator& fragment(int i) const { return *frag_[i - 1]; }
  int fragment_vertex(int i, int z) const;  // -1 if z is not on end i
  int fragment_origin(int i) const { return origin_[i - 1]; }

  const std::vector<int>& cap() const { return cap_; }
  const std::vector<int>& cap_graph() const { return capg_; }
  const std::vector<int>& chi() const { return chi_; }
  bool in_cap(int z) const { return cap_pos_[z] >= 0; }
  int chi_index(int z) const { return chi_pos_[z]; }

  // u_i(., k) for every end, cached per k. A batch call shares one Krylov run.
  void precompute_u(const std::vector<double>& ks) const;
  const std::vector<Vec>& u(double k) const;

  // Fragment-side data of E on end i: vertices X (fragment ids, shell, first
  // layer and origin) and the sparse map Dx: chi_i <- X with
  // E(z, z') = sum_x Dx(z, x) R_i(x, z') for every z' with phi_i(z') = 1.
  const std::vector<int>& X(int i) const { return X_[i - 1]; }
  const Eigen::SparseMatrix<double>& Dx(int i) const { return Dx_[i - 1]; }
  // fragment vertices with phi = 0 inside the fragment (|x|_inf <= 2)
  const std::vector<int>& near_set(int i) const { return N_[i - 1]; }

 private:
  const ModelManifold& M_;
  ParametrixConfig cfg_;
  SparseOperator D_;
  std::vector<Vec> phi_, v_;
  std::vector<std::unique_ptr<FragmentOperator>> frag_;
  std::vector<int> origin_;
  std::vector<int> cap_, capg_, chi_;
  std::vector<int> cap_pos_, chi_pos_;
  std::vector<std::vector<int>> X_, N_;
  std::vector<Eigen::SparseMatrix<double>> Dx_;
  mutable std::map<double, std::vector<Vec>> u_cache_;
};

// Interior parametrix 1_C (Delta_{C'} + k^2)^{-1} 1_C, with Delta_{C'} the
// Dirichlet Laplacian of the cap graph (junction plus the first layers of
// every end).
class InteriorParametrix {
 public:
  InteriorParametrix(const ParametrixModel& P, double k);
  Vec apply(const Vec& f) const;  // full vertex space in and out
  Vec cap_graph_solve(const Vec& f) const;  // (Delta_{C'}+k^2)^{-1}, not truncated
  double k() const { return k_; }

 private:
  const ParametrixModel& P_;
  double k_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

InteriorParametrix interior_parametrix(const ParametrixModel& P, double k);

struct FiniteRankCorrection {
  std::vector<Vec> omega;  // on chi
  std::vector<Vec> rho;    // on the full vertex space, supported inside chi
  std::vector<Vec> target;  // (Delta rho_j) restricted to chi
  double sigma_before = 0, sigma_after = 0;
  bool empty() const { return omega.empty(); }
};

class ParametrixBundle {
 public:
  ParametrixBundle(const ParametrixModel& P, double k);

  double k() const { return k_; }
  const ParametrixModel& model() const { return P_; }

  // G1, G2, G3, G4 applied to f (full vertex space).
  std::array<Vec, 4> apply_parts(const Vec& f) const;
  Vec apply_G(const Vec& f) const;

  // E(chi, z') for the given right points, from the closed forms.
  Eigen::MatrixXd E_columns(const std::vector<int>& cols) const;
  const Eigen::MatrixXd& E_block() const { return Echi_; }  // E(chi, chi)
  // (Delta + k^2) G delta_y - delta_y on the full space, by direct application.
  Vec E_direct_column(int y) const;

  Eigen::MatrixXd S_columns(const std::vector<int>& cols) const;  // S(chi, z')
  Vec resolvent_column(int y) const;  // (G + G S) delta_y
  Vec GS_column(int y) const;
  // G(z, w) for w in chi, one row per z
  Eigen::MatrixXd G_rows(const std::vector<int>& zs) const;

  double sigma_min() const;  // of Id + E on the chi block
  double hs_norm_E() const;
  double hs_norm_S() const;
  const Eigen::MatrixXd& gram() const;  // Gamma = E(chi, .) E(chi, .)^T

  void set_correction(FiniteRankCorrection c);
  const FiniteRankCorrection& correction() const { return corr_; }

  const Eigen::MatrixXd& Rxx(int i) const { return Rxx_[i - 1]; }  // R_i(X, X)
  const Eigen::MatrixXd& block() const { return A_; }
  const Eigen::MatrixXd& E_near() const { return Enear_; }  // E(chi, C)

 private:
  const ParametrixModel& P_;
  double k_;
  InteriorParametrix Gint_;
  std::vector<Vec> Ro_;  // R_i(., o_i) on the fragment
  std::vector<Eigen::MatrixXd> Rxx_;
  mutable std::vector<Eigen::MatrixXd> R2xx_, Rxn_;
  Eigen::MatrixXd Enear_;  // chi x cap
  Eigen::MatrixXd Gcc_;    // G_int on cap x cap
  Eigen::MatrixXd Echi_;   // chi x chi
  Eigen::MatrixXd A_;      // Id + E(chi, chi) + corrections
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  FiniteRankCorrection corr_;
  mutable Eigen::MatrixXd gram_;
};

ParametrixBundle assemble_parametrix(const ParametrixModel& P, double k);

// Full-space error column (E(z, y))_z from the closed forms (for checks).
Vec error_term(const ParametrixBundle& B, int y);

// ||E(k) - E(k')||_HS from cached entries of both bundles.
double hs_distance_E(const ParametrixBundle& a, const ParametrixBundle& b);

// Smallest singular value of a square matrix via LU and Lanczos on (A A^T)^{-1}.
double smallest_singular_value(const Eigen::MatrixXd& A);

// SVD-based null basis of A = Id + E(0) on the chi block and least-squares
// rho_j supported on the interior of chi with Delta rho_j ~ left null vectors.
FiniteRankCorrection finite_rank_correction(const ParametrixModel& P, const Eigen::MatrixXd& A, double tol_rank,
                                            int rank_cap = 8);

// S(chi, cols) = -(Id + E_chichi + corrections)^{-1} E(chi, cols).
Eigen::MatrixXd invert_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Ecols);

struct DecompositionReport {
  double k = 0;
  std::vector<int> probes;
  std::vector<double> relerr;       // ||(Delta+k^2)(G+GS)delta_y - delta_y||
  std::vector<double> direct_diff;  // ||(G+GS)delta_y - resolvent_solve|| / ||resolvent_solve||
  double max_relerr = 0, max_direct_diff = 0;
  double hs_norm_E = 0, hs_norm_S = 0, sigma_min = 0;
};

DecompositionReport verify_resolvent_decomposition(const ParametrixBundle& B, const std::vector<int>& probes);

// Probe vertices spread over all ends and the junction, deterministic.
std::vector<int> parametrix_probes(const ModelManifold& M, int count);

struct K0Choice {
  double k0 = 0;
  std::vector<double> grid;
  std::vector<double> sigma;  // at the grid points
  int bisections = 0;
};

// Largest k0 <= k_max such that sigma(k) >= threshold on every grid point
// below it, refined by bisection between the last admissible and the first
// failing grid point.
K0Choice choose_k0(const std::function<double(double)>& sigma, const std::vector<double>& grid, double threshold,
                   int bisections = 6);
K0Choice choose_k0(const ParametrixModel& P, const std::vector<double>& grid, int bisections = 6);

// Harmonic profile Phi_i = phi_i + u_i(., 0).
Vec harmonic_profile(const ParametrixModel& P, int i);

struct WeightFits {
  std::vector<DecayFit> E_right;    // per end j: sum_z |E(0)(z, z')| against d(z_j, z')
  std::vector<DecayFit> GS_left;    // per end i: max over probes |GS(z, y)| against d(z_i, z)
  std::vector<DecayFit> GS_right;   // per end j: |GS(z0, z')| against d(z_j, z')
  std::vector<DecayFit> gradGS_left;
  std::vector<double> G3_over_GS;  // per end j: min ratio |G3|/|GS| over the outer half of the fit range
};

// Decay exponents of E, GS and grad GS along rays of every end over d in [dmin, dmax].
WeightFits weight_fits(const ParametrixBundle& B, double dmin, double dmax);

}  // namespace rieszlab
