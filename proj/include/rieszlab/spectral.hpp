#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rieszlab/geometry.hpp"

namespace rieszlab {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Boundary { dirichlet, free };

// Weighted graph Laplacian, Delta f(z) = mu(z)^{-1} h^{-2} sum_y w(z,y) (f(z) - f(y)).
// The Dirichlet variant keeps the full index space but acts as zero on boundary
// rows and columns; interior rows keep their full degree.
struct SparseOperator {
  int dim = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;
  bool symmetric = true;
  Boundary boundary = Boundary::dirichlet;
  const ModelManifold* manifold = nullptr;
  std::vector<uint8_t> active;  // rows/columns the operator acts on
  double upper_bound = 0;       // Gershgorin bound on the spectrum

  Vec apply(const Vec& f) const;
  Vec restrict(Vec f) const;  // zero outside the active set
};

SparseOperator laplacian(const ModelManifold& M, Boundary bc = Boundary::dirichlet);

// f -> (f(head) - f(tail)) sqrt(w) / h on every oriented edge carrying the form.
struct EdgeOperator {
  int dim = 0;
  std::vector<int> tail, head;
  std::vector<double> scale;
  std::vector<uint8_t> active;  // vertex values outside are read as zero

  int num_edges() const { return int(tail.size()); }
  Vec apply(const Vec& f) const;
  Vec adjoint(const Vec& g) const;
  // |grad g|(z) = sqrt(1/2 sum of squared edge values at z), so sum_z |grad g|^2 = ||g||^2
  Vec pointwise_norm(const Vec& g) const;
};

EdgeOperator gradient(const ModelManifold& M, Boundary bc = Boundary::dirichlet);

struct SolveStats {
  int iterations = 0;
  double residual = 0;  // relative
};

// Conjugate gradients for (Delta + shift) x = f on the active set.
Vec cg_solve(const SparseOperator& D, double shift, const Vec& f, double tol, const Vec* x0 = nullptr,
             SolveStats* stats = nullptr, int max_iter = 20000);
Vec resolvent_solve(const SparseOperator& D, double k, const Vec& f, double tol = 1e-9, const Vec* warm = nullptr,
                    SolveStats* stats = nullptr);

// out[c] = sum_s W(c, s) (Delta + shifts[s])^{-1} f. Two passes: the first builds
// the tridiagonal matrix until every shifted residual is below tol, the second
// regenerates the Krylov vectors and accumulates the combinations.
std::vector<Vec> multishift_solve(const SparseOperator& D, const Vec& f, const std::vector<double>& shifts,
                                  const Eigen::MatrixXd& W, double tol = 1e-10, SolveStats* stats = nullptr,
                                  int max_iter = 20000);

// g(Delta) f by Lanczos, converged when successive coefficient vectors agree to tol.
Vec lanczos_function_apply(const SparseOperator& D, const Vec& f, const std::function<double(double)>& g,
                           double tol = 1e-10, int max_iter = 4000);

struct SpectralInterval {
  double lo = 0, hi = 0;  // Ritz extremes, before any safety margin
};
SpectralInterval estimate_spectrum(const SparseOperator& D, int max_steps = 400, double tol = 1e-3);

struct ChebyshevSeries {
  double lo = 0, hi = 1;
  std::vector<double> c;  // g(x) = sum c_k T_k(y), y = (2x - lo - hi)/(hi - lo)
  double eval(double x) const;
  int degree() const { return int(c.size()) - 1; }
};

ChebyshevSeries chebyshev_fit(const std::function<double(double)>& g, double lo, double hi, double tol = 1e-11,
                              int max_degree = 1 << 15);
Vec chebyshev_apply(const SparseOperator& D, const ChebyshevSeries& s, const Vec& f);

Vec heat_apply(const SparseOperator& D, double t, const Vec& f, double tol = 1e-12);

// Low/high energy split of lambda^{-1}.
double F_less(double lambda, double k0);
double F_greater(double lambda, double k0);
// F_>(sqrt x), analytic in x > -k0^2
double F_greater_sq(double x, double k0);

enum class MultiplierKind { low, high, full };

struct MultiplierSpec {
  double k0 = 0.5;
  MultiplierKind which = MultiplierKind::full;
  int gl_order = 8;           // Gauss-Legendre points per panel
  int panels_per_octave = 1;  // geometric panels on (0, k0]
  double tol = 1e-11;         // shifted-solve and Chebyshev tolerance
};

// F_<(lambda) ~ sum_j w_j / (lambda^2 + k_j^2) for lambda >= lambda_min.
struct LowEnergyQuadrature {
  std::vector<double> nodes, weights;
};
LowEnergyQuadrature low_energy_quadrature(double k0, double lambda_min, int gl_order = 8, int panels_per_octave = 1);

class MultiplierOperator {
 public:
  MultiplierOperator(const SparseOperator& D, MultiplierSpec spec);
  Vec apply(const Vec& f) const;
  Vec apply_low(const Vec& f) const;
  Vec apply_high(const Vec& f) const;
  const SpectralInterval& interval() const { return interval_; }
  const ChebyshevSeries& high_series() const { return high_; }
  const LowEnergyQuadrature& quadrature() const { return quad_; }
  const MultiplierSpec& spec() const { return spec_; }

 private:
  const SparseOperator* D_;
  MultiplierSpec spec_;
  SpectralInterval interval_;
  LowEnergyQuadrature quad_;
  ChebyshevSeries high_;
};

Vec multiplier_apply(const SparseOperator& D, const MultiplierSpec& spec, const Vec& f);

// Dense eigendecomposition of the active block; small instances only.
struct DenseSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  std::vector<int> index;  // active vertex of each row
  int dim = 0;
};
DenseSpectrum dense_spectrum(const SparseOperator& D, int max_dim = 6000);
Vec dense_function_apply(const DenseSpectrum& S, const std::function<double(double)>& g, const Vec& f);

struct ColumnNormReport {
  std::vector<int> sources;
  std::vector<double> values;
  double max = 0;
};

// ||G(sqrt(Delta)/a)||_{1->1} sampled over delta columns; G(lambda) = pi/2 - arctan(lambda) by default.
ColumnNormReport multiplier_L1_norm_test(const SparseOperator& D, double a, const std::vector<int>& sources,
                                         const std::function<double(double)>& G = {});
// ||(1+Delta)^{-k}||_{2->inf} sampled over delta columns.
ColumnNormReport sobolev_embedding_test(const SparseOperator& D, int k, const std::vector<int>& sources);
inline int sobolev_order(int N) { return N / 4 + 1; }

// Sources spread over the junction and every end, at a fraction of each end's radius.
std::vector<int> spread_sources(const ModelManifold& M, const std::vector<double>& fractions = {0.0, 0.25, 0.5});

// Cutoff in the time variable: 1 on |x| <= plateau, raised cosine down to 0 at |x| = 1.
double wave_bump(double x, double plateau = 0.9);

// G'_r(sqrt x) = (2/pi) int_0^r E1(k0 t) s(t/r) cos(t sqrt x) dt, and G''_r = F_> - G'_r.
class WaveSplit {
 public:
  WaveSplit(const SparseOperator& D, double r, double k0, double plateau = 0.9, double tol = 1e-11);
  std::pair<Vec, Vec> apply(const Vec& f) const;
  double near_symbol(double lambda) const { return near_.eval(lambda * lambda); }
  double far_symbol(double lambda) const { return far_.eval(lambda * lambda); }
  const ChebyshevSeries& near_series() const { return near_; }
  const ChebyshevSeries& far_series() const { return far_; }

 private:
  const SparseOperator* D_;
  double r_, k0_, plateau_;
  ChebyshevSeries near_, far_;
};

double wave_near_symbol(double lambda, double r, double k0, double plateau = 0.9);

std::pair<Vec, Vec> wave_splitting(const SparseOperator& D, double r, double k0, const Vec& f);

}  // namespace rieszlab
