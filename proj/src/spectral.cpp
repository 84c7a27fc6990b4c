#include "rieszlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "rieszlab/special_fn.hpp"

namespace rieszlab {

namespace {

constexpr double pi = std::numbers::pi;

double dot(const Vec& a, const Vec& b) { return a.dot(b); }

// Solve (T + sigma) y = e1 for the symmetric tridiagonal T given by alpha, beta.
std::vector<double> tridiag_solve_e1(const std::vector<double>& alpha, const std::vector<double>& beta, int m,
                                     double sigma) {
  std::vector<double> c(m), d(m), y(m);
  double b0 = alpha[0] + sigma;
  c[0] = m > 1 ? beta[0] / b0 : 0.0;
  d[0] = 1.0 / b0;
  for (int j = 1; j < m; ++j) {
    const double den = alpha[j] + sigma - beta[j - 1] * c[j - 1];
    c[j] = j + 1 < m ? beta[j] / den : 0.0;
    d[j] = (0.0 - beta[j - 1] * d[j - 1]) / den;
  }
  y[m - 1] = d[m - 1];
  for (int j = m - 2; j >= 0; --j) y[j] = d[j] - c[j] * y[j + 1];
  return y;
}

// One Lanczos recurrence, replayable bit for bit.
struct LanczosRun {
  const SparseOperator& D;
  Vec v_prev, v, w;
  double beta_prev = 0;

  LanczosRun(const SparseOperator& op, const Vec& start) : D(op), v_prev(Vec::Zero(start.size())), v(start) {}

  // advance one step, returns (alpha_j, beta_j); v becomes v_{j+1}
  std::pair<double, double> step() {
    w = D.apply(v);
    if (beta_prev != 0) w -= beta_prev * v_prev;
    const double alpha = dot(v, w);
    w -= alpha * v;
    const double beta = w.norm();
    v_prev.swap(v);
    if (beta > 0) v = w / beta;
    else v.setZero();
    beta_prev = beta;
    return {alpha, beta};
  }
};

Eigen::VectorXd tridiag_function_e1(const std::vector<double>& alpha, const std::vector<double>& beta, int m,
                                    const std::function<double(double)>& g) {
  Eigen::VectorXd diag(m), sub(std::max(m - 1, 1));
  for (int j = 0; j < m; ++j) diag[j] = alpha[j];
  for (int j = 0; j + 1 < m; ++j) sub[j] = beta[j];
  if (m == 1) return Eigen::VectorXd::Constant(1, g(alpha[0]));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(m - 1), Eigen::ComputeEigenvectors);
  Eigen::VectorXd gv(m);
  for (int j = 0; j < m; ++j) gv[j] = g(std::max(es.eigenvalues()[j], 0.0));
  const Eigen::MatrixXd& Q = es.eigenvectors();
  return Q * gv.cwiseProduct(Q.row(0).transpose());
}

// Gauss-Legendre nodes and weights on [-1, 1] via the Jacobi matrix.
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int order) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order), sub(std::max(order - 1, 1));
  for (int j = 1; j < order; ++j) sub[j - 1] = j / std::sqrt(4.0 * j * j - 1.0);
  std::vector<double> x(order), w(order);
  if (order == 1) return {{0.0}, {2.0}};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(order - 1), Eigen::ComputeEigenvectors);
  for (int j = 0; j < order; ++j) {
    x[j] = es.eigenvalues()[j];
    w[j] = 2.0 * es.eigenvectors()(0, j) * es.eigenvectors()(0, j);
  }
  return {x, w};
}

Vec deterministic_start(const SparseOperator& D) {
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec f(D.dim);
  for (int i = 0; i < D.dim; ++i) f[i] = u(rng);
  return D.restrict(f);
}

}  // namespace

Vec SparseOperator::apply(const Vec& f) const { return A * f; }

Vec SparseOperator::restrict(Vec f) const {
  for (int i = 0; i < dim; ++i)
    if (!active[i]) f[i] = 0.0;
  return f;
}

SparseOperator laplacian(const ModelManifold& M, Boundary bc) {
  SparseOperator D;
  D.dim = M.num_vertices;
  D.boundary = bc;
  D.manifold = &M;
  D.active.assign(D.dim, 1);
  if (bc == Boundary::dirichlet)
    for (int v = 0; v < D.dim; ++v) D.active[v] = !M.boundary[v];
  const double ih2 = 1.0 / (M.h * M.h);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(M.col.size() + D.dim);
  double bound = 0;
  for (int v = 0; v < D.dim; ++v) {
    if (!D.active[v]) continue;
    double diag = 0, off = 0;
    for (auto e = M.row_ptr[v]; e < M.row_ptr[v + 1]; ++e) {
      const int u = M.col[e];
      const double w = M.weight[e] * ih2 / M.mu[v];
      diag += w;
      if (D.active[u]) {
        trip.emplace_back(v, u, -w);
        off += w;
      }
    }
    trip.emplace_back(v, v, diag);
    bound = std::max(bound, diag + off);
  }
  D.A.resize(D.dim, D.dim);
  D.A.setFromTriplets(trip.begin(), trip.end());
  D.A.makeCompressed();
  D.upper_bound = bound;
  return D;
}

Vec EdgeOperator::apply(const Vec& f) const {
  Vec g(num_edges());
  for (int e = 0; e < num_edges(); ++e) {
    const double fh = active[head[e]] ? f[head[e]] : 0.0;
    const double ft = active[tail[e]] ? f[tail[e]] : 0.0;
    g[e] = scale[e] * (fh - ft);
  }
  return g;
}

Vec EdgeOperator::adjoint(const Vec& g) const {
  Vec f = Vec::Zero(dim);
  for (int e = 0; e < num_edges(); ++e) {
    f[head[e]] += scale[e] * g[e];
    f[tail[e]] -= scale[e] * g[e];
  }
  for (int v = 0; v < dim; ++v)
    if (!active[v]) f[v] = 0.0;
  return f;
}

Vec EdgeOperator::pointwise_norm(const Vec& g) const {
  Vec s = Vec::Zero(dim);
  for (int e = 0; e < num_edges(); ++e) {
    s[head[e]] += g[e] * g[e];
    s[tail[e]] += g[e] * g[e];
  }
  return (0.5 * s).cwiseSqrt();
}

EdgeOperator gradient(const ModelManifold& M, Boundary bc) {
  EdgeOperator G;
  G.dim = M.num_vertices;
  G.active.assign(G.dim, 1);
  if (bc == Boundary::dirichlet)
    for (int v = 0; v < G.dim; ++v) G.active[v] = !M.boundary[v];
  for (int v = 0; v < G.dim; ++v)
    for (auto e = M.row_ptr[v]; e < M.row_ptr[v + 1]; ++e) {
      const int u = M.col[e];
      if (u <= v) continue;
      if (!G.active[u] && !G.active[v]) continue;
      G.tail.push_back(v);
      G.head.push_back(u);
      G.scale.push_back(std::sqrt(M.weight[e]) / M.h);
    }
  return G;
}

Vec cg_solve(const SparseOperator& D, double shift, const Vec& f_in, double tol, const Vec* x0, SolveStats* stats,
             int max_iter) {
  const Vec f = D.restrict(f_in);
  const double fn = f.norm();
  Vec x = x0 ? D.restrict(*x0) : Vec::Zero(D.dim);
  if (fn == 0) {
    if (stats) *stats = {0, 0.0};
    return Vec::Zero(D.dim);
  }
  Vec r = f - D.apply(x) - shift * x;
  Vec p = r, q;
  double rr = r.squaredNorm();
  int it = 0;
  while (std::sqrt(rr) > tol * fn) {
    if (it >= max_iter) throw SolverError("conjugate gradients did not converge");
    q = D.apply(p) + shift * p;
    const double a = rr / p.dot(q);
    x += a * p;
    r -= a * q;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++it;
  }
  if (stats) *stats = {it, std::sqrt(rr) / fn};
  return x;
}

Vec resolvent_solve(const SparseOperator& D, double k, const Vec& f, double tol, const Vec* warm, SolveStats* stats) {
  if (k < 0) throw std::invalid_argument("resolvent_solve: k < 0");
  if (k == 0 && D.boundary == Boundary::free) throw std::invalid_argument("resolvent_solve: k = 0 needs Dirichlet");
  return cg_solve(D, k * k, f, tol, warm, stats);
}

std::vector<Vec> multishift_solve(const SparseOperator& D, const Vec& f_in, const std::vector<double>& shifts,
                                  const Eigen::MatrixXd& W, double tol, SolveStats* stats, int max_iter) {
  const int ns = int(shifts.size());
  if (W.cols() != ns) throw std::invalid_argument("multishift_solve: weight matrix shape");
  const Vec f = D.restrict(f_in);
  const double fn = f.norm();
  std::vector<Vec> out(W.rows(), Vec::Zero(D.dim));
  if (fn == 0 || ns == 0) return out;
  for (double s : shifts)
    if (s <= 0 && D.boundary == Boundary::free) throw std::invalid_argument("multishift_solve: singular shift");

  std::vector<double> alpha, beta;
  LanczosRun run(D, f / fn);
  int m = 0;
  double worst = 0;
  for (;;) {
    auto [a, b] = run.step();
    alpha.push_back(a);
    beta.push_back(b);
    ++m;
    const bool breakdown = b <= 1e-14 * std::abs(a);
    if (m % 8 == 0 || breakdown || m >= max_iter) {
      worst = 0;
      for (int s = 0; s < ns; ++s) {
        auto y = tridiag_solve_e1(alpha, beta, m, shifts[s]);
        worst = std::max(worst, b * std::abs(y[m - 1]));
      }
      if (worst <= tol || breakdown) break;
      if (m >= max_iter) throw SolverError("multishift Lanczos did not converge");
    }
  }

  Eigen::MatrixXd Y(ns, m);
  for (int s = 0; s < ns; ++s) {
    auto y = tridiag_solve_e1(alpha, beta, m, shifts[s]);
    for (int j = 0; j < m; ++j) Y(s, j) = fn * y[j];
  }
  const Eigen::MatrixXd C = W * Y;
  LanczosRun replay(D, f / fn);
  for (int j = 0; j < m; ++j) {
    for (int c = 0; c < C.rows(); ++c) out[c] += C(c, j) * replay.v;
    if (j + 1 < m) replay.step();
  }
  if (stats) *stats = {m, worst};
  return out;
}

Vec lanczos_function_apply(const SparseOperator& D, const Vec& f_in, const std::function<double(double)>& g,
                           double tol, int max_iter) {
  const Vec f = D.restrict(f_in);
  const double fn = f.norm();
  if (fn == 0) return Vec::Zero(D.dim);
  std::vector<double> alpha, beta;
  LanczosRun run(D, f / fn);
  Eigen::VectorXd prev;
  int m = 0;
  Eigen::VectorXd coef;
  for (;;) {
    auto [a, b] = run.step();
    alpha.push_back(a);
    beta.push_back(b);
    ++m;
    const bool breakdown = b <= 1e-14 * std::abs(a);
    if (m % 16 == 0 || breakdown || m >= max_iter) {
      coef = tridiag_function_e1(alpha, beta, m, g);
      if (breakdown) break;
      if (prev.size() > 0) {
        Eigen::VectorXd pad = Eigen::VectorXd::Zero(m);
        pad.head(prev.size()) = prev;
        if ((coef - pad).norm() <= tol * coef.norm()) break;
      }
      if (m >= max_iter) throw SolverError("Lanczos function evaluation did not converge");
      prev = coef;
    }
  }
  Vec out = Vec::Zero(D.dim);
  LanczosRun replay(D, f / fn);
  for (int j = 0; j < m; ++j) {
    out += (fn * coef[j]) * replay.v;
    if (j + 1 < m) replay.step();
  }
  return out;
}

SpectralInterval estimate_spectrum(const SparseOperator& D, int max_steps, double tol) {
  Vec f = deterministic_start(D);
  f /= f.norm();
  std::vector<double> alpha, beta;
  LanczosRun run(D, f);
  SpectralInterval I;
  for (int m = 1; m <= max_steps; ++m) {
    auto [a, b] = run.step();
    alpha.push_back(a);
    beta.push_back(b);
    if (m % 10 != 0 && m != max_steps && b > 1e-14 * std::abs(a)) continue;
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1)) : Eigen::VectorXd(1);
    if (m == 1) {
      I = {a, a};
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const double lo = es.eigenvalues()[0], hi = es.eigenvalues()[m - 1];
    const double rlo = std::abs(b * es.eigenvectors()(m - 1, 0));
    const double rhi = std::abs(b * es.eigenvectors()(m - 1, m - 1));
    I = {lo, hi};
    if ((rlo <= tol * lo && rhi <= tol * hi) || b <= 1e-14 * std::abs(a)) break;
  }
  return I;
}

double ChebyshevSeries::eval(double x) const {
  const double y = (2 * x - lo - hi) / (hi - lo);
  double b1 = 0, b2 = 0;
  for (int k = int(c.size()) - 1; k >= 1; --k) {
    const double b0 = 2 * y * b1 - b2 + c[k];
    b2 = b1;
    b1 = b0;
  }
  return y * b1 - b2 + (c.empty() ? 0.0 : c[0]);
}

ChebyshevSeries chebyshev_fit(const std::function<double(double)>& g, double lo, double hi, double tol,
                              int max_degree) {
  if (!(hi > lo)) throw std::invalid_argument("chebyshev_fit: empty interval");
  ChebyshevSeries s;
  s.lo = lo;
  s.hi = hi;
  for (int N = 32;; N *= 2) {
    std::vector<double> gv(N), table(4 * N);
    for (int j = 0; j < N; ++j) {
      const double y = std::cos(pi * (j + 0.5) / N);
      gv[j] = g(0.5 * (lo + hi) + 0.5 * (hi - lo) * y);
    }
    for (int q = 0; q < 4 * N; ++q) table[q] = std::cos(pi * q / (2.0 * N));
    std::vector<double> c(N);
    for (int k = 0; k < N; ++k) {
      double acc = 0;
      for (int j = 0; j < N; ++j) acc += gv[j] * table[(static_cast<int64_t>(k) * (2 * j + 1)) % (4 * N)];
      c[k] = (k == 0 ? 1.0 : 2.0) * acc / N;
    }
    double scale = 0;
    for (double v : c) scale = std::max(scale, std::abs(v));
    double tail = 0;
    for (int k = N - N / 8; k < N; ++k) tail = std::max(tail, std::abs(c[k]));
    if (tail <= tol * scale || N >= max_degree) {
      if (tail > tol * scale) throw SolverError("chebyshev_fit: degree cap reached");
      int last = N - 1;
      while (last > 0 && std::abs(c[last]) <= 0.01 * tol * scale) --last;
      c.resize(last + 1);
      s.c = std::move(c);
      return s;
    }
  }
}

Vec chebyshev_apply(const SparseOperator& D, const ChebyshevSeries& s, const Vec& f_in) {
  const Vec f = D.restrict(f_in);
  const double a = 2.0 / (s.hi - s.lo), b = -(s.hi + s.lo) / (s.hi - s.lo);
  auto Y = [&](const Vec& x) { return D.restrict(Vec(a * D.apply(x) + b * x)); };
  Vec out = s.c[0] * f;
  if (s.c.size() == 1) return out;
  Vec t0 = f, t1 = Y(f);
  out += s.c[1] * t1;
  for (size_t k = 2; k < s.c.size(); ++k) {
    Vec t2 = 2.0 * Y(t1) - t0;
    out += s.c[k] * t2;
    t0.swap(t1);
    t1.swap(t2);
  }
  return out;
}

Vec heat_apply(const SparseOperator& D, double t, const Vec& f, double tol) {
  if (t < 0) throw DomainError("heat_apply: t < 0");
  if (t == 0) return D.restrict(f);
  const double hi = D.upper_bound;
  const double z = 0.5 * t * hi;
  const int kmax = int(std::ceil(z + 12.0 * std::sqrt(z + 1.0) + 40.0));
  auto I = scaled_bessel_i(z, kmax);
  ChebyshevSeries s;
  s.lo = 0;
  s.hi = hi;
  s.c.resize(kmax + 1);
  for (int k = 0; k <= kmax; ++k) s.c[k] = (k == 0 ? 1.0 : 2.0) * ((k % 2) ? -1.0 : 1.0) * I[k];
  int last = kmax;
  while (last > 0 && std::abs(s.c[last]) <= 0.01 * tol) --last;
  s.c.resize(last + 1);
  return chebyshev_apply(D, s, f);
}

double F_less(double lambda, double k0) {
  if (lambda <= 0) throw DomainError("F_less: lambda <= 0");
  return (2 / pi) * std::atan(k0 / lambda) / lambda;
}

double F_greater(double lambda, double k0) { return F_greater_sq(lambda * lambda, k0); }

double F_greater_sq(double x, double k0) {
  if (x < 0) throw DomainError("F_greater_sq: x < 0");
  const double s = std::sqrt(x);
  const double q = s / k0;
  if (q < 1e-4) return (2 / (pi * k0)) * (1 - q * q / 3 + q * q * q * q / 5);
  return (2 / pi) * std::atan(q) / s;
}

LowEnergyQuadrature low_energy_quadrature(double k0, double lambda_min, int gl_order, int panels_per_octave) {
  if (!(k0 > 0) || !(lambda_min > 0)) throw std::invalid_argument("low_energy_quadrature: bad parameters");
  auto [x, w] = gauss_legendre(gl_order);
  LowEnergyQuadrature q;
  auto panel = [&](double a, double b) {
    for (int j = 0; j < gl_order; ++j) {
      q.nodes.push_back(0.5 * (a + b) + 0.5 * (b - a) * x[j]);
      q.weights.push_back((2 / pi) * 0.5 * (b - a) * w[j]);
    }
  };
  const double floor = std::min(k0, 1e-3 * lambda_min);
  double top = k0;
  const double ratio = std::pow(2.0, -1.0 / panels_per_octave);
  while (top > floor) {
    const double bot = std::max(top * ratio, floor);
    panel(bot, top);
    top = bot;
  }
  panel(0.0, top);
  return q;
}

MultiplierOperator::MultiplierOperator(const SparseOperator& D, MultiplierSpec spec) : D_(&D), spec_(spec) {
  if (!(spec.k0 > 0)) throw std::invalid_argument("MultiplierSpec: k0 <= 0");
  if (D.boundary != Boundary::dirichlet) throw std::invalid_argument("multipliers need the Dirichlet Laplacian");
  interval_ = estimate_spectrum(D);
  if (!(interval_.lo > 0) || !(interval_.hi > interval_.lo)) throw SolverError("spectral interval estimate failed");
  quad_ = low_energy_quadrature(spec.k0, std::sqrt(0.9 * interval_.lo), spec.gl_order, spec.panels_per_octave);
  // F_>(sqrt x) is analytic for x > -k0^2, so the expansion can start at 0
  const double hi = std::min(1.1 * interval_.hi, D.upper_bound);
  const double k0 = spec.k0;
  high_ = chebyshev_fit([k0](double x) { return F_greater_sq(std::max(x, 0.0), k0); }, 0.0, hi, spec.tol);
}

Vec MultiplierOperator::apply_low(const Vec& f) const {
  std::vector<double> shifts;
  for (double k : quad_.nodes) shifts.push_back(k * k);
  Eigen::MatrixXd W = Eigen::Map<const Eigen::RowVectorXd>(quad_.weights.data(), quad_.weights.size());
  return multishift_solve(*D_, f, shifts, W, spec_.tol)[0];
}

Vec MultiplierOperator::apply_high(const Vec& f) const { return chebyshev_apply(*D_, high_, f); }

Vec MultiplierOperator::apply(const Vec& f) const {
  switch (spec_.which) {
    case MultiplierKind::low: return apply_low(f);
    case MultiplierKind::high: return apply_high(f);
    default: return apply_low(f) + apply_high(f);
  }
}

Vec multiplier_apply(const SparseOperator& D, const MultiplierSpec& spec, const Vec& f) {
  return MultiplierOperator(D, spec).apply(f);
}

DenseSpectrum dense_spectrum(const SparseOperator& D, int max_dim) {
  DenseSpectrum S;
  std::vector<int> pos(D.dim, -1);
  for (int v = 0; v < D.dim; ++v)
    if (D.active[v]) {
      pos[v] = int(S.index.size());
      S.index.push_back(v);
    }
  const int m = int(S.index.size());
  if (m > max_dim) throw std::invalid_argument("dense_spectrum: instance too large");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (int v = 0; v < D.dim; ++v) {
    if (pos[v] < 0) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(D.A, v); it; ++it)
      if (pos[it.col()] >= 0) A(pos[v], pos[it.col()]) = it.value();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  S.values = es.eigenvalues();
  S.vectors = es.eigenvectors();
  S.dim = D.dim;
  return S;
}

Vec dense_function_apply(const DenseSpectrum& S, const std::function<double(double)>& g, const Vec& f) {
  const int m = int(S.index.size());
  Eigen::VectorXd fa(m);
  for (int j = 0; j < m; ++j) fa[j] = f[S.index[j]];
  Eigen::VectorXd c = S.vectors.transpose() * fa;
  for (int j = 0; j < m; ++j) c[j] *= g(S.values[j]);
  Eigen::VectorXd ya = S.vectors * c;
  Vec out = Vec::Zero(S.dim);
  for (int j = 0; j < m; ++j) out[S.index[j]] = ya[j];
  return out;
}

ColumnNormReport multiplier_L1_norm_test(const SparseOperator& D, double a, const std::vector<int>& sources,
                                         const std::function<double(double)>& G) {
  if (!(a > 0)) throw std::invalid_argument("multiplier_L1_norm_test: a <= 0");
  auto Gx = G ? G : [](double lam) { return pi / 2 - std::atan(lam); };
  auto g = [&](double x) { return Gx(std::sqrt(x) / a); };
  ColumnNormReport rep;
  const auto& mu = D.manifold->mu;
  for (int y : sources) {
    Vec e = Vec::Zero(D.dim);
    e[y] = 1.0;
    Vec col = lanczos_function_apply(D, e, g, 1e-10);
    double s = 0;
    for (int v = 0; v < D.dim; ++v) s += mu[v] * std::abs(col[v]);
    rep.sources.push_back(y);
    rep.values.push_back(s);
    rep.max = std::max(rep.max, s);
  }
  return rep;
}

ColumnNormReport sobolev_embedding_test(const SparseOperator& D, int k, const std::vector<int>& sources) {
  if (k < 0) throw std::invalid_argument("sobolev_embedding_test: k < 0");
  ColumnNormReport rep;
  const auto& mu = D.manifold->mu;
  for (int y : sources) {
    Vec col = Vec::Zero(D.dim);
    col[y] = 1.0 / mu[y];
    for (int j = 0; j < k; ++j) col = cg_solve(D, 1.0, col, 1e-13);
    double s = 0;
    for (int v = 0; v < D.dim; ++v) s += mu[v] * col[v] * col[v];
    const double val = std::sqrt(s * mu[y]);
    rep.sources.push_back(y);
    rep.values.push_back(val);
    rep.max = std::max(rep.max, val);
  }
  return rep;
}

std::vector<int> spread_sources(const ModelManifold& M, const std::vector<double>& fractions) {
  std::vector<int> out;
  if (!M.fragment) out.push_back(0);
  for (int i = 1; i <= M.num_ends(); ++i) {
    const auto& e = M.ends[i - 1];
    for (double fr : fractions) {
      int r = int(std::lround(fr * e.R));
      r = std::clamp(r, M.fragment ? 0 : 2, e.R - 1);
      std::vector<int> x(e.n, 0);
      x[0] = r;
      const int v = vertex_at(M, i, x);
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  }
  return out;
}

double wave_bump(double x, double plateau) {
  const double a = std::abs(x);
  if (a <= plateau) return 1.0;
  if (a >= 1.0) return 0.0;
  return 0.5 * (1 + std::cos(pi * (a - plateau) / (1 - plateau)));
}

double wave_near_symbol(double lambda, double r, double k0, double plateau) {
  if (r < 1) throw std::invalid_argument("wave splitting needs r >= 1");
  auto f = [&](double t) { return t <= 0 ? 0.0 : expint_e1(k0 * t) * wave_bump(t / r, plateau) * std::cos(lambda * t); };
  static const auto gl = gauss_legendre(20);
  boost::math::quadrature::tanh_sinh<double> ts;
  const double head = std::min(1.0, r);
  double acc = ts.integrate(f, 0.0, head, 1e-13);
  // fixed panels sized to the oscillation, with a break at the kink of the bump
  const double width = std::min(1.0, 2.0 / std::max(lambda, 1e-9));
  auto panels = [&](double a, double b) {
    const int np = std::max(1, int(std::ceil((b - a) / width)));
    const double hw = 0.5 * (b - a) / np;
    for (int p = 0; p < np; ++p) {
      const double c = a + (2 * p + 1) * hw;
      for (size_t j = 0; j < gl.first.size(); ++j) acc += hw * gl.second[j] * f(c + hw * gl.first[j]);
    }
  };
  const double kink = std::max(head, plateau * r);
  if (kink > head) panels(head, kink);
  if (r > kink) panels(kink, r);
  return (2 / pi) * acc;
}

WaveSplit::WaveSplit(const SparseOperator& D, double r, double k0, double plateau, double tol)
    : D_(&D), r_(r), k0_(k0), plateau_(plateau) {
  if (r < 1) throw std::invalid_argument("wave splitting needs r >= 1");
  const double hi = std::min(1.1 * estimate_spectrum(D).hi, D.upper_bound);
  near_ = chebyshev_fit([&](double x) { return wave_near_symbol(std::sqrt(std::max(x, 0.0)), r_, k0_, plateau_); }, 0.0,
                        hi, tol);
  // sample the far symbol through the near fit so that the two series partition F_> exactly
  const ChebyshevSeries& nr = near_;
  far_ = chebyshev_fit([&](double x) { return F_greater_sq(std::max(x, 0.0), k0_) - nr.eval(x); }, 0.0, hi, tol);
}

std::pair<Vec, Vec> WaveSplit::apply(const Vec& f) const {
  return {chebyshev_apply(*D_, near_, f), chebyshev_apply(*D_, far_, f)};
}

std::pair<Vec, Vec> wave_splitting(const SparseOperator& D, double r, double k0, const Vec& f) {
  return WaveSplit(D, r, k0).apply(f);
}

}  // namespace rieszlab
