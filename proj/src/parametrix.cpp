#include "rieszlab/parametrix.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace rieszlab {

namespace {

// mu(z)^{-1} h^{-2} w(z, y), the off-diagonal weight of Delta
double edge_coeff(const ModelManifold& M, int z, int64_t e) { return M.weight[e] / (M.mu[z] * M.h * M.h); }

std::vector<std::pair<int, int>> upper_pairs(const std::vector<int>& a) {
  std::vector<std::pair<int, int>> p;
  p.reserve(a.size() * (a.size() + 1) / 2);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = i; j < a.size(); ++j) p.push_back({a[i], a[j]});
  return p;
}

// unpack rows of upper-triangle entries into symmetric matrices
std::vector<Eigen::MatrixXd> unpack_symmetric(const Eigen::MatrixXd& e, int n) {
  std::vector<Eigen::MatrixXd> out(e.rows(), Eigen::MatrixXd(n, n));
  for (int r = 0; r < e.rows(); ++r) {
    int64_t c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j, ++c) out[r](i, j) = out[r](j, i) = e(r, c);
  }
  return out;
}

Eigen::MatrixXd cross_entries(const FragmentOperator& F, const std::vector<std::function<double(double)>>& w,
                              const std::vector<int>& a, const std::vector<int>& b, int row) {
  std::vector<std::pair<int, int>> p;
  p.reserve(a.size() * b.size());
  for (int x : b)
    for (int y : a) p.push_back({y, x});
  const Eigen::MatrixXd e = F.entries(w, p);
  Eigen::MatrixXd out(a.size(), b.size());
  for (size_t j = 0; j < b.size(); ++j)
    for (size_t i = 0; i < a.size(); ++i) out(i, j) = e(row, j * a.size() + i);
  return out;
}

}  // namespace

DecayFit fit_loglog(const std::vector<double>& d, const std::vector<double>& y) {
  DecayFit f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0) || !(y[i] > 0)) continue;
    const double lx = std::log(d[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  f.points = n;
  if (n < 2) return f;
  const double den = n * sxx - sx * sx;
  if (den <= 0) return f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

DecayFit fit_decay(const ModelManifold& M, int end, const Vec& f, double dmin, double dmax, int on_end,
                   double min_graph) {
  if (on_end == 0) on_end = end;
  std::map<int, std::pair<double, double>> bins;  // bin -> (max |f|, d at max)
  for (int v = 0; v < M.num_vertices; ++v) {
    if (M.tag[v] != on_end || M.boundary[v]) continue;
    if (min_graph > 0 && M.dist[on_end - 1][v] < min_graph) continue;
    const double d = M.radial_distance(end, v);
    if (d < dmin || d > dmax) continue;
    auto& b = bins[int(std::floor(d / M.h))];
    if (std::abs(f[v]) > b.first) b = {std::abs(f[v]), d};
  }
  std::vector<double> ds, ys;
  for (auto& [_, b] : bins) {
    ds.push_back(b.second);
    ys.push_back(b.first);
  }
  return fit_loglog(ds, ys);
}

std::vector<double> geometric_grid(double lo, double hi, int points_per_decade) {
  if (!(lo > 0) || !(hi >= lo) || points_per_decade < 1) throw std::invalid_argument("geometric_grid: bad range");
  const int n = std::max(1, int(std::ceil(points_per_decade * std::log10(hi / lo) - 1e-9)));
  std::vector<double> g(n + 1);
  for (int j = 0; j <= n; ++j) g[j] = lo * std::pow(hi / lo, double(j) / n);
  g[n] = hi;
  return g;
}

LemmaUVSolution solve_lemma_uv(const ModelManifold& M, const Vec& v, const std::vector<double>& ks, double tol) {
  if (ks.empty()) throw std::invalid_argument("solve_lemma_uv: empty k-grid");
  const auto D = laplacian(M);
  const auto grad = gradient(M);
  LemmaUVSolution s;
  s.v = v;
  s.ks = ks;
  std::vector<double> shifts;
  for (double k : ks) shifts.push_back(k * k);
  const int nk = int(ks.size());
  s.u = multishift_solve(D, v, shifts, Eigen::MatrixXd::Identity(nk, nk), tol);
  const double vn = std::max(v.norm(), 1e-300);
  for (int a = 0; a < nk; ++a) {
    const Vec r = D.apply(s.u[a]) + shifts[a] * s.u[a] - D.restrict(v);
    s.residual.push_back(r.norm() / vn);
    s.grad.push_back(grad.pointwise_norm(grad.apply(s.u[a])));
  }
  const int ref = int(std::min_element(ks.begin(), ks.end()) - ks.begin());
  for (int i = 1; i <= M.num_ends(); ++i) {
    const double dmax = 0.5 * M.ends[i - 1].R * M.h;
    // the collar |x|_inf <= 3 reaches radius 4 on ends of dimension >= 4; keep it out of the fit
    s.u_fit.push_back(fit_decay(M, i, s.u[ref], 4 * M.h, dmax, i, 3 * M.h));
    s.grad_fit.push_back(fit_decay(M, i, s.grad[ref], 4 * M.h, dmax, i, 3 * M.h));
  }
  for (int a = 0; a < nk; ++a) {
    if (a == ref) {
      s.lipschitz_u.push_back(0);
      s.lipschitz_grad.push_back(0);
      continue;
    }
    const double dk = std::abs(ks[a] - ks[ref]);
    s.lipschitz_u.push_back((s.u[a] - s.u[ref]).lpNorm<Eigen::Infinity>() / dk);
    const Vec dg = grad.pointwise_norm(grad.apply(s.u[a] - s.u[ref]));
    s.lipschitz_grad.push_back(dg.lpNorm<Eigen::Infinity>() / dk);
  }
  return s;
}

// ---------------------------------------------------------------------------

ParametrixModel::ParametrixModel(const ModelManifold& M, ParametrixConfig cfg) : M_(M), cfg_(cfg) {
  if (M.fragment || M.num_ends() < 1) throw GeometryError("parametrix needs a connected sum");
  D_ = rieszlab::laplacian(M);
  if (!D_.symmetric) throw GeometryError("parametrix needs a symmetric Laplacian");
  const int N = M.num_vertices, l = M.num_ends();
  Vec sum_phi = Vec::Zero(N);
  for (int i = 1; i <= l; ++i) {
    Vec p = cutoff_phi(M, i, cfg.r0, cfg.r1);
    for (int z = 0; z < N; ++z)
      if (p[z] != 0.0 && p[z] != 1.0) throw GeometryError("parametrix needs a step collar (phi in {0, 1})");
    // v_i = -Delta phi_i on interior rows, with boundary values of phi kept
    Vec v = Vec::Zero(N);
    for (int z = 0; z < N; ++z) {
      if (M.boundary[z]) continue;
      double s = 0;
      for (int64_t e = M.row_ptr[z]; e < M.row_ptr[z + 1]; ++e) s += edge_coeff(M, z, e) * (p[z] - p[M.col[e]]);
      v[z] = -s;
    }
    sum_phi += p;
    phi_.push_back(std::move(p));
    v_.push_back(std::move(v));
    frag_.push_back(std::make_unique<FragmentOperator>(M.ends[i - 1]));
    const auto& F = frag_.back()->graph();
    origin_.push_back(vertex_at(F, 1, std::vector<int>(M.ends[i - 1].n, 0),
                                std::vector<int>(M.ends[i - 1].factor.size(), 0)));
  }

  cap_pos_.assign(N, -1);
  chi_pos_.assign(N, -1);
  for (int z = 0; z < N; ++z) {
    if (M.boundary[z] || sum_phi[z] != 0.0) continue;
    cap_pos_[z] = int(cap_.size());
    cap_.push_back(z);
  }
  for (int z = 0; z < N; ++z) {
    if (M.boundary[z]) continue;
    const int t = M.tag[z];
    bool near = false;
    if (t != kJunctionTag) {
      int sup = 0;
      for (int d = 0; d < M.ends[t - 1].n; ++d) sup = std::max(sup, std::abs(M.coord(z)[d]));
      near = sup <= 2 + cfg.cap_width;
    }
    if (cap_pos_[z] >= 0 || near) {
      capg_.push_back(z);
    }
  }
  for (int z = 0; z < N; ++z) {
    if (M.boundary[z]) continue;
    bool in = cap_pos_[z] >= 0;
    for (int64_t e = M.row_ptr[z]; !in && e < M.row_ptr[z + 1]; ++e) {
      const int y = M.col[e];
      in = cap_pos_[y] >= 0 || sum_phi[y] != sum_phi[z];
    }
    if (in) {
      chi_pos_[z] = int(chi_.size());
      chi_.push_back(z);
    }
  }

  // far-column form of E on each end
  for (int i = 1; i <= l; ++i) {
    const auto& p = phi_[i - 1];
    std::map<int, int> xpos;
    std::vector<int> X;
    auto slot = [&](int fv) {
      auto [it, fresh] = xpos.emplace(fv, int(X.size()));
      if (fresh) X.push_back(fv);
      return it->second;
    };
    const int o = slot(origin_[i - 1]);
    std::vector<Eigen::Triplet<double>> trip;
    for (int z : chi_) {
      if (M.tag[z] != i) continue;
      for (int64_t e = M.row_ptr[z]; e < M.row_ptr[z + 1]; ++e) {
        const int y = M.col[e];
        const double c = edge_coeff(M, z, e) * (p[z] - p[y]);
        if (c == 0.0) continue;
        if (M.tag[y] != i) throw GeometryError("collar touches the junction");
        const int a = slot(int(M.fragment_index(i, y)));
        trip.push_back({chi_pos_[z], a, c});
        trip.push_back({chi_pos_[z], o, -c});
      }
    }
    Eigen::SparseMatrix<double> Dx(int(chi_.size()), int(X.size()));
    Dx.setFromTriplets(trip.begin(), trip.end());
    X_.push_back(std::move(X));
    Dx_.push_back(std::move(Dx));

    const auto& F = frag_[i - 1]->graph();
    const auto& f2v = M.frag_to_vertex[i - 1];
    std::vector<int> near;
    for (int f = 0; f < F.num_vertices; ++f) {
      if (F.boundary[f]) continue;
      if (f2v[f] < 0 || p[f2v[f]] == 0.0) near.push_back(f);
    }
    N_.push_back(std::move(near));
  }
}

int ParametrixModel::fragment_vertex(int i, int z) const { return int(M_.fragment_index(i, z)); }

void ParametrixModel::precompute_u(const std::vector<double>& ks) const {
  std::vector<double> todo;
  for (double k : ks)
    if (!u_cache_.count(k)) todo.push_back(k);
  if (todo.empty()) return;
  std::vector<double> shifts;
  for (double k : todo) shifts.push_back(k * k);
  const int nk = int(todo.size());
  for (int a = 0; a < nk; ++a) u_cache_[todo[a]].resize(num_ends());
  for (int i = 1; i <= num_ends(); ++i) {
    auto u = multishift_solve(D_, v_[i - 1], shifts, Eigen::MatrixXd::Identity(nk, nk), cfg_.solve_tol);
    for (int a = 0; a < nk; ++a) u_cache_[todo[a]][i - 1] = std::move(u[a]);
  }
}

const std::vector<Vec>& ParametrixModel::u(double k) const {
  precompute_u({k});
  return u_cache_.at(k);
}

Vec harmonic_profile(const ParametrixModel& P, int i) { return P.phi(i) + P.u(0.0)[i - 1]; }

// ---------------------------------------------------------------------------

InteriorParametrix::InteriorParametrix(const ParametrixModel& P, double k) : P_(P), k_(k) {
  if (k < 0) throw std::invalid_argument("interior_parametrix: k < 0");
  const auto& cg = P.cap_graph();
  const int n = int(cg.size());
  std::vector<int> pos(P.manifold().num_vertices, -1);
  for (int a = 0; a < n; ++a) pos[cg[a]] = a;
  std::vector<Eigen::Triplet<double>> trip;
  const auto& A = P.laplacian().A;
  for (int a = 0; a < n; ++a) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, cg[a]); it; ++it) {
      const int b = pos[it.col()];
      if (b >= 0) trip.push_back({a, b, it.value()});
    }
    trip.push_back({a, a, k * k});
  }
  Eigen::SparseMatrix<double> L(n, n);
  L.setFromTriplets(trip.begin(), trip.end());
  ldlt_.compute(L);
  if (ldlt_.info() != Eigen::Success) throw GeometryError("cap factorisation failed");
}

Vec InteriorParametrix::cap_graph_solve(const Vec& f) const {
  const auto& cg = P_.cap_graph();
  Vec b(cg.size());
  for (size_t a = 0; a < cg.size(); ++a) b[a] = f[cg[a]];
  const Vec x = ldlt_.solve(b);
  Vec out = Vec::Zero(f.size());
  for (size_t a = 0; a < cg.size(); ++a) out[cg[a]] = x[a];
  return out;
}

Vec InteriorParametrix::apply(const Vec& f) const {
  Vec g = Vec::Zero(f.size());
  for (int z : P_.cap()) g[z] = f[z];
  Vec x = cap_graph_solve(g);
  Vec out = Vec::Zero(f.size());
  for (int z : P_.cap()) out[z] = x[z];
  return out;
}

InteriorParametrix interior_parametrix(const ParametrixModel& P, double k) { return InteriorParametrix(P, k); }

// ---------------------------------------------------------------------------

ParametrixBundle::ParametrixBundle(const ParametrixModel& P, double k) : P_(P), k_(k), Gint_(P, k) {
  const auto& M = P.manifold();
  const auto& chi = P.chi();
  const auto& cap = P.cap();
  const int nchi = int(chi.size()), ncap = int(cap.size());

  for (int i = 1; i <= P.num_ends(); ++i) {
    Ro_.push_back(P.fragment(i).column(k, P.fragment_origin(i)));
    const auto& X = P.X(i);
    const Eigen::MatrixXd e = P.fragment(i).entries(std::vector<double>{k}, upper_pairs(X));
    Rxx_.push_back(unpack_symmetric(e, int(X.size()))[0]);
  }

  // near columns from the cap graph solves
  Enear_.setZero(nchi, ncap);
  Gcc_.resize(ncap, ncap);
  Vec delta = Vec::Zero(M.num_vertices);
  for (int b = 0; b < ncap; ++b) {
    delta[cap[b]] = 1.0;
    const Vec g = Gint_.cap_graph_solve(delta);
    delta[cap[b]] = 0.0;
    for (int a = 0; a < ncap; ++a) Gcc_(a, b) = g[cap[a]];
    for (int r = 0; r < nchi; ++r) {
      const int z = chi[r];
      const bool zin = P.in_cap(z);
      double s = 0;
      for (int64_t e = M.row_ptr[z]; e < M.row_ptr[z + 1]; ++e) {
        const int y = M.col[e];
        if (P.in_cap(y) != zin) s += edge_coeff(M, z, e) * g[y];
      }
      Enear_(r, b) = zin ? s : -s;
    }
  }

  Echi_.resize(nchi, nchi);
  std::vector<std::map<int, int>> xpos(P.num_ends());
  for (int i = 1; i <= P.num_ends(); ++i)
    for (size_t a = 0; a < P.X(i).size(); ++a) xpos[i - 1][P.X(i)[a]] = int(a);
  for (int c = 0; c < nchi; ++c) {
    const int w = chi[c];
    if (P.in_cap(w)) {
      Echi_.col(c) = Enear_.col(std::lower_bound(cap.begin(), cap.end(), w) - cap.begin());
      continue;
    }
    const int j = M.tag[w];
    const int a = xpos[j - 1].at(P.fragment_vertex(j, w));
    Echi_.col(c) = P.Dx(j) * Rxx_[j - 1].col(a);
  }
  A_ = Eigen::MatrixXd::Identity(nchi, nchi) + Echi_;
  lu_.compute(A_);
}

void ParametrixBundle::set_correction(FiniteRankCorrection c) {
  const auto& D = P_.laplacian();
  A_ = Eigen::MatrixXd::Identity(Echi_.rows(), Echi_.cols()) + Echi_;
  c.target.clear();
  for (size_t j = 0; j < c.omega.size(); ++j) {
    const Vec r = D.apply(c.rho[j]) + k_ * k_ * c.rho[j];
    Vec t(P_.chi().size());
    for (size_t a = 0; a < P_.chi().size(); ++a) t[a] = r[P_.chi()[a]];
    for (int z = 0; z < int(r.size()); ++z)
      if (r[z] != 0.0 && P_.chi_index(z) < 0) throw SolverError("correction leaves the support of chi");
    A_ += t * c.omega[j].transpose();
    c.target.push_back(std::move(t));
  }
  corr_ = std::move(c);
  lu_.compute(A_);
  gram_.resize(0, 0);
}

std::array<Vec, 4> ParametrixBundle::apply_parts(const Vec& f) const {
  const auto& M = P_.manifold();
  const int N = M.num_vertices;
  std::array<Vec, 4> out{Vec::Zero(N), Vec::Zero(N), Vec::Zero(N), Vec::Zero(N)};
  const auto& u = P_.u(k_);
  for (int i = 1; i <= P_.num_ends(); ++i) {
    const auto& F = P_.fragment(i);
    const auto& p = P_.phi(i);
    const auto& f2v = M.frag_to_vertex[i - 1];
    Vec g = Vec::Zero(F.graph().num_vertices);
    for (size_t a = 0; a < f2v.size(); ++a)
      if (f2v[a] >= 0) g[a] = p[f2v[a]] * f[f2v[a]];
    const Vec r = F.solve(k_, g);
    for (size_t a = 0; a < f2v.size(); ++a)
      if (f2v[a] >= 0) out[0][f2v[a]] += p[f2v[a]] * r[a];
    out[2] += Ro_[i - 1].dot(g) * u[i - 1];
  }
  out[1] = Gint_.apply(f);
  for (size_t j = 0; j < corr_.omega.size(); ++j) {
    double s = 0;
    for (size_t a = 0; a < P_.chi().size(); ++a) s += corr_.omega[j][a] * f[P_.chi()[a]];
    out[3] += s * corr_.rho[j];
  }
  return out;
}

Vec ParametrixBundle::apply_G(const Vec& f) const {
  auto p = apply_parts(f);
  return p[0] + p[1] + p[2] + p[3];
}

Eigen::MatrixXd ParametrixBundle::E_columns(const std::vector<int>& cols) const {
  const auto& M = P_.manifold();
  const auto& cap = P_.cap();
  const int nchi = int(P_.chi().size());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(nchi, cols.size());
  std::vector<std::vector<int>> far(P_.num_ends());
  for (size_t c = 0; c < cols.size(); ++c) {
    const int y = cols[c];
    if (M.boundary[y]) continue;
    if (P_.in_cap(y)) {
      E.col(c) = Enear_.col(std::lower_bound(cap.begin(), cap.end(), y) - cap.begin());
    } else {
      far[M.tag[y] - 1].push_back(int(c));
    }
    const int q = P_.chi_index(y);
    if (q >= 0)
      for (size_t j = 0; j < corr_.omega.size(); ++j) E.col(c) += corr_.omega[j][q] * corr_.target[j];
  }
  for (int i = 1; i <= P_.num_ends(); ++i) {
    if (far[i - 1].empty()) continue;
    std::vector<int> ys;
    for (int c : far[i - 1]) ys.push_back(P_.fragment_vertex(i, cols[c]));
    std::vector<std::function<double(double)>> w{[k = k_](double t) { return std::exp(-t * k * k); }};
    const Eigen::MatrixXd R = cross_entries(P_.fragment(i), w, P_.X(i), ys, 0);
    const Eigen::MatrixXd Ef = P_.Dx(i) * R;
    for (size_t b = 0; b < far[i - 1].size(); ++b) E.col(far[i - 1][b]) += Ef.col(b);
  }
  return E;
}

Vec ParametrixBundle::E_direct_column(int y) const {
  const auto& D = P_.laplacian();
  Vec d = Vec::Zero(P_.manifold().num_vertices);
  d[y] = 1.0;
  const Vec g = apply_G(d);
  return D.apply(g) + k_ * k_ * D.restrict(g) - D.restrict(d);
}

Vec error_term(const ParametrixBundle& B, int y) {
  const Eigen::MatrixXd E = B.E_columns({y});
  Vec out = Vec::Zero(B.model().manifold().num_vertices);
  const auto& chi = B.model().chi();
  for (size_t a = 0; a < chi.size(); ++a) out[chi[a]] = E(a, 0);
  return out;
}

Eigen::MatrixXd invert_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Ecols) {
  return -Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(Ecols);
}

Eigen::MatrixXd ParametrixBundle::S_columns(const std::vector<int>& cols) const { return -lu_.solve(E_columns(cols)); }

Vec ParametrixBundle::GS_column(int y) const {
  const Vec s = S_columns({y}).col(0);
  Vec x = Vec::Zero(P_.manifold().num_vertices);
  for (size_t a = 0; a < P_.chi().size(); ++a) x[P_.chi()[a]] = s[a];
  return apply_G(x);
}

Vec ParametrixBundle::resolvent_column(int y) const {
  const Vec s = S_columns({y}).col(0);
  Vec x = Vec::Zero(P_.manifold().num_vertices);
  for (size_t a = 0; a < P_.chi().size(); ++a) x[P_.chi()[a]] = s[a];
  x[y] += 1.0;
  return apply_G(x);
}

Eigen::MatrixXd ParametrixBundle::G_rows(const std::vector<int>& zs) const {
  const auto& M = P_.manifold();
  const auto& chi = P_.chi();
  const auto& cap = P_.cap();
  const auto& u = P_.u(k_);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(zs.size(), chi.size());
  for (int i = 1; i <= P_.num_ends(); ++i) {
    const auto& p = P_.phi(i);
    std::vector<int> wa, wf;  // chi columns with phi_i = 1 and their fragment ids
    for (size_t a = 0; a < chi.size(); ++a)
      if (M.tag[chi[a]] == i && p[chi[a]] != 0.0) {
        wa.push_back(int(a));
        wf.push_back(P_.fragment_vertex(i, chi[a]));
      }
    std::vector<int> za, zf;
    for (size_t r = 0; r < zs.size(); ++r)
      if (M.tag[zs[r]] == i && p[zs[r]] != 0.0) {
        za.push_back(int(r));
        zf.push_back(P_.fragment_vertex(i, zs[r]));
      }
    if (!za.empty() && !wa.empty()) {
      std::vector<std::function<double(double)>> w{[k = k_](double t) { return std::exp(-t * k * k); }};
      const Eigen::MatrixXd R = cross_entries(P_.fragment(i), w, zf, wf, 0);
      for (size_t r = 0; r < za.size(); ++r)
        for (size_t c = 0; c < wa.size(); ++c) G(za[r], wa[c]) += R(r, c);
    }
    for (size_t r = 0; r < zs.size(); ++r)
      for (size_t c = 0; c < wa.size(); ++c) G(r, wa[c]) += Ro_[i - 1][wf[c]] * u[i - 1][zs[r]];
  }
  for (size_t r = 0; r < zs.size(); ++r) {
    if (!P_.in_cap(zs[r])) continue;
    const int a = int(std::lower_bound(cap.begin(), cap.end(), zs[r]) - cap.begin());
    for (size_t c = 0; c < chi.size(); ++c)
      if (P_.in_cap(chi[c])) G(r, c) += Gcc_(a, std::lower_bound(cap.begin(), cap.end(), chi[c]) - cap.begin());
  }
  for (size_t j = 0; j < corr_.omega.size(); ++j)
    for (size_t r = 0; r < zs.size(); ++r) G.row(r) += corr_.rho[j][zs[r]] * corr_.omega[j].transpose();
  return G;
}

double smallest_singular_value(const Eigen::MatrixXd& A) {
  const int n = int(A.rows());
  if (n == 0) return 0;
  if (n <= 600) return Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues().minCoeff();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  // Lanczos on B = A^{-T} A^{-1} with full reorthogonalisation
  const int m = std::min(n, 80);
  Eigen::MatrixXd Q(n, m + 1);
  Vec q = Vec::Ones(n) / std::sqrt(double(n));
  std::vector<double> al, be;
  Q.col(0) = q;
  double top_prev = 0;
  for (int j = 0; j < m; ++j) {
    Vec w = lu.transpose().solve(lu.solve(Vec(Q.col(j))));
    al.push_back(Q.col(j).dot(w));
    w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    w -= Q.leftCols(j + 1) * (Q.leftCols(j + 1).transpose() * w);
    const double b = w.norm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(j + 1, j + 1);
    for (int a = 0; a <= j; ++a) {
      T(a, a) = al[a];
      if (a < j) T(a, a + 1) = T(a + 1, a) = be[a];
    }
    es.compute(T, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    if (b < 1e-14 * top || (j > 4 && std::abs(top - top_prev) < 1e-12 * top)) return 1.0 / std::sqrt(top);
    top_prev = top;
    be.push_back(b);
    Q.col(j + 1) = w / b;
  }
  return 1.0 / std::sqrt(top_prev);
}

double ParametrixBundle::sigma_min() const { return smallest_singular_value(A_); }

const Eigen::MatrixXd& ParametrixBundle::gram() const {
  if (gram_.size()) return gram_;
  const int nchi = int(P_.chi().size());
  Eigen::MatrixXd Gm = Enear_ * Enear_.transpose();
  for (int i = 1; i <= P_.num_ends(); ++i) {
    const auto& X = P_.X(i);
    const auto& F = P_.fragment(i);
    if (R2xx_.size() < size_t(i)) {
      const Eigen::MatrixXd e2 = F.entries(std::vector<double>{k_}, upper_pairs(X), 1);
      R2xx_.push_back(unpack_symmetric(e2, int(X.size()))[0]);
      std::vector<std::function<double(double)>> w{[k = k_](double t) { return std::exp(-t * k * k); }};
      Rxn_.push_back(cross_entries(F, w, X, P_.near_set(i), 0));
    }
    const Eigen::MatrixXd Q = R2xx_[i - 1] - Rxn_[i - 1] * Rxn_[i - 1].transpose();
    const Eigen::SparseMatrix<double>& Dx = P_.Dx(i);
    Gm += Dx * (Q * Eigen::MatrixXd(Dx.transpose()));
  }
  if (!corr_.empty()) {
    // E' = E + T Omega^T, Omega supported on chi
    Eigen::MatrixXd T(nchi, corr_.omega.size()), Om(nchi, corr_.omega.size());
    for (size_t j = 0; j < corr_.omega.size(); ++j) {
      T.col(j) = corr_.target[j];
      Om.col(j) = corr_.omega[j];
    }
    const Eigen::MatrixXd EO = Echi_ * Om;
    Gm += EO * T.transpose() + T * EO.transpose() + T * (Om.transpose() * Om) * T.transpose();
  }
  gram_ = Gm;
  return gram_;
}

double ParametrixBundle::hs_norm_E() const { return std::sqrt(std::max(0.0, gram().trace())); }

double ParametrixBundle::hs_norm_S() const {
  const Eigen::MatrixXd Y = lu_.solve(gram());
  const Eigen::MatrixXd Z = lu_.solve(Eigen::MatrixXd(Y.transpose()));
  return std::sqrt(std::max(0.0, Z.trace()));
}

ParametrixBundle assemble_parametrix(const ParametrixModel& P, double k) { return ParametrixBundle(P, k); }

double hs_distance_E(const ParametrixBundle& a, const ParametrixBundle& b) {
  const auto& P = a.model();
  if (&P != &b.model()) throw std::invalid_argument("hs_distance_E: bundles of different models");
  const double ka = a.k() * a.k(), kb = b.k() * b.k();
  const double dl = kb - ka;
  double s = (a.E_near() - b.E_near()).squaredNorm();
  if (dl == 0.0) return std::sqrt(s);
  // (R_a - R_b) and (R_a - R_b)^2 from weights that avoid cancellation
  auto diff = [ka, dl](double t) { return -std::exp(-t * ka) * std::expm1(-t * dl); };
  auto diff2 = [ka, dl](double t) {
    const double x = t * dl;
    double g;
    if (std::abs(x) < 1e-3) g = x * x / 6 - x * x * x / 12 + x * x * x * x / 40;
    else g = 1 + std::exp(-x) + 2 * std::expm1(-x) / x;
    return t * std::exp(-t * ka) * g;
  };
  for (int i = 1; i <= P.num_ends(); ++i) {
    const auto& X = P.X(i);
    const auto& F = P.fragment(i);
    const Eigen::MatrixXd e = F.entries(std::vector<std::function<double(double)>>{diff2}, upper_pairs(X));
    const Eigen::MatrixXd Q2 = unpack_symmetric(e, int(X.size()))[0];
    const Eigen::MatrixXd Dn = cross_entries(F, {diff}, X, P.near_set(i), 0);
    const Eigen::MatrixXd Q = Q2 - Dn * Dn.transpose();
    const Eigen::MatrixXd Dx = P.Dx(i);
    s += (Dx * Q * Dx.transpose()).trace();
  }
  return std::sqrt(std::max(0.0, s));
}

// ---------------------------------------------------------------------------

FiniteRankCorrection finite_rank_correction(const ParametrixModel& P, const Eigen::MatrixXd& A, double tol_rank,
                                            int rank_cap) {
  const auto& M = P.manifold();
  const auto& chi = P.chi();
  const int nchi = int(chi.size());
  if (A.rows() != nchi || A.cols() != nchi) throw std::invalid_argument("finite_rank_correction: block size");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  FiniteRankCorrection c;
  c.sigma_before = sv.minCoeff();
  const double cut = tol_rank * sv.maxCoeff();
  std::vector<int> null;
  for (int a = 0; a < sv.size(); ++a)
    if (sv[a] < cut) null.push_back(a);
  if (null.empty()) {
    c.sigma_after = c.sigma_before;
    return c;
  }
  if (int(null.size()) > rank_cap) throw SolverError("finite_rank_correction: null space exceeds the rank cap");

  // rho lives on chi vertices whose whole neighbourhood is in chi
  std::vector<int> omega_set;
  for (int z : chi) {
    bool ok = true;
    for (int64_t e = M.row_ptr[z]; ok && e < M.row_ptr[z + 1]; ++e) ok = P.chi_index(M.col[e]) >= 0;
    if (ok) omega_set.push_back(z);
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nchi, omega_set.size());
  for (size_t b = 0; b < omega_set.size(); ++b) {
    const int x = omega_set[b];
    double diag = 0;
    for (int64_t e = M.row_ptr[x]; e < M.row_ptr[x + 1]; ++e) {
      const double w = edge_coeff(M, x, e);
      diag += w;
      L(P.chi_index(M.col[e]), b) -= w;
    }
    L(P.chi_index(x), b) += diag;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(L);
  Eigen::MatrixXd Ac = A;
  for (int a : null) {
    const Vec eta = svd.matrixU().col(a);
    const Vec r = qr.solve(eta);
    Vec rho = Vec::Zero(M.num_vertices);
    for (size_t b = 0; b < omega_set.size(); ++b) rho[omega_set[b]] = r[b];
    const Vec t = L * r;
    c.omega.push_back(svd.matrixV().col(a));
    c.rho.push_back(std::move(rho));
    c.target.push_back(t);
    Ac += t * svd.matrixV().col(a).transpose();
  }
  c.sigma_after = smallest_singular_value(Ac);
  if (c.sigma_after < cut) throw SolverError("finite_rank_correction: could not restore invertibility");
  return c;
}

// ---------------------------------------------------------------------------

std::vector<int> parametrix_probes(const ModelManifold& M, int count) {
  std::vector<int> out;
  out.push_back(0);  // junction centre
  const int l = M.num_ends();
  for (int s = 0; int(out.size()) < count; ++s) {
    const int i = 1 + s % l;
    const auto& E = M.ends[i - 1];
    const int r = 2 + (s / l) * 2;
    if (r >= E.R) {
      if (s > 4 * l * E.R) break;
      continue;
    }
    std::vector<int> x(E.n, 0), y(E.factor.size(), 0);
    x[0] = (s / l) % 2 ? -r : r;
    if (E.n > 1) x[1] = (s / l) % 3;
    for (size_t c = 0; c < y.size(); ++c) y[c] = s % E.factor[c];
    out.push_back(vertex_at(M, i, x, y));
  }
  out.resize(std::min<size_t>(out.size(), count));
  return out;
}

DecompositionReport verify_resolvent_decomposition(const ParametrixBundle& B, const std::vector<int>& probes) {
  const auto& D = B.model().laplacian();
  const double k = B.k();
  DecompositionReport rep;
  rep.k = k;
  rep.probes = probes;
  const int N = B.model().manifold().num_vertices;
  for (int y : probes) {
    Vec d = Vec::Zero(N);
    d[y] = 1.0;
    const Vec col = B.resolvent_column(y);
    const Vec r = D.apply(col) + k * k * D.restrict(col) - d;
    rep.relerr.push_back(r.norm());
    const Vec ref = resolvent_solve(D, k, d, 1e-12);
    rep.direct_diff.push_back((col - ref).norm() / ref.norm());
  }
  rep.max_relerr = *std::max_element(rep.relerr.begin(), rep.relerr.end());
  rep.max_direct_diff = *std::max_element(rep.direct_diff.begin(), rep.direct_diff.end());
  rep.sigma_min = B.sigma_min();
  rep.hs_norm_E = B.hs_norm_E();
  rep.hs_norm_S = B.hs_norm_S();
  return rep;
}

K0Choice choose_k0(const std::function<double(double)>& sigma, const std::vector<double>& grid, double threshold,
                   int bisections) {
  if (grid.empty()) throw std::invalid_argument("choose_k0: empty grid");
  K0Choice c;
  c.grid = grid;
  std::sort(c.grid.begin(), c.grid.end());
  int last = -1;
  for (size_t a = 0; a < c.grid.size(); ++a) {
    const double s = sigma(c.grid[a]);
    c.sigma.push_back(s);
    if (s < threshold) break;
    last = int(a);
  }
  if (last < 0) throw SolverError("choose_k0: Id + E(k) is not invertible at the smallest grid k");
  c.k0 = c.grid[last];
  if (last + 1 < int(c.grid.size())) {
    double lo = c.grid[last], hi = c.grid[last + 1];
    for (int b = 0; b < bisections; ++b, ++c.bisections) {
      const double mid = 0.5 * (lo + hi);
      if (sigma(mid) >= threshold) lo = mid;
      else hi = mid;
    }
    c.k0 = lo;
  }
  return c;
}

K0Choice choose_k0(const ParametrixModel& P, const std::vector<double>& grid, int bisections) {
  return choose_k0([&P](double k) { return ParametrixBundle(P, k).sigma_min(); }, grid, P.config().sv_threshold,
                   bisections);
}

WeightFits weight_fits(const ParametrixBundle& B, double dmin, double dmax) {
  const auto& P = B.model();
  const auto& M = P.manifold();
  const auto grad = gradient(M);
  WeightFits out;
  const int centre = 0;
  const Eigen::MatrixXd Gc = B.G_rows({centre});
  const auto& u = P.u(B.k());

  for (int j = 1; j <= P.num_ends(); ++j) {
    const auto& E = M.ends[j - 1];
    std::vector<int> ray;
    std::vector<double> d;
    for (int r = int(std::ceil(dmin / M.h)); r <= int(std::floor(dmax / M.h)) && r < E.R; ++r) {
      std::vector<int> x(E.n, 0), y(E.factor.size(), 0);
      x[0] = r;
      ray.push_back(vertex_at(M, j, x, y));
      d.push_back(M.radial_distance(j, ray.back()));
    }
    const Eigen::MatrixXd Ec = B.E_columns(ray);
    std::vector<double> esum, gs, g3;
    std::vector<std::pair<int, int>> opairs;
    for (int z : ray) opairs.push_back({P.fragment_origin(j), P.fragment_vertex(j, z)});
    const Eigen::MatrixXd Ro = P.fragment(j).entries(std::vector<double>{B.k()}, opairs);
    const Eigen::MatrixXd Sc = B.S_columns(ray);
    const Vec gsrow = (Gc * Sc).row(0).transpose();
    for (size_t c = 0; c < ray.size(); ++c) {
      esum.push_back(Ec.col(c).cwiseAbs().sum());
      gs.push_back(std::abs(gsrow[c]));
      g3.push_back(std::abs(Ro(0, c) * u[j - 1][centre]));
    }
    out.E_right.push_back(fit_loglog(d, esum));
    out.GS_right.push_back(fit_loglog(d, gs));
    double rmin = std::numeric_limits<double>::infinity();
    for (size_t c = ray.size() / 2; c < ray.size(); ++c) rmin = std::min(rmin, g3[c] / std::max(gs[c], 1e-300));
    out.G3_over_GS.push_back(rmin);
  }

  // left decay: GS columns at the junction centre and at a first-layer point of every end
  std::vector<int> ys{centre};
  for (int i = 1; i <= P.num_ends(); ++i) {
    std::vector<int> x(M.ends[i - 1].n, 0), y(M.ends[i - 1].factor.size(), 0);
    x[0] = 3;
    ys.push_back(vertex_at(M, i, x, y));
  }
  Vec env = Vec::Zero(M.num_vertices), genv = Vec::Zero(M.num_vertices);
  for (int y : ys) {
    const Vec c = B.GS_column(y);
    env = env.cwiseMax(c.cwiseAbs());
    genv = genv.cwiseMax(grad.pointwise_norm(grad.apply(c)));
  }
  for (int i = 1; i <= P.num_ends(); ++i) {
    out.GS_left.push_back(fit_decay(M, i, env, dmin, dmax));
    out.gradGS_left.push_back(fit_decay(M, i, genv, dmin, dmax));
  }
  return out;
}

}  // namespace rieszlab
