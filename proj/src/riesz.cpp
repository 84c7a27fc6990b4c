#include "rieszlab/riesz.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rieszlab/fragment.hpp"
#include "rieszlab/special_fn.hpp"

namespace rieszlab {

namespace {

constexpr double pi = std::numbers::pi;

Vec delta(int n, int y) {
  Vec e = Vec::Zero(n);
  e[y] = 1.0;
  return e;
}

// Gauss-Legendre in k on geometric panels, one per decade from k0 down to
// kmin, plus [0, kmin]; weights carry the 2/pi of F_<.
void k_panels(double k0, double kmin, int order, std::vector<double>& nodes, std::vector<double>& weights) {
  Eigen::VectorXd x(order), w(order);
  {
    // Golub-Welsch
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (int j = 1; j < order; ++j) J(j, j - 1) = J(j - 1, j) = j / std::sqrt(4.0 * j * j - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    x = es.eigenvalues();
    for (int j = 0; j < order; ++j) w[j] = 2 * es.eigenvectors()(0, j) * es.eigenvectors()(0, j);
  }
  auto panel = [&](double a, double b) {
    for (int j = 0; j < order; ++j) {
      nodes.push_back(0.5 * (a + b) + 0.5 * (b - a) * x[j]);
      weights.push_back((2 / pi) * 0.5 * (b - a) * w[j]);
    }
  };
  double top = k0;
  while (top > kmin * (1 + 1e-12)) {
    const double bot = std::max(top / 10, kmin);
    panel(bot, top);
    top = bot;
  }
  panel(0.0, top);
}

}  // namespace

// ---------------------------------------------------------------------------

RieszOperator::RieszOperator(const ModelManifold& M, RieszMode mode, double k0, double tol)
    : M_(M), D_(rieszlab::laplacian(M)), grad_(rieszlab::gradient(M)), mode_(mode), k0_(k0) {
  if (!(k0 > 0)) throw std::invalid_argument("RieszOperator: k0 <= 0");
  if (mode == RieszMode::eigen) {
    dense_ = std::make_unique<DenseSpectrum>(dense_spectrum(D_));
  } else {
    MultiplierSpec spec;
    spec.k0 = k0;
    spec.tol = tol;
    mult_ = std::make_unique<MultiplierOperator>(D_, spec);
  }
}

Vec RieszOperator::inverse_sqrt(const Vec& f) const {
  if (f.size() != D_.dim) throw std::invalid_argument("RieszOperator: dimension mismatch");
  if (dense_) return dense_function_apply(*dense_, [](double x) { return 1.0 / std::sqrt(x); }, f);
  return mult_->apply(D_.restrict(f));
}

EdgeFunction RieszOperator::apply(const Vec& f) const { return grad_.apply(inverse_sqrt(f)); }

Vec RieszOperator::pointwise(const Vec& f) const { return grad_.pointwise_norm(apply(f)); }

EdgeFunction riesz_apply(const RieszOperator& T, const Vec& f) { return T.apply(f); }

double lp_norm(const Vec& g, const std::vector<double>& mu, double p) {
  if (!(p >= 1)) throw std::invalid_argument("lp_norm: p < 1");
  // scale by the maximum so that large p does not overflow
  const double m = g.cwiseAbs().maxCoeff();
  if (m == 0) return 0.0;
  double s = 0;
  for (int v = 0; v < g.size(); ++v) s += mu[v] * std::pow(std::abs(g[v]) / m, p);
  return m * std::pow(s, 1 / p);
}

// ---------------------------------------------------------------------------

double envelope_rate(const EndSpec& end) {
  return fit_resolvent_envelope(end, {0.05, 0.2, 0.5}, {0.5, 1, 2, 4, 8, 16}).rate;
}

Vec ramp_profile(const ModelManifold& M, int i, double k0, double c) {
  const Vec phi = cutoff_phi(M, i, 1.0, 2.0);
  const int n = M.ends[i - 1].n;
  Vec b = Vec::Zero(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v) {
    if (phi[v] == 0.0 || M.boundary[v]) continue;
    const double d = M.radial_distance(i, v);
    b[v] = std::pow(1 + d * d, -0.5 * (n - 1)) * -std::expm1(-c * k0 * d) * phi[v];
  }
  return b;
}

Vec harmonic_profile(const ModelManifold& M, int i, double tol) {
  const Vec phi = cutoff_phi(M, i, 1.0, 2.0);
  const auto F = laplacian(M, Boundary::free);
  const auto D = laplacian(M);
  Vec v = -(F.A * phi);
  for (int z = 0; z < M.num_vertices; ++z)
    if (M.boundary[z]) v[z] = 0.0;
  return phi + cg_solve(D, 0.0, v, tol);
}

Vec end_bump(const ModelManifold& M, int j, double c, double rho) {
  Vec t = Vec::Zero(M.num_vertices);
  const int n = M.ends[j - 1].n;
  for (int v = 0; v < M.num_vertices; ++v) {
    if (M.tag[v] != j || M.boundary[v]) continue;
    double s = 0;
    for (int d = 0; d < n; ++d) {
      const double x = M.h * M.coord(v)[d] - (d == 0 ? c : 0.0);
      s += x * x;
    }
    const double r = std::sqrt(s);
    if (r < rho) t[v] = std::pow(std::cos(0.5 * pi * r / rho), 2);
  }
  return t;
}

std::vector<Witness> base_witnesses(const RieszOperator& T, const WitnessOptions& opt) {
  const auto& M = T.manifold();
  std::vector<Witness> out;
  if (opt.deltas)
    for (int y : spread_sources(M)) out.push_back({"delta:" + std::to_string(y), delta(M.num_vertices, y)});
  if (opt.bumps)
    for (int j = 1; j <= M.num_ends(); ++j) {
      const double R = M.ends[j - 1].R * M.h;
      out.push_back({"bump:end" + std::to_string(j), end_bump(M, j, R / 4, std::max(2.0 * M.h, R / 8))});
    }
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int r = 0; r < opt.random_fields; ++r) {
    Vec f = Vec::Zero(M.num_vertices);
    for (int v = 0; v < M.num_vertices; ++v)
      if (!M.boundary[v]) f[v] = coin(rng) ? 1.0 : -1.0;
    out.push_back({"random:" + std::to_string(opt.seed) + ":" + std::to_string(r), f});
  }
  return out;
}

std::vector<Witness> ramp_witnesses(const RieszOperator& T, double p, const WitnessOptions& opt) {
  std::vector<Witness> out;
  if (!opt.ramps) return out;
  const auto& M = T.manifold();
  const double q = dual_exponent(p);
  for (int i = 1; i <= M.num_ends(); ++i) {
    const double c = opt.envelope_rate > 0 ? opt.envelope_rate : envelope_rate(M.ends[i - 1]);
    Vec b = ramp_profile(M, i, T.k0(), c);
    // extremal input |b|^{p'-1} sign b
    for (int v = 0; v < b.size(); ++v) b[v] = std::copysign(std::pow(std::abs(b[v]), q - 1), b[v]);
    std::ostringstream id;
    id << "ramp:end" << i << ":p" << p;
    out.push_back({id.str(), b});
  }
  return out;
}

std::vector<Witness> witness_family(const RieszOperator& T, double p, const WitnessOptions& opt) {
  auto out = base_witnesses(T, opt);
  for (auto& w : ramp_witnesses(T, p, opt)) out.push_back(std::move(w));
  return out;
}

namespace {

void record(NormReport& rep, const Witness& w, double ratio) {
  rep.ratios.push_back({w.id, ratio});
  if (ratio > rep.value || rep.witness_id.empty()) {
    rep.value = ratio;
    rep.witness_id = w.id;
    rep.witness = w.f;
  }
}

int model_radius(const ModelManifold& M) {
  int R = 0;
  for (const auto& e : M.ends) R = std::max(R, e.R);
  return R;
}

}  // namespace

NormReport lp_lower_bound(const RieszOperator& T, double p, const std::vector<Witness>& family) {
  if (!(p > 1)) throw std::invalid_argument("lp_lower_bound: p <= 1");
  const auto& mu = T.manifold().mu;
  NormReport rep;
  rep.p = p;
  rep.R = model_radius(T.manifold());
  for (const auto& w : family) {
    const double fn = lp_norm(w.f, mu, p);
    if (fn == 0) continue;
    record(rep, w, lp_norm(T.pointwise(w.f), mu, p) / fn);
  }
  return rep;
}

std::vector<NormReport> lp_lower_bounds(const RieszOperator& T, const std::vector<double>& ps,
                                        const WitnessOptions& opt) {
  const auto& mu = T.manifold().mu;
  std::vector<NormReport> reps(ps.size());
  for (size_t a = 0; a < ps.size(); ++a) {
    if (!(ps[a] > 1)) throw std::invalid_argument("lp_lower_bound: p <= 1");
    reps[a].p = ps[a];
    reps[a].R = model_radius(T.manifold());
  }
  for (const auto& w : base_witnesses(T, opt)) {
    const Vec g = T.pointwise(w.f);
    for (size_t a = 0; a < ps.size(); ++a) {
      const double fn = lp_norm(w.f, mu, ps[a]);
      if (fn > 0) record(reps[a], w, lp_norm(g, mu, ps[a]) / fn);
    }
  }
  for (size_t a = 0; a < ps.size(); ++a)
    for (const auto& w : ramp_witnesses(T, ps[a], opt)) {
      const double fn = lp_norm(w.f, mu, ps[a]);
      if (fn > 0) record(reps[a], w, lp_norm(T.pointwise(w.f), mu, ps[a]) / fn);
    }
  return reps;
}

// ---------------------------------------------------------------------------

double weak11_functional(const Vec& g, const std::vector<double>& mu) {
  std::vector<std::pair<double, double>> vals;
  for (int v = 0; v < g.size(); ++v)
    if (g[v] != 0) vals.push_back({std::abs(g[v]), mu[v]});
  std::sort(vals.begin(), vals.end(), [](auto& a, auto& b) { return a.first > b.first; });
  // lambda just below the m-th largest value sees the mass of the m largest
  double mass = 0, best = 0;
  for (size_t m = 0; m < vals.size(); ++m) {
    mass += vals[m].second;
    if (m + 1 < vals.size() && vals[m + 1].first == vals[m].first) continue;
    best = std::max(best, vals[m].first * mass);
  }
  return best;
}

Weak11Report weak11_test(const RieszOperator& T, const std::vector<int>& sources) {
  const auto& M = T.manifold();
  Weak11Report rep;
  for (int y : sources) {
    const double val = weak11_functional(T.pointwise(delta(M.num_vertices, y)), M.mu) / M.mu[y];
    rep.sources.push_back(y);
    rep.values.push_back(val);
    rep.max = std::max(rep.max, val);
  }
  return rep;
}

// ---------------------------------------------------------------------------

UnboundednessReport unboundedness_witness(const RieszOperator& T, int i, double p, int j) {
  const auto& M = T.manifold();
  const int l = M.num_ends();
  if (M.fragment || i < 1 || i > l) throw std::invalid_argument("unboundedness_witness: bad end");
  if (!(p > 1)) throw std::invalid_argument("unboundedness_witness: p <= 1");
  if (j == 0) j = l == 1 ? i : (i == 1 ? 2 : 1);
  if (j < 1 || j > l) throw std::invalid_argument("unboundedness_witness: bad bump end");
  UnboundednessReport rep;
  rep.i = i;
  rep.j = j;
  rep.p = p;
  const double q = dual_exponent(p);
  const auto& mu = M.mu;

  const double R = M.ends[j - 1].R * M.h;
  rep.tau = end_bump(M, j, R / 4, std::max(2.0 * M.h, R / 8));
  const Vec Phi = harmonic_profile(M, i);
  const Vec gPhi = T.gradient().pointwise_norm(T.gradient().apply(Phi));
  rep.a = rep.tau.cwiseProduct(gPhi);
  rep.a_norm = lp_norm(rep.a, mu, p);
  rep.a_normalised = rep.a_norm / lp_norm(rep.tau, mu, p);
  rep.vanishes = rep.a_normalised <= 1e-6;

  rep.b = ramp_profile(M, i, T.k0(), envelope_rate(M.ends[i - 1]));
  rep.b_dual_norm = lp_norm(rep.b, mu, q);
  rep.product = rep.a_norm * rep.b_dual_norm;
  rep.f = rep.b;
  for (int v = 0; v < M.num_vertices; ++v) rep.f[v] = std::copysign(std::pow(std::abs(rep.b[v]), q - 1), rep.b[v]);
  const double fn = lp_norm(rep.f, mu, p);
  double pair = 0;
  for (int v = 0; v < M.num_vertices; ++v) pair += mu[v] * rep.b[v] * rep.f[v];
  rep.rank_one_ratio = rep.a_norm * std::abs(pair) / fn;

  const Vec g = T.pointwise(rep.f);
  rep.realized_ratio = lp_norm(g, mu, p) / fn;
  Vec gt = Vec::Zero(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v)
    if (rep.tau[v] > 0) gt[v] = g[v];
  rep.realized_on_tau = lp_norm(gt, mu, p) / fn;
  Vec go = Vec::Zero(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v)
    if (M.tag[v] != kJunctionTag && M.tag[v] != i) go[v] = g[v];
  rep.realized_off_end = lp_norm(go, mu, p) / fn;
  return rep;
}

// ---------------------------------------------------------------------------

TermDiagnostics term_diagnostics(const ParametrixModel& P, double k0, double dmin, double dmax, int gl_order) {
  const auto& M = P.manifold();
  const auto& D = P.laplacian();
  const auto grad = gradient(M);
  TermDiagnostics td;
  td.k0 = k0;
  k_panels(k0, 1e-3, gl_order, td.nodes, td.weights);
  const int nk = int(td.nodes.size());
  const int l = P.num_ends();

  // G1: fragment kernel against the fragment origin
  for (int i = 1; i <= l; ++i) {
    const auto& F = P.fragment(i);
    const auto& FM = F.graph();
    const int o = P.fragment_origin(i);
    Vec K = Vec::Zero(FM.num_vertices);
    const Vec e = delta(FM.num_vertices, o);
    for (int s = 0; s < nk; ++s) K += td.weights[s] * F.solve(td.nodes[s], e);
    const auto fg = gradient(FM);
    const Vec g = fg.pointwise_norm(fg.apply(K));
    double near = 0;
    for (int v = 0; v < FM.num_vertices; ++v)
      if (FM.radius(v) <= FM.h + 1e-12) near += FM.mu[v] * g[v];
    td.G1_near_mass.push_back(near);
    td.G1_far.push_back(fit_decay(FM, 1, g, dmin, dmax));
  }

  // G2 at the junction centre
  {
    Vec K = Vec::Zero(M.num_vertices);
    for (int s = 0; s < nk; ++s) K += td.weights[s] * InteriorParametrix(P, td.nodes[s]).apply(delta(M.num_vertices, 0));
    td.G2_mass = K.cwiseAbs().sum();
  }

  // G3 with z' on the first layer of end i
  for (int i = 1; i <= l; ++i) {
    std::vector<int> x(M.ends[i - 1].n, 0), y(M.ends[i - 1].factor.size(), 0);
    x[0] = 3;
    const int zp = vertex_at(M, i, x, y);
    const Eigen::MatrixXd Ro = P.fragment(i).entries(td.nodes, {{P.fragment_origin(i), P.fragment_vertex(i, zp)}});
    Eigen::MatrixXd W(1, nk);
    std::vector<double> shifts;
    for (int s = 0; s < nk; ++s) {
      W(0, s) = td.weights[s] * Ro(s, 0);
      shifts.push_back(td.nodes[s] * td.nodes[s]);
    }
    const Vec K = multishift_solve(D, P.v(i), shifts, W, P.config().solve_tol)[0];
    const Vec g = grad.pointwise_norm(grad.apply(K));
    std::vector<DecayFit> fits;
    for (int j = 1; j <= l; ++j) fits.push_back(fit_decay(M, j, g, dmin, dmax, j, 3 * M.h));
    td.G3_left.push_back(fits);
  }

  // GS along rays of every end, z at the junction centre
  std::vector<std::vector<int>> rays(l);
  std::vector<std::vector<double>> dists(l);
  std::vector<Vec> acc(l);
  for (int j = 1; j <= l; ++j) {
    const auto& E = M.ends[j - 1];
    for (int r = int(std::ceil(dmin / M.h)); r <= int(std::floor(dmax / M.h)) && r < E.R; ++r) {
      std::vector<int> x(E.n, 0), y(E.factor.size(), 0);
      x[0] = r;
      rays[j - 1].push_back(vertex_at(M, j, x, y));
      dists[j - 1].push_back(M.radial_distance(j, rays[j - 1].back()));
    }
    acc[j - 1] = Vec::Zero(rays[j - 1].size());
  }
  P.precompute_u(td.nodes);
  for (int s = 0; s < nk; ++s) {
    ParametrixBundle B(P, td.nodes[s]);
    const Eigen::MatrixXd Gc = B.G_rows({0});
    // |GS| under the integral: the bound is on the absolute kernel, and GS(k) changes sign in k
    for (int j = 1; j <= l; ++j)
      acc[j - 1] += td.weights[s] * (Gc * B.S_columns(rays[j - 1])).row(0).transpose().cwiseAbs();
  }
  for (int j = 1; j <= l; ++j) {
    std::vector<double> y(acc[j - 1].size());
    for (size_t c = 0; c < y.size(); ++c) y[c] = std::abs(acc[j - 1][c]);
    td.GS_right.push_back(fit_loglog(dists[j - 1], y));
  }

  // G4 from the null basis of Id + E(0)
  ParametrixBundle B0(P, 0.0);
  const auto corr = finite_rank_correction(P, B0.block(), P.config().tol_rank);
  td.null_basis = int(corr.omega.size());
  if (!corr.empty()) {
    Eigen::MatrixXd Rho(M.num_vertices, corr.rho.size()), Om(corr.omega[0].size(), corr.omega.size());
    for (size_t a = 0; a < corr.rho.size(); ++a) {
      Rho.col(a) = corr.rho[a];
      Om.col(a) = corr.omega[a];
    }
    td.G4_rank = int(Eigen::FullPivLU<Eigen::MatrixXd>(Rho * Om.transpose()).rank());
  }
  return td;
}

// ---------------------------------------------------------------------------

double routed_distance(const ModelManifold& M, int y, int v) {
  const int ty = M.tag[y], tv = M.tag[v];
  if (ty == kJunctionTag && tv == kJunctionTag) return y == v ? 0.0 : M.h;
  if (ty == kJunctionTag) return routed_distance(M, v, y);
  // y lies on end ty; radial_distance routes through hub ty
  double d = M.radial_distance(ty, v) + M.radius(y);
  if (tv == ty) {
    double s = 0;
    for (int a = 0; a < M.ends[ty - 1].n; ++a) {
      const double x = double(M.coord(v)[a]) - M.coord(y)[a];
      s += x * x;
    }
    d = std::min(d, M.h * std::sqrt(s));
  }
  return d;
}

HighEnergyReport high_energy_schur_test(const ModelManifold& M, double k0, const std::vector<int>& sources,
                                        const std::vector<double>& rs, double r_star, double r_cone) {
  const auto D = laplacian(M);
  const auto grad = gradient(M);
  HighEnergyReport rep;
  rep.k0 = k0;
  rep.sources = sources;
  rep.rs = rs;
  rep.r_cone = r_cone;
  const int N = M.num_vertices;
  std::vector<Vec> dist;
  for (int y : sources) {
    Vec d(N);
    for (int v = 0; v < N; ++v) d[v] = routed_distance(M, y, v);
    dist.push_back(std::move(d));
  }
  rep.annulus_mass.assign(sources.size(), {});
  for (double r : rs) {
    WaveSplit W(D, r, k0);
    for (size_t a = 0; a < sources.size(); ++a) {
      const Vec far = W.apply(delta(N, sources[a])).second;
      const Vec g = grad.pointwise_norm(grad.apply(far));
      double m = 0;
      for (int v = 0; v < N; ++v)
        if (dist[a][v] >= r && dist[a][v] < 2 * r) m += M.mu[v] * g[v] * g[v];
      rep.annulus_mass[a].push_back(m);
    }
  }
  for (size_t a = 0; a < sources.size(); ++a) {
    std::vector<double> lm;
    for (double m : rep.annulus_mass[a]) lm.push_back(std::log(std::max(m, 1e-300)));
    // least squares slope of log mass against r
    double sr = 0, sl = 0, srr = 0, srl = 0;
    const double n = double(rs.size());
    for (size_t b = 0; b < rs.size(); ++b) {
      sr += rs[b];
      sl += lm[b];
      srr += rs[b] * rs[b];
      srl += rs[b] * lm[b];
    }
    rep.rate.push_back(-(n * srl - sr * sl) / (n * srr - sr * sr));
  }

  WaveSplit Ws(D, r_star, k0);
  std::vector<Vec> far;
  for (int y : sources) {
    far.push_back(Ws.apply(delta(N, y)).second);
    const Vec g = grad.pointwise_norm(grad.apply(far.back()));
    rep.column_l1.push_back(g.dot(Eigen::Map<const Vec>(M.mu.data(), N)));
    // G'' is a function of Delta, so row y is column y
    rep.row_l1.push_back(far.back().cwiseAbs().dot(Eigen::Map<const Vec>(M.mu.data(), N)));
  }
  double big = 0;
  for (const auto& f : far) big = std::max(big, f.cwiseAbs().maxCoeff());
  for (size_t a = 0; a < sources.size(); ++a)
    for (size_t b = 0; b < sources.size(); ++b)
      rep.symmetry_defect =
          std::max(rep.symmetry_defect, std::abs(far[a][sources[b]] - far[b][sources[a]]) / std::max(big, 1e-300));

  WaveSplit Wc(D, r_cone, k0);
  for (size_t a = 0; a < sources.size(); ++a) {
    const Vec near = Wc.apply(delta(N, sources[a])).first;
    double tot = 0, out = 0;
    for (int v = 0; v < N; ++v) {
      tot += M.mu[v] * std::abs(near[v]);
      if (dist[a][v] > 1.3 * r_cone) out += M.mu[v] * std::abs(near[v]);
    }
    rep.cone_leakage.push_back(out / std::max(tot, 1e-300));
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::string classify_slope(double slope, double lo, double hi) {
  if (slope <= lo) return "bounded";
  if (slope >= hi) return "unbounded";
  return "inconclusive";
}

ScalingTable scaling_study(const std::vector<ScalingModel>& models, const std::vector<double>& ps,
                           const std::vector<int>& Rs, const ScalingOptions& opt) {
  if (models.empty() || ps.empty() || Rs.empty()) throw std::invalid_argument("scaling_study: empty list");
  for (double p : ps)
    if (!(p > 1)) throw std::invalid_argument("scaling_study: p <= 1");
  struct Cell {
    size_t m = 0;
    int R = 0;
    std::vector<NormReport> reps;
    bool complete = false;
  };
  std::vector<Cell> cells;
  for (size_t m = 0; m < models.size(); ++m) {
    if (models[m].ends.empty()) throw std::invalid_argument("scaling_study: model without ends");
    for (int R : Rs) cells.push_back({m, R, {}, false});
  }
  auto run = [&](Cell& c) {
    std::vector<EndSpec> ends = models[c.m].ends;
    for (auto& e : ends) {
      e.R = c.R;
      validate(e);
    }
    if (vertex_count_bound(ends) > opt.max_vertices) return;
    std::vector<ModelManifold> frags;
    for (const auto& e : ends) frags.push_back(build_end(e));
    const auto M = connect_sum(frags);
    RieszOperator T(M, RieszMode::quadrature, opt.k0);
    c.reps = lp_lower_bounds(T, ps, opt.witnesses);
    c.complete = true;
  };
  // cells are independent; results land in their own slot, so the merge is deterministic
  const int jobs = std::max(1, std::min<int>(opt.jobs, int(cells.size())));
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t c; (c = next++) < cells.size();) run(cells[c]);
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ScalingTable table;
  for (size_t m = 0; m < models.size(); ++m) {
    int nmin = models[m].ends[0].n;
    for (const auto& e : models[m].ends) nmin = std::min(nmin, e.n);
    for (size_t a = 0; a < ps.size(); ++a) {
      std::vector<double> lr, lv, llr;
      std::vector<ScalingRow> rows;
      for (const auto& c : cells) {
        if (c.m != m) continue;
        ScalingRow row;
        row.model_id = models[m].id;
        row.p = ps[a];
        row.R = c.R;
        row.complete = c.complete;
        if (c.complete) {
          row.lower_bound = c.reps[a].value;
          row.witness_id = c.reps[a].witness_id;
          lr.push_back(std::log(double(c.R)));
          llr.push_back(std::log(std::log(double(c.R))));
          lv.push_back(std::log(row.lower_bound));
        } else {
          row.lower_bound = std::numeric_limits<double>::quiet_NaN();
          table.complete = false;
        }
        rows.push_back(row);
      }
      double slope = std::numeric_limits<double>::quiet_NaN(), tl = slope;
      if (lr.size() >= 2) {
        std::vector<double> v(lv.size());
        for (size_t b = 0; b < lv.size(); ++b) v[b] = std::exp(lv[b]);
        std::vector<double> R(lr.size()), LR(llr.size());
        for (size_t b = 0; b < lr.size(); ++b) {
          R[b] = std::exp(lr[b]);
          LR[b] = std::exp(llr[b]);
        }
        slope = fit_loglog(R, v).slope;
        tl = fit_loglog(LR, v).slope;
      }
      std::string cls = "incomplete";
      if (lr.size() >= 2) {
        // at p = min n_i the divergence is logarithmic; a single end has no such threshold
        if (models[m].ends.size() >= 2 && std::abs(ps[a] - nmin) < 1e-12) cls = "inconclusive-by-design";
        else cls = classify_slope(slope);
      }
      for (auto& r : rows) {
        r.slope = slope;
        r.triple_log = tl;
        r.classification = cls;
        table.rows.push_back(r);
      }
    }
  }
  return table;
}

std::string scaling_csv(const ScalingTable& t) {
  std::ostringstream os;
  os.precision(10);
  os << "model_id,p,R,lower_bound,witness_id,slope,classification,triple_log,complete\n";
  for (const auto& r : t.rows)
    os << r.model_id << ',' << r.p << ',' << r.R << ',' << r.lower_bound << ',' << r.witness_id << ',' << r.slope << ','
       << r.classification << ',' << r.triple_log << ',' << (r.complete ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace rieszlab
