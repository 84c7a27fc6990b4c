#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "rieszlab/parametrix.hpp"

using namespace rieszlab;

namespace {

const ModelManifold& sym_model() {
  static const ModelManifold M = connect_sum({build_end({3, {}, 8}), build_end({3, {}, 8})});
  return M;
}

const ParametrixModel& sym_parametrix() {
  static const ParametrixModel P(sym_model());
  return P;
}

Vec delta(int n, int y) {
  Vec e = Vec::Zero(n);
  e[y] = 1.0;
  return e;
}

// end-swap automorphism of a symmetric two-end model
int swap_vertex(const ModelManifold& M, int z) {
  if (M.tag[z] == kJunctionTag) {
    if (z == M.base_points[0]) return M.base_points[1];
    if (z == M.base_points[1]) return M.base_points[0];
    return z;
  }
  const auto& E = M.ends[M.tag[z] - 1];
  std::vector<int> x(M.coord(z), M.coord(z) + E.n);
  std::vector<int> y(M.coord(z) + E.n, M.coord(z) + E.n + E.factor.size());
  return vertex_at(M, 3 - M.tag[z], x, y);
}

Vec swapped(const ModelManifold& M, const Vec& f) {
  Vec g(f.size());
  for (int z = 0; z < M.num_vertices; ++z) g[swap_vertex(M, z)] = f[z];
  return g;
}

std::vector<int> interior_vertices(const ModelManifold& M) {
  std::vector<int> out;
  for (int z = 0; z < M.num_vertices; ++z)
    if (!M.boundary[z]) out.push_back(z);
  return out;
}

}  // namespace

TEST_CASE("fit_loglog recovers a power law") {
  std::vector<double> d, y;
  for (int r = 4; r <= 10; ++r) {
    d.push_back(r);
    y.push_back(3.0 * std::pow(r, -1.7));
  }
  const auto f = fit_loglog(d, y);
  CHECK(f.slope == doctest::Approx(-1.7).epsilon(1e-12));
  CHECK(std::exp(f.intercept) == doctest::Approx(3.0).epsilon(1e-12));
  const auto g = geometric_grid(1e-3, 1.0, 16);
  CHECK(g.size() == 49);
  CHECK(g.front() == 1e-3);
  CHECK(g.back() == 1.0);
  CHECK(g[16] == doctest::Approx(1e-2).epsilon(1e-12));
}

TEST_CASE("lemma uv: residual, symmetry, decay and k-regularity") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  const std::vector<double> ks{0.0, 0.02, 0.05, 0.1};
  const auto s1 = solve_lemma_uv(M, P.v(1), ks);
  const auto s2 = solve_lemma_uv(M, P.v(2), ks);
  for (double r : s1.residual) CHECK(r < 1e-9);
  // the swap maps u_1 to u_2, so v_1 - v_2 has an antisymmetric solution
  CHECK((swapped(M, s1.u[0]) - s2.u[0]).lpNorm<Eigen::Infinity>() < 1e-9);
  const auto anti = solve_lemma_uv(M, P.v(1) - P.v(2), {0.0});
  CHECK((swapped(M, anti.u[0]) + anti.u[0]).lpNorm<Eigen::Infinity>() < 1e-9);
  // v is supported on the collar
  for (int z = 0; z < M.num_vertices; ++z)
    if (P.v(1)[z] != 0.0) CHECK(M.dist[0][z] <= 2.0);
  for (int i = 1; i <= 2; ++i) {
    CHECK(fit_decay(M, i, s1.u[0], 2.0, 6.0).slope < -0.8);
    CHECK(fit_decay(M, i, s1.grad[0], 2.0, 6.0).slope < -1.6);
  }
  // |u(k) - u(0)| / k stays bounded as k -> 0
  for (size_t a = 1; a < ks.size(); ++a) {
    CHECK(s1.lipschitz_u[a] < 1.0);
    CHECK(s1.lipschitz_grad[a] < 1.0);
  }
}

TEST_CASE("harmonic profiles") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  const Vec p1 = harmonic_profile(P, 1), p2 = harmonic_profile(P, 2);
  const Vec r = laplacian(M, Boundary::free).apply(p1);
  for (int z = 0; z < M.num_vertices; ++z)
    if (!M.boundary[z]) CHECK(std::abs(r[z]) < 1e-9);
  CHECK(p1.minCoeff() > -1e-9);
  CHECK(p1.maxCoeff() < 1 + 1e-9);
  for (int z = 0; z < M.num_vertices; ++z)
    if (!M.boundary[z]) CHECK(p1[z] + p2[z] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p1[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(p1[M.base_points[0]] > 0.5);

  const auto S = connect_sum({build_end({3, {}, 6})});
  const ParametrixModel Q(S);
  const Vec one = harmonic_profile(Q, 1);
  for (int z = 0; z < S.num_vertices; ++z)
    if (!S.boundary[z]) CHECK(one[z] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("interior parametrix") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  const double k = 0.5;
  const auto G = interior_parametrix(P, k);
  const Vec col = G.apply(delta(M.num_vertices, 0));
  const Vec ref = resolvent_solve(P.laplacian(), k, delta(M.num_vertices, 0), 1e-13);
  const auto d = distance_field(M, 0);
  for (int z = 0; z < M.num_vertices; ++z)
    if (d[z] <= 2) CHECK(std::abs(col[z] - ref[z]) <= 0.1 * std::abs(ref[z]));
  // support and symmetry
  const int y = P.cap()[P.cap().size() / 2];
  const Vec cy = G.apply(delta(M.num_vertices, y));
  const auto dy = distance_field(M, y);
  for (int z = 0; z < M.num_vertices; ++z)
    if (dy[z] > 4 + 4) CHECK(cy[z] == 0.0);
  for (int z : P.cap()) CHECK(cy[z] == doctest::Approx(G.apply(delta(M.num_vertices, z))[y]).epsilon(1e-12));
}

TEST_CASE("parametrix parts") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  const ParametrixBundle B(P, 0.1);
  const auto far = parametrix_probes(M, 5);
  for (int y : far) {
    const auto parts = B.apply_parts(delta(M.num_vertices, y));
    // G1 lives on the diagonal ends
    for (int z = 0; z < M.num_vertices; ++z)
      if (parts[0][z] != 0.0) CHECK(M.tag[z] == M.tag[y]);
    // G3 columns are multiples of u_i
    if (M.tag[y] != kJunctionTag && P.phi(M.tag[y])[y] == 1.0) {
      const Vec& u = P.u(0.1)[M.tag[y] - 1];
      const double c = parts[2].dot(u) / u.squaredNorm();
      CHECK((parts[2] - c * u).norm() <= 1e-14 * parts[2].norm());
      CHECK(c != 0.0);
    }
  }
  // inputs on the cap see only G_int
  const int y = P.cap()[3];
  const Vec g = B.apply_G(delta(M.num_vertices, y));
  CHECK((g - interior_parametrix(P, 0.1).apply(delta(M.num_vertices, y))).norm() == 0.0);
}

TEST_CASE("error term: closed forms, support and Hilbert-Schmidt norms") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  const ParametrixBundle B(P, 0.1);
  std::vector<uint8_t> in_chi(M.num_vertices, 0);
  for (int z : P.chi()) in_chi[z] = 1;
  for (int y : parametrix_probes(M, 8)) {
    const Vec direct = B.E_direct_column(y);
    CHECK((direct - error_term(B, y)).norm() < 1e-12);
    for (int z = 0; z < M.num_vertices; ++z)
      if (!in_chi[z]) CHECK(std::abs(direct[z]) < 1e-12);
  }
  // explicit HS norms over every column
  const auto all = interior_vertices(M);
  const Eigen::MatrixXd E = B.E_columns(all);
  CHECK(B.hs_norm_E() == doctest::Approx(E.norm()).epsilon(1e-9));
  const Eigen::MatrixXd S = B.S_columns(all);
  CHECK(B.hs_norm_S() == doctest::Approx(S.norm()).epsilon(1e-9));

  for (auto [k1, k2] : {std::pair{0.1, 0.12}, std::pair{0.01, 0.0102}}) {
    const ParametrixBundle a(P, k1), b(P, k2);
    const double explicit_d = (a.E_columns(all) - b.E_columns(all)).norm();
    CHECK(hs_distance_E(a, b) == doctest::Approx(explicit_d).epsilon(1e-4));
  }
  // Lipschitz in k across a grid
  const std::vector<double> ks{0.02, 0.04, 0.08, 0.16};
  std::vector<std::unique_ptr<ParametrixBundle>> bs;
  for (double k : ks) bs.push_back(std::make_unique<ParametrixBundle>(P, k));
  double lo = 1e300, hi = 0;
  for (size_t a = 0; a + 1 < ks.size(); ++a) {
    const double q = hs_distance_E(*bs[a], *bs[a + 1]) / (ks[a + 1] - ks[a]);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  CHECK(hi < 10.0);
  CHECK(hi / lo < 10.0);
}

TEST_CASE("inversion and the resolvent decomposition") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  for (double k : {0.0, 0.05, 0.3}) {
    const ParametrixBundle B(P, k);
    const auto probes = parametrix_probes(M, 6);
    const Eigen::MatrixXd E = B.E_columns(probes), S = B.S_columns(probes);
    // (Id + E)(Id + S) = Id on the probe columns, rows in chi
    const Eigen::MatrixXd lhs = S + E + B.E_block() * S;
    CHECK(lhs.norm() < 1e-10);
    CHECK((invert_error(B.block(), E) - S).norm() < 1e-10);
    const auto rep = verify_resolvent_decomposition(B, probes);
    CHECK(rep.max_relerr < 1e-10);
    CHECK(rep.max_direct_diff < 1e-8);
    CHECK(rep.sigma_min > 0.5);
  }
}

TEST_CASE("Neumann series for small E") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  Eigen::MatrixXd E(40, 40);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) E(i, j) = g(rng);
  E *= 0.01 / E.norm();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(40, 40);
  const Eigen::MatrixXd S = invert_error(I + E, E);
  CHECK((S - (-E + E * E)).norm() < 4 * std::pow(E.norm(), 3));
}

TEST_CASE("finite rank correction") {
  const auto& M = sym_model();
  const auto& P = sym_parametrix();
  const ParametrixBundle B0(P, 0.0);
  const Eigen::MatrixXd A = B0.block();
  const auto generic = finite_rank_correction(P, A, 1e-6);
  CHECK(generic.empty());
  CHECK(generic.sigma_after == doctest::Approx(B0.sigma_min()).epsilon(1e-8));

  // injected degeneracy E' = E - (Id + E) P with P a rank-one projector on chi
  const int n = int(P.chi().size());
  Vec p = Vec::Zero(n);
  for (int a = 0; a < n; a += 7) p[a] = 1.0 + 0.1 * (a % 5);
  p.normalize();
  const Eigen::MatrixXd Ainj = A - A * (p * p.transpose());
  const auto c = finite_rank_correction(P, Ainj, 1e-6);
  REQUIRE(c.omega.size() == 1);
  CHECK(c.sigma_before < 1e-10);
  CHECK(c.sigma_after >= 1e-6);
  CHECK(std::abs(std::abs(c.omega[0].dot(p)) - 1.0) < 1e-8);
  for (int z = 0; z < M.num_vertices; ++z)
    if (c.rho[0][z] != 0.0) CHECK(P.chi_index(z) >= 0);

  // attaching a correction keeps the decomposition exact
  ParametrixBundle B(P, 0.0);
  B.set_correction(c);
  const auto probes = parametrix_probes(M, 4);
  for (int y : probes) CHECK((B.E_direct_column(y) - error_term(B, y)).norm() < 1e-11);
  CHECK(verify_resolvent_decomposition(B, probes).max_relerr < 1e-10);
  CHECK(B.hs_norm_E() == doctest::Approx(B.E_columns(interior_vertices(M)).norm()).epsilon(1e-9));
}

TEST_CASE("choose_k0") {
  const auto grid = geometric_grid(1e-3, 1.0, 16);
  const auto exact = choose_k0([](double) { return 1.0; }, grid, 0.5);
  CHECK(exact.k0 == 1.0);
  auto sigma = [](double k) { return 1.0 - k; };
  const auto a = choose_k0(sigma, grid, 0.5);
  const auto b = choose_k0(sigma, grid, 0.5);
  CHECK(a.k0 == b.k0);
  CHECK(a.sigma == b.sigma);
  const auto fine = choose_k0(sigma, geometric_grid(1e-3, 1.0, 32), 0.5);
  const double step = std::pow(10.0, 1.0 / 16);
  CHECK(std::max(a.k0, fine.k0) / std::min(a.k0, fine.k0) <= step);
  CHECK(a.k0 == doctest::Approx(0.5).epsilon(0.02));
  CHECK_THROWS_AS(choose_k0([](double) { return 0.1; }, grid, 0.5), SolverError);

  const auto& P = sym_parametrix();
  const auto c = choose_k0(P, geometric_grid(1e-2, 1.0, 2));
  CHECK(c.k0 == 1.0);
}

TEST_CASE("weight exponents on a small model") {
  const auto& P = sym_parametrix();
  const ParametrixBundle B(P, 0.0);
  const auto w = weight_fits(B, 3.0, 7.0);
  for (int j = 0; j < 2; ++j) {
    CHECK(w.E_right[j].points >= 4);
    CHECK(w.E_right[j].slope < -1.6);
    CHECK(w.GS_left[j].slope < -0.6);
    CHECK(w.G3_over_GS[j] > 1.0);
  }
}
