#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/differentiation/autodiff.hpp>

#include "rieszlab/fragment.hpp"
#include "rieszlab/special_fn.hpp"
#include "rieszlab/spectral.hpp"

using namespace rieszlab;
constexpr double pi = std::numbers::pi;

namespace {

Vec random_field(const SparseOperator& D, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  Vec f(D.dim);
  for (int i = 0; i < D.dim; ++i) f[i] = g(rng);
  return D.restrict(f);
}

double relerr(const Vec& a, const Vec& b) { return (a - b).norm() / b.norm(); }

Vec delta(int n, int y) {
  Vec e = Vec::Zero(n);
  e[y] = 1.0;
  return e;
}

ModelManifold small_two_end() { return connect_sum({build_end({3, {}, 4}), build_end({3, {3}, 4})}); }

}  // namespace

TEST_CASE("laplacian is grad* grad") {
  auto M = connect_sum({build_end({3, {}, 5}), build_end({4, {}, 4})});
  for (auto bc : {Boundary::dirichlet, Boundary::free}) {
    auto D = laplacian(M, bc);
    auto G = gradient(M, bc);
    for (unsigned s = 0; s < 50; ++s) {
      Vec f = random_field(D, s);
      const double lhs = D.apply(f).dot(f);
      const double rhs = G.apply(f).squaredNorm();
      CHECK(std::abs(lhs - rhs) <= 1e-12 * rhs);
    }
    Vec f = random_field(D, 99), g = random_field(D, 100);
    CHECK(std::abs(G.apply(f).dot(G.apply(g)) - D.apply(f).dot(g)) <= 1e-12 * D.apply(f).norm() * g.norm());
    CHECK((G.adjoint(G.apply(f)) - D.apply(f)).norm() <= 1e-12 * D.apply(f).norm());
  }
  auto F = laplacian(M, Boundary::free);
  CHECK(F.apply(Vec::Ones(M.num_vertices)).norm() < 1e-12);
  // gradient of a constant vanishes on the junction
  auto G = gradient(M, Boundary::free);
  auto g = G.pointwise_norm(G.apply(Vec::Ones(M.num_vertices)));
  for (int v = 0; v < M.num_vertices; ++v)
    if (M.tag[v] == 0) CHECK(g[v] == 0.0);
}

TEST_CASE("Dirichlet ground state") {
  // dense oracle on a small cube against the Lanczos estimate and the closed form
  auto F = build_end({3, {}, 5});
  auto D = laplacian(F);
  auto S = dense_spectrum(D);
  const double exact = 3 * (2 - 2 * std::cos(pi / 10));
  CHECK(S.values[0] == doctest::Approx(exact).epsilon(1e-10));
  CHECK(estimate_spectrum(D, 400, 1e-8).lo == doctest::Approx(S.values[0]).epsilon(1e-6));
  CHECK(estimate_spectrum(D, 400, 1e-8).hi == doctest::Approx(S.values[S.values.size() - 1]).epsilon(1e-6));
  CHECK(S.values[0] > 0);
  std::vector<double> lr, ll;
  for (int R : {8, 12, 16}) {
    auto E = build_end({3, {}, R});
    auto DE = laplacian(E);
    const double lam = estimate_spectrum(DE, 600, 1e-9).lo;
    CHECK(lam == doctest::Approx(3 * (2 - 2 * std::cos(pi / (2 * R)))).epsilon(1e-4));
    lr.push_back(std::log(R));
    ll.push_back(std::log(lam));
  }
  const double slope = (ll[2] - ll[0]) / (lr[2] - lr[0]);
  CHECK(std::abs(slope + 2) < 0.3);
}

TEST_CASE("heat_apply") {
  auto M = small_two_end();
  auto D = laplacian(M);
  Vec f = random_field(D, 3);
  CHECK((heat_apply(D, 0.0, f) - f).norm() == 0.0);
  CHECK_THROWS_AS(heat_apply(D, -1.0, f), DomainError);
  auto S = dense_spectrum(D);
  for (double t : {0.1, 1.0, 7.5}) {
    Vec ref = dense_function_apply(S, [t](double x) { return std::exp(-t * x); }, f);
    CHECK(relerr(heat_apply(D, t, f), ref) <= 1e-8);
  }
  // sub-Markov
  Vec g = f.cwiseAbs();
  for (double t : {0.5, 3.0, 20.0}) {
    Vec h = heat_apply(D, t, g);
    CHECK(h.minCoeff() >= -1e-10);
    CHECK(h.maxCoeff() <= g.maxCoeff() * (1 + 1e-10));
    CHECK(h.sum() <= g.sum() * (1 + 1e-10));
  }
}

TEST_CASE("resolvent_solve") {
  auto M = small_two_end();
  auto D = laplacian(M);
  Vec f = random_field(D, 5), g = random_field(D, 6);
  const double k = std::sqrt(1000 * D.upper_bound);
  CHECK(relerr(resolvent_solve(D, k, f), f / (k * k)) <= 1e-3);
  Vec uf = resolvent_solve(D, 0.3, f, 1e-12), ug = resolvent_solve(D, 0.3, g, 1e-12);
  CHECK(std::abs(uf.dot(g) - f.dot(ug)) <= 1e-9 * std::abs(uf.dot(g)));
  SolveStats st;
  Vec u = resolvent_solve(D, 0.0, f, 1e-9, nullptr, &st);
  CHECK((D.apply(u) - f).norm() <= 1e-9 * f.norm());
  // warm start from a nearby k converges in fewer steps
  SolveStats st2;
  resolvent_solve(D, 0.01, f, 1e-9, &u, &st2);
  CHECK(st2.iterations < st.iterations);
  CHECK_THROWS(resolvent_solve(laplacian(M, Boundary::free), 0.0, f));
  // positivity and monotonicity in k
  const int y = spread_sources(M)[1];
  Vec a = resolvent_solve(D, 0.5, delta(M.num_vertices, y), 1e-12);
  Vec b = resolvent_solve(D, 0.2, delta(M.num_vertices, y), 1e-12);
  CHECK(a.minCoeff() >= -1e-12);
  CHECK((b - a).minCoeff() >= -1e-12);
}

TEST_CASE("lattice Green function against the continuum kernel") {
  auto F = build_end({3, {}, 16});
  auto D = laplacian(F);
  const int y = F.base_points[0];
  Vec u = resolvent_solve(D, 0.2, delta(F.num_vertices, y), 1e-11);
  EndSpec e{3, {}, 16};
  for (int d = 3; d <= 8; ++d) {
    const double ref = product_resolvent_kernel(e, 0.2, {0, 0, 0}, {double(d), 0, 0}, {}, {});
    CHECK(std::abs(u[vertex_at(F, 1, {d, 0, 0})] / ref - 1) < 0.15);
    CHECK(std::abs(u[vertex_at(F, 1, {0, d, 0})] / ref - 1) < 0.15);
  }
}

TEST_CASE("multishift solve matches independent CG") {
  auto M = small_two_end();
  auto D = laplacian(M);
  Vec f = random_field(D, 8);
  std::vector<double> shifts{0.0, 0.01, 0.3, 2.0};
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(4, 4);
  auto xs = multishift_solve(D, f, shifts, W, 1e-12);
  for (int s = 0; s < 4; ++s) CHECK(relerr(xs[s], cg_solve(D, shifts[s], f, 1e-13)) <= 1e-9);
  Eigen::MatrixXd C(1, 4);
  C << 1, -2, 0.5, 3;
  auto comb = multishift_solve(D, f, shifts, C, 1e-12)[0];
  Vec ref = xs[0] - 2 * xs[1] + 0.5 * xs[2] + 3 * xs[3];
  CHECK(relerr(comb, ref) <= 1e-10);
}

TEST_CASE("chebyshev_fit") {
  auto s = chebyshev_fit([](double x) { return std::exp(-x); }, 0.0, 4.0, 1e-13);
  for (double x = 0; x <= 4; x += 0.37) CHECK(std::abs(s.eval(x) - std::exp(-x)) < 1e-12);
  CHECK(s.degree() < 40);
  auto g = chebyshev_fit([](double x) { return F_greater_sq(x, 0.5); }, 0.0, 32.0, 1e-11);
  for (double x = 0; x <= 32; x += 0.1) CHECK(std::abs(g.eval(x) - F_greater_sq(x, 0.5)) < 1e-9);
}

TEST_CASE("multiplier split") {
  CHECK(F_greater(0.7, 0.7) == doctest::Approx(1 / 1.4).epsilon(1e-15));
  for (double k0 : {0.1, 0.5, 2.0})
    for (double lam : {1e-3, 0.1, 1.0, 30.0}) CHECK(std::abs(F_less(lam, k0) + F_greater(lam, k0) - 1 / lam) <= 1e-12 / lam);
  // quadrature reproduces F_< for lambda above the floor
  auto q = low_energy_quadrature(0.5, 0.05);
  for (double lam : {0.05, 0.2, 1.0, 9.0}) {
    double s = 0;
    for (size_t j = 0; j < q.nodes.size(); ++j) s += q.weights[j] / (lam * lam + q.nodes[j] * q.nodes[j]);
    CHECK(s == doctest::Approx(F_less(lam, 0.5)).epsilon(1e-10));
  }
  // finer panels do not move the quadrature
  auto q2 = low_energy_quadrature(0.5, 0.05, 8, 2);
  double s1 = 0, s2 = 0;
  for (size_t j = 0; j < q.nodes.size(); ++j) s1 += q.weights[j] / (0.01 + q.nodes[j] * q.nodes[j]);
  for (size_t j = 0; j < q2.nodes.size(); ++j) s2 += q2.weights[j] / (0.01 + q2.nodes[j] * q2.nodes[j]);
  CHECK(std::abs(s1 - s2) < 1e-10 * s2);

  auto M = small_two_end();
  auto D = laplacian(M);
  auto S = dense_spectrum(D);
  MultiplierOperator T(D, {0.5});
  for (unsigned s = 0; s < 3; ++s) {
    Vec f = random_field(D, 20 + s);
    Vec ref = dense_function_apply(S, [](double x) { return 1 / std::sqrt(x); }, f);
    CHECK(relerr(T.apply(f), ref) <= 1e-6);
    Vec lo = dense_function_apply(S, [](double x) { return F_less(std::sqrt(x), 0.5); }, f);
    CHECK(relerr(T.apply_low(f), lo) <= 1e-8);
    Vec hi = dense_function_apply(S, [](double x) { return F_greater_sq(x, 0.5); }, f);
    CHECK(relerr(T.apply_high(f), hi) <= 1e-8);
  }
  MultiplierSpec low{0.5, MultiplierKind::low};
  Vec f = random_field(D, 30);
  CHECK(relerr(multiplier_apply(D, low, f), T.apply_low(f)) <= 1e-12);
}

TEST_CASE("F_> is a symbol of order -1") {
  using boost::math::differentiation::make_fvar;
  const double k0 = 0.5;
  double worst[4] = {0, 0, 0, 0};
  for (double lam = 1e-2; lam < 1e3; lam *= 1.3) {
    auto x = make_fvar<double, 3>(lam);
    auto v = (2 / pi) * atan(x / k0) / x;
    for (int m = 0; m <= 3; ++m) worst[m] = std::max(worst[m], std::pow(lam, m + 1) * std::abs(v.derivative(m)));
  }
  // bounded over five decades
  for (int m = 0; m <= 3; ++m) CHECK(worst[m] < 10.0);
  // and the large-lambda limit of lambda F_> is 1
  CHECK(1e4 * F_greater(1e4, k0) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("Lanczos matrix functions and L1 test") {
  auto M = small_two_end();
  auto D = laplacian(M);
  auto S = dense_spectrum(D);
  Vec f = random_field(D, 40);
  auto g = [](double x) { return std::atan(1 / std::sqrt(x)); };
  CHECK(relerr(lanczos_function_apply(D, f, g), dense_function_apply(S, g, f)) <= 1e-8);
  auto src = spread_sources(M);
  CHECK(src.size() >= 3);
  CHECK(multiplier_L1_norm_test(D, 1.0, src, [](double) { return 0.0; }).max == 0.0);
  CHECK(multiplier_L1_norm_test(D, 1.0, src, [](double) { return 1.0; }).max == doctest::Approx(1.0).epsilon(1e-12));
  auto rep = multiplier_L1_norm_test(D, 1.0, src);
  CHECK(rep.max > 0);
  CHECK(rep.values.size() == src.size());
}

TEST_CASE("sobolev embedding surrogate") {
  auto M = small_two_end();
  auto D = laplacian(M);
  auto src = spread_sources(M);
  CHECK(sobolev_embedding_test(D, 0, src).max == 1.0);
  double prev = 2;
  for (int k = 0; k <= 3; ++k) {
    double v = sobolev_embedding_test(D, k, src).max;
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(sobolev_order(4) == 2);
}

TEST_CASE("wave splitting") {
  auto M = connect_sum({build_end({3, {}, 12}), build_end({3, {}, 8})});
  auto D = laplacian(M);
  const double k0 = 0.5;
  MultiplierOperator T(D, {k0, MultiplierKind::high});
  Vec f = random_field(D, 50);
  WaveSplit W(D, 3.0, k0);
  auto [a, b] = W.apply(f);
  CHECK(relerr(a + b, T.apply_high(f)) <= 1e-5);
  // near symbol against the closed form at large r: the full transform of E1
  CHECK(wave_near_symbol(1.3, 80.0, 1.0) == doctest::Approx(F_greater(1.3, 1.0)).epsilon(1e-9));
  CHECK(wave_bump(0.5) == 1.0);
  CHECK(wave_bump(1.0) == 0.0);
  CHECK_THROWS(WaveSplit(D, 0.5, k0));
  // far symbol decays exponentially in r
  std::vector<double> lr, lv;
  for (double r : {2.0, 4.0, 8.0}) {
    WaveSplit w(D, r, k0);
    double sup = 0;
    for (double lam = 0; lam <= std::sqrt(w.far_series().hi); lam += 0.01) sup = std::max(sup, std::abs(w.far_symbol(lam)));
    lr.push_back(r);
    lv.push_back(std::log(sup));
  }
  CHECK((lv[2] - lv[0]) / (lr[2] - lr[0]) <= -0.8 * k0);
  // near part stays in the light cone
  // source far from both the hub shortcut and the Dirichlet ring; the lattice
  // cone has a transition zone of width ~ r^{1/3}, so r must not be too small
  auto B = connect_sum({build_end({3, {}, 22}), build_end({3, {}, 4})});
  auto DB = laplacian(B);
  const int y = vertex_at(B, 1, {11, 0, 0});
  WaveSplit w(DB, 6.0, k0);
  Vec col = w.apply(delta(B.num_vertices, y)).first;
  double tot = 0, out = 0;
  for (int v = 0; v < B.num_vertices; ++v) {
    const double d = B.tag[v] == 1 ? std::hypot(B.coord(v)[0] - 11.0, B.coord(v)[1], B.coord(v)[2]) : 1e9;
    tot += std::abs(col[v]);
    if (d > 6.0 * 1.3) out += std::abs(col[v]);
  }
  CHECK(out <= 1e-3 * tot);
}

TEST_CASE("fragment operator") {
  EndSpec e{3, {4}, 5};
  FragmentOperator F(e);
  auto D = laplacian(F.graph());
  Vec f = random_field(D, 60);
  for (double k : {0.0, 0.3}) CHECK(relerr(F.solve(k, f), cg_solve(D, k * k, f, 1e-13)) <= 1e-10);
  CHECK(relerr(F.heat(2.0, f), heat_apply(D, 2.0, f)) <= 1e-9);
  CHECK(relerr(F.solve_squared(0.2, f), F.solve(0.2, F.solve(0.2, f))) <= 1e-12);
  CHECK(F.lowest_eigenvalue() == doctest::Approx(estimate_spectrum(D, 600, 1e-10).lo).epsilon(1e-6));
  // pointwise entries from the time quadrature
  const int z = F.graph().base_points[0];
  Vec c0 = F.column(0.0, z), c1 = F.column(0.4, z);
  Vec s1 = F.solve_squared(0.4, delta(F.graph().num_vertices, z));
  std::vector<std::pair<int, int>> pairs;
  for (int v = 0; v < F.graph().num_vertices; v += 37) pairs.push_back({v, z});
  auto E = F.entries({0.0, 0.4}, pairs);
  auto E2 = F.entries({0.4}, pairs, 1);
  for (size_t p = 0; p < pairs.size(); ++p) {
    CHECK(std::abs(E(0, p) - c0[pairs[p].first]) <= 1e-10 * c0[z]);
    CHECK(std::abs(E(1, p) - c1[pairs[p].first]) <= 1e-10 * c1[z]);
    CHECK(std::abs(E2(0, p) - s1[pairs[p].first]) <= 1e-10 * s1[z]);
  }
  // heat diagonal against the spectral action
  for (double t : {0.5, 4.0}) CHECK(F.heat_diagonal(t, z) == doctest::Approx(F.heat(t, delta(F.graph().num_vertices, z))[z]).epsilon(1e-12));
  // 2-cycle and 1-cycle factors
  for (int m : {1, 2}) {
    FragmentOperator G({3, {m}, 4});
    auto DG = laplacian(G.graph());
    Vec g = random_field(DG, 61);
    CHECK(relerr(G.solve(0.1, g), cg_solve(DG, 0.01, g, 1e-13)) <= 1e-10);
  }
}
