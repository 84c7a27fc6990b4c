#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/expint.hpp>

#include "rieszlab/special_fn.hpp"

using namespace rieszlab;
constexpr double pi = std::numbers::pi;

TEST_CASE("gaussian_heat") {
  CHECK(gaussian_heat(3, 1.0 / (4 * pi), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gaussian_heat(3, 1.0, 2.0) == doctest::Approx(std::pow(4 * pi, -1.5) * std::exp(-1.0)).epsilon(1e-14));
  // radial mass 4 pi r^2 p_t(r) integrates to 1
  for (double t : {0.3, 1.0, 7.0}) {
    auto f = [&](double r) { return 4 * pi * r * r * gaussian_heat(3, t, r); };
    double I = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 60.0 * std::sqrt(t), 15, 1e-14);
    CHECK(std::abs(I - 1.0) < 1e-8);
  }
  CHECK_THROWS_AS(gaussian_heat(3, 0.0, 1.0), DomainError);
}

TEST_CASE("torus_heat") {
  CHECK(torus_heat({}, 2.0, {}, {}) == 1.0);
  CHECK(torus_heat({1}, 0.1, {0}, {0}) == 1.0);
  CHECK(std::abs(torus_heat({5}, 40.0, {0}, {2}) - 0.2) < 1e-12);
  CHECK(std::abs(torus_heat({5, 3}, 40.0, {0, 1}, {2, 0}) - 1.0 / 15) < 1e-12);
  CHECK(std::abs(torus_heat({7}, 200.0, {0}, {3}, TorusSpectrum::continuum) - 1.0 / 7) < 1e-12);
  // discrete cycle: eigen sum equals the random-walk return probability
  double direct = std::exp(-2 * 0.5) * boost::math::cyl_bessel_i(0, 1.0);
  CHECK(torus_heat({1000}, 0.5, {0}, {0}) == doctest::Approx(direct).epsilon(1e-12));
  // short-time divergence ~ t^{-dim/2} on the continuum torus
  double t1 = 1e-3, t2 = 1e-2;
  double s = std::log(torus_heat({6, 6}, t2, {0, 0}, {0, 0}, TorusSpectrum::continuum) /
                      torus_heat({6, 6}, t1, {0, 0}, {0, 0}, TorusSpectrum::continuum)) /
             std::log(t2 / t1);
  CHECK(std::abs(s + 1.0) < 0.1);
  // image sum and eigen sum agree near the switch point
  double a = torus_heat({4}, 0.99, {0.3}, {0}, TorusSpectrum::continuum);
  double b = torus_heat({4}, 1.01, {0.3}, {0}, TorusSpectrum::continuum);
  CHECK(std::abs(a - b) < 0.02 * a);
}

TEST_CASE("bessel_k against an independent implementation") {
  for (double nu : {0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.7, 4.0, 6.5})
    for (double x : {1e-4, 0.01, 0.3, 1.0, 1.99, 2.0, 2.01, 5.0, 20.0, 60.0}) {
      double ref = boost::math::cyl_bessel_k(nu, x);
      CHECK(std::abs(bessel_k(nu, x) - ref) <= 1e-13 * ref);
    }
  // half-integer closed form
  for (double x : {0.5, 1.0, 3.0, 9.0}) CHECK(bessel_k(0.5, x) == doctest::Approx(std::sqrt(pi / (2 * x)) * std::exp(-x)).epsilon(1e-14));
  CHECK_THROWS_AS(bessel_k(1.0, 0.0), DomainError);
}

TEST_CASE("scaled_bessel_i") {
  for (double x : {0.1, 1.0, 10.0, 250.0, 2400.0}) {
    auto v = scaled_bessel_i(x, 40);
    for (int k : {0, 1, 5, 40}) {
      if (x > 700) continue;
      double ref = boost::math::cyl_bessel_i(k, x) * std::exp(-x);
      CHECK(std::abs(v[k] - ref) <= 1e-12 * std::max(ref, 1e-300) + 1e-300);
    }
    // normalisation identity
    auto w = scaled_bessel_i(x, 4000);
    double s = w[0];
    for (size_t k = 1; k < w.size(); ++k) s += 2 * w[k];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  // large argument: e^{-x} I_0(x) ~ 1/sqrt(2 pi x)
  auto v = scaled_bessel_i(2400.0, 0);
  CHECK(v[0] == doctest::Approx(1.0 / std::sqrt(2 * pi * 2400.0) * (1 + 1.0 / (8 * 2400.0))).epsilon(1e-7));
}

TEST_CASE("bessel_L values and ODE") {
  auto e = bessel_L(3, 1.0);
  CHECK(e.value == doctest::Approx(std::sqrt(pi / 2) * std::exp(-1.0)).epsilon(1e-14));
  CHECK(std::abs(e.value - 0.46107) < 1e-5);
  for (double r : {0.1, 1.0, 5.0}) CHECK(bessel_L(3, r).value == doctest::Approx(std::sqrt(pi / 2) * std::exp(-r) / r).epsilon(1e-13));
  CHECK(std::abs(bessel_L(5, 2.0).ode_residual()) <= 1e-6 * bessel_L(5, 2.0).value);
  // small-r asymptotic r^{2-a}
  double q1 = bessel_L(4, 1e-3).value / std::pow(1e-3, -2.0);
  double q2 = bessel_L(4, 1e-4).value / std::pow(1e-4, -2.0);
  CHECK(std::abs(q1 / q2 - 1) < 0.01);
  // derivative against a centred difference
  for (double a : {1.0, 1.5, 3.0, 4.5, 6.0}) {
    double r = 1.7, h = 1e-5;
    double fd = (bessel_L(a, r + h).value - bessel_L(a, r - h).value) / (2 * h);
    CHECK(bessel_L(a, r).derivative == doctest::Approx(fd).epsilon(1e-8));
  }
  CHECK_THROWS_AS(bessel_L(4, 0.0), DomainError);
}

TEST_CASE("bessel integral identity") {
  CHECK(bessel_calibration(3) == doctest::Approx(2 * std::sqrt(2.0)).epsilon(1e-10));
  for (double k : {0.1, 0.7})
    for (double r : {0.5, 3.0}) {
      auto id = bessel_integral_identity(3, k, r);
      CHECK(id.lhs == doctest::Approx(2 * std::sqrt(pi) / r * std::exp(-k * r)).epsilon(1e-10));
    }
  for (double a : {4.0, 5.0})
    for (double k : {0.01, 0.1, 1.0})
      for (double r : {0.5, 2.0, 15.0}) CHECK(bessel_integral_identity(a, k, r).relerr() < 1e-8);
  // scaling t -> t/k^2
  double k = 0.3, r = 2.0;
  CHECK(bessel_time_integral(4.0, k, r) == doctest::Approx(std::pow(k, 2.0) * bessel_time_integral(4.0, 1.0, k * r)).epsilon(1e-10));
  CHECK_THROWS_AS(bessel_integral_identity(2.0, 1.0, 1.0), DomainError);
}

TEST_CASE("product resolvent kernel") {
  EndSpec e3{3, {}, 8};
  CHECK(product_resolvent_kernel(e3, 0.0, {0, 0, 0}, {1, 0, 0}, {}, {}) == doctest::Approx(1 / (4 * pi)).epsilon(1e-12));
  CHECK(product_resolvent_kernel(e3, 1.0, {0, 0, 0}, {1, 0, 0}, {}, {}) == doctest::Approx(std::exp(-1.0) / (4 * pi)).epsilon(1e-12));
  CHECK(product_resolvent_time_quadrature(e3, 0.0, 1.0, {}, {}) == doctest::Approx(1 / (4 * pi)).epsilon(1e-8));
  EndSpec e35{3, {5}, 8};
  for (double k : {0.0, 0.2, 1.0})
    for (double r : {0.7, 2.0, 6.0}) {
      double a = product_resolvent_kernel(e35, k, {0, 0, 0}, {r, 0, 0}, {0}, {2});
      double b = product_resolvent_time_quadrature(e35, k, r, {0}, {2});
      CHECK(std::abs(a - b) <= 1e-6 * std::abs(b));
    }
  EndSpec e4{4, {}, 8};
  CHECK(product_resolvent_kernel(e4, 0.3, {0, 0, 0, 0}, {2, 0, 0, 0}, {}, {}) ==
        doctest::Approx(product_resolvent_time_quadrature(e4, 0.3, 2.0, {}, {})).epsilon(1e-6));
  CHECK_THROWS_AS(product_resolvent_kernel(e3, 0.0, {0, 0, 0}, {0, 0, 0}, {}, {}), DomainError);
}

TEST_CASE("resolvent envelope") {
  EndSpec e{3, {4}, 8};
  std::vector<double> ks{0.05, 0.2, 0.5}, rs{0.5, 1, 2, 4, 8, 16};
  auto env = fit_resolvent_envelope(e, ks, rs);
  CHECK(env.c_lower > 0);
  CHECK(env.c_upper >= env.c_lower);
  CHECK(env.rate > 0);
  CHECK(env.rate <= 1);
  for (double k : ks)
    for (double r : rs) {
      double g = product_resolvent_kernel(e, k, {0, 0, 0}, {r, 0, 0}, {0}, {0});
      double shape = std::pow(r, -2.0) + std::pow(r, -1.0);
      CHECK(g >= env.c_lower * shape * std::exp(-k * r) * (1 - 1e-12));
      CHECK(g <= env.c_upper * shape * std::exp(-env.rate * k * r) * (1 + 1e-12));
    }
}

TEST_CASE("E1 and hat F_>") {
  CHECK(std::abs(expint_e1(1.0) - 0.219384) < 1e-6);
  // series oracle with Euler's constant
  double s = 0, term = 1;
  for (int n = 1; n < 40; ++n) {
    term *= -1.0 / n;
    s -= term / n;
  }
  CHECK(expint_e1(1.0) == doctest::Approx(-kEulerGamma + s).epsilon(1e-14));
  for (double x : {1e-6, 0.1, 0.9, 1.0, 1.1, 4.0, 30.0, 300.0}) CHECK(expint_e1(x) == doctest::Approx(boost::math::expint(1, x)).epsilon(1e-13));
  for (double x = 1.0; x < 50; x += 0.5) CHECK(expint_e1(x) <= std::exp(-x));
  double prev = hat_F_greater(0.01, 1.0);
  for (double t = 0.02; t < 20; t += 0.37) {
    double v = hat_F_greater(t, 1.0);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(hat_F_greater(-2.0, 0.5) == hat_F_greater(2.0, 0.5));
  CHECK_THROWS_AS(hat_F_greater(0.0, 1.0), DomainError);
}

TEST_CASE("weight envelope") {
  auto M = connect_sum({build_end({3, {}, 6}), build_end({4, {}, 5})});
  for (int a : {1, 2}) {
    auto w = weight_omega(M, a, 0.3);
    for (int v = 0; v < M.num_vertices; ++v) {
      CHECK(w[v] <= 1.0);
      CHECK(w[v] > 0.0);
      if (M.tag[v] == 0) CHECK(w[v] == 1.0);
    }
  }
}
