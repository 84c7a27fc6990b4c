#include "rieszlab/special_fn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>

namespace rieszlab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Taylor coefficients of 1/Gamma(z) (Abramowitz & Stegun 6.1.34), c[k] multiplies z^{k+1}.
constexpr double kRecipGamma[] = {
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
};

// gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2,
// summed from 1/G(1+z) = sum c[j] z^j so that mu -> 0 has no cancellation.
void temme_gammas(double mu, double& gam1, double& gam2, double& gampl, double& gammi) {
  constexpr int n = sizeof(kRecipGamma) / sizeof(double);
  gam1 = 0;
  gam2 = 0;
  double p = 1;
  for (int j = 0; j < n; j += 2) {
    gam2 += kRecipGamma[j] * p;
    if (j + 1 < n) gam1 -= kRecipGamma[j + 1] * p;
    p *= mu * mu;
  }
  gampl = gam2 - mu * gam1;
  gammi = gam2 + mu * gam1;
}

// K_mu(x), K_{mu+1}(x) for |mu| <= 1/2.
void bessel_k_pair(double xmu, double x, double& rkmu, double& rk1) {
  if (x < 2.0) {
    const double x2 = 0.5 * x;
    const double pimu = kPi * xmu;
    const double fact = std::abs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = xmu * d;
    const double fact2 = std::abs(e) < kEps ? 1.0 : std::sinh(e) / e;
    double gam1, gam2, gampl, gammi;
    temme_gammas(xmu, gam1, gam2, gampl, gammi);
    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / gampl;
    double q = 0.5 / (e * gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    for (int i = 1; i < 10000; ++i) {
      ff = (i * ff + p + q) / (i * double(i) - xmu * xmu);
      c *= d / i;
      p /= i - xmu;
      q /= i + xmu;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - i * ff);
      if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    rkmu = sum;
    rk1 = sum1 * 2.0 / x;
    return;
  }
  // Steed's continued fraction: convergent form of the large-argument expansion.
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25 - xmu * xmu;
  double q = a1, c = a1, a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i < 100000; ++i) {
    a -= 2 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < kEps) break;
  }
  rkmu = std::sqrt(kPi / (2.0 * x)) * std::exp(-x) / s;
  rk1 = rkmu * (xmu + x + 0.5 - a1 * h) / x;
}

double torus_factor_discrete(int m, double t, double dy) {
  if (m == 1) return 1.0;
  double s = 0;
  for (int j = 0; j < m; ++j) {
    const double th = 2 * kPi * j / m;
    s += std::exp(-t * (2 - 2 * std::cos(th))) * std::cos(th * dy);
  }
  return s / m;
}

double torus_factor_continuum(int m, double t, double dy) {
  if (m == 1) return 1.0;
  dy = std::fmod(dy, double(m));
  if (t < m * double(m) / 16.0) {
    double s = 0;
    for (int k = -40; k <= 40; ++k) {
      const double r = dy + k * m;
      s += std::exp(-r * r / (4 * t));
    }
    return s / std::sqrt(4 * kPi * t);
  }
  double s = 1.0;
  for (int j = 1; j < 10000; ++j) {
    const double w = 2 * kPi * j / m;
    const double term = 2 * std::exp(-t * w * w) * std::cos(w * dy);
    s += term;
    if (std::exp(-t * w * w) < 1e-18) break;
  }
  return s / m;
}

}  // namespace

double gaussian_heat(int n, double t, double r) {
  if (!(t > 0)) throw DomainError("gaussian_heat requires t > 0");
  if (r < 0) throw DomainError("gaussian_heat requires r >= 0");
  return std::pow(4 * kPi * t, -0.5 * n) * std::exp(-r * r / (4 * t));
}

double torus_heat(const std::vector<int>& cycles, double t, const std::vector<double>& y, const std::vector<double>& yp,
                  TorusSpectrum spectrum) {
  if (!(t > 0)) throw DomainError("torus_heat requires t > 0");
  if (y.size() != cycles.size() || yp.size() != cycles.size()) throw DomainError("torus_heat coordinate arity");
  double p = 1;
  for (size_t c = 0; c < cycles.size(); ++c) {
    const double dy = y[c] - yp[c];
    p *= spectrum == TorusSpectrum::discrete ? torus_factor_discrete(cycles[c], t, dy)
                                             : torus_factor_continuum(cycles[c], t, dy);
  }
  return p;
}

double bessel_k(double nu, double x) {
  if (!(x > 0)) throw DomainError("bessel_k requires x > 0");
  nu = std::abs(nu);
  const int nl = static_cast<int>(nu + 0.5);
  const double xmu = nu - nl;
  double rkmu, rk1;
  bessel_k_pair(xmu, x, rkmu, rk1);
  for (int i = 1; i <= nl; ++i) {
    const double next = (xmu + i) * (2.0 / x) * rk1 + rkmu;
    rkmu = rk1;
    rk1 = next;
  }
  return rkmu;
}

std::vector<double> scaled_bessel_i(double x, int kmax) {
  if (x < 0) throw DomainError("scaled_bessel_i requires x >= 0");
  std::vector<double> out(kmax + 1, 0.0);
  if (x == 0) {
    out[0] = 1.0;
    return out;
  }
  const int start = kmax + 32 + static_cast<int>(std::sqrt(80.0 * x + 400.0));
  std::vector<double> v(start + 2, 0.0);
  v[start + 1] = 0.0;
  v[start] = 1e-300;
  for (int k = start; k >= 1; --k) {
    v[k - 1] = (2.0 * k / x) * v[k] + v[k + 1];
    if (v[k - 1] > 1e250) {
      for (int j = k - 1; j <= start; ++j) v[j] *= 1e-250;
    }
  }
  double norm = v[0];
  for (int k = 1; k <= start; ++k) norm += 2 * v[k];
  for (int k = 0; k <= kmax; ++k) out[k] = v[k] / norm;
  return out;
}

double BesselEval::ode_residual() const {
  return second_derivative + (a - 1) / r * derivative - value;
}

BesselEval bessel_L(double a, double r) {
  if (a < 1) throw DomainError("bessel_L requires a >= 1");
  if (r <= 0) throw DomainError(a > 2 ? "bessel_L: r = 0 is the r^{2-a} singularity" : "bessel_L requires r > 0");
  const double nu = std::abs(0.5 * a - 1);
  const double mu = 1 - 0.5 * a;
  double K[5];
  for (int j = 0; j < 5; ++j) K[j] = bessel_k(nu + j - 2, r);
  const double k0 = K[2];
  const double k1 = -0.5 * (K[1] + K[3]);
  const double k2 = 0.25 * (K[0] + 2 * K[2] + K[4]);
  const double rm = std::pow(r, mu);
  BesselEval e;
  e.a = a;
  e.r = r;
  e.value = rm * k0;
  e.derivative = mu * rm / r * k0 + rm * k1;
  e.second_derivative = mu * (mu - 1) * rm / (r * r) * k0 + 2 * mu * rm / r * k1 + rm * k2;
  return e;
}

double BesselIdentity::relerr() const { return std::abs(lhs - rhs) / std::abs(rhs); }

double bessel_time_integral(double a, double k, double r) {
  if (!(k > 0) || !(r > 0)) throw DomainError("bessel_time_integral requires k, r > 0");
  // t = (r/2k) e^s turns the integrand into exp((1-a/2) s - k r cosh s)
  const double kr = k * r;
  const double mu = 1 - 0.5 * a;
  auto f = [&](double s) {
    const double e = mu * s - kr * std::cosh(s) + kr;
    return e < -745 ? 0.0 : std::exp(e);
  };
  boost::math::quadrature::sinh_sinh<double> integrator;
  double err = 0;
  const double I = integrator.integrate(f, 1e-14, &err);
  if (!std::isfinite(I) || err > 1e-9 * std::abs(I)) throw DomainError("bessel_time_integral: quadrature did not converge");
  return std::pow(r / (2 * k), mu) * I * std::exp(-kr);
}

double bessel_calibration(double a) {
  return bessel_time_integral(a, 1.0, 1.0) / bessel_L(a, 1.0).value;
}

BesselIdentity bessel_integral_identity(double a, double k, double r) {
  if (a < 3) throw DomainError("bessel_integral_identity requires a >= 3");
  BesselIdentity id;
  id.C_a = bessel_calibration(a);
  id.lhs = bessel_time_integral(a, k, r);
  id.rhs = id.C_a * std::pow(k, a - 2) * bessel_L(a, k * r).value;
  return id;
}

double rn_resolvent(int n, double kappa, double r) {
  if (r <= 0) throw DomainError("rn_resolvent requires r > 0");
  const double pre = std::pow(4 * kPi, -0.5 * n);
  if (kappa == 0) {
    if (n <= 2) throw DomainError("k = 0 resolvent needs n >= 3");
    return pre * std::tgamma(0.5 * n - 1) * std::pow(4.0 / (r * r), 0.5 * n - 1);
  }
  // C_n = 2^{n/2} from the time integral identity
  return pre * std::pow(2.0, 0.5 * n) * std::pow(kappa, n - 2) * bessel_L(n, kappa * r).value;
}

double product_resolvent_kernel(const EndSpec& end, double k, const std::vector<double>& x,
                                const std::vector<double>& xp, const std::vector<int>& y, const std::vector<int>& yp) {
  if (static_cast<int>(x.size()) != end.n || x.size() != xp.size()) throw DomainError("spatial arity mismatch");
  if (y.size() != end.factor.size() || yp.size() != y.size()) throw DomainError("compact arity mismatch");
  double r2 = 0;
  for (int d = 0; d < end.n; ++d) r2 += (x[d] - xp[d]) * (x[d] - xp[d]);
  const double r = std::sqrt(r2);
  if (r == 0 && k == 0) throw DomainError("coincident points at k = 0");
  if (r == 0) throw DomainError("product_resolvent_kernel is singular on the diagonal");
  // sum over the multi-index of cycle modes
  const size_t nc = end.factor.size();
  std::vector<int> j(nc, 0);
  double total = 0;
  while (true) {
    double mu = 0, w = 1;
    for (size_t c = 0; c < nc; ++c) {
      const int m = end.factor[c];
      const double th = 2 * kPi * j[c] / m;
      mu += 2 - 2 * std::cos(th);
      w *= std::cos(th * (y[c] - yp[c])) / m;
    }
    total += w * rn_resolvent(end.n, std::sqrt(k * k + mu), r);
    size_t c = 0;
    while (c < nc && ++j[c] == end.factor[c]) j[c++] = 0;
    if (c == nc) break;
  }
  return total;
}

double product_resolvent_time_quadrature(const EndSpec& end, double k, double r, const std::vector<int>& y,
                                         const std::vector<int>& yp) {
  std::vector<double> yd(y.begin(), y.end()), ypd(yp.begin(), yp.end());
  auto f = [&](double t) {
    if (t <= 0) return 0.0;
    const double g = std::exp(-t * k * k - r * r / (4 * t));
    if (g == 0) return 0.0;
    return g * std::pow(4 * kPi * t, -0.5 * end.n) * torus_heat(end.factor, t, yd, ypd);
  };
  boost::math::quadrature::exp_sinh<double> integrator;
  double err = 0;
  const double I = integrator.integrate(f, 1e-13, &err);
  if (!std::isfinite(I)) throw DomainError("product_resolvent_time_quadrature did not converge");
  return I;
}

ResolventEnvelope fit_resolvent_envelope(const EndSpec& end, const std::vector<double>& ks,
                                         const std::vector<double>& rs) {
  const int N = end.total_dim(), n = end.n;
  std::vector<int> y0(end.factor.size(), 0);
  std::vector<double> x0(n, 0.0);
  auto shape = [&](double r) { return std::pow(r, 2.0 - N) + std::pow(r, 2.0 - n); };
  auto kernel = [&](double k, double r) {
    std::vector<double> x1(n, 0.0);
    x1[0] = r;
    return product_resolvent_kernel(end, k, x0, x1, y0, y0);
  };
  ResolventEnvelope env;
  env.c_lower = std::numeric_limits<double>::infinity();
  for (double k : ks)
    for (double r : rs) env.c_lower = std::min(env.c_lower, kernel(k, r) / (shape(r) * std::exp(-k * r)));
  // largest rate whose upper ratio stops growing at the far end of the grid
  std::vector<double> sorted = rs;
  std::sort(sorted.begin(), sorted.end());
  for (double c = 1.0; c >= 0.25 - 1e-12; c -= 0.05) {
    double cmax = 0;
    bool tail_ok = true;
    for (double k : ks) {
      double prev = -1, head = 0;
      for (double r : sorted) {
        const double q = kernel(k, r) / (shape(r) * std::exp(-c * k * r));
        cmax = std::max(cmax, q);
        if (r != sorted.back()) head = std::max(head, q);
        prev = q;
      }
      if (prev > head * (1 + 1e-9)) tail_ok = false;
    }
    env.rate = c;
    env.c_upper = cmax;
    if (tail_ok) break;
  }
  return env;
}

double expint_e1(double x) {
  if (x == 0) throw DomainError("E1 diverges logarithmically at 0");
  if (x < 0) throw DomainError("E1 requires x > 0");
  if (x <= 1.0) {
    double sum = 0, term = 1;
    for (int n = 1; n < 200; ++n) {
      term *= -x / n;
      const double d = -term / n;
      sum += d;
      if (std::abs(d) < kEps * std::abs(sum)) break;
    }
    return -kEulerGamma - std::log(x) + sum;
  }
  // modified Lentz continued fraction
  constexpr double tiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -double(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x);
}

double hat_F_greater(double t, double k0) {
  if (t == 0) throw DomainError("hat F_> has a logarithmic singularity at t = 0");
  if (!(k0 > 0)) throw DomainError("k0 must be positive");
  return expint_e1(k0 * std::abs(t));
}

Vec weight_omega(const ModelManifold& M, int a, double k) {
  Vec w(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v) {
    const int i = M.tag[v];
    if (i == kJunctionTag) {
      w[v] = 1.0;
      continue;
    }
    const double d = M.radial_distance(i, v);
    w[v] = std::pow(1 + d * d, -0.5 * (M.ends[i - 1].n - a)) * std::exp(-k * d);
  }
  return w;
}

}  // namespace rieszlab
