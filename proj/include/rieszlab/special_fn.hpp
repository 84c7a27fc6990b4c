#pragma once

#include <stdexcept>
#include <vector>

#include "rieszlab/geometry.hpp"

namespace rieszlab {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

constexpr double kEulerGamma = 0.57721566490153286061;

// (4 pi t)^{-n/2} exp(-r^2 / 4t)
double gaussian_heat(int n, double t, double r);

enum class TorusSpectrum { discrete, continuum };

// Heat kernel of a product of cycles of the given lengths. The discrete
// spectrum matches the lattice factor (counting measure); the continuum one is
// the flat torus R/mZ x ... with Lebesgue measure.
double torus_heat(const std::vector<int>& cycles, double t, const std::vector<double>& y,
                  const std::vector<double>& yp, TorusSpectrum spectrum = TorusSpectrum::discrete);

// Modified Bessel function of the second kind, real order.
double bessel_k(double nu, double x);
// e^{-x} I_k(x) for k = 0..kmax (integer orders, Miller recurrence).
std::vector<double> scaled_bessel_i(double x, int kmax);

struct BesselEval {
  double a = 0, r = 0;
  double value = 0, derivative = 0, second_derivative = 0;
  double ode_residual() const;  // f'' + (a-1)/r f' - f
};

// L_a(r) = r^{1-a/2} K_{|a/2-1|}(r)
BesselEval bessel_L(double a, double r);

struct BesselIdentity {
  double lhs = 0, rhs = 0, C_a = 0;
  double relerr() const;
};

double bessel_time_integral(double a, double k, double r);
double bessel_calibration(double a);  // C_a from (k, r) = (1, 1)
BesselIdentity bessel_integral_identity(double a, double k, double r);

// Resolvent kernel of the flat R^n Laplacian at spectral parameter kappa.
double rn_resolvent(int n, double kappa, double r);

double product_resolvent_kernel(const EndSpec& end, double k, const std::vector<double>& x,
                                const std::vector<double>& xp, const std::vector<int>& y, const std::vector<int>& yp);
// Same kernel by time quadrature of the product heat kernel.
double product_resolvent_time_quadrature(const EndSpec& end, double k, double r, const std::vector<int>& y,
                                         const std::vector<int>& yp);

struct ResolventEnvelope {
  double c_lower = 0;  // C'
  double c_upper = 0;  // C
  double rate = 1;     // c in exp(-c k r)
};
// Constants with C' (r^{2-N}+r^{2-n}) e^{-kr} <= kernel <= C (r^{2-N}+r^{2-n}) e^{-c k r} on the grid.
ResolventEnvelope fit_resolvent_envelope(const EndSpec& end, const std::vector<double>& ks,
                                         const std::vector<double>& rs);

double expint_e1(double x);
double hat_F_greater(double t, double k0);

// omega_a(z, k) = <d>^{-(n_i - a)} exp(-k d) on end i, 1 on the junction.
Vec weight_omega(const ModelManifold& M, int a, double k);

}  // namespace rieszlab
