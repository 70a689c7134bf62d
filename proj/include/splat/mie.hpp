#pragma once

#include <complex>
#include <vector>

namespace splat {

/// Scattering particle population: single radius, complex refractive
/// index, number density. Defaults model an organic smoke aerosol.
struct ParticleSpec {
  double radius_um = 0.5;
  std::complex<double> refractive_index{1.55, 0.01};
  double number_density = 1e12;  // particles per m^3
};

struct MieCoefficients {
  std::vector<std::complex<double>> a;
  std::vector<std::complex<double>> b;
};

/// Mie series coefficients a_n, b_n for size parameter x and relative
/// refractive index m. n_terms = 0 selects the standard truncation
/// N = ceil(x + 4 x^{1/3} + 2); the logarithmic derivative is run downward
/// from N + 15 and the Riccati-Bessel functions upward.
MieCoefficients mie_coefficients(double x, std::complex<double> m, int n_terms = 0);

/// Q_sca = (2/x^2) sum (2n+1)(|a_n|^2 + |b_n|^2).
double scattering_efficiency(double x, std::complex<double> m, int n_terms = 0);

/// Volume scattering coefficient in 1/m at the given wavelength:
/// beta = number_density * pi r^2 * Q_sca(2 pi r / lambda, m).
double scattering_coefficient(double wavelength_um, const ParticleSpec& spec);

struct SweepRow {
  double wavelength_um = 0.0;
  double beta = 0.0;
};

/// Log-spaced wavelength sweep of the scattering coefficient.
std::vector<SweepRow> spectrum_sweep(double lambda_min_um, double lambda_max_um, int steps,
                                     const ParticleSpec& spec);

}  // namespace splat
