#include "splat/mie.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace splat {

namespace {

int default_terms(double x) {
  return static_cast<int>(std::ceil(x + 4.0 * std::cbrt(x) + 2.0));
}

}  // namespace

MieCoefficients mie_coefficients(double x, std::complex<double> m, int n_terms) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("size parameter must be positive");
  if (n_terms < 0) throw std::invalid_argument("n_terms must be non-negative");
  const int n_max = n_terms > 0 ? n_terms : default_terms(x);

  // Logarithmic derivative D_n(mx) by downward recurrence, started well
  // above the truncation order where D is insensitive to the seed.
  const std::complex<double> mx = m * x;
  const int n_start = static_cast<int>(std::lround(std::max<double>(n_max, std::abs(mx)))) + 15;
  std::vector<std::complex<double>> d(static_cast<std::size_t>(n_start) + 1, {0.0, 0.0});
  for (int n = n_start; n >= 1; --n) {
    const std::complex<double> rn = static_cast<double>(n) / mx;
    d[n - 1] = rn - 1.0 / (d[n] + rn);
  }

  // Riccati-Bessel functions of the real argument by upward recurrence.
  double psi_nm1 = std::cos(x);   // psi_{-1}
  double psi_n = std::sin(x);     // psi_0
  double chi_nm1 = -std::sin(x);  // chi_{-1}
  double chi_n = std::cos(x);     // chi_0

  MieCoefficients out;
  out.a.resize(n_max);
  out.b.resize(n_max);
  for (int n = 1; n <= n_max; ++n) {
    const double psi = (2.0 * n - 1.0) / x * psi_n - psi_nm1;
    const double chi = (2.0 * n - 1.0) / x * chi_n - chi_nm1;
    psi_nm1 = psi_n;
    psi_n = psi;
    chi_nm1 = chi_n;
    chi_n = chi;

    const std::complex<double> xi{psi, -chi};
    const std::complex<double> xi_prev{psi_nm1, -chi_nm1};
    const double nx = static_cast<double>(n) / x;

    const std::complex<double> fa = d[n] / m + nx;
    out.a[n - 1] = (fa * psi - psi_nm1) / (fa * xi - xi_prev);
    const std::complex<double> fb = d[n] * m + nx;
    out.b[n - 1] = (fb * psi - psi_nm1) / (fb * xi - xi_prev);
  }
  return out;
}

double scattering_efficiency(double x, std::complex<double> m, int n_terms) {
  const MieCoefficients c = mie_coefficients(x, m, n_terms);
  double sum = 0.0;
  for (std::size_t i = 0; i < c.a.size(); ++i) {
    const double n = static_cast<double>(i) + 1.0;
    sum += (2.0 * n + 1.0) * (std::norm(c.a[i]) + std::norm(c.b[i]));
  }
  return 2.0 / (x * x) * sum;
}

double scattering_coefficient(double wavelength_um, const ParticleSpec& spec) {
  if (!(wavelength_um > 0.0)) throw std::invalid_argument("wavelength must be positive");
  if (!(spec.radius_um > 0.0)) throw std::invalid_argument("particle radius must be positive");
  const double x = 2.0 * std::numbers::pi * spec.radius_um / wavelength_um;
  const double q = scattering_efficiency(x, spec.refractive_index);
  const double radius_m = spec.radius_um * 1e-6;
  return spec.number_density * std::numbers::pi * radius_m * radius_m * q;
}

std::vector<SweepRow> spectrum_sweep(double lambda_min_um, double lambda_max_um, int steps,
                                     const ParticleSpec& spec) {
  if (!(lambda_min_um > 0.0) || !(lambda_max_um > lambda_min_um))
    throw std::invalid_argument("sweep needs 0 < lambda_min < lambda_max");
  if (steps < 2) throw std::invalid_argument("sweep needs at least 2 steps");
  const double log_min = std::log(lambda_min_um);
  const double log_max = std::log(lambda_max_um);
  std::vector<SweepRow> rows(steps);
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / (steps - 1);
    rows[i].wavelength_um = std::exp(log_min + t * (log_max - log_min));
    rows[i].beta = scattering_coefficient(rows[i].wavelength_um, spec);
  }
  return rows;
}

}  // namespace splat
