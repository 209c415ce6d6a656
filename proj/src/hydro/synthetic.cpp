#include "dpsim/hydro/synthetic.hpp"

#include <gsl/gsl_sf_dawson.h>

namespace dpsim::hydro
{

namespace
{

constexpr double kSqrtPi = 1.7724538509055160273;

// 2x/(1+x^2): zero for long waves, unity at x = 1, slow decay for short waves.
double long_wave_shape(double x) { return 2.0 * x / (1.0 + x * x); }

}  // namespace

double gaussian_damping(const DampingMode & mode, double omega)
{
  const double x = omega / mode.omega_peak;
  return mode.peak * std::exp(1.0 - x * x) * x * x;
}

double gaussian_kernel(const DampingMode & mode, double t)
{
  // (2/pi) int_0^inf B(w) cos(w t) dw
  const double s = mode.omega_peak * t;
  return (2.0 / kPi) * mode.peak * std::exp(1.0) * mode.omega_peak * (kSqrtPi / 4.0) *
         std::exp(-s * s / 4.0) * (1.0 - s * s / 2.0);
}

double gaussian_added_mass_offset(const DampingMode & mode, double omega)
{
  // A(w) - A(inf) = -(1/w) H[B](w); H of x^2 exp(-x^2) via Dawson's integral.
  const double x = omega / mode.omega_peak;
  const double hilbert = x * x * (2.0 / kSqrtPi) * gsl_sf_dawson(x) - x / kSqrtPi;
  return -(mode.peak * std::exp(1.0) / omega) * hilbert;
}

SyntheticHullSpec st_hull_spec()
{
  SyntheticHullSpec s;
  const auto & h = s.hull;
  const double m = h.displacement;
  const double izz = m * std::pow(0.25 * h.length, 2);
  const double ixx = m * std::pow(0.35 * h.breadth, 2);

  s.damping = {{
    {2.0e5, 0.9},  // surge
    {2.0e6, 0.8},  // sway
    {6.0e6, 0.7},  // heave
    {3.5e7, 0.8},  // roll
    {5.0e9, 0.7},  // pitch
    {2.3e9, 0.8},  // yaw
  }};
  s.added_mass_inf = {0.04 * m, 0.9 * m, 1.0 * m, 0.2 * ixx, 1.0 * izz, 0.7 * izz};

  for (int k = 1; k <= 150; ++k) {
    s.freq.push_back(0.004 * k);
  }
  for (int d = 0; d < 360; d += 15) {
    s.rao_directions_deg.push_back(d);
  }
  return s;
}

HydroDatabase make_synthetic_database(const SyntheticHullSpec & spec)
{
  const auto & h = spec.hull;
  const double rho_g = h.water_density * kGravity;
  const double m = h.displacement;
  const double volume = m / h.water_density;
  const double waterplane = 0.85 * h.length * h.breadth;

  HydroDatabase db;
  db.freq = spec.freq;

  db.rigid_mass = Matrix6::Zero();
  db.rigid_mass.diagonal() << m, m, m, m * std::pow(0.35 * h.breadth, 2),
    m * std::pow(0.25 * h.length, 2), m * std::pow(0.25 * h.length, 2);

  db.restoring = Matrix6::Zero();
  db.restoring(2, 2) = rho_g * waterplane;
  db.restoring(3, 3) = rho_g * volume * h.gm_transverse;
  db.restoring(4, 4) = rho_g * volume * h.gm_longitudinal;

  for (double f : db.freq) {
    const double omega = 2.0 * kPi * f;
    Matrix6 a = Matrix6::Zero();
    Matrix6 b = Matrix6::Zero();
    for (int i = 0; i < 6; ++i) {
      const auto & mode = spec.damping[static_cast<std::size_t>(i)];
      b(i, i) = gaussian_damping(mode, omega);
      a(i, i) = spec.added_mass_inf[static_cast<std::size_t>(i)] + gaussian_added_mass_offset(mode, omega);
    }
    db.added_mass.push_back(a);
    db.damping.push_back(b);
  }

  for (double d : spec.rao_directions_deg) {
    db.rao_directions.push_back(deg2rad(d));
  }
  const double bt = h.breadth * h.draught;
  const double lt = h.length * h.draught;
  const std::complex<double> lag(0.0, -1.0);  // -90 deg
  const std::complex<double> lead(0.0, 1.0);  // +90 deg
  for (double f : db.freq) {
    const double omega = 2.0 * kPi * f;
    const double k = omega * omega / kGravity;
    const double shallow = std::exp(-k * h.draught / 2.0);
    const double deep = std::exp(-k * h.draught);
    for (double beta : db.rao_directions) {
      const double cb = std::cos(beta);
      const double sb = std::sin(beta);
      ComplexVector6 x;
      const double sway = rho_g * lt * 0.5 * shallow * long_wave_shape(k * h.breadth / 2.0);
      x(0) = lag * (rho_g * bt * shallow * long_wave_shape(k * h.length / 4.0) * cb);
      x(1) = lag * (sway * sb);
      x(2) = rho_g * waterplane * deep / (1.0 + std::pow(k * h.length / (2.0 * kPi), 2));
      x(3) = lag * (sway * (h.draught / 3.0) * sb);
      x(4) = lead * (rho_g * h.breadth * h.length * h.length / 8.0 * deep *
                     long_wave_shape(k * h.length / 4.0) * cb);
      x(5) = lead * (rho_g * lt * (h.length / 8.0) * shallow * long_wave_shape(k * h.length / 4.0) *
                     std::sin(2.0 * beta));
      db.rao.push_back(x);
    }
  }

  db.validate();
  return db;
}

HydroDatabase st_hull_database() { return make_synthetic_database(st_hull_spec()); }

HydroDatabase boxcar_database(double b0, double band_hz, std::size_t n, double a0)
{
  HydroDatabase db;
  for (std::size_t k = 1; k <= n; ++k) {
    db.freq.push_back(band_hz * static_cast<double>(k) / static_cast<double>(n));
    db.added_mass.push_back(a0 * Matrix6::Identity());
    db.damping.push_back(b0 * Matrix6::Identity());
  }
  db.rigid_mass = Matrix6::Identity();
  db.restoring = Matrix6::Zero();
  db.validate();
  return db;
}

}  // namespace dpsim::hydro
