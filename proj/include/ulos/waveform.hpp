#pragma once

// FMCW beat-signal physics: per-point complex beat samples, specular
// reflection geometry, and the round-trip free-space power decay.

#include "ulos/common.hpp"

#include <complex>

namespace ulos {

using Complexd = std::complex<double>;

// ---------------------------------------------------------------------------
// Chirp parameters. Bandwidth is k * n_samples * sample_interval.

struct ChirpConfig {
    double nu = 77.0e9;        // start frequency, Hz
    double k = 2.5e13;         // chirp slope, Hz/s
    int n_samples = 64;        // time samples per chirp
    double sample_interval = 2.5e-6;  // s
    double a_tx = 1.0;         // equivalent transmitted power scale

    double bandwidth() const { return k * n_samples * sample_interval; }
    double duration() const { return n_samples * sample_interval; }
    double sample_time(int m) const { return m * sample_interval; }
    double range_resolution() const { return kSpeedOfLight / (2.0 * bandwidth()); }

    void validate() const {
        if (!(nu > 0.0)) throw ConfigError("chirp: start frequency must be positive");
        if (n_samples < 2) throw ConfigError("chirp: need at least 2 samples");
        if (!(bandwidth() > 0.0)) throw ConfigError("chirp: bandwidth must be positive");
    }

    std::uint64_t hash() const {
        std::uint64_t h = fnv1a64(&nu, sizeof nu);
        h = fnv1a64(&k, sizeof k, h);
        h = fnv1a64(&n_samples, sizeof n_samples, h);
        h = fnv1a64(&sample_interval, sizeof sample_interval, h);
        h = fnv1a64(&a_tx, sizeof a_tx, h);
        return h;
    }
};

// ---------------------------------------------------------------------------
// Beat sample of one reflector: A * exp(-j 2pi k tau t) * exp(-j 2pi nu tau),
// tau = d / c with d the full round-trip distance.

inline Complexd beat_sample(const ChirpConfig& chirp, Complexd amplitude, double d, double t) {
    const double tau = d / kSpeedOfLight;
    const double phase = -2.0 * kPi * (chirp.k * tau * t + chirp.nu * tau);
    return amplitude * Complexd(std::cos(phase), std::sin(phase));
}

// ---------------------------------------------------------------------------
// Specular mirror direction: omega_o = omega_i - 2 (n . omega_i) n.

inline Vec3 specular_reflect(const Vec3& omega_i, const Vec3& n) {
    constexpr double tol = 1e-9;
    if (std::abs(omega_i.norm() - 1.0) > tol || std::abs(n.norm() - 1.0) > tol)
        throw NonUnitInput("specular_reflect: inputs must be unit vectors");
    return omega_i - 2.0 * n.dot(omega_i) * n;
}

// ---------------------------------------------------------------------------
// Received amplitude of one sample point. The foreshortening dot product is
// clamped to zero for back-facing geometry, and the optional distance decay
// divides the amplitude by u^2 (1/(4 pi u)^2 spreading, one way squared).

struct ReflectionGeometry {
    Vec3 omega_i{0, 0, -1};  // unit, antenna -> point
    Vec3 omega_r{0, 0, 1};   // unit, point -> antenna
    Vec3 omega_o{0, 0, 1};   // unit, outgoing specular direction
    Vec3 n{0, 0, 1};         // unit surface normal
    double u = 1.0;          // one-way propagation distance, m
    double a = 1.0;          // reflectivity >= 0

    static ReflectionGeometry from_incidence(const Vec3& omega_i, const Vec3& n, double u, double a) {
        ReflectionGeometry g;
        g.omega_i = omega_i;
        g.n = n;
        g.omega_r = -omega_i;
        g.omega_o = specular_reflect(omega_i, n);
        g.u = u;
        g.a = a;
        return g;
    }
};

namespace detail {
// Raw amplitude formula shared by received_amplitude and the renderer's
// inner loop; `dot` must already be >= 0 and raised to the lobe exponent.
inline double amplitude_factor(double a, double dot_pow, double t_u, double rho_u,
                               double a_tx, double dt, double u, bool decay) {
    const double inv_4pi_sq = 1.0 / ((4.0 * kPi) * (4.0 * kPi));
    double amp = a * inv_4pi_sq * dot_pow * t_u * t_u * rho_u * a_tx * dt;
    if (decay) amp /= u * u;
    return amp;
}
}  // namespace detail

inline double received_amplitude(const ReflectionGeometry& geom, double t_u, double rho_u,
                                 double a_tx, double dt, bool decay = false,
                                 double lobe_exponent = 1.0) {
    if (!(geom.u > 1e-6)) throw NonPositiveDistance("received_amplitude: u must exceed 1e-6 m");
    double dot = geom.omega_o.dot(geom.omega_r);
    if (dot < 0.0) dot = 0.0;
    const double dot_pow = lobe_exponent == 1.0 ? dot : std::pow(dot, lobe_exponent);
    return detail::amplitude_factor(geom.a, dot_pow, t_u, rho_u, a_tx, dt, geom.u, decay);
}

// Round-trip free-space POWER decay, 1/(4 pi u)^4; factor(1 m) = (4 pi)^-4.
inline double free_space_power_decay(double u) {
    if (!(u > 1e-6)) throw NonPositiveDistance("free_space_power_decay: u must exceed 1e-6 m");
    const double q = 4.0 * kPi * u;
    const double q2 = q * q;
    return 1.0 / (q2 * q2);
}

}  // namespace ulos
