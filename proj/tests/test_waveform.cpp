#include "ulos/waveform.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace ulos;
using Catch::Approx;

namespace {

// Independent high-precision evaluation of the beat equation
// A * exp(-j 2pi (k tau t + nu tau)), tau = d/c, in 80-bit arithmetic.
Complexd beat_oracle(double nu, double k, double d, double t, Complexd amp) {
    const long double c = 299792458.0L;
    const long double pi = 3.141592653589793238462643383279502884L;
    const long double tau = static_cast<long double>(d) / c;
    const long double ph =
        -2.0L * pi * (static_cast<long double>(k) * tau * static_cast<long double>(t) +
                      static_cast<long double>(nu) * tau);
    const Complexd rot(static_cast<double>(cosl(ph)), static_cast<double>(sinl(ph)));
    return amp * rot;
}

}  // namespace

TEST_CASE("beat_sample basics", "[waveform]") {
    ChirpConfig chirp;
    chirp.nu = 77e9;
    chirp.k = 2.5e13;

    SECTION("zero amplitude gives zero") {
        const auto v = beat_sample(chirp, {0.0, 0.0}, 1.23, 4.5e-6);
        REQUIRE(v == Complexd(0.0, 0.0));
    }
    SECTION("zero delay returns the amplitude exactly") {
        const Complexd a(0.7, -0.2);
        REQUIRE(beat_sample(chirp, a, 0.0, 3e-6) == a);
    }
    SECTION("matches the high-precision oracle to 1e-12 relative") {
        // Frozen oracle output for nu=77 GHz, k=2.5e13 Hz/s, d=0.6 m, t=1e-5 s
        // (tau = 2.001384571188912e-9 s):
        const Complexd frozen(-7.825546467489478e-01, 6.225819021234311e-01);
        const Complexd live = beat_oracle(77e9, 2.5e13, 0.6, 1e-5, {1.0, 0.0});
        REQUIRE(std::abs(live - frozen) < 1e-13);
        const Complexd got = beat_sample(chirp, {1.0, 0.0}, 0.6, 1e-5);
        REQUIRE(std::abs(got - live) / std::abs(live) < 1e-12);
    }
    SECTION("linear in the amplitude") {
        const Complexd a(0.3, 0.9);
        const auto one = beat_sample(chirp, {1.0, 0.0}, 0.41, 2e-6);
        const auto scaled = beat_sample(chirp, a, 0.41, 2e-6);
        REQUIRE(std::abs(scaled - a * one) < 1e-15);
    }
    SECTION("carrier phase wraps for distance steps of c/nu at t=0") {
        const double step = kSpeedOfLight / chirp.nu;
        const double d0 = 0.52;
        for (int m : {1, 7, 40}) {
            const auto ref = beat_oracle(chirp.nu, chirp.k, d0, 0.0, {1.0, 0.0});
            const auto far = beat_sample(chirp, {1.0, 0.0}, d0 + m * step, 0.0);
            REQUIRE(std::abs(far - ref) < 1e-9);
        }
    }
}

TEST_CASE("chirp config validation", "[waveform]") {
    ChirpConfig c;
    REQUIRE(c.bandwidth() == Approx(4.0e9));
    REQUIRE(c.range_resolution() == Approx(0.0374740573).epsilon(1e-6));
    c.n_samples = 1;
    REQUIRE_THROWS_AS(c.validate(), ConfigError);
    c.n_samples = 64;
    c.nu = -1.0;
    REQUIRE_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("specular_reflect", "[waveform]") {
    SECTION("retroreflection") {
        const Vec3 o = specular_reflect(Vec3(0, 0, -1), Vec3(0, 0, 1));
        REQUIRE((o - Vec3(0, 0, 1)).norm() < 1e-15);
    }
    SECTION("grazing is unchanged") {
        const Vec3 o = specular_reflect(Vec3(1, 0, 0), Vec3(0, 0, 1));
        REQUIRE((o - Vec3(1, 0, 0)).norm() < 1e-15);
    }
    SECTION("45 degree mirror") {
        const double r = std::sqrt(2.0) / 2.0;
        const Vec3 o = specular_reflect(Vec3(r, 0, -r), Vec3(0, 0, 1));
        REQUIRE((o - Vec3(r, 0, r)).norm() < 1e-12);
    }
    SECTION("involution and unit norm") {
        Rng rng(7);
        for (int i = 0; i < 200; ++i) {
            const Vec3 wi = rng.unit_vector();
            const Vec3 n = rng.unit_vector();
            const Vec3 wo = specular_reflect(wi, n);
            REQUIRE(wo.norm() == Approx(1.0).margin(1e-12));
            REQUIRE((specular_reflect(wo, n) - wi).norm() < 1e-12);
        }
    }
    SECTION("rejects non-unit inputs") {
        REQUIRE_THROWS_AS(specular_reflect(Vec3(0, 0, -2), Vec3(0, 0, 1)), NonUnitInput);
    }
}

TEST_CASE("received_amplitude", "[waveform]") {
    auto geom = ReflectionGeometry::from_incidence(Vec3(0, 0, -1), Vec3(0, 0, 1), 0.5, 1.0);

    SECTION("transparent point gives zero") {
        REQUIRE(received_amplitude(geom, 1.0, 0.0, 1.0, 1.0) == 0.0);
    }
    SECTION("unit normalization") {
        const double a_tx = (4.0 * kPi) * (4.0 * kPi);
        REQUIRE(received_amplitude(geom, 1.0, 1.0, a_tx, 1.0) == Approx(1.0));
    }
    SECTION("back-facing clamps to zero") {
        auto flipped = geom;
        flipped.omega_r = -geom.omega_r;
        REQUIRE(received_amplitude(flipped, 1.0, 1.0, 1.0, 1.0) == 0.0);
    }
    SECTION("distance decay: doubling u cuts power by 16") {
        auto g1 = geom;
        g1.u = 0.3;
        auto g2 = geom;
        g2.u = 0.6;
        const double a1 = received_amplitude(g1, 1.0, 1.0, 1.0, 1.0, true);
        const double a2 = received_amplitude(g2, 1.0, 1.0, 1.0, 1.0, true);
        REQUIRE((a2 * a2) / (a1 * a1) == Approx(1.0 / 16.0).epsilon(1e-12));
    }
    SECTION("monotone in transmittance and opacity, non-increasing in u") {
        double prev = -1.0;
        for (double t = 0.1; t <= 1.0; t += 0.1) {
            const double v = received_amplitude(geom, t, 0.5, 1.0, 1.0);
            REQUIRE(v > prev);
            prev = v;
        }
        prev = 1e99;
        for (double u = 0.1; u <= 1.0; u += 0.1) {
            auto g = geom;
            g.u = u;
            const double v = received_amplitude(g, 0.8, 0.5, 1.0, 1.0, true);
            REQUIRE(v < prev);
            prev = v;
        }
    }
    SECTION("guards non-positive distance") {
        auto g = geom;
        g.u = 0.0;
        REQUIRE_THROWS_AS(received_amplitude(g, 1.0, 1.0, 1.0, 1.0), NonPositiveDistance);
    }
}

TEST_CASE("free_space_power_decay", "[waveform]") {
    const double f1 = free_space_power_decay(1.0);
    REQUIRE(f1 == Approx(std::pow(4.0 * kPi, -4.0)).epsilon(1e-14));
    for (double u : {0.2, 0.5, 1.7}) {
        REQUIRE(free_space_power_decay(2.0 * u) / free_space_power_decay(u) ==
                Approx(1.0 / 16.0).epsilon(1e-12));
    }
    REQUIRE_THROWS_AS(free_space_power_decay(0.0), NonPositiveDistance);
    REQUIRE_THROWS_AS(free_space_power_decay(1e-7), NonPositiveDistance);
}
