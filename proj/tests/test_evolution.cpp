#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cpt/evolution.hpp"
#include "cpt/system.hpp"
#include "oracles.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

using namespace cpt;

namespace {

SystemParams six_ring(double j, double e_amp, bool noise) {
    return SystemParams{.n_pairs = 3,
                        .kappa = 1.0,
                        .coupling_j = j,
                        .drive = {.site_index = 0, .amplitude_e = e_amp},
                        .noise_enabled = noise};
}

}  // namespace

TEST_CASE("propagator: G(0) is the identity") {
    const auto m = build_matrix(six_ring(0.7, 0.0, false));
    const auto res = propagator(m, 0.0);
    CHECK((res.g - Eigen::MatrixXcd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("propagator: decoupled pair gives bare exponentials") {
    SystemParams p{.n_pairs = 1, .kappa = 1.0, .coupling_j = 0.0};
    const auto m = build_matrix(p);
    for (double t : {0.3, 1.0, 2.0}) {
        const auto res = propagator(m, t);
        CHECK(std::abs(res.g(0, 0) - std::exp(t)) < 1e-12 * std::exp(t));
        CHECK(std::abs(res.g(1, 1) - std::exp(-t)) < 1e-12);
        CHECK(std::abs(res.g(0, 1)) < 1e-14);
    }
}

TEST_CASE("propagator: complex-symmetric, forward/backward elements equal") {
    const auto m = build_matrix(six_ring(0.6, 0.0, false));
    const auto res = propagator(m, 2.0);
    CHECK(res.method == PropagatorMethod::eigendecomposition);
    CHECK((res.g - res.g.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(res.g(0, 5) - res.g(5, 0)) < 1e-10);

    // cross-check against an independent scaling-and-squaring evaluation
    const Eigen::MatrixXcd direct = (Complex(0, -1) * m.entries * 2.0).exp();
    CHECK((res.g - direct).cwiseAbs().maxCoeff() < 1e-10 * direct.cwiseAbs().maxCoeff());
}

TEST_CASE("propagator: falls back to scaling-and-squaring at an exceptional point") {
    const auto m = build_matrix(six_ring(1.0, 0.0, false));
    const auto res = propagator(m, 1.5);
    CHECK(res.method == PropagatorMethod::scaling_squaring);
    CHECK(res.g.allFinite());
    CHECK((res.g - res.g.transpose()).cwiseAbs().maxCoeff() < 1e-10);

    // dual route: columns of G(t) equal ODE-evolved basis states
    SystemParams p = six_ring(1.0, 0.0, false);
    for (int col : {0, 3}) {
        MomentState init = MomentState::vacuum(6);
        init.mean(col) = 1.0;
        init.corr(col, col) = 1.0;
        const auto series = evolve_moments(p, 1.5, 1.5, init);
        CHECK((series.back().mean - res.g.col(col)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("propagator rejects negative time") {
    const auto m = build_matrix(six_ring(0.5, 0.0, false));
    CHECK_THROWS_AS(propagator(m, -0.1), std::invalid_argument);
}

TEST_CASE("evolve_moments: undriven noiseless vacuum stays vacuum") {
    const auto series = evolve_moments(six_ring(1.3, 0.0, false), 5.0, 0.5);
    REQUIRE(series.size() == 11);
    for (const auto& s : series) {
        CHECK(s.mean.norm() == 0.0);
        CHECK(s.corr.norm() == 0.0);
    }
}

TEST_CASE("evolve_moments: decoupled gain cavity closed form") {
    SystemParams p{.n_pairs = 1, .kappa = 1.0, .coupling_j = 0.0, .noise_enabled = true};
    const auto series = evolve_moments(p, 2.0, 0.5);
    REQUIRE(series.size() == 5);
    for (const auto& s : series) {
        const double expected = test::decoupled_gain_photon(1.0, s.time);
        CHECK(std::abs(s.corr(0, 0).real() - expected) <=
              1e-8 * std::max(expected, 1e-12));            // gain site: e^{2kt} - 1
        CHECK(std::abs(s.corr(1, 1)) <= 1e-12);             // loss site stays dark
    }

    SUBCASE("kappa != 1 rescales the rate") {
        SystemParams p2 = p;
        p2.kappa = 2.0;
        const auto s2 = evolve_moments(p2, 1.0, 1.0);
        const double expected = test::decoupled_gain_photon(2.0, 1.0);
        CHECK(std::abs(s2.back().corr(0, 0).real() - expected) <= 1e-8 * expected);
    }
}

TEST_CASE("evolve_moments: degeneracy symmetry and the diagonal-cavity peak (J/kappa = 2.5)") {
    const auto series = evolve_moments(six_ring(2.5, 20.0, false), 8.0, 0.01);
    double peak_b2 = 0.0, peak_a2 = 0.0, peak_a3 = 0.0;
    for (const auto& s : series) {
        const double nb1 = s.corr(1, 1).real(), nb3 = s.corr(5, 5).real();
        const double na2 = s.corr(2, 2).real(), na3 = s.corr(4, 4).real();
        CHECK(std::abs(nb1 - nb3) <= 1e-8 * std::max({nb1, nb3, 1.0}));
        CHECK(std::abs(na2 - na3) <= 1e-8 * std::max({na2, na3, 1.0}));
        peak_b2 = std::max(peak_b2, s.corr(3, 3).real());
        peak_a2 = std::max(peak_a2, na2);
        peak_a3 = std::max(peak_a3, na3);
    }
    CHECK(peak_b2 > peak_a2);
    CHECK(peak_b2 > peak_a3);
}

TEST_CASE("evolve_moments: trajectory stays Hermitian and positive") {
    const auto series = evolve_moments(six_ring(0.6, 20.0, true), 8.0, 0.25);
    for (const auto& s : series) {
        CHECK((s.corr - s.corr.adjoint()).cwiseAbs().maxCoeff() <=
              1e-9 * (1.0 + s.corr.cwiseAbs().maxCoeff()));
        CHECK_NOTHROW(s.validate(1e-8));
    }
}

TEST_CASE("evolve_moments: argument validation") {
    const auto p = six_ring(0.5, 1.0, false);
    CHECK_THROWS_AS(evolve_moments(p, -1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(evolve_moments(p, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(evolve_moments(p, 1.0, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(evolve_moments(p, 1.0, 0.1, MomentState::vacuum(4)),
                    std::invalid_argument);
    MomentState bad = MomentState::vacuum(6);
    bad.corr(0, 1) = 1.0;  // not Hermitian
    CHECK_THROWS_AS(evolve_moments(p, 1.0, 0.1, bad), std::runtime_error);
}

TEST_CASE("oracle equivalence: moment ODE matches the formal-solution quadrature") {
    for (double j : {2.5, 0.6, 0.4}) {
        const SystemParams p = six_ring(j, 5.0, true);
        const test::PropagatorOracle oracle(p);
        const auto series = evolve_moments(p, 8.0, 2.0);
        for (const auto& s : series) {
            if (s.time == 0.0) continue;
            const MomentState expected = test::quadrature_moments(oracle, s.time, 1e-11);
            const double c_scale = std::max(1.0, expected.corr.cwiseAbs().maxCoeff());
            const double m_scale = std::max(1.0, expected.mean.cwiseAbs().maxCoeff());
            CHECK((s.corr - expected.corr).cwiseAbs().maxCoeff() <= 1e-6 * c_scale);
            CHECK((s.mean - expected.mean).cwiseAbs().maxCoeff() <= 1e-6 * m_scale);
        }
    }
}

TEST_CASE("photon_numbers") {
    SUBCASE("vacuum is dark") {
        CHECK(photon_numbers(MomentState::vacuum(4)).norm() == 0.0);
    }
    SUBCASE("amplified cavity at kappa*t = 1") {
        SystemParams p{.n_pairs = 1, .kappa = 1.0, .noise_enabled = true};
        const auto series = evolve_moments(p, 1.0, 1.0);
        const double expected = 6.38905609893065;  // e^2 - 1
        CHECK(photon_numbers(series.back())(0) == doctest::Approx(expected).epsilon(1e-8));
    }
    SUBCASE("coherent state gives |mu|^2") {
        MomentState s = MomentState::vacuum(3);
        s.mean(0) = Complex(0.0, 2.0);
        s.corr = s.mean.conjugate() * s.mean.transpose();
        const Eigen::VectorXd n = photon_numbers(s);
        CHECK(n(0) == doctest::Approx(4.0));
        CHECK(n(1) == 0.0);
    }
    SUBCASE("negative diagonal beyond tolerance is an error") {
        MomentState s = MomentState::vacuum(2);
        s.corr(0, 0) = -1.0;
        CHECK_THROWS_AS(photon_numbers(s), std::runtime_error);
    }
}

TEST_CASE("average_contrast") {
    SUBCASE("perfect correlation saturates at 1") {
        MomentState s = MomentState::vacuum(2);
        s.corr << Complex(3.0, 0.0), Complex(3.0, 0.0), Complex(3.0, 0.0), Complex(3.0, 0.0);
        const auto c = average_contrast(s, 0, 1);
        REQUIRE(c.has_value());
        CHECK(*c == doctest::Approx(1.0));
    }
    SUBCASE("vacuum is undefined, not NaN or zero") {
        CHECK_FALSE(average_contrast(MomentState::vacuum(2), 0, 1).has_value());
    }
    SUBCASE("same site is rejected") {
        CHECK_THROWS_AS(average_contrast(MomentState::vacuum(2), 1, 1), std::invalid_argument);
    }
    SUBCASE("broken-regime contrast stabilizes at late times (J/kappa = 0.6)") {
        const SystemParams p = six_ring(0.6, 20.0, false);
        const std::vector<double> times{15.0, 20.0};
        const auto states = evolve_moments_at(p, times, MomentState::vacuum(6));
        const auto c15 = average_contrast(states[0], 0, 1);
        const auto c20 = average_contrast(states[1], 0, 1);
        REQUIRE(c15.has_value());
        REQUIRE(c20.has_value());
        CHECK(std::abs(*c15 - *c20) < 1e-3 * *c20);
    }
}

TEST_CASE("output_flux") {
    SUBCASE("no output coupling, no flux") {
        SystemParams p{.n_pairs = 1, .kappa = 1.0, .gamma_out = 0.0};
        MomentState v = MomentState::vacuum(2);
        v.corr(0, 0) = 7.0;
        CHECK(output_flux(v, p).norm() == 0.0);
    }
    SUBCASE("2*gamma = 1 reproduces the photon numbers") {
        SystemParams p{.n_pairs = 1, .kappa = 1.0, .gamma_out = 0.5};
        MomentState v = MomentState::vacuum(2);
        v.corr(0, 0) = 4.0;
        const Eigen::VectorXd f = output_flux(v, p);
        CHECK(f(0) == doctest::Approx(4.0));
        CHECK(f(1) == 0.0);
    }
    SUBCASE("amplified cavity with gamma = 1") {
        SystemParams p{.n_pairs = 1, .kappa = 1.0, .gamma_out = 1.0, .noise_enabled = true};
        const auto series = evolve_moments(p, 1.0, 1.0);
        const double expected = 2.0 * 6.38905609893065;  // 2(e^2 - 1)
        CHECK(output_flux(series.back(), p)(0) == doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("reciprocity_experiment: noiseless transport is reciprocal") {
    for (double j : {1.2, 0.6, 0.4}) {
        const auto points = reciprocity_experiment(six_ring(j, 5.0, false), 0, 5, 8.0, 0.1);
        for (const auto& pt : points)
            CHECK(pt.abs_difference <= 1e-8 * std::max(pt.p_forward, 1.0));
    }
}

TEST_CASE("reciprocity_experiment: decoupled limit isolates the spontaneous photons") {
    // J=0, E=0, noise on: forward sees nothing at b3, backward sees a1's
    // amplified vacuum, so |difference| = e^{2kt} - 1
    SystemParams p = six_ring(0.0, 0.0, true);
    const auto points = reciprocity_experiment(p, 0, 5, 2.0, 0.5);
    for (const auto& pt : points) {
        CHECK(pt.p_forward <= 1e-12);
        const double expected = test::decoupled_gain_photon(1.0, pt.time);
        CHECK(std::abs(pt.abs_difference - expected) <= 1e-8 * std::max(expected, 1e-12));
    }
}

TEST_CASE("reciprocity_experiment: noise breaks reciprocity in the broken regimes") {
    for (double j : {0.6, 0.4}) {
        const auto points = reciprocity_experiment(six_ring(j, 5.0, true), 0, 5, 8.0, 0.25);
        double prev = -1.0;
        for (const auto& pt : points) {
            if (pt.time > 0.5) CHECK(pt.abs_difference > 0.0);
            if (pt.time >= 2.0) {
                CHECK(pt.abs_difference > prev);
                prev = pt.abs_difference;
            }
        }
    }
}

TEST_CASE("reciprocity_experiment: site parity is enforced") {
    const auto p = six_ring(0.5, 1.0, false);
    CHECK_THROWS_AS(reciprocity_experiment(p, 1, 5, 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(reciprocity_experiment(p, 0, 4, 1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(reciprocity_experiment(p, 0, 7, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("saturation_check") {
    SUBCASE("vacuum series is clean") {
        std::vector<MomentState> series(5, MomentState::vacuum(4));
        CHECK(saturation_check(series, 100.0, 0.05).empty());
    }
    SUBCASE("amplified cavity crosses threshold at kt = ln(6)/2") {
        SystemParams p{.n_pairs = 1, .kappa = 1.0, .noise_enabled = true};
        const double dt_out = 1e-3;
        const auto series = evolve_moments(p, 1.2, dt_out);
        const auto violations = saturation_check(series, 100.0, 0.05);
        REQUIRE_FALSE(violations.empty());
        const double expected = 0.8958797346140275;  // ln(6)/2
        CHECK(std::abs(violations.front().time - expected) <= 2.0 * dt_out);
        CHECK(violations.front().site == 0);
        CHECK(violations.front().intensity_ratio > 0.05);
    }
    SUBCASE("weak fields never flag") {
        SystemParams p{.n_pairs = 1, .kappa = 1.0, .noise_enabled = true};
        const auto series = evolve_moments(p, 1.0, 0.1);
        CHECK(saturation_check(series, 1e6, 0.05).empty());
    }
    SUBCASE("parameter validation") {
        std::vector<MomentState> series(1, MomentState::vacuum(2));
        CHECK_THROWS_AS(saturation_check(series, 0.0, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(saturation_check(series, 1.0, 1.5), std::invalid_argument);
    }
}

TEST_CASE("MomentState::validate catches corrupted states") {
    MomentState s = MomentState::vacuum(3);
    CHECK_NOTHROW(s.validate());
    s.corr(0, 1) = Complex(0.5, 0.0);  // breaks Hermiticity (0,1) vs (1,0)
    CHECK_THROWS_AS(s.validate(1e-10), std::runtime_error);

    MomentState neg = MomentState::vacuum(2);
    neg.mean(0) = 1.0;  // corr stays zero: diagonal below |mu|^2
    CHECK_THROWS_AS(neg.validate(1e-10), std::runtime_error);
}

TEST_CASE("NoiseSourceMatrix") {
    SystemParams p = six_ring(0.5, 0.0, true);
    p.kappa = 1.5;
    const auto s = NoiseSourceMatrix::build(p);
    for (int k = 0; k < 6; ++k) CHECK(s.diag(k) == (k % 2 == 0 ? 3.0 : 0.0));
    p.noise_enabled = false;
    CHECK(NoiseSourceMatrix::build(p).diag.norm() == 0.0);
}
