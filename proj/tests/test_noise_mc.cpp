#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cpt/evolution.hpp"
#include "cpt/noise_mc.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace cpt;

namespace {

SystemParams gain_pair(bool noise) {
    return SystemParams{.n_pairs = 1, .kappa = 1.0, .coupling_j = 0.0, .noise_enabled = noise};
}

SystemParams driven_six(double j, double e_amp) {
    return SystemParams{.n_pairs = 3,
                        .kappa = 1.0,
                        .coupling_j = j,
                        .drive = {.site_index = 0, .amplitude_e = e_amp},
                        .noise_enabled = true};
}

}  // namespace

TEST_CASE("sample_trajectories: noise off, undriven: everything is exactly zero") {
    const auto ens = sample_trajectories(gain_pair(false), 1.0, 1e-2, 64, 7, 10);
    CHECK(ens.photon.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ens.mean_amp.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ens.photon_se.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_trajectories: amplified cavity matches the closed form within 3 se") {
    const auto ens = sample_trajectories(gain_pair(true), 1.0, 1e-3, 10'000, 42, 100);
    const auto last = static_cast<Eigen::Index>(ens.times.size() - 1);
    const double expected = test::decoupled_gain_photon(1.0, 1.0);
    const double se = ens.photon_se(last, 0);
    CHECK(se > 0.0);
    CHECK(std::abs(ens.photon(last, 0) - expected) <= 3.0 * se);
    CHECK(ens.photon(last, 1) == 0.0);  // loss site receives no noise
}

TEST_CASE("sample_trajectories: driven ring agrees with the moment ODE") {
    // dt well below the default: the O(dt) Euler-Maruyama bias must stay
    // inside the statistical resolution of 3000 trajectories
    const SystemParams p = driven_six(0.6, 5.0);
    const auto ens = sample_trajectories(p, 4.0, 5e-4, 3000, 9001, 400);
    const auto ref = evolve_moments_at(p, ens.times, MomentState::vacuum(6));
    const auto cmp = compare_to_deterministic(ens, ref);
    CHECK(cmp.max_abs_z < 4.5);
    CHECK(cmp.fraction_within_3se >= 0.97);
}

TEST_CASE("compare_to_deterministic") {
    SUBCASE("zero-noise, zero-drive pair: z is exactly zero") {
        const SystemParams p = gain_pair(false);
        const auto ens = sample_trajectories(p, 0.5, 1e-2, 32, 1, 5);
        const auto ref = evolve_moments_at(p, ens.times, MomentState::vacuum(2));
        const auto cmp = compare_to_deterministic(ens, ref);
        CHECK(cmp.max_abs_z == 0.0);
        CHECK(cmp.fraction_within_3se == 1.0);
    }
    SUBCASE("a reference off by 10 se is flagged") {
        const auto ens = sample_trajectories(gain_pair(true), 1.0, 1e-3, 2000, 5, 100);
        auto ref = evolve_moments_at(gain_pair(true), ens.times, MomentState::vacuum(2));
        const auto last = static_cast<Eigen::Index>(ens.times.size() - 1);
        ref.back().corr(0, 0) += 10.0 * ens.photon_se(last, 0);
        const auto cmp = compare_to_deterministic(ens, ref);
        CHECK(cmp.max_abs_z > 5.0);
    }
    SUBCASE("grid mismatch is rejected") {
        const auto ens = sample_trajectories(gain_pair(true), 1.0, 1e-2, 16, 5, 10);
        auto ref = evolve_moments_at(gain_pair(true), ens.times, MomentState::vacuum(2));
        ref.pop_back();
        CHECK_THROWS_AS(compare_to_deterministic(ens, ref), std::invalid_argument);
        auto shifted = evolve_moments_at(gain_pair(true), ens.times, MomentState::vacuum(2));
        shifted[1].time += 0.01;
        CHECK_THROWS_AS(compare_to_deterministic(ens, shifted), std::invalid_argument);
    }
}

TEST_CASE("sample_trajectories: bit-identical reruns and thread independence") {
    const SystemParams p = driven_six(0.8, 2.0);
    const auto a = sample_trajectories(p, 1.0, 2e-3, 300, 77, 50, /*n_threads=*/1);
    const auto b = sample_trajectories(p, 1.0, 2e-3, 300, 77, 50, /*n_threads=*/1);
    const auto c = sample_trajectories(p, 1.0, 2e-3, 300, 77, 50, /*n_threads=*/4);
    CHECK((a.photon - b.photon).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.mean_amp - b.mean_amp).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.photon_se - b.photon_se).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.photon - c.photon).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.mean_amp - c.mean_amp).cwiseAbs().maxCoeff() == 0.0);
    SUBCASE("different seeds decorrelate") {
        const auto d = sample_trajectories(p, 1.0, 2e-3, 300, 78, 50);
        CHECK((a.photon - d.photon).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("sample_trajectories: mean amplitudes converge at ~1/sqrt(n_traj)") {
    const SystemParams p = driven_six(0.6, 5.0);
    const auto small = sample_trajectories(p, 2.0, 2e-3, 1000, 31, 100);
    const auto big = sample_trajectories(p, 2.0, 2e-3, 2000, 31, 100);
    const auto ref = evolve_moments_at(p, small.times, MomentState::vacuum(6));

    double ratio_sum = 0.0;
    int count = 0;
    for (std::size_t i = 1; i < small.times.size(); ++i) {
        for (int k = 0; k < 6; ++k) {
            const auto row = static_cast<Eigen::Index>(i);
            const double err_small = std::abs(small.mean_amp(row, k) - ref[i].mean(k));
            const double err_big = std::abs(big.mean_amp(row, k) - ref[i].mean(k));
            if (err_small > 1e-12) {
                ratio_sum += err_big / err_small;
                ++count;
            }
        }
    }
    REQUIRE(count > 50);
    const double mean_ratio = ratio_sum / count;
    CHECK(mean_ratio > 0.5);
    CHECK(mean_ratio < 0.9);
}

TEST_CASE("Euler-Maruyama bias is below one standard error (coupled fine path)") {
    // Integrates the same Brownian path at dt and dt/2; the difference then
    // isolates the discretization bias instead of fresh sampling noise.
    const double kappa = 1.0, t_final = 1.0;
    const double dt = 1e-3;
    const long n_steps = std::lround(t_final / dt);
    const int n_traj = 4000;

    std::mt19937_64 rng(123);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double sum_coarse = 0.0, sum_fine = 0.0, sum_sq = 0.0;
    for (int traj = 0; traj < n_traj; ++traj) {
        Complex c_coarse(0.0, 0.0), c_fine(0.0, 0.0);
        const double sig_f = std::sqrt(kappa * dt / 2.0);
        for (long m = 0; m < n_steps; ++m) {
            const Complex dw1(sig_f * gauss(rng), sig_f * gauss(rng));
            const Complex dw2(sig_f * gauss(rng), sig_f * gauss(rng));
            c_fine += (dt / 2.0) * kappa * c_fine + dw1;
            c_fine += (dt / 2.0) * kappa * c_fine + dw2;
            c_coarse += dt * kappa * c_coarse + (dw1 + dw2);
        }
        const double n_c = std::norm(c_coarse);
        sum_coarse += n_c;
        sum_fine += std::norm(c_fine);
        sum_sq += n_c * n_c;
    }
    const double est_coarse = sum_coarse / n_traj;
    const double est_fine = sum_fine / n_traj;
    const double var = (sum_sq - sum_coarse * sum_coarse / n_traj) / (n_traj - 1);
    const double se = std::sqrt(var / n_traj);
    CHECK(std::abs(est_coarse - est_fine) < se);
}

TEST_CASE("sample_trajectories rejects bad arguments") {
    CHECK_THROWS_AS(sample_trajectories(driven_six(2.5, 1.0), 1.0, 0.02, 10, 1),
                    std::invalid_argument);  // dt*2J = 0.1 >= 0.05
    CHECK_THROWS_AS(sample_trajectories(gain_pair(true), 1.0, 1e-3, 0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(sample_trajectories(gain_pair(true), -1.0, 1e-3, 10, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(sample_trajectories(gain_pair(true), 1.0, 1e-3, 10, 1, 0),
                    std::invalid_argument);
}
