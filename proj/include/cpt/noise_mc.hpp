// noise_mc.hpp — Monte Carlo cross-check for the moment propagation.
//
// Samples classical complex trajectories of dc = (-i[M]c - i d_coh)dt + dW
// with independent zero-mean Gaussian increments <dW_k* dW_k> = 2*kappa*dt
// at gain sites and 0 at loss sites.  The ensemble statistics of these
// classical trajectories reproduce the normal-ordered quantum moments
// (means and <c_i^dag c_j>); anti-normally ordered quantities are NOT
// reproduced by this equivalence and are not produced here.

#pragma once

#include "cpt/evolution.hpp"
#include "cpt/system.hpp"

#include <cstdint>
#include <vector>

namespace cpt {

struct TrajectoryEnsemble {
    int n_traj = 0;
    std::uint64_t seed = 0;
    double dt = 0.0;
    std::vector<double> times;     // recorded grid
    Eigen::MatrixXcd mean_amp;     // (n_times x N) ensemble-mean amplitudes
    Eigen::MatrixXd mean_amp_se;   // standard error of |mean_amp|
    Eigen::MatrixXd photon;        // (n_times x N) mean |c_k|^2
    Eigen::MatrixXd photon_se;     // standard error of photon
};

/// Euler-Maruyama ensemble with per-trajectory RNG streams derived from
/// (seed, trajectory index): results are bit-identical for a given
/// (seed, dt, n_traj, params, record_stride) regardless of thread count.
/// Statistics are recorded every record_stride steps (plus the final step).
/// Rejects dt * max(kappa, 2J) >= 0.05 as an unstable step size.
TrajectoryEnsemble sample_trajectories(const SystemParams& params, double t_final, double dt,
                                       int n_traj, std::uint64_t seed, int record_stride = 1,
                                       int n_threads = 0);

struct McComparison {
    Eigen::MatrixXd z;  // (n_times x N) z-scores: (estimate - reference)/se
    double max_abs_z = 0.0;
    double fraction_within_3se = 1.0;
};

/// Per-site, per-time z-scores of the ensemble photon numbers against a
/// deterministic moment trajectory on the same time grid.
McComparison compare_to_deterministic(const TrajectoryEnsemble& ensemble,
                                      const std::vector<MomentState>& reference);

}  // namespace cpt
