// evolution.hpp — deterministic propagation of first and second moments
// under coherent drive and quantum noise, plus the observables built on them.
//
// With A = -i[M], the mean amplitudes mu_k = <c_k> and the normal-ordered
// correlation matrix C_ij = <c_i^dag c_j> obey
//
//     dmu/dt = A mu - i d(t)
//     dC/dt  = conj(A) C + C A + S + i conj(d) mu^T - i conj(mu) d^T
//
// where d(t) is the coherent drive vector and S is the noise source matrix:
// amplification noise feeds 2*kappa into the diagonal at gain sites, while
// the vacuum loss noise contributes nothing to normal-ordered moments.
// (A^T = A because [M] is complex-symmetric.)  A vacuum initial state stays
// Gaussian, so (mu, C) fully determine every reported observable.

#pragma once

#include "cpt/system.hpp"

#include <optional>
#include <span>
#include <vector>

namespace cpt {

/// First and second moments at one instant.  corr is the full normal-ordered
/// matrix, i.e. it includes the coherent contribution conj(mu) mu^T.
struct MomentState {
    double time = 0.0;
    Eigen::VectorXcd mean;  // mu_k = <c_k>
    Eigen::MatrixXcd corr;  // C_ij = <c_i^dag c_j>, Hermitian

    static MomentState vacuum(int n_sites);

    /// Checks Hermiticity, real non-negative diagonal, and positive
    /// semidefiniteness of the noise part corr - conj(mu) mu^T.
    /// Throws std::runtime_error with diagnostics on violation.
    void validate(double tol = 1e-8) const;
};

/// Diagonal noise source: 2*kappa at gain sites when noise is enabled,
/// all-zero otherwise.
struct NoiseSourceMatrix {
    Eigen::VectorXd diag;
    static NoiseSourceMatrix build(const SystemParams& params);
};

enum class PropagatorMethod { eigendecomposition, scaling_squaring };

struct PropagatorResult {
    Eigen::MatrixXcd g;  // G(t) = exp(-i[M] t), complex-symmetric
    PropagatorMethod method = PropagatorMethod::eigendecomposition;
};

/// G(t) by eigendecomposition when the eigenvector basis is well conditioned,
/// falling back to scaling-and-squaring near exceptional points.
PropagatorResult propagator(const DynamicalMatrix& m, double t);

struct EvolveOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-13;
    long max_steps = 50'000'000;
};

/// Integrates the moment equations from `initial` and returns states at the
/// output grid t = 0, dt_out, 2*dt_out, ..., up to t_final (adaptive
/// Dormand-Prince 5(4); steps land exactly on the grid).
/// Throws on step-size underflow and on Hermiticity loss along the way.
std::vector<MomentState> evolve_moments(const SystemParams& params, double t_final, double dt_out,
                                        const MomentState& initial,
                                        const EvolveOptions& opts = {});

/// Vacuum-initial convenience overload.
std::vector<MomentState> evolve_moments(const SystemParams& params, double t_final, double dt_out,
                                        const EvolveOptions& opts = {});

/// Same integration, emitting at an arbitrary ascending time grid
/// (every entry >= initial.time).
std::vector<MomentState> evolve_moments_at(const SystemParams& params,
                                           std::span<const double> times,
                                           const MomentState& initial,
                                           const EvolveOptions& opts = {});

/// Re(diag(corr)); throws if a diagonal entry is negative beyond tolerance.
Eigen::VectorXd photon_numbers(const MomentState& state);

/// Average contrast 2|C_ij| / (C_ii + C_jj) in [0, 1].  Returns nullopt when
/// both intensities vanish (below tol) — the quantity is undefined at vacuum.
std::optional<double> average_contrast(const MomentState& state, int site_i, int site_j,
                                       double tol = 1e-12);

/// Fiber output flux 2*gamma*<c_i^dag c_i> per site.  The driven cavity's
/// output carries an extra interference term with the drive that is not
/// modeled; see kDrivenSiteFluxCaveat.
Eigen::VectorXd output_flux(const MomentState& state, const SystemParams& params);

inline constexpr const char* kDrivenSiteFluxCaveat =
    "output flux at the driven site omits the drive interference term";

struct ReciprocityPoint {
    double time = 0.0;
    double p_forward = 0.0;   // photon number at site_bwd, drive on site_fwd
    double p_backward = 0.0;  // photon number at site_fwd, drive on site_bwd
    double abs_difference = 0.0;
};

/// Runs the forward and backward transmission experiments with identical
/// drive amplitude and detuning.  site_fwd must be a gain site and site_bwd
/// a loss site.  Without noise the two transported photon numbers coincide
/// (G is complex-symmetric); amplification noise breaks the equality.
std::vector<ReciprocityPoint> reciprocity_experiment(const SystemParams& params, int site_fwd,
                                                     int site_bwd, double t_final, double dt_out,
                                                     const EvolveOptions& opts = {
                                                         .rel_tol = 1e-11, .abs_tol = 1e-14});

struct SaturationViolation {
    double time = 0.0;
    int site = 0;
    double intensity_ratio = 0.0;  // photon number / i_sat
};

/// Diagnostic only: flags every (time, gain site) where the photon number
/// exceeds threshold * i_sat, i.e. where the constant-gain approximation
/// kappa -> kappa/(1 + I/I_s) would start to bend.  Dynamics stay linear.
std::vector<SaturationViolation> saturation_check(const std::vector<MomentState>& series,
                                                  double i_sat, double threshold);

}  // namespace cpt
