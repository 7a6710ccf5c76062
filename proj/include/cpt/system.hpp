// system.hpp — ring of coupled gain/loss microcavities and its dynamical matrix.
//
// The model: N = 2n single-mode cavities on a ring, alternating between
// amplification (gain, rate +kappa) and dissipation (loss, rate -kappa),
// every neighboring pair coupled with strength J.  Mode ordering is
// c = (a_1, b_1, a_2, b_2, ..., a_n, b_n) with a_i the gain modes and b_i
// the loss modes.  The equation of motion is
//
//     i dc/dt = [M] c + d(t),
//
// where [M] has +i*kappa / -i*kappa alternating on the diagonal, J on the
// ring's nearest-neighbor entries (including the two corner entries that
// close the ring), and d(t) carries the coherent drive i*E*exp(i*Delta*t)
// on a single site.  [M] is complex-symmetric, traceless, and invariant
// under a one-site cyclic shift combined with complex conjugation (the CPT
// symmetry that the rest of the library exploits).
//
// Units: rates are ratios to kappa and times are kappa*t; the default
// normalization is kappa = 1.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

namespace cpt {

using Complex = std::complex<double>;

enum class SiteParity { gain, loss };

/// Coherent drive acting on exactly one cavity: d_site = i*E*exp(i*Delta*t).
struct DriveSpec {
    int site_index = 0;        // 0-based position in the (a_1, b_1, ...) ordering
    double amplitude_e = 0.0;  // E >= 0, in units of kappa; 0 means undriven
    double detuning_delta = 0.0;
};

/// Physical configuration of a ring.  N = 2*n_pairs cavities total.
struct SystemParams {
    int n_pairs = 1;
    double kappa = 1.0;       // balanced amplification/dissipation rate, > 0
    double coupling_j = 0.0;  // inter-cavity coupling, >= 0
    DriveSpec drive{};
    double gamma_out = 0.0;   // cavity-to-fiber output coupling, >= 0
    bool noise_enabled = false;

    int total_sites() const { return 2 * n_pairs; }
    double j_over_kappa() const { return coupling_j / kappa; }

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// The matrix [M] plus per-site gain/loss tags.
/// Invariants (guaranteed by build_matrix):
///   entries(k,k) = +i*kappa at gain sites, -i*kappa at loss sites, alternating;
///   entries(k,k+-1 mod N) = J, all other entries zero;
///   entries is complex-symmetric.
/// For N = 2 the neighbor and corner couplings address the same pair of
/// sites; the off-diagonal entry is J (not 2J), which is the convention
/// that keeps the two-cavity spectrum at +-sqrt(kappa^2 - J^2).
struct DynamicalMatrix {
    int dim = 0;
    Eigen::MatrixXcd entries;
    std::vector<SiteParity> site_parity;

    /// Amplification rate recovered from the diagonal (0 for a kappa=0 ring).
    double kappa() const;
};

DynamicalMatrix build_matrix(const SystemParams& params);

/// Drive vector at time t: zero except d_site = i*E*exp(i*Delta*t).
Eigen::VectorXcd build_drive(const SystemParams& params, double t);

struct CptSymmetryReport {
    bool symmetric = false;   // true iff max_violation is exactly zero
    double max_violation = 0.0;
};

/// Verifies P M P^{-1} = conj(M) entrywise, where P is the one-site cyclic
/// shift (b_1, a_2, ..., b_n, a_1) and conjugation implements time reversal.
/// Matrices produced by build_matrix satisfy this exactly in floating point.
CptSymmetryReport check_cpt_symmetry(const DynamicalMatrix& m);

/// 0-based site index -> the 1-based mode label used in all output
/// ("a1", "b1", "a2", ...).  Even indices are gain, odd are loss.
std::string site_label(int index);

/// Parses either a mode label ("b3") or a plain 0-based integer index.
int site_from_label(const std::string& label, int n_sites);

}  // namespace cpt
