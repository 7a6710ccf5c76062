// spectra.hpp — eigen-analysis of -i[M]: supermode spectra, degeneracy
// grouping, exceptional points, and dynamical-regime classification.
//
// For a ring of N = 2n cavities the eigenvalues of -i[M] are
//
//     lambda_k = +-sqrt(kappa^2 - 4 J^2 cos^2(pi k / n)),   k = 0..n-1,
//
// except for N = 2 where the doubled edge carries a single coupling and
// lambda = +-sqrt(kappa^2 - J^2).  Every lambda^2 is real, so eigenvalues
// are purely real (broken, exponentially growing supermodes) or purely
// imaginary (oscillatory supermodes).  Families k and n-k share the same
// lambda, giving the double degeneracies; the k = n/2 family (present only
// for even n) is pinned at +-kappa independent of J.  A family's pair of
// eigenvalues coalesces at zero when J/kappa = 1/(2|cos(pi k/n)|) — the
// exceptional points, where the matrix becomes defective.

#pragma once

#include "cpt/system.hpp"

#include <string>
#include <vector>

namespace cpt {

enum class Regime { all_oscillatory, mixed, fully_broken, at_exceptional_point };

std::string to_string(Regime regime);

/// One clustered eigenvalue of -i[M].
struct EigenFamily {
    Complex lambda;
    int multiplicity = 0;            // algebraic (cluster size)
    int geometric_multiplicity = 0;  // rank of the clustered eigenvector set
    bool defective = false;          // geometric < algebraic
    std::vector<Eigen::VectorXcd> eigenvectors;  // unit norm, first nonzero entry real-positive
};

struct SpectrumReport {
    std::vector<EigenFamily> eigenpairs;  // sorted by (Re, Im) descending; +- paired
    bool is_defective = false;
    Regime regime = Regime::mixed;
};

/// Spectrum of -i[M] by dense eigendecomposition.  Eigenvalues within tol of
/// each other are clustered into one family; defectiveness is a singular-value
/// rank test on the clustered eigenvectors (cutoff 1e-6 relative).  A sensible
/// default tol is 1e-8 * max(kappa, J); at an exceptional point the solver
/// splits the defective cluster by ~sqrt(machine eps), so pass a looser tol
/// (e.g. 1e-6) when probing those.
/// Throws std::runtime_error if the eigensolver fails or produces non-finite
/// values; never returns silent NaNs.
SpectrumReport numerical_spectrum(const DynamicalMatrix& m, double tol);

/// Closed-form spectrum from the family formula above.  Eigenvector lists are
/// left empty: inside a degenerate family the basis choice is arbitrary, and
/// numerical_spectrum is the authority on vectors.
SpectrumReport analytic_spectrum(const SystemParams& params);

struct ExceptionalPoint {
    double j_over_kappa = 0.0;
    int merging_eigenvalue_family = 0;  // the k in lambda_k
};

struct ExceptionalPointSet {
    std::vector<ExceptionalPoint> points;  // sorted by j_over_kappa descending
    /// Families pinned at lambda = +-kappa for every J (cos(pi k/n) = 0);
    /// these contribute no exceptional point.
    std::vector<int> parameter_independent_families;
};

ExceptionalPointSet exceptional_points(const SystemParams& params);

/// all_oscillatory: every eigenvalue purely imaginary; fully_broken: every
/// eigenvalue purely real; at_exceptional_point: some |lambda| < tol
/// (takes precedence); mixed otherwise.
Regime classify_regime(const SystemParams& params, double tol);

}  // namespace cpt
