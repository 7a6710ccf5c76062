#include "cpt/spectra.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cpt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Eigenvector rank cutoff for the defectiveness test, relative to the
// largest singular value of the clustered eigenvector set.
constexpr double kRankCutoff = 1e-6;

struct FamilyValue {
    Complex lambda;
    int multiplicity;   // per eigenvalue (sign already applied)
    int family_k;
};

Complex sqrt_signed(double lambda_sq, double scale) {
    // lambda^2 is always real for these rings: the root is purely real or
    // purely imaginary.  Values within a few ulps of the subtraction scale
    // are the formula's own rounding floor at an exceptional point; snap
    // them to the exact zero (sqrt would amplify them to ~1e-8).
    if (std::abs(lambda_sq) < 8.0 * std::numeric_limits<double>::epsilon() * scale)
        return Complex(0.0, 0.0);
    if (lambda_sq >= 0.0) return Complex(std::sqrt(lambda_sq), 0.0);
    return Complex(0.0, std::sqrt(-lambda_sq));
}

// Both signed eigenvalues of every distinct family k = 0..floor(n/2),
// before merging coincident values.
std::vector<FamilyValue> analytic_family_values(const SystemParams& params) {
    const int n = params.n_pairs;
    const double kappa = params.kappa;
    const double j = params.coupling_j;

    std::vector<FamilyValue> values;
    if (n == 1) {
        const Complex lam = sqrt_signed(kappa * kappa - j * j, kappa * kappa + j * j);
        values.push_back({lam, 1, 0});
        values.push_back({-lam, 1, 0});
        return values;
    }
    for (int k = 0; k <= n / 2; ++k) {
        const double c = std::cos(kPi * k / n);
        const double coupling_sq = 4.0 * j * j * c * c;
        const Complex lam = sqrt_signed(kappa * kappa - coupling_sq, kappa * kappa + coupling_sq);
        const bool interior = (k > 0 && 2 * k < n);  // k and n-k coincide
        const int mult = interior ? 2 : 1;
        values.push_back({lam, mult, k});
        values.push_back({-lam, mult, k});
    }
    return values;
}

Regime regime_from_values(const std::vector<Complex>& lambdas, double tol) {
    bool any_zero = false, all_imag = true, all_real = true;
    for (const Complex& lam : lambdas) {
        if (std::abs(lam) < tol) any_zero = true;
        if (std::abs(lam.real()) >= tol) all_imag = false;
        if (std::abs(lam.imag()) >= tol) all_real = false;
    }
    if (any_zero) return Regime::at_exceptional_point;
    if (all_imag) return Regime::all_oscillatory;
    if (all_real) return Regime::fully_broken;
    return Regime::mixed;
}

void sort_families(std::vector<EigenFamily>& families) {
    std::sort(families.begin(), families.end(), [](const EigenFamily& a, const EigenFamily& b) {
        if (a.lambda.real() != b.lambda.real()) return a.lambda.real() > b.lambda.real();
        return a.lambda.imag() > b.lambda.imag();
    });
}

// Every family must have a +- partner of equal multiplicity (the zero
// family is its own partner).
void verify_pairing(const std::vector<EigenFamily>& families, double tol) {
    for (const EigenFamily& f : families) {
        bool paired = false;
        for (const EigenFamily& g : families) {
            if (std::abs(f.lambda + g.lambda) <= tol && f.multiplicity == g.multiplicity) {
                paired = true;
                break;
            }
        }
        if (!paired)
            throw std::runtime_error("SpectrumReport: eigenvalues do not form +- pairs");
    }
}

void fix_vector_phase(Eigen::VectorXcd& v) {
    v.normalize();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v(i));
        if (mag > 1e-9) {
            v *= std::conj(v(i)) / mag;
            break;
        }
    }
}

}  // namespace

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::all_oscillatory: return "all_oscillatory";
        case Regime::mixed: return "mixed";
        case Regime::fully_broken: return "fully_broken";
        case Regime::at_exceptional_point: return "at_exceptional_point";
    }
    return "unknown";
}

SpectrumReport numerical_spectrum(const DynamicalMatrix& m, double tol) {
    if (m.dim < 2 || m.entries.rows() != m.dim || m.entries.cols() != m.dim)
        throw std::invalid_argument("numerical_spectrum: malformed DynamicalMatrix");
    if (!(tol > 0.0))
        throw std::invalid_argument("numerical_spectrum: tol must be > 0");

    const Eigen::MatrixXcd a = Complex(0.0, -1.0) * m.entries;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(a, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("numerical_spectrum: eigensolver did not converge");
    const Eigen::VectorXcd lam = solver.eigenvalues();
    const Eigen::MatrixXcd vec = solver.eigenvectors();
    if (!lam.allFinite() || !vec.allFinite())
        throw std::runtime_error("numerical_spectrum: eigensolver produced non-finite values");

    const int n = m.dim;

    // Transitive-closure clustering within tol (union-find).
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(lam(i) - lam(j)) < tol) parent[find(i)] = find(j);

    std::vector<std::vector<int>> clusters;
    {
        std::vector<int> root_to_cluster(n, -1);
        for (int i = 0; i < n; ++i) {
            const int r = find(i);
            if (root_to_cluster[r] < 0) {
                root_to_cluster[r] = static_cast<int>(clusters.size());
                clusters.emplace_back();
            }
            clusters[root_to_cluster[r]].push_back(i);
        }
    }

    SpectrumReport report;
    std::vector<Complex> values;
    for (const std::vector<int>& cluster : clusters) {
        EigenFamily family;
        Complex mean(0.0, 0.0);
        Eigen::MatrixXcd basis(n, static_cast<Eigen::Index>(cluster.size()));
        for (std::size_t c = 0; c < cluster.size(); ++c) {
            mean += lam(cluster[c]);
            basis.col(static_cast<Eigen::Index>(c)) = vec.col(cluster[c]);
        }
        family.lambda = mean / static_cast<double>(cluster.size());
        family.multiplicity = static_cast<int>(cluster.size());

        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(basis);
        const auto& sv = svd.singularValues();
        int rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > kRankCutoff * sv(0)) ++rank;
        family.geometric_multiplicity = rank;
        family.defective = rank < family.multiplicity;
        report.is_defective = report.is_defective || family.defective;

        for (int idx : cluster) {
            Eigen::VectorXcd v = vec.col(idx);
            fix_vector_phase(v);
            family.eigenvectors.push_back(std::move(v));
        }
        values.push_back(family.lambda);
        report.eigenpairs.push_back(std::move(family));
    }

    sort_families(report.eigenpairs);
    verify_pairing(report.eigenpairs, 10.0 * tol);
    report.regime = regime_from_values(values, tol);
    return report;
}

SpectrumReport analytic_spectrum(const SystemParams& params) {
    params.validate();
    const double scale = std::max(params.kappa, 2.0 * params.coupling_j);
    const double merge_tol = 1e-12 * std::max(scale, 1.0);

    SpectrumReport report;
    std::vector<Complex> values;
    for (const FamilyValue& fv : analytic_family_values(params)) {
        bool merged = false;
        for (EigenFamily& f : report.eigenpairs) {
            if (std::abs(f.lambda - fv.lambda) <= merge_tol) {
                f.multiplicity += fv.multiplicity;
                merged = true;
                break;
            }
        }
        if (!merged) {
            EigenFamily f;
            f.lambda = fv.lambda;
            f.multiplicity = fv.multiplicity;
            report.eigenpairs.push_back(std::move(f));
        }
        values.push_back(fv.lambda);
    }

    for (EigenFamily& f : report.eigenpairs) {
        if (std::abs(f.lambda) <= merge_tol) {
            // +- branches of the merging families coalesced at zero: one
            // proper eigenvector per 2x2 Jordan block.
            f.geometric_multiplicity = f.multiplicity / 2;
            f.defective = true;
            report.is_defective = true;
        } else {
            f.geometric_multiplicity = f.multiplicity;
        }
    }

    sort_families(report.eigenpairs);
    report.regime = regime_from_values(values, 1e-8 * std::max(scale, 1.0));
    return report;
}

ExceptionalPointSet exceptional_points(const SystemParams& params) {
    params.validate();
    const int n = params.n_pairs;

    ExceptionalPointSet set;
    if (n == 1) {
        set.points.push_back({1.0, 0});
        return set;
    }
    for (int k = 0; k <= n / 2; ++k) {
        const double c = std::cos(kPi * k / n);
        if (std::abs(c) < 1e-15)
            set.parameter_independent_families.push_back(k);
        else
            set.points.push_back({1.0 / (2.0 * std::abs(c)), k});
    }
    std::sort(set.points.begin(), set.points.end(),
              [](const ExceptionalPoint& a, const ExceptionalPoint& b) {
                  return a.j_over_kappa > b.j_over_kappa;
              });
    return set;
}

Regime classify_regime(const SystemParams& params, double tol) {
    params.validate();
    if (!(tol > 0.0)) throw std::invalid_argument("classify_regime: tol must be > 0");
    std::vector<Complex> values;
    for (const FamilyValue& fv : analytic_family_values(params)) values.push_back(fv.lambda);
    return regime_from_values(values, tol);
}

}  // namespace cpt
