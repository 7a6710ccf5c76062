#include "oracles.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace cpt::test {

namespace {

Complex pm_sqrt(double value) {
    if (value >= 0.0) return Complex(std::sqrt(value), 0.0);
    return Complex(0.0, std::sqrt(-value));
}

void push_pair(std::vector<Complex>& out, Complex lambda, int mult) {
    for (int i = 0; i < mult; ++i) {
        out.push_back(lambda);
        out.push_back(-lambda);
    }
}

void sort_canonical(std::vector<Complex>& v) {
    std::sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

}  // namespace

std::vector<Complex> table1_eigenvalues(int n_sites, double kappa, double j) {
    const double k2 = kappa * kappa, j2 = j * j;
    std::vector<Complex> out;
    switch (n_sites) {
        case 2:
            push_pair(out, pm_sqrt(k2 - j2), 1);
            break;
        case 4:
            push_pair(out, Complex(kappa, 0.0), 1);
            push_pair(out, pm_sqrt(k2 - 4.0 * j2), 1);
            break;
        case 6:
            push_pair(out, pm_sqrt(k2 - j2), 2);
            push_pair(out, pm_sqrt(k2 - 4.0 * j2), 1);
            break;
        case 8:
            push_pair(out, Complex(kappa, 0.0), 1);
            push_pair(out, pm_sqrt(k2 - 2.0 * j2), 2);
            push_pair(out, pm_sqrt(k2 - 4.0 * j2), 1);
            break;
        case 10: {
            const double s5 = std::sqrt(5.0);
            push_pair(out, pm_sqrt(k2 - 0.5 * (3.0 - s5) * j2), 2);
            push_pair(out, pm_sqrt(k2 - 0.5 * (3.0 + s5) * j2), 2);
            push_pair(out, pm_sqrt(k2 - 4.0 * j2), 1);
            break;
        }
        case 12:
            push_pair(out, Complex(kappa, 0.0), 1);
            push_pair(out, pm_sqrt(k2 - j2), 2);
            push_pair(out, pm_sqrt(k2 - 3.0 * j2), 2);
            push_pair(out, pm_sqrt(k2 - 4.0 * j2), 1);
            break;
        default:
            throw std::invalid_argument("table1_eigenvalues: no tabulated row for N=" +
                                        std::to_string(n_sites));
    }
    return out;
}

double multiset_distance(std::vector<Complex> a, std::vector<Complex> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("multiset_distance: size mismatch");
    // Greedy nearest matching: a plain lexicographic sort mispairs degenerate
    // values whose tie-breaking component carries numerical noise.
    sort_canonical(a);
    double worst = 0.0;
    for (const Complex& va : a) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double d = std::abs(va - b[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        worst = std::max(worst, best_d);
        b.erase(b.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return worst;
}

PropagatorOracle::PropagatorOracle(const SystemParams& params) : params_(params) {
    const DynamicalMatrix m = build_matrix(params);
    const Eigen::MatrixXcd a = Complex(0.0, -1.0) * m.entries;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(a, true);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("PropagatorOracle: eigensolver failed");
    basis_ = solver.eigenvectors();
    lambda_ = solver.eigenvalues();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(basis_);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-6 * sv(0))
        throw std::runtime_error(
            "PropagatorOracle: eigenbasis ill-conditioned (too close to an exceptional point)");
    basis_inv_ = basis_.partialPivLu().solve(
        Eigen::MatrixXcd::Identity(basis_.rows(), basis_.cols()));
}

Eigen::MatrixXcd PropagatorOracle::g(double s) const {
    const Eigen::VectorXcd phases = (lambda_ * s).array().exp();
    return basis_ * phases.asDiagonal() * basis_inv_;
}

namespace {

Eigen::MatrixXcd simpson_recurse(const std::function<Eigen::MatrixXcd(double)>& f, double a,
                                 double b, const Eigen::MatrixXcd& fa, const Eigen::MatrixXcd& fm,
                                 const Eigen::MatrixXcd& fb, const Eigen::MatrixXcd& whole,
                                 double abs_tol, int depth) {
    const double m = 0.5 * (a + b);
    const Eigen::MatrixXcd flm = f(0.5 * (a + m));
    const Eigen::MatrixXcd frm = f(0.5 * (m + b));
    const Eigen::MatrixXcd left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const Eigen::MatrixXcd right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const Eigen::MatrixXcd delta = left + right - whole;
    if (depth <= 0 || delta.cwiseAbs().maxCoeff() <= 15.0 * abs_tol)
        return left + right + delta / 15.0;
    return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * abs_tol, depth - 1) +
           simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * abs_tol, depth - 1);
}

}  // namespace

Eigen::MatrixXcd integrate_matrix(const std::function<Eigen::MatrixXcd(double)>& f, double a,
                                  double b, double tol) {
    const Eigen::MatrixXcd fa = f(a);
    const Eigen::MatrixXcd fb = f(b);
    const Eigen::MatrixXcd fm = f(0.5 * (a + b));
    double scale = std::max({fa.cwiseAbs().maxCoeff(), fm.cwiseAbs().maxCoeff(),
                             fb.cwiseAbs().maxCoeff()});
    for (int i = 1; i <= 7; i += 2)
        scale = std::max(scale, f(a + (b - a) * i / 8.0).cwiseAbs().maxCoeff());
    const double abs_tol = tol * std::max(scale * (b - a), 1e-300);
    const Eigen::MatrixXcd whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_recurse(f, a, b, fa, fm, fb, whole, abs_tol, 40);
}

MomentState quadrature_moments(const PropagatorOracle& oracle, double t, double tol) {
    const SystemParams& p = oracle.params();
    const int n = p.total_sites();
    MomentState state = MomentState::vacuum(n);
    state.time = t;
    if (t == 0.0) return state;

    const int site = p.drive.site_index;
    const double e_amp = p.drive.amplitude_e;
    const double delta = p.drive.detuning_delta;

    if (e_amp != 0.0) {
        // mu(t) = -i int_0^t G(t - tau) d(tau) dtau  with d = i E e^{i Delta tau} e_s
        //       = E e^{i Delta t} int_0^t G(s) e^{-i Delta s} ds . col(s)
        const auto mean_integrand = [&](double s) -> Eigen::MatrixXcd {
            return oracle.g(s).col(site) * std::polar(1.0, -delta * s);
        };
        state.mean = e_amp * std::polar(1.0, delta * t) *
                     integrate_matrix(mean_integrand, 0.0, t, tol);
    }

    Eigen::MatrixXcd corr = state.mean.conjugate() * state.mean.transpose();
    if (p.noise_enabled) {
        Eigen::VectorXd gain_mask = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < n; k += 2) gain_mask(k) = 1.0;
        const auto noise_integrand = [&](double s) -> Eigen::MatrixXcd {
            const Eigen::MatrixXcd g = oracle.g(s);
            return g.conjugate() * gain_mask.asDiagonal() * g.transpose();
        };
        corr += 2.0 * p.kappa * integrate_matrix(noise_integrand, 0.0, t, tol);
    }
    state.corr = corr;
    return state;
}

double decoupled_gain_photon(double kappa, double t) { return std::expm1(2.0 * kappa * t); }

}  // namespace cpt::test
