#include "cpt/evolution.hpp"

#include "dopri5.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cpt {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

constexpr Complex kImag(0.0, 1.0);

// Condition threshold on the eigenvector basis below which the matrix is
// treated as (numerically) defective and exp falls back to scaling-squaring.
constexpr double kEigenbasisRcond = 1e-8;

double max_abs(const MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

MomentState MomentState::vacuum(int n_sites) {
    MomentState s;
    s.time = 0.0;
    s.mean = VectorXcd::Zero(n_sites);
    s.corr = MatrixXcd::Zero(n_sites, n_sites);
    return s;
}

void MomentState::validate(double tol) const {
    const auto n = mean.size();
    if (corr.rows() != n || corr.cols() != n)
        throw std::runtime_error("MomentState: mean/corr dimension mismatch");
    const double scale = 1.0 + max_abs(corr);
    const double herm = (corr - corr.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol * scale) {
        std::ostringstream msg;
        msg << "MomentState at t=" << time << ": corr not Hermitian, max|C-C^dag|=" << herm;
        throw std::runtime_error(msg.str());
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const double diag = corr(k, k).real();
        const double coh = std::norm(mean(k));
        if (diag < coh - tol * scale) {
            std::ostringstream msg;
            msg << "MomentState at t=" << time << ": diagonal " << k << " below |mu|^2 ("
                << diag << " < " << coh << ")";
            throw std::runtime_error(msg.str());
        }
    }
    // noise part must be a Gram matrix
    MatrixXcd noise = corr - mean.conjugate() * mean.transpose();
    noise = 0.5 * (noise + noise.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(noise, Eigen::EigenvaluesOnly);
    if (es.info() == Eigen::Success && es.eigenvalues().minCoeff() < -tol * scale) {
        std::ostringstream msg;
        msg << "MomentState at t=" << time
            << ": noise part not positive semidefinite, min eigenvalue "
            << es.eigenvalues().minCoeff();
        throw std::runtime_error(msg.str());
    }
}

NoiseSourceMatrix NoiseSourceMatrix::build(const SystemParams& params) {
    params.validate();
    NoiseSourceMatrix s;
    s.diag = VectorXd::Zero(params.total_sites());
    if (params.noise_enabled)
        for (int k = 0; k < params.total_sites(); k += 2) s.diag(k) = 2.0 * params.kappa;
    return s;
}

PropagatorResult propagator(const DynamicalMatrix& m, double t) {
    if (t < 0.0) throw std::invalid_argument("propagator: t must be >= 0");
    const MatrixXcd a = -kImag * m.entries;

    Eigen::ComplexEigenSolver<MatrixXcd> solver(a, /*computeEigenvectors=*/true);
    if (solver.info() == Eigen::Success) {
        const MatrixXcd& basis = solver.eigenvectors();
        Eigen::JacobiSVD<MatrixXcd> svd(basis);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) > kEigenbasisRcond * sv(0)) {
            const VectorXcd phases = (solver.eigenvalues() * t).array().exp();
            MatrixXcd g = basis * phases.asDiagonal() *
                          basis.partialPivLu().solve(MatrixXcd::Identity(m.dim, m.dim));
            return {std::move(g), PropagatorMethod::eigendecomposition};
        }
    }
    // defective (exceptional point) or failed decomposition
    MatrixXcd g = (a * t).exp();
    return {std::move(g), PropagatorMethod::scaling_squaring};
}

std::vector<MomentState> evolve_moments_at(const SystemParams& params,
                                           std::span<const double> times,
                                           const MomentState& initial,
                                           const EvolveOptions& opts) {
    params.validate();
    if (times.empty()) throw std::invalid_argument("evolve_moments: empty time grid");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < initial.time - 1e-12 || (i > 0 && times[i] <= times[i - 1]))
            throw std::invalid_argument("evolve_moments: time grid must ascend from t0");
    }
    const int n = params.total_sites();
    if (initial.mean.size() != n || initial.corr.rows() != n)
        throw std::invalid_argument("evolve_moments: initial state has wrong dimension");
    initial.validate(1e-7);

    const DynamicalMatrix m = build_matrix(params);
    const MatrixXcd a = -kImag * m.entries;
    const MatrixXcd a_conj = a.conjugate();
    const VectorXd source = NoiseSourceMatrix::build(params).diag;
    const int drive_site = params.drive.site_index;
    const double amp = params.drive.amplitude_e;
    const double delta = params.drive.detuning_delta;

    // state layout: [mu (n); C column-major (n*n)]
    VectorXcd z(n + n * n);
    z.head(n) = initial.mean;
    Eigen::Map<MatrixXcd>(z.data() + n, n, n) = initial.corr;

    auto rhs = [&](double t, const VectorXcd& y, VectorXcd& dydt) {
        const auto mu = y.head(n);
        const Eigen::Map<const MatrixXcd> c(y.data() + n, n, n);
        auto dmu = dydt.head(n);
        Eigen::Map<MatrixXcd> dc(dydt.data() + n, n, n);

        dmu.noalias() = a * mu;
        dc.noalias() = a_conj * c;
        dc.noalias() += c * a;  // A^T = A ([M] complex-symmetric)
        dc.diagonal() += source.cast<Complex>();
        if (amp != 0.0) {
            const Complex d = Complex(0.0, amp) * std::polar(1.0, delta * t);
            dmu(drive_site) -= kImag * d;
            dc.row(drive_site) += (kImag * std::conj(d)) * mu.transpose();
            dc.col(drive_site) += (-kImag * d) * mu.conjugate();
        }
    };

    std::vector<MomentState> series;
    series.reserve(times.size());
    detail::Dopri5Options dopts{opts.rel_tol, opts.abs_tol, opts.max_steps};
    detail::integrate_dopri5(
        rhs, initial.time, z, times, dopts,
        [&](std::size_t, double t, const VectorXcd& y) {
            MomentState s;
            s.time = t;
            s.mean = y.head(n);
            s.corr = Eigen::Map<const MatrixXcd>(y.data() + n, n, n);
            if (!s.mean.allFinite() || !s.corr.allFinite())
                throw std::runtime_error("evolve_moments: non-finite state at t=" +
                                         std::to_string(t));
            const double herm = (s.corr - s.corr.adjoint()).cwiseAbs().maxCoeff();
            const double bound = 1e-9 * (1.0 + max_abs(s.corr));
            if (herm > bound) {
                std::ostringstream msg;
                msg << "evolve_moments: Hermiticity lost at t=" << t << " (max|C-C^dag|=" << herm
                    << ", bound=" << bound << ")";
                throw std::runtime_error(msg.str());
            }
            series.push_back(std::move(s));
        });
    return series;
}

std::vector<MomentState> evolve_moments(const SystemParams& params, double t_final, double dt_out,
                                        const MomentState& initial, const EvolveOptions& opts) {
    if (!(t_final > 0.0)) throw std::invalid_argument("evolve_moments: t_final must be > 0");
    if (!(dt_out > 0.0) || dt_out > t_final)
        throw std::invalid_argument("evolve_moments: dt_out must be in (0, t_final]");
    const long n_out = static_cast<long>(std::floor(t_final / dt_out + 1e-9));
    std::vector<double> stops(static_cast<std::size_t>(n_out) + 1);
    for (long i = 0; i <= n_out; ++i)
        stops[static_cast<std::size_t>(i)] = initial.time + static_cast<double>(i) * dt_out;
    return evolve_moments_at(params, stops, initial, opts);
}

std::vector<MomentState> evolve_moments(const SystemParams& params, double t_final, double dt_out,
                                        const EvolveOptions& opts) {
    return evolve_moments(params, t_final, dt_out, MomentState::vacuum(params.total_sites()),
                          opts);
}

VectorXd photon_numbers(const MomentState& state) {
    const auto n = state.corr.rows();
    const double tol = 1e-8 * (1.0 + state.corr.diagonal().cwiseAbs().maxCoeff());
    VectorXd out(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Complex d = state.corr(k, k);
        if (std::abs(d.imag()) > tol || d.real() < -tol) {
            std::ostringstream msg;
            msg << "photon_numbers: invalid diagonal entry " << k << " = (" << d.real() << ", "
                << d.imag() << ") at t=" << state.time;
            throw std::runtime_error(msg.str());
        }
        out(k) = d.real();
    }
    return out;
}

std::optional<double> average_contrast(const MomentState& state, int site_i, int site_j,
                                       double tol) {
    if (site_i == site_j) throw std::invalid_argument("average_contrast: sites must differ");
    const auto n = state.corr.rows();
    if (site_i < 0 || site_i >= n || site_j < 0 || site_j >= n)
        throw std::invalid_argument("average_contrast: site out of range");
    const double denom = state.corr(site_i, site_i).real() + state.corr(site_j, site_j).real();
    if (denom < tol) return std::nullopt;
    return 2.0 * std::abs(state.corr(site_i, site_j)) / denom;
}

VectorXd output_flux(const MomentState& state, const SystemParams& params) {
    params.validate();
    return 2.0 * params.gamma_out * photon_numbers(state);
}

std::vector<ReciprocityPoint> reciprocity_experiment(const SystemParams& params, int site_fwd,
                                                     int site_bwd, double t_final, double dt_out,
                                                     const EvolveOptions& opts) {
    params.validate();
    const int n = params.total_sites();
    if (site_fwd < 0 || site_fwd >= n || site_fwd % 2 != 0)
        throw std::invalid_argument("reciprocity_experiment: site_fwd must be a gain site");
    if (site_bwd < 0 || site_bwd >= n || site_bwd % 2 != 1)
        throw std::invalid_argument("reciprocity_experiment: site_bwd must be a loss site");

    SystemParams fwd = params;
    fwd.drive.site_index = site_fwd;
    SystemParams bwd = params;
    bwd.drive.site_index = site_bwd;

    const auto series_f = evolve_moments(fwd, t_final, dt_out, opts);
    const auto series_b = evolve_moments(bwd, t_final, dt_out, opts);

    std::vector<ReciprocityPoint> out;
    out.reserve(series_f.size());
    for (std::size_t i = 0; i < series_f.size(); ++i) {
        ReciprocityPoint p;
        p.time = series_f[i].time;
        p.p_forward = series_f[i].corr(site_bwd, site_bwd).real();
        p.p_backward = series_b[i].corr(site_fwd, site_fwd).real();
        p.abs_difference = std::abs(p.p_forward - p.p_backward);
        out.push_back(p);
    }
    return out;
}

std::vector<SaturationViolation> saturation_check(const std::vector<MomentState>& series,
                                                  double i_sat, double threshold) {
    if (!(i_sat > 0.0)) throw std::invalid_argument("saturation_check: i_sat must be > 0");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("saturation_check: threshold must be in (0, 1)");
    std::vector<SaturationViolation> out;
    for (const MomentState& s : series) {
        for (Eigen::Index k = 0; k < s.corr.rows(); k += 2) {  // gain sites
            const double ratio = s.corr(k, k).real() / i_sat;
            if (ratio > threshold)
                out.push_back({s.time, static_cast<int>(k), ratio});
        }
    }
    return out;
}

}  // namespace cpt
