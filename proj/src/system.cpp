#include "cpt/system.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace cpt {

void SystemParams::validate() const {
    if (n_pairs < 1)
        throw std::invalid_argument("SystemParams.n_pairs: must be >= 1 (N = 2*n_pairs >= 2)");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        throw std::invalid_argument("SystemParams.kappa: must be > 0 and finite");
    if (coupling_j < 0.0 || !std::isfinite(coupling_j))
        throw std::invalid_argument("SystemParams.coupling_j: must be >= 0 and finite");
    if (gamma_out < 0.0 || !std::isfinite(gamma_out))
        throw std::invalid_argument("SystemParams.gamma_out: must be >= 0 and finite");
    if (drive.site_index < 0 || drive.site_index >= total_sites())
        throw std::invalid_argument("DriveSpec.site_index: out of range [0, N)");
    if (drive.amplitude_e < 0.0 || !std::isfinite(drive.amplitude_e))
        throw std::invalid_argument("DriveSpec.amplitude_e: must be >= 0 and finite");
    if (!std::isfinite(drive.detuning_delta))
        throw std::invalid_argument("DriveSpec.detuning_delta: must be finite");
}

double DynamicalMatrix::kappa() const {
    double k = 0.0;
    for (int i = 0; i < dim; ++i)
        k = std::max(k, std::abs(entries(i, i).imag()));
    return k;
}

DynamicalMatrix build_matrix(const SystemParams& params) {
    params.validate();
    const int n = params.total_sites();

    DynamicalMatrix m;
    m.dim = n;
    m.entries = Eigen::MatrixXcd::Zero(n, n);
    m.site_parity.resize(n);

    for (int k = 0; k < n; ++k) {
        const bool gain = (k % 2 == 0);
        m.site_parity[k] = gain ? SiteParity::gain : SiteParity::loss;
        m.entries(k, k) = Complex(0.0, gain ? params.kappa : -params.kappa);
    }

    const double j = params.coupling_j;
    if (n == 2) {
        // neighbor and corner coincide; single coupling entry
        m.entries(0, 1) = j;
        m.entries(1, 0) = j;
    } else {
        for (int k = 0; k < n; ++k) {
            const int next = (k + 1) % n;
            m.entries(k, next) = j;
            m.entries(next, k) = j;
        }
    }
    return m;
}

Eigen::VectorXcd build_drive(const SystemParams& params, double t) {
    params.validate();
    Eigen::VectorXcd d = Eigen::VectorXcd::Zero(params.total_sites());
    const double e = params.drive.amplitude_e;
    if (e != 0.0) {
        const double phase = params.drive.detuning_delta * t;
        d(params.drive.site_index) = Complex(0.0, e) * std::polar(1.0, phase);
    }
    return d;
}

CptSymmetryReport check_cpt_symmetry(const DynamicalMatrix& m) {
    const int n = m.dim;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            // (P M P^{-1})_{ij} = M_{sigma(i) sigma(j)} with sigma the +1 shift
            const Complex shifted = m.entries((i + 1) % n, (j + 1) % n);
            worst = std::max(worst, std::abs(shifted - std::conj(m.entries(i, j))));
        }
    }
    return CptSymmetryReport{worst == 0.0, worst};
}

std::string site_label(int index) {
    if (index < 0) throw std::invalid_argument("site_label: negative index");
    const char kind = (index % 2 == 0) ? 'a' : 'b';
    return kind + std::to_string(index / 2 + 1);
}

int site_from_label(const std::string& label, int n_sites) {
    if (label.empty()) throw std::invalid_argument("site label: empty");
    int idx = -1;
    if (label[0] == 'a' || label[0] == 'b') {
        const int pair = std::stoi(label.substr(1));
        if (pair < 1) throw std::invalid_argument("site label: pair number must be >= 1");
        idx = 2 * (pair - 1) + (label[0] == 'b' ? 1 : 0);
    } else {
        idx = std::stoi(label);
    }
    if (idx < 0 || idx >= n_sites)
        throw std::invalid_argument("site label '" + label + "': out of range for N=" +
                                    std::to_string(n_sites));
    return idx;
}

}  // namespace cpt
