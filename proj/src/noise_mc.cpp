#include "cpt/noise_mc.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace cpt {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;

constexpr Complex kImag(0.0, 1.0);
constexpr double kTwoPi = 6.283185307179586476925286766559;

// Trajectories are accumulated in fixed-size blocks that are reduced in
// block order, so the floating-point result is independent of the number
// of worker threads.
constexpr int kBlockSize = 64;

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Small deterministic generator (xoshiro256**), seeded per trajectory.
struct Rng {
    std::uint64_t s[4];

    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s) si = x = splitmix64(x);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // Box-Muller pair of standard normals from two uniform draws.
    void gauss_pair(double& g1, double& g2) {
        const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = static_cast<double>(next() >> 11) * 0x1.0p-53;          // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        g1 = r * std::cos(kTwoPi * u2);
        g2 = r * std::sin(kTwoPi * u2);
    }
};

struct BlockAccum {
    MatrixXcd sum_c;   // (n_rec x N)
    MatrixXd sum_n;    // sum of |c|^2
    MatrixXd sum_n2;   // sum of |c|^4

    void init(Eigen::Index n_rec, Eigen::Index n) {
        sum_c = MatrixXcd::Zero(n_rec, n);
        sum_n = MatrixXd::Zero(n_rec, n);
        sum_n2 = MatrixXd::Zero(n_rec, n);
    }
};

}  // namespace

TrajectoryEnsemble sample_trajectories(const SystemParams& params, double t_final, double dt,
                                       int n_traj, std::uint64_t seed, int record_stride,
                                       int n_threads) {
    params.validate();
    if (!(t_final > 0.0)) throw std::invalid_argument("sample_trajectories: t_final must be > 0");
    if (!(dt > 0.0)) throw std::invalid_argument("sample_trajectories: dt must be > 0");
    if (dt * std::max(params.kappa, 2.0 * params.coupling_j) >= 0.05)
        throw std::invalid_argument(
            "sample_trajectories: unstable step size, need dt*max(kappa, 2J) < 0.05");
    if (n_traj < 1) throw std::invalid_argument("sample_trajectories: n_traj must be >= 1");
    if (record_stride < 1)
        throw std::invalid_argument("sample_trajectories: record_stride must be >= 1");

    const int n = params.total_sites();
    const long n_steps = std::lround(t_final / dt);
    std::vector<long> rec_steps;
    for (long m = 0; m <= n_steps; m += record_stride) rec_steps.push_back(m);
    if (rec_steps.back() != n_steps) rec_steps.push_back(n_steps);
    const auto n_rec = static_cast<Eigen::Index>(rec_steps.size());

    const double amp = params.drive.amplitude_e;
    const double delta = params.drive.detuning_delta;
    const int drive_site = params.drive.site_index;
    const double kappa = params.kappa;
    const double coupling = params.coupling_j;
    // <|dW|^2> = 2*kappa*dt at gain sites: each quadrature gets kappa*dt
    const double noise_sigma = params.noise_enabled ? std::sqrt(kappa * dt) : 0.0;

    const int n_blocks = (n_traj + kBlockSize - 1) / kBlockSize;
    std::vector<BlockAccum> blocks(static_cast<std::size_t>(n_blocks));

    auto run_block = [&](int block) {
        BlockAccum& acc = blocks[static_cast<std::size_t>(block)];
        acc.init(n_rec, n);
        const int t_begin = block * kBlockSize;
        const int t_end = std::min(n_traj, t_begin + kBlockSize);
        VectorXcd c(n), next(n);
        for (int traj = t_begin; traj < t_end; ++traj) {
            Rng rng(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(traj) + 1));
            c.setZero();
            std::size_t rec = 0;
            for (long m = 0; m <= n_steps; ++m) {
                if (rec < rec_steps.size() && m == rec_steps[rec]) {
                    for (int k = 0; k < n; ++k) {
                        const double nk = std::norm(c(k));
                        acc.sum_c(static_cast<Eigen::Index>(rec), k) += c(k);
                        acc.sum_n(static_cast<Eigen::Index>(rec), k) += nk;
                        acc.sum_n2(static_cast<Eigen::Index>(rec), k) += nk * nk;
                    }
                    ++rec;
                }
                if (m == n_steps) break;
                // drift of -i[M]c: +-kappa on the alternating diagonal,
                // -iJ from the two ring neighbors
                if (n == 2) {
                    next(0) = c(0) + dt * (kappa * c(0) - kImag * coupling * c(1));
                    next(1) = c(1) + dt * (-kappa * c(1) - kImag * coupling * c(0));
                } else {
                    for (int k = 0; k < n; ++k) {
                        const Complex hop = c(k == 0 ? n - 1 : k - 1) + c(k == n - 1 ? 0 : k + 1);
                        const double rate = (k % 2 == 0) ? kappa : -kappa;
                        next(k) = c(k) + dt * (rate * c(k) - kImag * coupling * hop);
                    }
                }
                if (amp != 0.0) {
                    const double t = static_cast<double>(m) * dt;
                    next(drive_site) += dt * amp * std::polar(1.0, delta * t);  // -i * iE e^{iDt}
                }
                if (noise_sigma != 0.0) {
                    for (int k = 0; k < n; k += 2) {
                        double g1, g2;
                        rng.gauss_pair(g1, g2);
                        next(k) += Complex(noise_sigma * g1, noise_sigma * g2);
                    }
                }
                c.swap(next);
            }
        }
    };

    int workers = n_threads > 0 ? n_threads
                                : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, n_blocks);
    if (workers == 1) {
        for (int b = 0; b < n_blocks; ++b) run_block(b);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) run_block(b);
            });
        for (auto& th : pool) th.join();
    }

    // order-fixed reduction over blocks
    MatrixXcd sum_c = MatrixXcd::Zero(n_rec, n);
    MatrixXd sum_n = MatrixXd::Zero(n_rec, n), sum_n2 = MatrixXd::Zero(n_rec, n);
    for (const BlockAccum& acc : blocks) {
        sum_c += acc.sum_c;
        sum_n += acc.sum_n;
        sum_n2 += acc.sum_n2;
    }

    TrajectoryEnsemble ens;
    ens.n_traj = n_traj;
    ens.seed = seed;
    ens.dt = dt;
    ens.times.resize(static_cast<std::size_t>(n_rec));
    for (Eigen::Index i = 0; i < n_rec; ++i)
        ens.times[static_cast<std::size_t>(i)] = static_cast<double>(rec_steps[static_cast<std::size_t>(i)]) * dt;

    const double nt = static_cast<double>(n_traj);
    ens.mean_amp = sum_c / nt;
    ens.photon = sum_n / nt;
    ens.mean_amp_se = MatrixXd::Zero(n_rec, n);
    ens.photon_se = MatrixXd::Zero(n_rec, n);
    if (n_traj > 1) {
        for (Eigen::Index i = 0; i < n_rec; ++i) {
            for (int k = 0; k < n; ++k) {
                const double var_n =
                    std::max(0.0, (sum_n2(i, k) - sum_n(i, k) * sum_n(i, k) / nt) / (nt - 1.0));
                ens.photon_se(i, k) = std::sqrt(var_n / nt);
                // var of complex amplitude = E|c|^2 - |E c|^2
                const double var_c =
                    std::max(0.0, (sum_n(i, k) - std::norm(sum_c(i, k)) / nt) / (nt - 1.0));
                ens.mean_amp_se(i, k) = std::sqrt(var_c / nt);
            }
        }
    }
    return ens;
}

McComparison compare_to_deterministic(const TrajectoryEnsemble& ensemble,
                                      const std::vector<MomentState>& reference) {
    const auto n_rec = static_cast<std::size_t>(ensemble.photon.rows());
    if (reference.size() != n_rec)
        throw std::invalid_argument("compare_to_deterministic: time grid length mismatch");
    for (std::size_t i = 0; i < n_rec; ++i)
        if (std::abs(reference[i].time - ensemble.times[i]) >
            1e-9 * std::max(1.0, std::abs(ensemble.times[i])))
            throw std::invalid_argument("compare_to_deterministic: time grid mismatch at index " +
                                        std::to_string(i));

    const auto n = ensemble.photon.cols();
    McComparison cmp;
    cmp.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_rec), n);
    long within = 0, total = 0;
    for (std::size_t i = 0; i < n_rec; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double est = ensemble.photon(static_cast<Eigen::Index>(i), k);
            const double ref = reference[i].corr(k, k).real();
            const double se = ensemble.photon_se(static_cast<Eigen::Index>(i), k);
            double z = 0.0;
            if (se > 0.0)
                z = (est - ref) / se;
            else if (est != ref)
                z = std::numeric_limits<double>::infinity() * (est > ref ? 1.0 : -1.0);
            cmp.z(static_cast<Eigen::Index>(i), k) = z;
            cmp.max_abs_z = std::max(cmp.max_abs_z, std::abs(z));
            ++total;
            if (std::abs(z) <= 3.0) ++within;
        }
    }
    cmp.fraction_within_3se = total > 0 ? static_cast<double>(within) / static_cast<double>(total)
                                        : 1.0;
    return cmp;
}

}  // namespace cpt
