// dopri5.hpp — adaptive Dormand-Prince 5(4) integrator over complex state
// vectors.  Step sizes are controlled by the embedded 4th-order error
// estimate and are clamped so that accepted steps land exactly on the
// caller's output times (no interpolation error at the emitted points).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace cpt::detail {

struct Dopri5Options {
    double rel_tol = 1e-10;
    double abs_tol = 1e-13;
    long max_steps = 50'000'000;
};

// Integrates y' = f(t, y) from t0 through increasing stop times, calling
// emit(stop_index, t, y) when each stop is reached.  f has signature
// void(double t, const VectorXcd& y, VectorXcd& dydt).
template <typename Rhs, typename Emit>
void integrate_dopri5(Rhs&& f, double t0, Eigen::VectorXcd y, std::span<const double> stops,
                      const Dopri5Options& opt, Emit&& emit) {
    using Eigen::VectorXcd;

    // Butcher tableau (Dormand & Prince 1980)
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                     a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                     a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                     a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    // 5th-order minus 4th-order weights (error estimate)
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const Eigen::Index n = y.size();
    const double t_end = stops.empty() ? t0 : stops.back();

    std::size_t next_stop = 0;
    while (next_stop < stops.size() &&
           stops[next_stop] <= t0 + 1e-14 * std::max(1.0, std::abs(t0))) {
        emit(next_stop, stops[next_stop], y);
        ++next_stop;
    }
    if (next_stop >= stops.size()) return;

    VectorXcd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);
    double t = t0;
    f(t, y, k1);

    double h = std::max((t_end - t0) * 1e-3, 1e-12);
    long steps = 0;

    auto error_norm = [&](const VectorXcd& yerr, const VectorXcd& y0, const VectorXcd& y1) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc =
                opt.abs_tol + opt.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
            const double r = std::abs(yerr(i)) / sc;
            sum += r * r;
        }
        return std::sqrt(sum / static_cast<double>(n));
    };

    while (true) {
        if (++steps > opt.max_steps)
            throw std::runtime_error("dopri5: exceeded max step count at t=" + std::to_string(t));

        const double h_min = 16.0 * std::numeric_limits<double>::epsilon() *
                             std::max(1.0, std::abs(t));
        bool hit = false;
        double hs = h;
        if (t + hs >= stops[next_stop] - h_min) {
            hs = stops[next_stop] - t;
            hit = true;
        }
        if (hs < h_min)
            throw std::runtime_error("dopri5: step size underflow at t=" + std::to_string(t));

        ytmp = y + hs * (a21 * k1);
        f(t + c2 * hs, ytmp, k2);
        ytmp = y + hs * (a31 * k1 + a32 * k2);
        f(t + c3 * hs, ytmp, k3);
        ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
        f(t + c4 * hs, ytmp, k4);
        ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        f(t + c5 * hs, ytmp, k5);
        ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        f(t + hs, ytmp, k6);
        ynew = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        f(t + hs, ynew, k7);  // FSAL

        ytmp = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double err = error_norm(ytmp, y, ynew);

        if (err <= 1.0) {
            t = hit ? stops[next_stop] : t + hs;
            y.swap(ynew);
            k1.swap(k7);
            if (hit) {
                emit(next_stop, t, y);
                if (++next_stop >= stops.size()) return;
            }
            const double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 6.0);
            h = hs * fac;
        } else {
            h = hs * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
        }
    }
}

}  // namespace cpt::detail
