#include "predlqr/riccati.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace predlqr {

DareNotConverged::DareNotConverged(std::size_t iterations, double last_change)
    : std::runtime_error(fmt::format(
          "Riccati iteration did not converge after {} iterations (last change {:.3g}); "
          "check that (A, B) is stabilizable and (A, Q) is detectable",
          iterations, last_change)),
      last_change_(last_change) {}

ClosedLoopUnstable::ClosedLoopUnstable(double rho)
    : std::runtime_error(fmt::format("closed loop A - BK has spectral radius {:.6g} >= 1", rho)), rho_(rho) {}

Mat riccati_step(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p) {
    const Mat at = a.transpose();
    const Mat pb = p * b;
    const Mat s = r + b.transpose() * pb;
    const Mat gain = solve_spd(s.symmetrized(), pb.transpose() * a);  // S^{-1} B'PA
    Mat next = q + at * p * a - at * pb * gain;
    return next.symmetrized();
}

RiccatiSolution solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const DareOptions& options) {
    if (!a.is_square() || b.rows() != a.rows() || q.rows() != a.rows() || q.cols() != a.cols() ||
        r.rows() != b.cols() || r.cols() != b.cols()) {
        throw DimensionError(fmt::format("solve_dare: incompatible A {}, B {}, Q {}, R {}", a.shape(), b.shape(),
                                         q.shape(), r.shape()));
    }
    Mat p = q.symmetrized();
    double change = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    while (iterations < options.max_iter) {
        Mat next = riccati_step(a, b, q, r, p);
        ++iterations;
        // Frobenius bounds the spectral norm from above, so this test is at
        // least as strict as the spectral-norm criterion.
        change = (next - p).frobenius_norm();
        p = std::move(next);
        if (!std::isfinite(change)) break;
        if (change <= options.tol * std::max(1.0, p.frobenius_norm())) {
            converged = true;
            break;
        }
    }
    if (!converged) throw DareNotConverged(iterations, change);

    RiccatiSolution sol{a, b, q, r, p, r, r, a, a, r, 0.0, 0.0, iterations, 0.0};
    sol.S = (r + b.transpose() * p * b).symmetrized();
    sol.SinvBt = solve_spd(sol.S, b.transpose());
    sol.K = sol.SinvBt * p * a;
    sol.F = a - b * sol.K;
    sol.H = b * sol.SinvBt;
    sol.rho_F = spectral_radius(sol.F);
    sol.lambda = 0.5 * (1.0 + sol.rho_F);
    sol.residual = spectral_norm(p - riccati_step(a, b, q, r, p));
    if (sol.rho_F >= 1.0) throw ClosedLoopUnstable(sol.rho_F);
    return sol;
}

RiccatiSolution solve_dare(const LqrSystem& system, const DareOptions& options) {
    return solve_dare(system.A(), system.B(), system.Q(), system.R(), options);
}

std::vector<double> gelfand_profile(const RiccatiSolution& sol, std::size_t k_max) {
    std::vector<double> out;
    out.reserve(k_max + 1);
    Mat f_power = Mat::identity(sol.state_dim());
    for (std::size_t k = 0; k <= k_max; ++k) {
        out.push_back(spectral_norm(f_power));
        f_power = f_power * sol.F;
    }
    return out;
}

}  // namespace predlqr
