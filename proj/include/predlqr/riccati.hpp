#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "predlqr/matlin.hpp"
#include "predlqr/system.hpp"

namespace predlqr {

/// Stabilizing DARE solution P = Q + A'PA - A'PB(R + B'PB)^{-1}B'PA and the
/// closed-loop quantities derived from it.
struct RiccatiSolution {
    Mat A, B, Q, R;
    Mat P;
    Mat S;       // R + B'PB
    Mat K;       // S^{-1} B'PA, so u = -Kx
    Mat F;       // A - BK
    Mat H;       // B S^{-1} B'
    Mat SinvBt;  // S^{-1} B'
    double rho_F = 0.0;
    double lambda = 0.0;  // (1 + rho_F) / 2
    std::size_t iterations = 0;
    double residual = 0.0;  // spectral norm of the DARE residual at P

    [[nodiscard]] std::size_t state_dim() const { return A.rows(); }
    [[nodiscard]] std::size_t control_dim() const { return B.cols(); }
};

struct DareOptions {
    double tol = 1e-12;  // relative to max(1, ||P||)
    std::size_t max_iter = 100'000;
};

class DareNotConverged : public std::runtime_error {
public:
    DareNotConverged(std::size_t iterations, double last_change);
    [[nodiscard]] double last_change() const noexcept { return last_change_; }

private:
    double last_change_;
};

class ClosedLoopUnstable : public std::runtime_error {
public:
    explicit ClosedLoopUnstable(double rho);
    [[nodiscard]] double rho() const noexcept { return rho_; }

private:
    double rho_;
};

/// One step of the Riccati difference equation:
/// Q + A'PA - A'PB(R + B'PB)^{-1}B'PA.
Mat riccati_step(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p);

/// Value iteration of the Riccati map from P = Q until the change between
/// iterates is at most tol * max(1, ||P||). Non-convergence usually means
/// (A, B) is not stabilizable or (A, Q) is not detectable.
RiccatiSolution solve_dare(const LqrSystem& system, const DareOptions& options = {});
RiccatiSolution solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const DareOptions& options = {});

/// ||F^0||, ||F^1||, ..., ||F^k_max|| in spectral norm.
std::vector<double> gelfand_profile(const RiccatiSolution& sol, std::size_t k_max);

}  // namespace predlqr
