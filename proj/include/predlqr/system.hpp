#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "predlqr/disturbance.hpp"
#include "predlqr/matlin.hpp"
#include "predlqr/policy_base.hpp"

namespace predlqr {

/// x_{t+1} = A x_t + B u_t + w_t over t = 0..T-1 with cost
/// J = sum_t (x_t' Q x_t + u_t' R u_t) + x_T' Qf x_T.
class LqrSystem {
public:
    LqrSystem(Mat a, Mat b, Mat q, Mat r, Mat qf, Mat x0, std::size_t horizon);

    [[nodiscard]] const Mat& A() const { return a_; }
    [[nodiscard]] const Mat& B() const { return b_; }
    [[nodiscard]] const Mat& Q() const { return q_; }
    [[nodiscard]] const Mat& R() const { return r_; }
    [[nodiscard]] const Mat& Qf() const { return qf_; }
    [[nodiscard]] const Mat& x0() const { return x0_; }
    [[nodiscard]] std::size_t horizon() const { return horizon_; }
    [[nodiscard]] std::size_t state_dim() const { return a_.rows(); }
    [[nodiscard]] std::size_t control_dim() const { return b_.cols(); }

    [[nodiscard]] LqrSystem with_terminal(Mat qf) const;
    [[nodiscard]] LqrSystem with_horizon(std::size_t horizon) const;
    [[nodiscard]] LqrSystem with_initial_state(Mat x0) const;

private:
    Mat a_, b_, q_, r_, qf_, x0_;
    std::size_t horizon_;
};

struct Trajectory {
    std::vector<Mat> states;        // T + 1
    std::vector<Mat> controls;      // T
    std::vector<Mat> disturbances;  // T
    std::vector<double> stage_costs;  // T stage terms, then the terminal term

    [[nodiscard]] double total_cost() const;
};

class NonFiniteControl : public std::runtime_error {
public:
    NonFiniteControl(std::size_t step, const std::string& policy);
    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Simulates the closed loop on a fixed disturbance path. At step t the
/// policy sees w_0..w_{t-1} as history and w_t..w_{t+k-1} (cut at w_{T-1})
/// as its prediction window.
Trajectory rollout(const LqrSystem& system, const Policy& policy, std::span<const Mat> disturbances);

/// Quadratic cost J of a trajectory, accumulated from states and controls.
double cost(const LqrSystem& system, const Trajectory& trajectory);

/// Header `t,x_0..,u_0..,w_0..,stage_cost`; one row per step and a terminal
/// row with empty u/w fields.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

/// Quadratic tracking of desired states d_0..d_T under raw noise:
/// x_{t+1} = A x_t + B u_t + noise_t, objective
/// sum_{t<T} (x_{t+1} - d_{t+1})' Q (x_{t+1} - d_{t+1}) + u_t' R u_t.
struct TrackingProblem {
    Mat A, B, Q, R;
    std::vector<Mat> desired;  // T + 1 full-state references
    Mat x0;                    // initial state in original coordinates
    IidZeroMean noise;

    [[nodiscard]] std::size_t horizon() const { return desired.size() - 1; }
};

/// Tracking objective evaluated in original coordinates.
double tracking_objective(const TrackingProblem& problem, std::span<const Mat> states, std::span<const Mat> controls);

/// The tracking problem rewritten in error coordinates e_t = x_t - d_t as an
/// LQR instance with Qf = Q and disturbance w_t = noise_t + A d_t - d_{t+1}.
/// The reduced J charges e_0' Q e_0, which no control can change; it is
/// reported as `initial_offset` so that tracking objective = J - offset.
struct TrackingReduction {
    LqrSystem system;
    TrackingResidual residual;
    std::vector<Mat> desired;
    double initial_offset;

    [[nodiscard]] std::vector<Mat> reduce(std::span<const Mat> raw_noise) const { return residual.reduce(raw_noise); }
    /// Maps a reduced trajectory back: states + d_t, disturbances to raw noise.
    [[nodiscard]] Trajectory to_tracking_coordinates(const Trajectory& reduced) const;
};

TrackingReduction reduce_tracking(const TrackingProblem& problem);

}  // namespace predlqr
