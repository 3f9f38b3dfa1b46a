#include "predlqr/system.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace predlqr {

namespace {

void require_psd(const Mat& m, const char* name) {
    if (!m.is_square()) throw DimensionError(fmt::format("{} must be square, got {}", name, m.shape()));
    const double scale = std::max(1.0, m.max_abs());
    if (m.asymmetry() > 1e-10 * scale) throw std::invalid_argument(fmt::format("{} is not symmetric", name));
    try {
        (void)cholesky(m.symmetrized() + Mat::identity(m.rows()) * (1e-10 * scale));
    } catch (const NotPositiveDefinite&) {
        throw std::invalid_argument(fmt::format("{} is not positive semidefinite", name));
    }
}

}  // namespace

LqrSystem::LqrSystem(Mat a, Mat b, Mat q, Mat r, Mat qf, Mat x0, std::size_t horizon)
    : a_(std::move(a)), b_(std::move(b)), q_(std::move(q)), r_(std::move(r)), qf_(std::move(qf)),
      x0_(std::move(x0)), horizon_(horizon) {
    const std::size_t n = a_.rows();
    const std::size_t d = b_.cols();
    if (!a_.is_square()) throw DimensionError("A must be square, got " + a_.shape());
    if (b_.rows() != n) throw DimensionError(fmt::format("B is {} but A is {}", b_.shape(), a_.shape()));
    if (q_.rows() != n || q_.cols() != n) throw DimensionError("Q has shape " + q_.shape());
    if (qf_.rows() != n || qf_.cols() != n) throw DimensionError("Qf has shape " + qf_.shape());
    if (r_.rows() != d || r_.cols() != d) throw DimensionError("R has shape " + r_.shape());
    if (x0_.rows() != n || x0_.cols() != 1) throw DimensionError("x0 has shape " + x0_.shape());
    if (horizon_ == 0) throw std::invalid_argument("horizon T must be positive");
    require_psd(q_, "Q");
    require_psd(qf_, "Qf");
    if (r_.asymmetry() > 1e-10 * std::max(1.0, r_.max_abs())) throw std::invalid_argument("R is not symmetric");
    try {
        (void)cholesky(r_);
    } catch (const NotPositiveDefinite&) {
        throw std::invalid_argument("R is not positive definite");
    }
}

LqrSystem LqrSystem::with_terminal(Mat qf) const { return {a_, b_, q_, r_, std::move(qf), x0_, horizon_}; }
LqrSystem LqrSystem::with_horizon(std::size_t horizon) const { return {a_, b_, q_, r_, qf_, x0_, horizon}; }
LqrSystem LqrSystem::with_initial_state(Mat x0) const { return {a_, b_, q_, r_, qf_, std::move(x0), horizon_}; }

double Trajectory::total_cost() const {
    double s = 0.0;
    for (double c : stage_costs) s += c;
    return s;
}

NonFiniteControl::NonFiniteControl(std::size_t step, const std::string& policy)
    : std::runtime_error(fmt::format("policy {} returned a non-finite control at step {}", policy, step)),
      step_(step) {}

Trajectory rollout(const LqrSystem& system, const Policy& policy, std::span<const Mat> disturbances) {
    const std::size_t horizon = system.horizon();
    const std::size_t n = system.state_dim();
    const std::size_t d = system.control_dim();
    if (disturbances.size() != horizon) {
        throw DimensionError(fmt::format("disturbance path has {} steps, horizon is {}", disturbances.size(), horizon));
    }
    for (const Mat& w : disturbances) {
        if (w.rows() != n || w.cols() != 1) throw DimensionError("disturbance has shape " + w.shape());
    }
    const std::size_t k = policy.predictions();

    Trajectory traj;
    traj.states.reserve(horizon + 1);
    traj.controls.reserve(horizon);
    traj.disturbances.assign(disturbances.begin(), disturbances.end());
    traj.stage_costs.reserve(horizon + 1);
    traj.states.push_back(system.x0());

    for (std::size_t t = 0; t < horizon; ++t) {
        const Mat& x = traj.states.back();
        const std::size_t visible = std::min(k, horizon - t);
        Observation obs{t, horizon, &x, disturbances.subspan(0, t), disturbances.subspan(t, visible)};
        Mat u = policy.act(obs);
        if (u.rows() != d || u.cols() != 1) {
            throw DimensionError(fmt::format("policy {} returned control of shape {}", policy.name(), u.shape()));
        }
        if (!u.all_finite()) throw NonFiniteControl(t, policy.name());
        traj.stage_costs.push_back(quad_form(x, system.Q()) + quad_form(u, system.R()));
        Mat next = system.A() * x + system.B() * u + disturbances[t];
        traj.controls.push_back(std::move(u));
        traj.states.push_back(std::move(next));
    }
    traj.stage_costs.push_back(quad_form(traj.states.back(), system.Qf()));
    return traj;
}

double cost(const LqrSystem& system, const Trajectory& trajectory) {
    const std::size_t horizon = trajectory.controls.size();
    if (trajectory.states.size() != horizon + 1) throw DimensionError("trajectory needs T + 1 states");
    double j = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        j += quad_form(trajectory.states[t], system.Q()) + quad_form(trajectory.controls[t], system.R());
    }
    return j + quad_form(trajectory.states[horizon], system.Qf());
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
    const std::size_t horizon = trajectory.controls.size();
    const std::size_t n = trajectory.states.front().rows();
    const std::size_t d = horizon > 0 ? trajectory.controls.front().rows() : 0;
    out << "t";
    for (std::size_t i = 0; i < n; ++i) out << ",x_" << i;
    for (std::size_t i = 0; i < d; ++i) out << ",u_" << i;
    for (std::size_t i = 0; i < n; ++i) out << ",w_" << i;
    out << ",stage_cost\n";
    for (std::size_t t = 0; t <= horizon; ++t) {
        out << t;
        for (std::size_t i = 0; i < n; ++i) out << fmt::format(",{:.17g}", trajectory.states[t][i]);
        for (std::size_t i = 0; i < d; ++i) {
            out << ',';
            if (t < horizon) out << fmt::format("{:.17g}", trajectory.controls[t][i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            out << ',';
            if (t < horizon) out << fmt::format("{:.17g}", trajectory.disturbances[t][i]);
        }
        out << fmt::format(",{:.17g}\n", trajectory.stage_costs[t]);
    }
}

double tracking_objective(const TrackingProblem& problem, std::span<const Mat> states, std::span<const Mat> controls) {
    const std::size_t horizon = problem.horizon();
    if (states.size() != horizon + 1 || controls.size() != horizon) {
        throw DimensionError("tracking objective needs T + 1 states and T controls");
    }
    double j = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const Mat e = states[t + 1] - problem.desired[t + 1];
        j += quad_form(e, problem.Q) + quad_form(controls[t], problem.R);
    }
    return j;
}

TrackingReduction reduce_tracking(const TrackingProblem& problem) {
    if (problem.desired.size() < 2) throw std::invalid_argument("tracking: desired trajectory needs T + 1 >= 2 entries");
    const std::size_t n = problem.A.rows();
    for (const Mat& d : problem.desired) {
        if (d.rows() != n || d.cols() != 1) throw DimensionError("tracking: desired state has shape " + d.shape());
    }
    const Mat e0 = problem.x0 - problem.desired.front();
    LqrSystem reduced(problem.A, problem.B, problem.Q, problem.R, problem.Q, e0, problem.horizon());
    TrackingResidual residual(problem.A, problem.desired, problem.noise);
    return {std::move(reduced), std::move(residual), problem.desired, quad_form(e0, problem.Q)};
}

Trajectory TrackingReduction::to_tracking_coordinates(const Trajectory& reduced) const {
    if (reduced.states.size() > desired.size()) throw DimensionError("trajectory longer than desired reference");
    Trajectory out = reduced;
    for (std::size_t t = 0; t < out.states.size(); ++t) out.states[t] += desired[t];
    for (std::size_t t = 0; t < out.disturbances.size(); ++t) out.disturbances[t] -= residual.drift(t);
    return out;
}

}  // namespace predlqr
