#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "predlqr/disturbance.hpp"
#include "predlqr/matlin.hpp"
#include "predlqr/policy_base.hpp"
#include "predlqr/riccati.hpp"
#include "predlqr/system.hpp"

namespace predlqr {

/// Prediction demand meaning "every remaining disturbance".
inline constexpr std::size_t kAllPredictions = std::numeric_limits<std::size_t>::max();

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Finite-horizon value functions V_t(x) = x'P_t x + v_t'x + q_t.
/// P and v have T + 1 entries, H has T (H_t = B(R + B'P_{t+1}B)^{-1}B').
struct DpTable {
    std::vector<Mat> P;
    std::vector<Mat> H;
    std::vector<Mat> v;
    std::vector<double> q;

    [[nodiscard]] std::size_t horizon() const { return H.size(); }
    /// x0'P_0 x0 + v_0'x0 + q_0.
    [[nodiscard]] double value(const Mat& x0) const;
};

/// Backward sweep of P_t and H_t from P_T = terminal over the system horizon.
/// v and q are zero.
DpTable dp_table(const LqrSystem& system, const Mat& terminal);
DpTable dp_table(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& terminal, std::size_t horizon);

/// u = -Kx.
PolicyPtr classic_lqr(const RiccatiSolution& sol);

/// u = -S^{-1}B'(PAx + sum_{i<m} (F')^i P w_{t+i}), m = window length <= k.
PolicyPtr mpc_closed_form(const RiccatiSolution& sol, std::size_t k);

/// Receding-horizon MPC: solves the k-step deterministic problem with the
/// given terminal weight by backward induction at every step and plays the
/// first control. Near the end of the horizon the problem shrinks to the
/// remaining window.
PolicyPtr mpc_receding(const LqrSystem& system, std::size_t k, const Mat& terminal);
PolicyPtr mpc_receding(const LqrSystem& system, const RiccatiSolution& sol, std::size_t k);
/// As above while the window ends before the horizon; once it reaches the
/// last step the subproblem uses `end_terminal` (normally the system's Qf).
PolicyPtr mpc_receding(const LqrSystem& system, std::size_t k, const Mat& terminal, const Mat& end_terminal);

/// Optimal policy for a general stochastic process with k predictions:
/// the closed-form MPC terms plus sum_{i>=k} (F')^i P mu_{t+i|t+k-1}. The
/// tail stops once ||F^i|| ||P|| max(1, |mu|) < 1e-12 or at the horizon.
/// k = 0 conditions on w_0..w_{t-1}.
PolicyPtr optimal_stochastic(const RiccatiSolution& sol, ProcessPtr process, std::size_t k);

struct OfflineSolution {
    PolicyPtr policy;  // bound to the path it was solved for
    DpTable table;
    double optimal_cost;
};

/// Exact optimum with the whole disturbance path known in advance.
OfflineSolution offline_optimal(const LqrSystem& system, std::span<const Mat> path);

/// Path-independent form of the offline optimum: demands every remaining
/// disturbance and rebuilds v_{t+1} from the window at each step.
PolicyPtr offline_policy(const LqrSystem& system);

/// Offline optimal cost and v/q for a path, reusing a precomputed P/H sweep.
void fill_offline_terms(const LqrSystem& system, DpTable& table, std::span<const Mat> path);

/// The piecewise minimax policy of the scalar instance A = B = Q = R = 1 with
/// disturbances in [-1, 1] and one prediction; z = x + w.
double example2_control(double z);
PolicyPtr example2_policy();

/// Exact minimax dynamic program of the same instance:
/// g_t(x) = a_t x^2 + 2 b_t |x| + c_t, indexed t = 0..T-1.
struct Example2Dp {
    std::vector<double> a, b, c;

    [[nodiscard]] std::size_t horizon() const { return a.size(); }
    [[nodiscard]] double g(std::size_t t, double x) const;
};

Example2Dp example2_exact_dp(std::size_t horizon);

}  // namespace predlqr
