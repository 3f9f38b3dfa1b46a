#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "predlqr/disturbance.hpp"
#include "predlqr/matlin.hpp"
#include "predlqr/policy.hpp"
#include "predlqr/riccati.hpp"
#include "predlqr/system.hpp"

namespace predlqr {

class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SweepRow {
    std::size_t k = 0;
    double mean_cost = 0.0;
    double se_cost = 0.0;
    double mean_regret = 0.0;
    double se_regret = 0.0;
};

struct EvalReport {
    std::string policy;
    std::size_t k = 0;
    std::size_t horizon = 0;
    std::size_t trials = 0;
    double mean_cost = 0.0;
    double se_cost = 0.0;
    std::optional<double> mean_regret;
    std::optional<double> se_regret;
    std::optional<double> min_path_regret;
    std::optional<double> pr;
    std::optional<double> se_pr;
    std::vector<SweepRow> sweep;
    std::uint64_t base_seed = 0;
};

std::string to_json(const EvalReport& report);
/// `policy,k,T,trials,mean_cost,se_cost,mean_regret,se_regret,pr,seed`.
std::string csv_header();
std::string csv_row(const EvalReport& report);

struct MonteCarloOptions {
    std::size_t workers = 0;  // 0: hardware concurrency
};

/// Mean and standard error of J over independent paths; trial i uses
/// rng::trial_seed(base_seed, i).
EvalReport monte_carlo_cost(const LqrSystem& system, const Policy& policy, const DisturbanceProcess& process,
                            std::size_t trials, std::uint64_t base_seed, const MonteCarloOptions& options = {});

/// Cost and J(policy) - J(offline optimum) on each sampled path.
EvalReport dynamic_regret_stochastic(const LqrSystem& system, const Policy& policy, const DisturbanceProcess& process,
                                     std::size_t trials, std::uint64_t base_seed,
                                     const MonteCarloOptions& options = {});

/// Policy built per sampled path, for comparators that are solved per path.
using PathPolicyFactory = std::function<PolicyPtr(std::span<const Mat> path)>;
EvalReport dynamic_regret_stochastic(const LqrSystem& system, const PathPolicyFactory& make_policy,
                                     const DisturbanceProcess& process, std::size_t trials, std::uint64_t base_seed,
                                     const MonteCarloOptions& options = {});

/// Tr((P - sum_{i<k} P F^i H (F')^i P) W). k = kAllPredictions sums until
/// the increment drops below 1e-14.
double sto_k_closed_form(const RiccatiSolution& sol, const Mat& w, std::size_t k);

/// Exact expected optimal cost with k predictions by backward induction over
/// the full scenario tree of a finitely supported process. Throws
/// BudgetExceeded past `leaf_budget` enumerated paths.
double scenario_tree_optimal(const LqrSystem& system, const DisturbanceProcess& process, std::size_t k,
                             std::size_t leaf_budget = 1'000'000);

/// Sum of p(w) J(policy, w) over every path of a finitely supported process.
double expected_cost_exact(const LqrSystem& system, const Policy& policy, const DisturbanceProcess& process,
                           std::size_t leaf_budget = 1'000'000);

/// Every path of a finitely supported process with its probability.
std::vector<std::pair<std::vector<Mat>, double>> enumerate_paths(const DisturbanceProcess& process,
                                                                 std::size_t horizon,
                                                                 std::size_t leaf_budget = 1'000'000);

/// sup of J over Omega^T for an affine policy, by vertex enumeration.
/// Requires n T <= 20.
double adversarial_vertex_cost(const LqrSystem& system, const Policy& policy, const BoxAdversarial& box);

struct GridSpec {
    double half_width = 10.0;  // X
    double spacing = 0.01;     // h
    std::optional<double> refine_tolerance;  // compare against spacing 2h when set
};

struct GridResult {
    double per_step_value = 0.0;
    std::vector<double> value_at_zero;  // g_t(0), t = 0..T
    std::size_t path_clamps = 0;        // clamps along the equilibrium path
    std::size_t table_clamps = 0;       // clamped lookups anywhere in the sweep
    std::optional<double> coarse_value;  // value at spacing 2h
    bool too_coarse = false;
};

/// Scalar minimax value iteration with one prediction:
/// f_t(z) = min_u R u^2 + Qn y^2 + g_{t+1}(y), y = z + B u (Qn = Qf at the last step),
/// g_t(x) = max_{|w| <= r} f_t(A x + w). Controls range over the grid through y.
/// per_step_value = (g_0(0) - g_{T/2}(0)) / (T/2).
GridResult minimax_grid_dp(const LqrSystem& system, double radius, const GridSpec& grid);

/// Same grid with the controller fixed: g_t(x) = max_w stage + g_{t+1}.
using ScalarControl = std::function<double(double x, double w)>;
GridResult fixed_policy_grid_value(const LqrSystem& system, const ScalarControl& control, double radius,
                                   const GridSpec& grid);

/// Per-step offline optimal cost for a periodic scalar pattern:
/// mean over a period of 2 w psi - P w^2 - H psi^2, psi_t = sum_i F^i P w_{t+i}.
double stationary_offline_per_step(const RiccatiSolution& sol, const std::vector<double>& pattern);

struct Ratio {
    double value;
    double se;
};

/// Ratio of mean costs with first-order propagated standard error.
Ratio performance_ratio(const EvalReport& numerator, const EvalReport& denominator);

}  // namespace predlqr
