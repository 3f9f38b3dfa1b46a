#include "predlqr/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>
#include <utility>

#include <fmt/format.h>
#include <json.hpp>

#include "predlqr/random.hpp"

namespace predlqr {

namespace {

// Runs fn(i) for i < count on a pool of threads; results land in index order
// so every reduction downstream is independent of scheduling.
template <class R, class Fn>
std::vector<R> run_trials(std::size_t count, std::size_t workers, Fn fn) {
    std::vector<R> out(count);
    if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    std::size_t first_index = std::numeric_limits<std::size_t>::max();
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    out[i] = fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (i < first_index) {
                        first_index = i;
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

struct Moments {
    double mean;
    double se;
};

Moments moments(const std::vector<double>& xs) {
    const auto n = static_cast<double>(xs.size());
    if (xs.empty()) return {0.0, 0.0};
    double s = 0.0;
    for (double x : xs) s += x;
    const double mean = s / n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

void require_stochastic(const DisturbanceProcess& process) {
    if (!process.is_stochastic()) throw UnsupportedOperation(process.kind() + " cannot be sampled");
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); }

}  // namespace

std::string to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["policy"] = r.policy;
    j["k"] = r.k;
    j["T"] = r.horizon;
    j["trials"] = r.trials;
    j["mean_cost"] = r.mean_cost;
    j["se_cost"] = r.se_cost;
    j["mean_regret"] = r.mean_regret ? nlohmann::ordered_json(*r.mean_regret) : nullptr;
    j["se_regret"] = r.se_regret ? nlohmann::ordered_json(*r.se_regret) : nullptr;
    j["min_path_regret"] = r.min_path_regret ? nlohmann::ordered_json(*r.min_path_regret) : nullptr;
    j["pr"] = r.pr ? nlohmann::ordered_json(*r.pr) : nullptr;
    j["se_pr"] = r.se_pr ? nlohmann::ordered_json(*r.se_pr) : nullptr;
    auto rows = nlohmann::ordered_json::array();
    for (const SweepRow& s : r.sweep) {
        rows.push_back({{"k", s.k},
                        {"mean_cost", s.mean_cost},
                        {"se_cost", s.se_cost},
                        {"mean_regret", s.mean_regret},
                        {"se_regret", s.se_regret}});
    }
    j["sweep"] = rows;
    j["seed"] = r.base_seed;
    return j.dump(2);
}

std::string csv_header() { return "policy,k,T,trials,mean_cost,se_cost,mean_regret,se_regret,pr,seed"; }

std::string csv_row(const EvalReport& r) {
    return fmt::format("{},{},{},{},{:.17g},{:.17g},{},{},{},{}", r.policy, r.k, r.horizon, r.trials, r.mean_cost,
                       r.se_cost, fmt_opt(r.mean_regret), fmt_opt(r.se_regret), fmt_opt(r.pr), r.base_seed);
}

EvalReport monte_carlo_cost(const LqrSystem& system, const Policy& policy, const DisturbanceProcess& process,
                            std::size_t trials, std::uint64_t base_seed, const MonteCarloOptions& options) {
    require_stochastic(process);
    if (trials == 0) throw std::invalid_argument("monte_carlo_cost needs at least one trial");
    const std::size_t horizon = system.horizon();
    const auto costs = run_trials<double>(trials, options.workers, [&](std::size_t i) {
        const auto path = process.sample_path(rng::trial_seed(base_seed, i), horizon);
        return rollout(system, policy, path).total_cost();
    });
    const Moments m = moments(costs);
    EvalReport r;
    r.policy = policy.name();
    r.k = policy.predictions();
    r.horizon = horizon;
    r.trials = trials;
    r.mean_cost = m.mean;
    r.se_cost = m.se;
    r.base_seed = base_seed;
    return r;
}

namespace {

template <class MakePolicy>
EvalReport regret_report(const LqrSystem& system, MakePolicy make_policy, const DisturbanceProcess& process,
                         std::size_t trials, std::uint64_t base_seed, const MonteCarloOptions& options) {
    require_stochastic(process);
    if (trials == 0) throw std::invalid_argument("dynamic_regret_stochastic needs at least one trial");
    const std::size_t horizon = system.horizon();
    const DpTable base = dp_table(system, system.Qf());
    struct Trial {
        double cost = 0.0;
        double regret = 0.0;
        std::string name;
        std::size_t k = 0;
    };
    const auto results = run_trials<Trial>(trials, options.workers, [&](std::size_t i) {
        const auto path = process.sample_path(rng::trial_seed(base_seed, i), horizon);
        const PolicyPtr policy_ptr = make_policy(std::span<const Mat>(path));
        if (!policy_ptr) throw std::invalid_argument("policy factory returned null");
        const Policy& policy = *policy_ptr;
        const double j = rollout(system, policy, path).total_cost();
        DpTable table = base;
        fill_offline_terms(system, table, path);
        return Trial{j, j - table.value(system.x0()), i == 0 ? policy.name() : std::string(), policy.predictions()};
    });
    std::vector<double> costs(trials);
    std::vector<double> regrets(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        costs[i] = results[i].cost;
        regrets[i] = results[i].regret;
    }
    const Moments mc = moments(costs);
    const Moments mr = moments(regrets);
    EvalReport r;
    r.policy = results.front().name;
    r.k = std::min(results.front().k, horizon);
    r.horizon = horizon;
    r.trials = trials;
    r.mean_cost = mc.mean;
    r.se_cost = mc.se;
    r.mean_regret = mr.mean;
    r.se_regret = mr.se;
    r.min_path_regret = *std::min_element(regrets.begin(), regrets.end());
    r.base_seed = base_seed;
    return r;
}

}  // namespace

EvalReport dynamic_regret_stochastic(const LqrSystem& system, const Policy& policy, const DisturbanceProcess& process,
                                     std::size_t trials, std::uint64_t base_seed, const MonteCarloOptions& options) {
    const PolicyPtr borrowed(PolicyPtr{}, &policy);
    return regret_report(
        system, [&](std::span<const Mat>) { return borrowed; }, process, trials, base_seed, options);
}

EvalReport dynamic_regret_stochastic(const LqrSystem& system, const PathPolicyFactory& make_policy,
                                     const DisturbanceProcess& process, std::size_t trials, std::uint64_t base_seed,
                                     const MonteCarloOptions& options) {
    if (!make_policy) throw std::invalid_argument("policy factory is empty");
    return regret_report(system, make_policy, process, trials, base_seed, options);
}

double sto_k_closed_form(const RiccatiSolution& sol, const Mat& w, std::size_t k) {
    const std::size_t n = sol.state_dim();
    if (w.rows() != n || w.cols() != n) throw DimensionError("W has shape " + w.shape());
    const double base = (sol.P * w).trace();
    const bool infinite = k == kAllPredictions;
    const std::size_t limit = infinite ? std::size_t{1'000'000} : k;
    const Mat ft = sol.F.transpose();
    Mat m = sol.H;  // F^i H (F')^i
    double total = base;
    for (std::size_t i = 0; i < limit; ++i) {
        const double inc = (sol.P * m * sol.P * w).trace();
        total -= inc;
        if (infinite && std::abs(inc) < 1e-14) break;
        m = sol.F * m * ft;
    }
    return total;
}

std::vector<std::pair<std::vector<Mat>, double>> enumerate_paths(const DisturbanceProcess& process,
                                                                 std::size_t horizon, std::size_t leaf_budget) {
    std::vector<std::pair<std::vector<Mat>, double>> out;
    std::vector<Mat> prefix;
    prefix.reserve(horizon);
    auto rec = [&](auto&& self, double prob) -> void {
        if (prefix.size() == horizon) {
            if (out.size() >= leaf_budget) {
                throw BudgetExceeded(fmt::format("more than {} disturbance paths to enumerate", leaf_budget));
            }
            out.emplace_back(prefix, prob);
            return;
        }
        for (Atom& a : process.branches(prefix)) {
            if (a.probability <= 0.0) continue;
            prefix.push_back(std::move(a.value));
            self(self, prob * a.probability);
            prefix.pop_back();
        }
    };
    rec(rec, 1.0);
    return out;
}

double expected_cost_exact(const LqrSystem& system, const Policy& policy, const DisturbanceProcess& process,
                           std::size_t leaf_budget) {
    double total = 0.0;
    for (const auto& [path, prob] : enumerate_paths(process, system.horizon(), leaf_budget)) {
        total += prob * rollout(system, policy, path).total_cost();
    }
    return total;
}

double scenario_tree_optimal(const LqrSystem& system, const DisturbanceProcess& process, std::size_t k,
                             std::size_t leaf_budget) {
    if (!process.has_finite_support()) throw UnsupportedOperation(process.kind() + " has no finite support");
    const std::size_t horizon = system.horizon();
    const std::size_t n = system.state_dim();
    const DpTable table = dp_table(system, system.Qf());
    const Mat at = system.A().transpose();
    std::vector<Mat> g;
    g.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) g.push_back(at - at * table.P[t + 1] * table.H[t]);

    auto known = [&](std::size_t t) { return k >= horizon - std::min(t, horizon) ? horizon : t + k; };
    std::size_t leaves = 0;
    std::vector<Mat> prefix;
    prefix.reserve(horizon);

    struct Value {
        Mat v;
        double q;
    };
    // Value function coefficients at step t given the disturbances known then.
    auto solve = [&](auto&& self, std::size_t t) -> Value {
        if (t == horizon) {
            if (++leaves > leaf_budget) {
                throw BudgetExceeded(fmt::format("scenario tree exceeds {} leaves", leaf_budget));
            }
            return {Mat::zeros(n, 1), 0.0};
        }
        const Mat& p = table.P[t + 1];
        Mat b = Mat::zeros(n, 1);
        double c = 0.0;
        auto accumulate = [&](double prob) {
            const Value next = self(self, t + 1);
            const Mat& w = prefix[t];
            b += prob * (2.0 * (p * w) + next.v);
            c += prob * (quad_form(w, p) + dot(next.v, w) + next.q);
        };
        if (known(t + 1) == prefix.size()) {
            accumulate(1.0);
        } else {
            for (Atom& a : process.branches(prefix)) {
                if (a.probability <= 0.0) continue;
                prefix.push_back(std::move(a.value));
                accumulate(a.probability);
                prefix.pop_back();
            }
        }
        return {g[t] * b, c - 0.25 * quad_form(b, table.H[t])};
    };

    const Mat& x0 = system.x0();
    auto top = [&](auto&& self, double prob) -> double {
        if (prefix.size() == known(0)) {
            const Value v0 = solve(solve, 0);
            return prob * (quad_form(x0, table.P[0]) + dot(v0.v, x0) + v0.q);
        }
        double total = 0.0;
        for (Atom& a : process.branches(prefix)) {
            if (a.probability <= 0.0) continue;
            prefix.push_back(std::move(a.value));
            total += self(self, prob * a.probability);
            prefix.pop_back();
        }
        return total;
    };
    return top(top, 1.0);
}

double adversarial_vertex_cost(const LqrSystem& system, const Policy& policy, const BoxAdversarial& box) {
    if (!policy.is_affine()) {
        throw UnsupportedOperation("vertex enumeration needs an affine policy; " + policy.name() + " is not");
    }
    const std::size_t n = system.state_dim();
    const std::size_t horizon = system.horizon();
    if (box.dim() != n) throw DimensionError("box dimension does not match the system");
    if (n * horizon > 20) {
        throw BudgetExceeded(fmt::format("vertex enumeration over 2^{} paths exceeds the 2^20 budget", n * horizon));
    }
    const std::size_t bits = n * horizon;
    const double r = box.radius();
    std::vector<Mat> path(horizon, Mat::zeros(n, 1));
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
        for (std::size_t b = 0; b < bits; ++b) path[b / n][b % n] = ((mask >> b) & 1U) != 0U ? r : -r;
        best = std::max(best, rollout(system, policy, path).total_cost());
    }
    return best;
}

namespace {

struct Grid {
    double lo;
    double h;
    std::size_t count;

    [[nodiscard]] double at(std::size_t i) const { return lo + h * static_cast<double>(i); }
    [[nodiscard]] double hi() const { return at(count - 1); }

    // Linear interpolation; points outside the grid are clamped and counted.
    [[nodiscard]] double interp(const std::vector<double>& vals, double y, std::size_t& clamps) const {
        if (y < lo || y > hi()) {
            ++clamps;
            y = std::clamp(y, lo, hi());
        }
        const double pos = (y - lo) / h;
        auto i = static_cast<std::size_t>(pos);
        if (i >= count - 1) return vals[count - 1];
        const double frac = pos - static_cast<double>(i);
        return vals[i] + frac * (vals[i + 1] - vals[i]);
    }

    [[nodiscard]] std::size_t nearest(double y, std::size_t& clamps) const {
        if (y < lo || y > hi()) {
            ++clamps;
            y = std::clamp(y, lo, hi());
        }
        return std::min(count - 1, static_cast<std::size_t>(std::lround((y - lo) / h)));
    }
};

Grid make_state_grid(const GridSpec& spec) {
    if (!(spec.half_width > 0.0) || !(spec.spacing > 0.0)) throw std::invalid_argument("grid needs X > 0 and h > 0");
    const auto cells = static_cast<std::size_t>(std::llround(2.0 * spec.half_width / spec.spacing));
    if (cells < 2) throw std::invalid_argument("grid spacing is wider than the grid");
    return {-spec.half_width, 2.0 * spec.half_width / static_cast<double>(cells), cells + 1};
}

Grid make_noise_grid(double radius, double spacing) {
    if (radius < 0.0) throw std::invalid_argument("disturbance radius must be nonnegative");
    if (radius == 0.0) return {0.0, 1.0, 1};
    const auto cells = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 * radius / spacing - 1e-9)));
    return {-radius, 2.0 * radius / static_cast<double>(cells), cells + 1};
}

struct ScalarModel {
    double a, b, q, r, qf;
    std::size_t horizon;
};

ScalarModel scalar_model(const LqrSystem& system) {
    if (system.state_dim() != 1 || system.control_dim() != 1) {
        throw DimensionError("grid dynamic programming needs a scalar system");
    }
    if (system.B()[0] == 0.0) throw std::invalid_argument("grid dynamic programming needs B != 0");
    return {system.A()[0], system.B()[0], system.Q()[0], system.R()[0], system.Qf()[0], system.horizon()};
}

double per_step(const std::vector<double>& at_zero, std::size_t horizon) {
    const std::size_t half = horizon / 2;
    if (half == 0) return at_zero.front();
    return (at_zero.front() - at_zero[half]) / static_cast<double>(half);
}

// One controller/adversary sweep. With `control` empty the controller
// minimizes over grid targets y; otherwise the policy is evaluated.
GridResult grid_sweep(const LqrSystem& system, double radius, const GridSpec& spec, const ScalarControl* control) {
    const ScalarModel m = scalar_model(system);
    const Grid xs = make_state_grid(spec);
    const Grid ws = make_noise_grid(radius, spec.spacing);
    const std::size_t nx = xs.count;
    const std::size_t horizon = m.horizon;

    GridResult res;
    res.value_at_zero.assign(horizon + 1, 0.0);
    std::vector<double> g_next(nx, 0.0);
    std::vector<double> f(nx);
    std::vector<double> g(nx);
    std::vector<std::vector<std::uint32_t>> argmin_y(horizon);
    std::vector<std::vector<std::uint32_t>> argmax_w(horizon, std::vector<std::uint32_t>(nx));
    std::size_t clamps = 0;

    for (std::size_t t = horizon; t-- > 0;) {
        const double qn = t + 1 == horizon ? m.qf : m.q;
        if (control == nullptr) {
            // f_t(z_j) = min_i R ((y_i - z_j) / B)^2 + qn y_i^2 + g_{t+1}(y_i)
            std::vector<double> tail(nx);
            for (std::size_t i = 0; i < nx; ++i) {
                const double y = xs.at(i);
                tail[i] = qn * y * y + g_next[i];
            }
            const double rb = m.r / (m.b * m.b);
            auto& arg = argmin_y[t];
            arg.assign(nx, 0);
            for (std::size_t j = 0; j < nx; ++j) {
                const double z = xs.at(j);
                double best = std::numeric_limits<double>::infinity();
                std::uint32_t best_i = 0;
                for (std::size_t i = 0; i < nx; ++i) {
                    const double d = xs.at(i) - z;
                    const double val = rb * d * d + tail[i];
                    if (val < best) {
                        best = val;
                        best_i = static_cast<std::uint32_t>(i);
                    }
                }
                f[j] = best;
                arg[j] = best_i;
            }
            for (std::size_t i = 0; i < nx; ++i) {
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t l = 0; l < ws.count; ++l) {
                    const double val = xs.interp(f, m.a * xs.at(i) + ws.at(l), clamps);
                    if (val > best) {
                        best = val;
                        argmax_w[t][i] = static_cast<std::uint32_t>(l);
                    }
                }
                g[i] = best;
            }
        } else {
            for (std::size_t i = 0; i < nx; ++i) {
                const double x = xs.at(i);
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t l = 0; l < ws.count; ++l) {
                    const double w = ws.at(l);
                    const double u = (*control)(x, w);
                    const double y = m.a * x + w + m.b * u;
                    const double val = m.r * u * u + qn * y * y + xs.interp(g_next, y, clamps);
                    if (val > best) {
                        best = val;
                        argmax_w[t][i] = static_cast<std::uint32_t>(l);
                    }
                }
                g[i] = best;
            }
        }
        std::size_t unused = 0;
        res.value_at_zero[t] = xs.interp(g, 0.0, unused);
        std::swap(g, g_next);
    }
    res.table_clamps = clamps;
    res.per_step_value = per_step(res.value_at_zero, horizon);

    // Equilibrium path from x = 0 under the recorded argmin/argmax.
    double x = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const std::size_t i = xs.nearest(x, res.path_clamps);
        const double w = ws.at(argmax_w[t][i]);
        if (control == nullptr) {
            const double z = m.a * x + w;
            const std::size_t j = xs.nearest(z, res.path_clamps);
            x = xs.at(argmin_y[t][j]);
        } else {
            x = m.a * x + w + m.b * (*control)(x, w);
        }
    }
    if (x < xs.lo || x > xs.hi()) ++res.path_clamps;
    return res;
}

GridResult with_refinement(const LqrSystem& system, double radius, const GridSpec& spec, const ScalarControl* control) {
    GridResult res = grid_sweep(system, radius, spec, control);
    if (spec.refine_tolerance) {
        GridSpec coarse = spec;
        coarse.spacing = 2.0 * spec.spacing;
        coarse.refine_tolerance.reset();
        res.coarse_value = grid_sweep(system, radius, coarse, control).per_step_value;
        res.too_coarse = std::abs(*res.coarse_value - res.per_step_value) > *spec.refine_tolerance;
    }
    return res;
}

}  // namespace

GridResult minimax_grid_dp(const LqrSystem& system, double radius, const GridSpec& grid) {
    return with_refinement(system, radius, grid, nullptr);
}

GridResult fixed_policy_grid_value(const LqrSystem& system, const ScalarControl& control, double radius,
                                   const GridSpec& grid) {
    if (!control) throw std::invalid_argument("fixed_policy_grid_value needs a control law");
    return with_refinement(system, radius, grid, &control);
}

double stationary_offline_per_step(const RiccatiSolution& sol, const std::vector<double>& pattern) {
    if (sol.state_dim() != 1) throw DimensionError("stationary_offline_per_step needs a scalar system");
    if (pattern.empty()) throw std::invalid_argument("disturbance pattern is empty");
    const double f = sol.F[0];
    if (!(std::abs(f) < 1.0)) throw ClosedLoopUnstable(std::abs(f));
    const double p = sol.P[0];
    const double h = sol.H[0];
    const std::size_t period = pattern.size();
    const double cycle = 1.0 - std::pow(f, static_cast<double>(period));
    double total = 0.0;
    for (std::size_t t = 0; t < period; ++t) {
        double s = 0.0;
        double fj = 1.0;
        for (std::size_t j = 0; j < period; ++j) {
            s += fj * pattern[(t + j) % period];
            fj *= f;
        }
        const double psi = p * s / cycle;
        const double w = pattern[t];
        total += 2.0 * w * psi - p * w * w - h * psi * psi;
    }
    return total / static_cast<double>(period);
}

Ratio performance_ratio(const EvalReport& numerator, const EvalReport& denominator) {
    const double a = numerator.mean_cost;
    const double b = denominator.mean_cost;
    if (!std::isfinite(a) || !std::isfinite(b)) throw std::domain_error("performance ratio of non-finite costs");
    if (b <= 0.0) throw std::domain_error(fmt::format("performance ratio denominator must be positive, got {}", b));
    const double ratio = a / b;
    const double rel_a = a != 0.0 ? numerator.se_cost / a : 0.0;
    const double rel_b = denominator.se_cost / b;
    return {ratio, std::abs(ratio) * std::sqrt(rel_a * rel_a + rel_b * rel_b)};
}

}  // namespace predlqr
