// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "oracles.hpp"
#include "predlqr/cli.hpp"
#include "predlqr/evaluate.hpp"
#include "predlqr/policy.hpp"
#include "predlqr/riccati.hpp"

using predlqr::Mat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

predlqr::RiccatiSolution golden_solution() { return predlqr::solve_dare(Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{1}}); }

predlqr::LqrSystem golden_system(std::size_t horizon) {
    return {Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{1}}, golden_solution().P, Mat{{0}}, horizon};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion1() {
    const auto start = std::chrono::steady_clock::now();
    const auto sol = golden_solution();
    const double elapsed = seconds_since(start);
    const double err = std::max({std::abs(sol.P[0] - oracle::kGoldenP), std::abs(sol.F[0] - oracle::kGoldenF),
                                 std::abs(sol.H[0] - oracle::kGoldenF)});
    return {err <= 1e-9 && elapsed < 1.0,
            fmt::format("P={:.12f} F={:.12f} H={:.12f} max err {:.2e}, {:.4f} s", sol.P[0], sol.F[0], sol.H[0], err,
                        elapsed)};
}

Outcome criterion2() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 gen(2024);
    const std::size_t horizon = 30;
    double worst = 0.0;
    std::size_t controls = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t n = 1 + gen() % 4, d = 1 + gen() % 2, k = gen() % 9;
        std::optional<predlqr::LqrSystem> sys;
        std::optional<predlqr::RiccatiSolution> sol;
        while (!sol) {
            sys.emplace(oracle::random_mat(gen, n, n, -1.1, 1.1), oracle::random_mat(gen, n, d),
                        oracle::random_spd(gen, n, 0.2), oracle::random_spd(gen, d, 0.2), oracle::random_spd(gen, n, 0.2),
                        oracle::random_mat(gen, n, 1, -2, 2), horizon);
            try {
                sol = predlqr::solve_dare(*sys);
            } catch (const std::runtime_error&) {
            }
        }
        std::vector<Mat> path;
        for (std::size_t t = 0; t < horizon; ++t) path.push_back(oracle::random_mat(gen, n, 1, -2, 2));
        const auto closed = predlqr::rollout(*sys, *predlqr::mpc_closed_form(*sol, k), path);
        const auto receding = predlqr::rollout(*sys, *predlqr::mpc_receding(*sys, *sol, k), path);
        for (std::size_t t = 0; t < horizon; ++t) {
            const Mat& a = closed.controls[t];
            worst = std::max(worst, (a - receding.controls[t]).max_abs() / std::max(1.0, a.max_abs()));
            ++controls;
        }
    }
    const double elapsed = seconds_since(start);
    return {worst <= 1e-8 && elapsed < 10.0,
            fmt::format("{} controls over 100 instances, worst relative gap {:.2e}, {:.2f} s", controls, worst, elapsed)};
}

Outcome criterion3() {
    const auto start = std::chrono::steady_clock::now();
    const auto sol = golden_solution();
    const std::size_t horizon = 10'000;
    const auto sys = golden_system(horizon);
    const auto noise = predlqr::IidZeroMean::gaussian(Mat{{1}});
    bool ok = true;
    std::string detail;
    for (const std::size_t k : {0U, 1U, 2U, 4U}) {
        // Oracle: P - sum_{i<k} P^2 F^{2i} H with W = 1.
        double expected = oracle::kGoldenP;
        for (std::size_t i = 0; i < k; ++i)
            expected -= oracle::kGoldenP * oracle::kGoldenP * std::pow(oracle::kGoldenF, 2.0 * double(i)) * oracle::kGoldenF;
        const double closed = predlqr::sto_k_closed_form(sol, Mat{{1}}, k);
        const auto report = predlqr::monte_carlo_cost(sys, *predlqr::mpc_closed_form(sol, k), noise, 100, 100 + k);
        const double per_step = report.mean_cost / double(horizon);
        const bool row = std::abs(closed - expected) < 1e-12 && std::abs(per_step / expected - 1.0) <= 0.02;
        ok = ok && row;
        detail += fmt::format(" k={}: {:.6f} vs {:.6f};", k, per_step, expected);
    }
    const double elapsed = seconds_since(start);
    return {ok && elapsed < 60.0, fmt::format("{} {:.1f} s", detail, elapsed)};
}

Outcome criterion4() {
    const auto sol = golden_solution();
    const std::size_t horizon = 200;
    const auto sys = golden_system(horizon);
    const auto noise = predlqr::IidZeroMean::gaussian(Mat{{1}});
    const double f2 = oracle::kGoldenF * oracle::kGoldenF;
    std::vector<double> regret;
    std::string detail;
    for (std::size_t k = 0; k <= 5; ++k) {
        const auto r = predlqr::dynamic_regret_stochastic(sys, *predlqr::mpc_closed_form(sol, k), noise, 10'000, 400);
        regret.push_back(*r.mean_regret);
        detail += fmt::format(" r{}={:.4e}", k, regret.back());
    }
    bool ok = true;
    detail += "; ratios";
    for (std::size_t k = 0; k + 1 < regret.size(); ++k) {
        const double ratio = regret[k + 1] / regret[k];
        ok = ok && std::abs(ratio - f2) <= 0.05;
        detail += fmt::format(" {:.4f}", ratio);
    }
    return {ok, fmt::format("{} (F^2 = {:.6f})", detail, f2)};
}

Outcome criterion5() {
    const std::size_t horizon = 6;
    const auto sys = golden_system(horizon);
    const predlqr::SignCoupled process(Mat{{1}});
    const double tree = predlqr::scenario_tree_optimal(sys, process, 1);
    // Offline expectation: the coin is fair and each branch is a fixed path.
    const double offline = 0.5 * oracle::stacked_optimal_cost(sys, std::vector<oracle::Vec>(horizon, {1.0})) +
                           0.5 * oracle::stacked_optimal_cost(sys, std::vector<oracle::Vec>(horizon, {-1.0}));
    const double gap = std::abs(tree - offline);
    return {gap <= 1e-10, fmt::format("tree {:.12f}, offline {:.12f}, gap {:.2e}", tree, offline, gap)};
}

Outcome criterion6() {
    const std::size_t horizon = 6;
    const auto sys = golden_system(horizon);
    const auto process = predlqr::IidZeroMean::rademacher(1);
    const double tree = predlqr::scenario_tree_optimal(sys, process, 1);
    const double telescoped =
        oracle::telescoped_expected_cost(oracle::kGoldenF, oracle::kGoldenP, oracle::kGoldenF, 1.0, 0.0, 1, horizon);
    const double gap = std::abs(tree - telescoped);
    return {gap <= 1e-10, fmt::format("tree {:.12f}, recursion {:.12f}, gap {:.2e}", tree, telescoped, gap)};
}

Outcome criterion7() {
    // (a) exact recursion
    const std::size_t steps = 60;
    const auto dp = predlqr::example2_exact_dp(steps);
    double ratio_err = 0.0;
    // i stages from the end: a = f_{2i} / f_{2i+1}.
    for (std::size_t i = 1; i <= steps; ++i)
        ratio_err = std::max(ratio_err, std::abs(dp.a[steps - i] - oracle::fib(2 * i) / oracle::fib(2 * i + 1)));
    const double increment = dp.c[steps - 41] - dp.c[steps - 40];
    const bool a_ok = ratio_err <= 1e-12 && std::abs(increment - 1.0) <= 1e-9;

    // (b) grid minimax
    const auto start = std::chrono::steady_clock::now();
    const predlqr::LqrSystem sys(Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{0}}, 200);
    const auto grid = predlqr::minimax_grid_dp(sys, 1.0, {10.0, 0.01, std::nullopt});
    const double elapsed = seconds_since(start);
    const bool b_ok = std::abs(grid.per_step_value - 1.0) <= 0.02 && elapsed < 120.0;

    // (c) stationary offline value
    const double stationary = predlqr::stationary_offline_per_step(golden_solution(), {1.0});
    const bool c_ok = std::abs(stationary - 1.0) <= 1e-12;

    return {a_ok && b_ok && c_ok,
            fmt::format("(a) ratio err {:.2e}, c increment {:.12f}; (b) grid {:.6f} in {:.1f} s, {} path clamps; (c) "
                        "{:.15f}",
                        ratio_err, increment, grid.per_step_value, elapsed, grid.path_clamps, stationary)};
}

Outcome criterion8() {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / fmt::format("predlqr_acceptance_{}", ::getpid());
    fs::create_directories(dir);
    const fs::path cfg = dir / "tracking.json";
    std::ofstream(cfg) << R"({"system": {"preset": "double_integrator_tracking"}, "T": 200, "trials": 1000,
                             "seed": 8, "k_values": [1, 2, 4, 8, 16, 32]})";
    auto run = [&](const std::string& sub) {
        const std::string cfg_s = cfg.string(), out_s = (dir / sub).string();
        const char* argv[] = {"predlqr", "tracking-demo", "--config", cfg_s.c_str(), "--out", out_s.c_str()};
        std::ostringstream out, err;
        return predlqr::cli::run(6, argv, out, err);
    };
    if (run("a") != 0 || run("b") != 0) return {false, "tracking-demo failed"};
    const std::string csv = slurp(dir / "a" / "tracking_regret.csv");
    const bool deterministic = !csv.empty() && csv == slurp(dir / "b" / "tracking_regret.csv") &&
                               slurp(dir / "a" / "trajectory_k8.csv") == slurp(dir / "b" / "trajectory_k8.csv");

    const auto summary = nlohmann::json::parse(slurp(dir / "a" / "tracking_regret.json"));
    std::vector<double> ks, regret, floor;
    for (const auto& row : summary["sweep"]) {
        ks.push_back(row["k"].get<double>());
        regret.push_back(row["mean_regret"].get<double>());
        floor.push_back(row["se_regret"].get<double>() + 1e-9 * std::abs(row["mean_cost"].get<double>()));
    }
    // Strict decrease while the regret is resolvable above the noise floor.
    bool decreasing = true;
    std::size_t resolved = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (regret[i] <= 10.0 * floor[i]) break;
        resolved = i + 1;
        if (i + 1 < ks.size() && !(regret[i + 1] < regret[i])) decreasing = false;
    }
    // Least-squares slope of log regret against k over the resolved points.
    double slope = 0.0;
    if (resolved >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < resolved; ++i) {
            mx += ks[i];
            my += std::log(regret[i]);
        }
        mx /= double(resolved);
        my /= double(resolved);
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < resolved; ++i) {
            sxy += (ks[i] - mx) * (std::log(regret[i]) - my);
            sxx += (ks[i] - mx) * (ks[i] - mx);
        }
        slope = sxy / sxx;
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    const double elapsed = seconds_since(start);
    std::string values;
    for (std::size_t i = 0; i < ks.size(); ++i) values += fmt::format(" k={}:{:.3e}", ks[i], regret[i]);
    return {deterministic && decreasing && resolved >= 2 && slope < 0.0 && elapsed < 300.0,
            fmt::format("{}; {} resolved, slope {:.3f}, deterministic {}, {:.1f} s", values, resolved, slope,
                        deterministic, elapsed)};
}

Outcome criterion9() {
    // Bound with k >= log T / (2 log(1/lambda)): T lambda^{2k} <= 1, so the
    // regret sum is at most P^2 H W / (1 - F^2) < 1.2.
    const double bound = 1.2;
    const auto sol = golden_solution();
    const auto noise = predlqr::IidZeroMean::gaussian(Mat{{1}});
    bool ok = true;
    std::string detail;
    for (const std::size_t horizon : {50U, 100U, 200U, 400U}) {
        const auto k = static_cast<std::size_t>(
            std::ceil(std::log(double(horizon)) / (2.0 * std::log(1.0 / sol.lambda))));
        const auto r = predlqr::dynamic_regret_stochastic(golden_system(horizon), *predlqr::mpc_closed_form(sol, k),
                                                          noise, 2000, 900 + horizon);
        const bool row = *r.mean_regret <= bound + 3.0 * *r.se_regret && *r.min_path_regret >= -1e-8;
        ok = ok && row;
        detail += fmt::format(" T={} k={} regret {:.3e} (min path {:.1e});", horizon, k, *r.mean_regret,
                              *r.min_path_regret);
    }
    return {ok, detail};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"golden Riccati solution", criterion1},
        {"receding MPC with terminal P equals the closed form", criterion2},
        {"per-step cost matches the closed form", criterion3},
        {"regret decays geometrically in k", criterion4},
        {"sign-coupled tree equals offline expectation", criterion5},
        {"Rademacher tree equals the telescoping recursion", criterion6},
        {"scalar adversarial instance", criterion7},
        {"tracking regret sweep", criterion8},
        {"constant regret with logarithmic predictions", criterion9},
    };
    int failures = 0;
    int index = 1;
    bool covered = true;
    for (const auto& [name, check] : criteria) {
        Outcome o{false, ""};
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failures;
        if (!o.pass && (index == 4 || index == 8 || index == 9)) covered = false;
        std::cout << fmt::format("{} criterion {}: {}:{}\n", o.pass ? "PASS" : "FAIL", index++, name,
                                 o.detail.starts_with(" ") ? o.detail : " " + o.detail)
                  << std::flush;
    }
    // The asymptotic bounds are covered by the property checks 4, 8 and 9.
    std::cout << fmt::format("{} criterion 10: asymptotic bounds covered by criteria 4, 8 and 9\n",
                             covered ? "PASS" : "FAIL");
    if (!covered) ++failures;
    return failures == 0 ? 0 : 1;
}
