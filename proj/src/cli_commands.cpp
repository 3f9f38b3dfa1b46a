#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "predlqr/cli.hpp"
#include "predlqr/random.hpp"

namespace predlqr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const Mat& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

void print_matrix(std::ostream& out, const std::string& name, const Mat& m) {
    out << name << " =\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out << "  ";
        for (std::size_t j = 0; j < m.cols(); ++j) out << fmt::format("{:>14.10f}", m(i, j));
        out << '\n';
    }
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

struct RegretRow {
    std::size_t k;
    double mean;
    double se;
};

void write_regret_outputs(const fs::path& out_dir, const std::string& stem, const std::vector<RegretRow>& rows,
                          const std::vector<std::string>& extra_header, const std::vector<std::vector<double>>& extra,
                          std::uint64_t seed, const std::string& title) {
    std::ostringstream csv;
    csv << "k,mean_regret,se";
    for (const auto& h : extra_header) csv << ',' << h;
    csv << '\n';
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv << fmt::format("{},{:.17g},{:.17g}", rows[i].k, rows[i].mean, rows[i].se);
        if (i < extra.size()) {
            for (double v : extra[i]) csv << fmt::format(",{:.17g}", v);
        }
        csv << '\n';
        points.emplace_back(static_cast<double>(rows[i].k), rows[i].mean);
    }
    csv << csv_trailer(seed);
    write_atomic(out_dir / (stem + ".csv"), csv.str());
    write_atomic(out_dir / (stem + ".svg"), render_log_plot(points, title, "k (predictions)", "mean regret"));
}

}  // namespace

void write_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
        out << contents;
        out.flush();
        if (!out) throw std::runtime_error(fmt::format("short write to {}", tmp.string()));
    }
    fs::rename(tmp, path);
}

std::string csv_trailer(std::uint64_t seed) { return fmt::format("# seed={} version={}\n", seed, kVersion); }

std::string render_log_plot(const std::vector<std::pair<double, double>>& points, const std::string& title,
                            const std::string& x_label, const std::string& y_label) {
    constexpr double width = 640;
    constexpr double height = 420;
    constexpr double left = 80;
    constexpr double right = 24;
    constexpr double top = 44;
    constexpr double bottom = 56;
    const double pw = width - left - right;
    const double ph = height - top - bottom;

    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : points) {
        if (y > 0.0 && std::isfinite(y) && std::isfinite(x)) pts.emplace_back(x, std::log10(y));
    }
    double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
    if (!pts.empty()) {
        x_lo = x_hi = pts.front().first;
        y_lo = y_hi = pts.front().second;
        for (const auto& [x, y] : pts) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    if (x_hi == x_lo) {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    y_lo = std::floor(y_lo);
    y_hi = std::ceil(y_hi);
    if (y_hi == y_lo) y_hi += 1.0;
    auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
    auto sy = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * ph; };

    std::ostringstream s;
    s << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{:.0f}" height="{:.0f}" viewBox="0 0 {:.0f} {:.0f}">)",
                     width, height, width, height)
      << '\n';
    s << fmt::format(R"(<rect x="0" y="0" width="{:.0f}" height="{:.0f}" fill="white"/>)", width, height) << '\n';
    s << fmt::format(R"(<text x="{:.1f}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>)",
                     width / 2, escape_xml(title))
      << '\n';
    s << fmt::format(R"(<line x1="{0:.1f}" y1="{1:.1f}" x2="{2:.1f}" y2="{1:.1f}" stroke="black"/>)", left, top + ph,
                     left + pw)
      << '\n';
    s << fmt::format(R"(<line x1="{0:.1f}" y1="{1:.1f}" x2="{0:.1f}" y2="{2:.1f}" stroke="black"/>)", left, top, top + ph)
      << '\n';

    // Decade ticks on y, thinned to at most ~10 labels.
    const auto decades = static_cast<int>(y_hi - y_lo);
    const int ystep = std::max(1, (decades + 9) / 10);
    for (int d = static_cast<int>(y_lo); d <= static_cast<int>(y_hi); d += ystep) {
        const double y = sy(d);
        s << fmt::format(R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="black"/>)", left - 5, y, left, y)
          << '\n';
        s << fmt::format(
                 R"(<text x="{:.1f}" y="{:.1f}" font-family="sans-serif" font-size="11" text-anchor="end">1e{}</text>)",
                 left - 8, y + 4, d)
          << '\n';
    }
    // x ticks at the data points when there are few, else six even ticks.
    std::vector<double> xticks;
    if (!pts.empty() && pts.size() <= 12) {
        for (const auto& p : pts) xticks.push_back(p.first);
    } else {
        for (int i = 0; i <= 5; ++i) xticks.push_back(x_lo + (x_hi - x_lo) * i / 5.0);
    }
    for (double xv : xticks) {
        const double x = sx(xv);
        s << fmt::format(R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="black"/>)", x, top + ph, x,
                         top + ph + 5)
          << '\n';
        s << fmt::format(
                 R"(<text x="{:.1f}" y="{:.1f}" font-family="sans-serif" font-size="11" text-anchor="middle">{:g}</text>)",
                 x, top + ph + 18, xv)
          << '\n';
    }
    s << fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>)",
                     left + pw / 2, height - 14, escape_xml(x_label))
      << '\n';
    s << fmt::format(
             R"svg(<text x="18" y="{:.1f}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.1f})">{} (log scale)</text>)svg",
             top + ph / 2, top + ph / 2, escape_xml(y_label))
      << '\n';
    if (!pts.empty()) {
        s << R"(<polyline fill="none" stroke="#1f5fa8" stroke-width="2" points=")";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i > 0) s << ' ';
            s << fmt::format("{:.2f},{:.2f}", sx(pts[i].first), sy(pts[i].second));
        }
        s << "\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

int cmd_solve_riccati(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    const RiccatiSolution sol = solve_dare(config.A, config.B, config.Q, config.R);
    log << "system: " << config.system_label << "\n";
    print_matrix(log, "P", sol.P);
    print_matrix(log, "K", sol.K);
    print_matrix(log, "F", sol.F);
    print_matrix(log, "H", sol.H);
    log << fmt::format("rho(F) = {:.10f}\nlambda = {:.10f}\nresidual = {:.3e}\niterations = {}\n", sol.rho_F,
                       sol.lambda, sol.residual, sol.iterations);
    json j;
    j["system"] = config.system_label;
    j["P"] = to_json(sol.P);
    j["K"] = to_json(sol.K);
    j["F"] = to_json(sol.F);
    j["H"] = to_json(sol.H);
    j["rho_F"] = sol.rho_F;
    j["lambda"] = sol.lambda;
    j["residual"] = sol.residual;
    j["iterations"] = sol.iterations;
    j["version"] = kVersion;
    write_atomic(out_dir / "riccati.json", j.dump(2) + "\n");
    return kExitOk;
}

int cmd_regret_sweep(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    const LqrSystem system = config.build_system();
    const RiccatiSolution sol = solve_dare(system);
    const ProcessPtr process = config.build_process(system);
    std::vector<std::size_t> ks = config.k_values;
    if (ks.empty()) {
        for (std::size_t k = 0; k <= 8; ++k) ks.push_back(k);
    }
    const MonteCarloOptions mc{config.workers};
    EvalReport summary;
    summary.policy = config.policy;
    summary.horizon = system.horizon();
    summary.trials = config.trials;
    summary.base_seed = config.seed;
    std::vector<RegretRow> rows;
    log << fmt::format("{:>6} {:>16} {:>12}\n", "k", "mean_regret", "se");
    auto record = [&](const EvalReport& r) {
        rows.push_back({r.k, *r.mean_regret, *r.se_regret});
        summary.sweep.push_back({r.k, r.mean_cost, r.se_cost, *r.mean_regret, *r.se_regret});
        log << fmt::format("{:>6} {:>16.8e} {:>12.3e}\n", r.k, *r.mean_regret, *r.se_regret);
    };
    for (std::size_t k : ks) {
        const PolicyPtr policy = config.build_policy(config.policy, k, system, sol, process);
        EvalReport r = dynamic_regret_stochastic(system, *policy, *process, config.trials, config.seed, mc);
        r.k = k;
        record(r);
    }
    if (config.offline_row) {
        const EvalReport r = dynamic_regret_stochastic(
            system, [&](std::span<const Mat> path) { return offline_optimal(system, path).policy; }, *process,
            config.trials, config.seed, mc);
        record(r);
    }
    write_regret_outputs(out_dir, "regret_sweep", rows, {}, {}, config.seed, "dynamic regret vs predictions");
    write_atomic(out_dir / "regret_sweep.json", to_json(summary) + "\n");
    return kExitOk;
}

int cmd_tracking_demo(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    if (!config.tracking_preset) throw ConfigError("tracking-demo needs the double_integrator_tracking preset");
    const TrackingProblem problem = config.tracking_problem();
    const TrackingReduction red = reduce_tracking(problem);
    const LqrSystem& system = red.system;
    const RiccatiSolution sol = solve_dare(system);
    const auto process = std::make_shared<TrackingResidual>(red.residual);
    std::vector<std::size_t> ks = config.k_values;
    if (ks.empty()) ks = {1, 2, 4, 8, 16, 32};
    const MonteCarloOptions mc{config.workers};
    const std::size_t horizon = system.horizon();

    // Reference for plotting alongside the trajectories.
    std::ostringstream ref;
    ref << "t,d_0,d_1,d_2,d_3\n";
    for (std::size_t t = 0; t <= horizon; ++t) {
        const Mat& d = red.desired[t];
        ref << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", t, d[0], d[1], d[2], d[3]);
    }
    ref << csv_trailer(config.seed);
    write_atomic(out_dir / "reference.csv", ref.str());

    const auto sample = process->sample_path(rng::trial_seed(config.seed, 0), horizon);
    std::vector<RegretRow> rows;
    std::vector<std::vector<double>> extra;
    EvalReport summary;
    summary.policy = config.policy;
    summary.horizon = horizon;
    summary.trials = config.trials;
    summary.base_seed = config.seed;
    log << fmt::format("{:>6} {:>16} {:>12} {:>16}\n", "k", "mean_regret", "se", "position_error");
    for (std::size_t k : ks) {
        const PolicyPtr policy = config.build_policy(config.policy, k, system, sol, process);
        EvalReport r = dynamic_regret_stochastic(system, *policy, *process, config.trials, config.seed, mc);
        r.k = k;
        const Trajectory traj = red.to_tracking_coordinates(rollout(system, *policy, sample));
        std::ostringstream csv;
        write_trajectory_csv(csv, traj);
        csv << csv_trailer(config.seed);
        write_atomic(out_dir / fmt::format("trajectory_k{}.csv", k), csv.str());
        double err = 0.0;
        for (std::size_t t = 1; t <= horizon; ++t) {
            const double dx = traj.states[t][0] - red.desired[t][0];
            const double dy = traj.states[t][1] - red.desired[t][1];
            err += std::sqrt(dx * dx + dy * dy);
        }
        err /= static_cast<double>(horizon);
        rows.push_back({k, *r.mean_regret, *r.se_regret});
        extra.push_back({err});
        summary.sweep.push_back({k, r.mean_cost, r.se_cost, *r.mean_regret, *r.se_regret});
        log << fmt::format("{:>6} {:>16.8e} {:>12.3e} {:>16.6f}\n", k, *r.mean_regret, *r.se_regret, err);
    }
    write_regret_outputs(out_dir, "tracking_regret", rows, {"mean_position_error"}, extra, config.seed,
                         "tracking regret vs predictions");
    write_atomic(out_dir / "tracking_regret.json", to_json(summary) + "\n");
    return kExitOk;
}

int cmd_adversarial_demo(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
    if (config.A.size() != 1 || config.A[0] != 1.0 || config.B[0] != 1.0 || config.Q[0] != 1.0 || config.R[0] != 1.0) {
        throw ConfigError("adversarial-demo needs the golden_scalar system (A = B = Q = R = 1)");
    }
    const AdversarialSpec& spec = config.adversarial;
    const RiccatiSolution sol = solve_dare(config.A, config.B, config.Q, config.R);

    const std::size_t steps = std::max<std::size_t>(spec.dp_steps, 1);
    const Example2Dp dp = example2_exact_dp(steps + 2);
    const std::size_t horizon = dp.horizon();
    const double a_limit = dp.a[horizon - steps];
    const double c_increment = dp.c[horizon - steps - 1] - dp.c[horizon - steps];

    const LqrSystem grid_system(config.A, config.B, config.Q, config.R, config.Q, Mat::scalar(0.0), spec.grid_horizon);
    const GridResult minimax = minimax_grid_dp(grid_system, spec.radius, spec.grid);
    const GridResult fixed =
        fixed_policy_grid_value(grid_system, [](double x, double w) { return example2_control(x + w); }, spec.radius,
                                spec.grid);
    const double stationary = stationary_offline_per_step(sol, {1.0});
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;

    struct Line {
        std::string name;
        double value;
        double reference;
    };
    const std::vector<Line> lines = {
        {fmt::format("a after {} steps", steps), a_limit, golden},
        {fmt::format("c increment after {} steps", steps), c_increment, 1.0},
        {"grid minimax per-step value", minimax.per_step_value, 1.0},
        {"grid value of the piecewise policy", fixed.per_step_value, 1.0},
        {"stationary offline per-step (w = 1)", stationary, 1.0},
    };
    std::ostringstream csv;
    csv << "quantity,value,reference\n";
    log << fmt::format("{:<40} {:>16} {:>12}\n", "quantity", "value", "reference");
    for (const Line& l : lines) {
        log << fmt::format("{:<40} {:>16.12f} {:>12.9f}\n", l.name, l.value, l.reference);
        csv << fmt::format("{},{:.17g},{:.17g}\n", l.name, l.value, l.reference);
    }
    log << fmt::format("grid clamps on the equilibrium path: {} (minimax), {} (policy)\n", minimax.path_clamps,
                       fixed.path_clamps);
    if (minimax.coarse_value) {
        log << fmt::format("grid value at spacing {}: {:.8f}{}\n", 2 * spec.grid.spacing, *minimax.coarse_value,
                           minimax.too_coarse ? " (grid too coarse)" : "");
    }
    csv << csv_trailer(config.seed);
    write_atomic(out_dir / "adversarial.csv", csv.str());
    return kExitOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Online LQR control with disturbance predictions", "predlqr"};
    std::string command;
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    app.add_option("command", command, "solve-riccati | regret-sweep | tracking-demo | adversarial-demo")
        ->required()
        ->check(CLI::IsMember({"solve-riccati", "regret-sweep", "tracking-demo", "adversarial-demo"}));
    app.add_option("--config", config_path, "experiment configuration (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--seed", seed, "base seed (overrides the config)");
    app.add_option("--trials", trials, "Monte Carlo trials (overrides the config)")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        ExperimentConfig config = load_config(config_path);
        if (seed) config.seed = *seed;
        if (trials) config.trials = *trials;
        const fs::path dir = out_dir ? fs::path(*out_dir) : fs::path(config.out);
        fs::create_directories(dir);
        if (command == "solve-riccati") return cmd_solve_riccati(config, dir, out);
        if (command == "regret-sweep") return cmd_regret_sweep(config, dir, out);
        if (command == "tracking-demo") return cmd_tracking_demo(config, dir, out);
        return cmd_adversarial_demo(config, dir, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::logic_error& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace predlqr::cli
