#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "predlqr/disturbance.hpp"
#include "predlqr/evaluate.hpp"
#include "predlqr/matlin.hpp"
#include "predlqr/policy.hpp"
#include "predlqr/riccati.hpp"
#include "predlqr/system.hpp"

namespace predlqr::cli {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitConfig = 2;

/// Bad configuration: malformed JSON, unknown keys, wrong shapes or values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reference and noise of the double-integrator tracking preset.
struct TrackingSpec {
    double amplitude = 8.0;
    double rate = 1.0 / 3.0;
    double noise_half_width = 1.0;
};

struct AdversarialSpec {
    double radius = 1.0;
    std::size_t grid_horizon = 200;
    GridSpec grid;
    std::size_t dp_steps = 40;  // backward steps for the exact recursion limits
};

/// Parsed experiment configuration. Unknown keys anywhere are rejected.
struct ExperimentConfig {
    std::string system_label = "custom";
    bool tracking_preset = false;
    Mat A{1, 1}, B{1, 1}, Q{1, 1}, R{1, 1};
    std::optional<Mat> qf;  // nullopt: use the DARE solution P
    Mat x0{1, 1};
    nlohmann::json process = nlohmann::json::object();
    std::string policy = "mpc";
    std::size_t k = 1;
    std::string terminal = "riccati";
    std::vector<std::size_t> k_values;
    std::size_t horizon = 200;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    std::string out = "out";
    bool offline_row = true;
    std::size_t workers = 0;
    TrackingSpec tracking;
    AdversarialSpec adversarial;

    /// The LQR instance; Qf defaults to P when the config says "riccati".
    [[nodiscard]] LqrSystem build_system() const;
    [[nodiscard]] ProcessPtr build_process(const LqrSystem& system) const;
    [[nodiscard]] PolicyPtr build_policy(const std::string& kind, std::size_t k, const LqrSystem& system,
                                         const RiccatiSolution& sol, const ProcessPtr& process) const;
    /// The tracking problem of the preset over the configured horizon.
    [[nodiscard]] TrackingProblem tracking_problem() const;
};

/// Throws ConfigError; JSON syntax errors carry the parse location.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

/// `# seed=<s> version=<v>` trailer for every emitted CSV.
std::string csv_trailer(std::uint64_t seed);

/// Self-contained SVG with axes, ticks and one polyline; y on a log10 scale.
/// Points with y <= 0 are left out.
std::string render_log_plot(const std::vector<std::pair<double, double>>& points, const std::string& title,
                            const std::string& x_label, const std::string& y_label);

int cmd_solve_riccati(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_regret_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_tracking_demo(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_adversarial_demo(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

/// `predlqr <command> --config <path> [--out <dir>] [--seed <u64>] [--trials <n>]`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace predlqr::cli
