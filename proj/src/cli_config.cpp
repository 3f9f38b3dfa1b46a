#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "predlqr/cli.hpp"

namespace predlqr::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
    }
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(fmt::format("{} must be a number", where));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(fmt::format("{} must be finite", where));
    return d;
}

std::size_t count(const json& v, const std::string& where) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError(fmt::format("{} must be a non-negative integer", where));
    }
    return v.get<std::size_t>();
}

// A number is a 1x1 matrix; otherwise a non-empty array of equal-length rows.
Mat matrix(const json& v, const std::string& where) {
    if (v.is_number()) return Mat::scalar(number(v, where));
    if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("{} must be a number or an array of rows", where));
    const std::size_t rows = v.size();
    std::size_t cols = 0;
    std::vector<double> data;
    for (std::size_t i = 0; i < rows; ++i) {
        const json& row = v[i];
        if (!row.is_array() || row.empty()) throw ConfigError(fmt::format("{} row {} must be a non-empty array", where, i));
        if (i == 0) cols = row.size();
        if (row.size() != cols) throw ConfigError(fmt::format("{} rows have different lengths", where));
        for (std::size_t j = 0; j < cols; ++j) data.push_back(number(row[j], fmt::format("{}[{}][{}]", where, i, j)));
    }
    return {rows, cols, std::move(data)};
}

// A number or a flat array, read as a column.
Mat vector(const json& v, const std::string& where) {
    if (v.is_number()) return Mat::scalar(number(v, where));
    if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("{} must be a number or an array", where));
    std::vector<double> data;
    for (std::size_t i = 0; i < v.size(); ++i) data.push_back(number(v[i], fmt::format("{}[{}]", where, i)));
    return Mat::column(data);
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(fmt::format("{} must be a string", where));
    return v.get<std::string>();
}

void apply_preset(ExperimentConfig& c, const std::string& name) {
    c.system_label = name;
    if (name == "golden_scalar") {
        c.A = c.B = c.Q = c.R = Mat::scalar(1.0);
        c.qf.reset();
        c.x0 = Mat::scalar(0.0);
    } else if (name == "double_integrator") {
        c.A = Mat{{1.0, 1.0}, {0.0, 1.0}};
        c.B = Mat{{0.0}, {1.0}};
        c.Q = Mat::identity(2);
        c.R = Mat::scalar(1.0);
        c.qf = c.Q;
        c.x0 = Mat::zeros(2, 1);
    } else if (name == "double_integrator_tracking") {
        // State (p, v) in the plane: p' = p + v, v' = v + u.
        c.tracking_preset = true;
        c.A = Mat{{1, 0, 1, 0}, {0, 1, 0, 1}, {0, 0, 1, 0}, {0, 0, 0, 1}};
        c.B = Mat{{0, 0}, {0, 0}, {1, 0}, {0, 1}};
        c.Q = Mat::diag({1.0, 1.0, 0.0, 0.0});
        c.R = Mat::identity(2);
        c.qf = c.Q;
        c.x0 = Mat::zeros(4, 1);
    } else {
        throw ConfigError(fmt::format("unknown system preset '{}'", name));
    }
}

void parse_system(ExperimentConfig& c, const json& v) {
    if (v.is_string()) {
        apply_preset(c, v.get<std::string>());
        return;
    }
    if (v.is_object() && v.contains("preset")) {
        check_keys(v, {"preset"}, "system");
        apply_preset(c, text(v["preset"], "system.preset"));
        return;
    }
    check_keys(v, {"A", "B", "Q", "R", "Qf", "x0"}, "system");
    for (const char* key : {"A", "B", "Q", "R"}) {
        if (!v.contains(key)) throw ConfigError(fmt::format("system.{} is required", key));
    }
    c.system_label = "custom";
    c.A = matrix(v["A"], "system.A");
    c.B = matrix(v["B"], "system.B");
    c.Q = matrix(v["Q"], "system.Q");
    c.R = matrix(v["R"], "system.R");
    c.qf = c.Q;
    if (v.contains("Qf")) {
        const json& qf = v["Qf"];
        if (qf.is_string()) {
            const std::string s = qf.get<std::string>();
            if (s == "riccati") {
                c.qf.reset();
            } else if (s != "Q") {
                throw ConfigError("system.Qf must be a matrix, \"Q\" or \"riccati\"");
            }
        } else {
            c.qf = matrix(qf, "system.Qf");
        }
    }
    c.x0 = v.contains("x0") ? vector(v["x0"], "system.x0") : Mat::zeros(c.A.rows(), 1);
}

const std::set<std::string> kProcessKinds = {"iid_gaussian", "iid_rademacher", "iid_uniform", "iid_atoms", "ar1",
                                             "sign_coupled", "tracking_residual", "box_adversarial"};

void validate_process(const json& v, const std::string& where) {
    if (!v.is_object() || !v.contains("kind")) throw ConfigError(fmt::format("{} needs a \"kind\"", where));
    const std::string kind = text(v["kind"], where + ".kind");
    if (!kProcessKinds.contains(kind)) throw ConfigError(fmt::format("unknown process kind '{}' in {}", kind, where));
    if (kind == "iid_gaussian") check_keys(v, {"kind", "W"}, where);
    if (kind == "iid_rademacher") check_keys(v, {"kind", "scale"}, where);
    if (kind == "iid_uniform") check_keys(v, {"kind", "half_width"}, where);
    if (kind == "iid_atoms") check_keys(v, {"kind", "atoms"}, where);
    if (kind == "ar1") {
        check_keys(v, {"kind", "phi", "innovation", "initial"}, where);
        if (!v.contains("phi") || !v.contains("innovation")) throw ConfigError(where + ": ar1 needs phi and innovation");
        validate_process(v["innovation"], where + ".innovation");
        const std::string inner = v["innovation"]["kind"].get<std::string>();
        if (inner.rfind("iid_", 0) != 0) throw ConfigError(where + ".innovation must be an iid process");
    }
    if (kind == "sign_coupled") {
        check_keys(v, {"kind", "w"}, where);
        if (!v.contains("w")) throw ConfigError(where + ": sign_coupled needs w");
    }
    if (kind == "tracking_residual") check_keys(v, {"kind"}, where);
    if (kind == "box_adversarial") check_keys(v, {"kind", "radius"}, where);
}

IidZeroMean build_iid(const json& v, std::size_t n, const std::string& where) {
    const std::string kind = v["kind"].get<std::string>();
    if (kind == "iid_gaussian") {
        return IidZeroMean::gaussian(v.contains("W") ? matrix(v["W"], where + ".W") : Mat::identity(n));
    }
    if (kind == "iid_rademacher") return IidZeroMean::rademacher(n, v.contains("scale") ? number(v["scale"], where) : 1.0);
    if (kind == "iid_uniform") {
        return IidZeroMean::uniform(n, v.contains("half_width") ? number(v["half_width"], where) : 1.0);
    }
    if (kind == "iid_atoms") {
        if (!v.contains("atoms") || !v["atoms"].is_array()) throw ConfigError(where + ".atoms must be an array");
        std::vector<Atom> atoms;
        for (const json& a : v["atoms"]) {
            check_keys(a, {"value", "p"}, where + ".atoms[]");
            if (!a.contains("value") || !a.contains("p")) throw ConfigError(where + ".atoms[] needs value and p");
            atoms.push_back({vector(a["value"], where + ".atoms[].value"), number(a["p"], where + ".atoms[].p")});
        }
        return IidZeroMean::atoms(std::move(atoms));
    }
    throw ConfigError(fmt::format("{} is not an iid process", where));
}

const std::set<std::string> kPolicies = {"classic", "mpc", "mpc_receding", "optimal_stochastic", "offline", "example2"};

}  // namespace

ExperimentConfig parse_config(const std::string& content) {
    json root;
    try {
        root = json::parse(content);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("malformed JSON: {}", e.what()));
    }
    check_keys(root, {"system", "process", "policy", "k", "terminal", "k_values", "T", "trials", "seed", "out",
                      "offline_row", "workers", "tracking", "adversarial"},
               "config");
    ExperimentConfig c;
    if (!root.contains("system")) throw ConfigError("config.system is required");
    parse_system(c, root["system"]);

    if (root.contains("process")) {
        validate_process(root["process"], "process");
        c.process = root["process"];
    } else {
        c.process = c.tracking_preset ? json{{"kind", "tracking_residual"}} : json{{"kind", "iid_gaussian"}};
    }
    if (c.process["kind"] == "tracking_residual" && !c.tracking_preset) {
        throw ConfigError("process kind tracking_residual needs the double_integrator_tracking preset");
    }
    if (root.contains("policy")) {
        c.policy = text(root["policy"], "policy");
        if (!kPolicies.contains(c.policy)) throw ConfigError(fmt::format("unknown policy '{}'", c.policy));
    }
    if (root.contains("k")) c.k = count(root["k"], "k");
    if (root.contains("terminal")) {
        c.terminal = text(root["terminal"], "terminal");
        if (c.terminal != "riccati" && c.terminal != "zero" && c.terminal != "qf" && c.terminal != "riccati_then_qf") {
            throw ConfigError(
                fmt::format("terminal must be riccati, zero, qf or riccati_then_qf, got '{}'", c.terminal));
        }
    }
    // The tracking preset keeps Qf = Q, so its MPC switches to Qf once the
    // window reaches the end of the horizon.
    if (c.tracking_preset) {
        if (!root.contains("policy")) c.policy = "mpc_receding";
        if (!root.contains("terminal")) c.terminal = "riccati_then_qf";
    }
    if (root.contains("k_values")) {
        if (!root["k_values"].is_array() || root["k_values"].empty()) throw ConfigError("k_values must be a non-empty array");
        for (const json& k : root["k_values"]) c.k_values.push_back(count(k, "k_values[]"));
    }
    if (root.contains("T")) c.horizon = count(root["T"], "T");
    if (c.horizon == 0) throw ConfigError("T must be positive");
    if (root.contains("trials")) c.trials = count(root["trials"], "trials");
    if (c.trials == 0) throw ConfigError("trials must be positive");
    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned()) throw ConfigError("seed must be an unsigned integer");
        c.seed = root["seed"].get<std::uint64_t>();
    }
    if (root.contains("out")) c.out = text(root["out"], "out");
    if (root.contains("offline_row")) {
        if (!root["offline_row"].is_boolean()) throw ConfigError("offline_row must be true or false");
        c.offline_row = root["offline_row"].get<bool>();
    }
    if (root.contains("workers")) c.workers = count(root["workers"], "workers");
    if (root.contains("tracking")) {
        if (!c.tracking_preset) throw ConfigError("tracking settings need the double_integrator_tracking preset");
        const json& t = root["tracking"];
        check_keys(t, {"amplitude", "rate", "noise_half_width"}, "tracking");
        if (t.contains("amplitude")) c.tracking.amplitude = number(t["amplitude"], "tracking.amplitude");
        if (t.contains("rate")) c.tracking.rate = number(t["rate"], "tracking.rate");
        if (t.contains("noise_half_width")) {
            c.tracking.noise_half_width = number(t["noise_half_width"], "tracking.noise_half_width");
            if (c.tracking.noise_half_width < 0) throw ConfigError("tracking.noise_half_width must be non-negative");
        }
    }
    if (root.contains("adversarial")) {
        const json& a = root["adversarial"];
        check_keys(a, {"radius", "T", "half_width", "spacing", "refine_tolerance", "dp_steps"}, "adversarial");
        AdversarialSpec& s = c.adversarial;
        if (a.contains("radius")) s.radius = number(a["radius"], "adversarial.radius");
        if (a.contains("T")) s.grid_horizon = count(a["T"], "adversarial.T");
        if (a.contains("half_width")) s.grid.half_width = number(a["half_width"], "adversarial.half_width");
        if (a.contains("spacing")) s.grid.spacing = number(a["spacing"], "adversarial.spacing");
        if (a.contains("refine_tolerance")) s.grid.refine_tolerance = number(a["refine_tolerance"], "adversarial.refine_tolerance");
        if (a.contains("dp_steps")) s.dp_steps = count(a["dp_steps"], "adversarial.dp_steps");
        if (s.radius < 0 || s.grid.half_width <= 0 || s.grid.spacing <= 0 || s.grid_horizon < 2) {
            throw ConfigError("adversarial needs radius >= 0, half_width > 0, spacing > 0 and T >= 2");
        }
    }

    // Shape and definiteness problems are configuration errors, so build
    // everything once here. A non-converging DARE is left to the commands.
    try {
        const LqrSystem probe(c.A, c.B, c.Q, c.R, c.qf.value_or(c.Q), c.x0, c.horizon);
        (void)c.build_process(probe);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const NotPositiveDefinite& e) {
        throw ConfigError(e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

LqrSystem ExperimentConfig::build_system() const {
    if (qf) return {A, B, Q, R, *qf, x0, horizon};
    const RiccatiSolution sol = solve_dare(A, B, Q, R);
    return {A, B, Q, R, sol.P, x0, horizon};
}

ProcessPtr ExperimentConfig::build_process(const LqrSystem& system) const {
    const std::size_t n = system.state_dim();
    const std::string kind = process["kind"].get<std::string>();
    ProcessPtr p;
    if (kind.rfind("iid_", 0) == 0) {
        p = std::make_shared<IidZeroMean>(build_iid(process, n, "process"));
    } else if (kind == "ar1") {
        std::optional<Mat> initial;
        if (process.contains("initial")) initial = vector(process["initial"], "process.initial");
        p = std::make_shared<Ar1Process>(matrix(process["phi"], "process.phi"),
                                         build_iid(process["innovation"], n, "process.innovation"), initial);
    } else if (kind == "sign_coupled") {
        p = std::make_shared<SignCoupled>(vector(process["w"], "process.w"));
    } else if (kind == "tracking_residual") {
        const TrackingProblem problem = tracking_problem();
        p = std::make_shared<TrackingResidual>(reduce_tracking(problem).residual);
    } else if (kind == "box_adversarial") {
        p = std::make_shared<BoxAdversarial>(n, process.contains("radius") ? number(process["radius"], "process.radius") : 1.0);
    } else {
        throw ConfigError(fmt::format("unknown process kind '{}'", kind));
    }
    if (p->dim() != n) throw ConfigError(fmt::format("process has dimension {}, system state has {}", p->dim(), n));
    return p;
}

PolicyPtr ExperimentConfig::build_policy(const std::string& kind, std::size_t k_pred, const LqrSystem& system,
                                         const RiccatiSolution& sol, const ProcessPtr& proc) const {
    if (kind == "classic") return classic_lqr(sol);
    if (kind == "mpc") return mpc_closed_form(sol, k_pred);
    if (kind == "mpc_receding") {
        const std::size_t n = system.state_dim();
        if (terminal == "riccati_then_qf") return mpc_receding(system, k_pred, sol.P, system.Qf());
        const Mat term = terminal == "riccati" ? sol.P : terminal == "zero" ? Mat::zeros(n, n) : system.Qf();
        return mpc_receding(system, k_pred, term);
    }
    if (kind == "optimal_stochastic") return optimal_stochastic(sol, proc, k_pred);
    if (kind == "offline") return offline_policy(system);
    if (kind == "example2") return example2_policy();
    throw ConfigError(fmt::format("unknown policy '{}'", kind));
}

TrackingProblem ExperimentConfig::tracking_problem() const {
    if (!tracking_preset) throw ConfigError("tracking needs the double_integrator_tracking preset");
    std::vector<Mat> desired;
    desired.reserve(horizon + 1);
    for (std::size_t t = 0; t <= horizon; ++t) {
        const double s = std::sin(tracking.rate * static_cast<double>(t));
        const double co = std::cos(tracking.rate * static_cast<double>(t));
        desired.push_back(Mat::column({tracking.amplitude * s * co, tracking.amplitude * s, 0.0, 0.0}));
    }
    Mat start = desired.front();
    return {A, B, Q, R, std::move(desired), std::move(start), IidZeroMean::uniform(4, tracking.noise_half_width)};
}

}  // namespace predlqr::cli
