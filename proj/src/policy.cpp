#include "predlqr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>

#include <fmt/format.h>

namespace predlqr {

namespace {

void require_column(const Mat& x, std::size_t n, const char* what) {
    if (x.rows() != n || x.cols() != 1) throw DimensionError(fmt::format("{} has shape {}, expected {}x1", what, x.shape(), n));
}

// Observed disturbances w_0..w_{t+m-1} as one span. rollout hands out
// adjacent subspans of a single path, so the copy is normally avoided.
std::span<const Mat> observed_prefix(const Observation& obs, std::vector<Mat>& scratch) {
    if (obs.window.empty()) return obs.history;
    if (obs.history.empty()) return obs.window;
    if (obs.history.data() + obs.history.size() == obs.window.data()) {
        return {obs.history.data(), obs.history.size() + obs.window.size()};
    }
    scratch.assign(obs.history.begin(), obs.history.end());
    scratch.insert(scratch.end(), obs.window.begin(), obs.window.end());
    return scratch;
}

class ClassicLqr final : public Policy {
public:
    explicit ClassicLqr(Mat k) : k_(std::move(k)) {}
    std::size_t predictions() const override { return 0; }
    std::string name() const override { return "classic"; }
    Mat act(const Observation& obs) const override {
        require_column(obs.x(), k_.cols(), "state");
        return -(k_ * obs.x());
    }

private:
    Mat k_;
};

// u = -K x - sum_i G_i w_{t+i} with G_i = S^{-1}B'(F')^i P.
class MpcClosedForm final : public Policy {
public:
    MpcClosedForm(const RiccatiSolution& sol, std::size_t k) : k_(k), gain_(sol.K) {
        gains_.reserve(k);
        const Mat ft = sol.F.transpose();
        Mat m = sol.P;
        for (std::size_t i = 0; i < k; ++i) {
            gains_.push_back(sol.SinvBt * m);
            m = ft * m;
        }
    }
    std::size_t predictions() const override { return k_; }
    std::string name() const override { return "mpc"; }
    Mat act(const Observation& obs) const override {
        if (obs.window.size() > k_) {
            throw ContractViolation(fmt::format("mpc with k={} got a window of {}", k_, obs.window.size()));
        }
        require_column(obs.x(), gain_.cols(), "state");
        Mat u = gain_ * obs.x();
        for (std::size_t i = 0; i < obs.window.size(); ++i) u += gains_[i] * obs.window[i];
        return -u;
    }

private:
    std::size_t k_;
    Mat gain_;
    std::vector<Mat> gains_;
};

// Backward induction over the k-step problem. Stage j (distance j from the
// terminal) uses P^{(j-1)}, the Riccati iterate j-1 steps from the terminal
// weight. A second stage table built from `end_terminal` is used once the
// window reaches the last step of the horizon.
class MpcReceding final : public Policy {
public:
    MpcReceding(const LqrSystem& system, std::size_t k, const Mat& terminal, const std::optional<Mat>& end_terminal)
        : k_(k), a_(system.A()), stages_(build(system, k, terminal)) {
        if (end_terminal) end_stages_ = build(system, k, *end_terminal);
    }
    std::size_t predictions() const override { return k_; }
    std::string name() const override { return "mpc_receding"; }
    Mat act(const Observation& obs) const override {
        const std::size_t m = obs.window.size();
        if (m > k_) throw ContractViolation(fmt::format("mpc_receding with k={} got a window of {}", k_, m));
        require_column(obs.x(), a_.rows(), "state");
        const bool at_end = !end_stages_.empty() && m > 0 && obs.t + m == obs.horizon;
        const std::vector<Stage>& stages = at_end ? end_stages_ : stages_;
        const std::size_t len = std::max<std::size_t>(m, 1);
        // v_{i+1} for the current stage, built from the far end of the window.
        Mat v = Mat::zeros(a_.rows(), 1);
        for (std::size_t i = len; i-- > 1;) {
            const Stage& st = stages[len - i - 1];
            v = st.g * (2.0 * (st.p * obs.window[i]) + v);
        }
        const Stage& first = stages[len - 1];
        Mat b = v;
        if (m > 0) b += 2.0 * (first.p * obs.window[0]);
        return -(first.sinv_bt * (first.p * (a_ * obs.x()) + 0.5 * b));
    }

private:
    struct Stage {
        Mat p;        // P_{i+1}
        Mat sinv_bt;  // (R + B'P_{i+1}B)^{-1} B'
        Mat g;        // A' - A'P_{i+1}H_i
    };

    static std::vector<Stage> build(const LqrSystem& system, std::size_t k, const Mat& terminal) {
        const std::size_t n = system.state_dim();
        if (terminal.rows() != n || terminal.cols() != n) throw DimensionError("terminal weight has shape " + terminal.shape());
        const std::size_t count = std::max<std::size_t>(k, 1);
        const Mat& a = system.A();
        const Mat& b = system.B();
        const Mat bt = b.transpose();
        const Mat at = a.transpose();
        std::vector<Stage> stages;
        stages.reserve(count);
        Mat p = terminal.symmetrized();
        for (std::size_t j = 1; j <= count; ++j) {
            Mat sinv_bt = solve_spd(system.R() + bt * p * b, bt);
            Mat g = at * (Mat::identity(n) - p * b * sinv_bt);
            stages.push_back({p, std::move(sinv_bt), std::move(g)});
            if (j < count) p = riccati_step(a, b, system.Q(), system.R(), p);
        }
        return stages;
    }

    std::size_t k_;
    Mat a_;
    std::vector<Stage> stages_;
    std::vector<Stage> end_stages_;
};

class OptimalStochastic final : public Policy {
public:
    OptimalStochastic(const RiccatiSolution& sol, ProcessPtr process, std::size_t k)
        : k_(k), gain_(sol.K), process_(std::move(process)), p_norm_(sol.P.frobenius_norm()) {
        if (!process_) throw std::invalid_argument("optimal_stochastic needs a process");
        if (!process_->is_stochastic()) {
            throw UnsupportedOperation("optimal_stochastic needs conditional means; " + process_->kind() + " has none");
        }
        if (process_->dim() != sol.state_dim()) throw DimensionError("process dimension does not match the system");
        // G_i and ||F^i|| until the powers are negligible.
        const Mat ft = sol.F.transpose();
        Mat m = sol.P;
        Mat fi = Mat::identity(sol.state_dim());
        for (std::size_t i = 0; i < 100'000; ++i) {
            const double fnorm = fi.frobenius_norm();
            gains_.push_back(sol.SinvBt * m);
            f_norms_.push_back(fnorm);
            if (i >= k_ && fnorm * std::max(1.0, p_norm_) < 1e-18) break;
            m = ft * m;
            fi = sol.F * fi;
        }
    }
    std::size_t predictions() const override { return k_; }
    std::string name() const override { return "optimal_stochastic"; }
    Mat act(const Observation& obs) const override {
        const std::size_t m = obs.window.size();
        if (m > k_) throw ContractViolation(fmt::format("optimal_stochastic with k={} got a window of {}", k_, m));
        require_column(obs.x(), gain_.cols(), "state");
        Mat u = gain_ * obs.x();
        for (std::size_t i = 0; i < m && i < gains_.size(); ++i) u += gains_[i] * obs.window[i];

        std::vector<Mat> scratch;
        const std::span<const Mat> prefix = observed_prefix(obs, scratch);
        const std::size_t remaining = obs.remaining();
        double mu_max = 1.0;
        for (std::size_t i = m; i < remaining && i < gains_.size(); ++i) {
            if (f_norms_[i] * p_norm_ * mu_max < 1e-12) break;
            const Mat mu = process_->conditional_mean(obs.t + i, prefix);
            mu_max = std::max(mu_max, mu.max_abs());
            u += gains_[i] * mu;
        }
        return -u;
    }

private:
    std::size_t k_;
    Mat gain_;
    ProcessPtr process_;
    double p_norm_;
    std::vector<Mat> gains_;
    std::vector<double> f_norms_;
};

// Per-step matrices of the finite-horizon DP shared by the offline policies.
struct OfflineStages {
    std::vector<Mat> sinv_bt;  // (R + B'P_{t+1}B)^{-1} B'
    std::vector<Mat> g;        // A' - A'P_{t+1}H_t
};

OfflineStages offline_stages(const LqrSystem& system, const DpTable& table) {
    OfflineStages st;
    const std::size_t horizon = table.horizon();
    const Mat bt = system.B().transpose();
    const Mat at = system.A().transpose();
    const Mat id = Mat::identity(system.state_dim());
    st.sinv_bt.reserve(horizon);
    st.g.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
        const Mat& p = table.P[t + 1];
        st.sinv_bt.push_back(solve_spd(system.R() + bt * p * system.B(), bt));
        st.g.push_back(at * (id - p * table.H[t]));
    }
    return st;
}

class OfflinePolicy final : public Policy {
public:
    explicit OfflinePolicy(const LqrSystem& system)
        : a_(system.A()), table_(dp_table(system, system.Qf())), stages_(offline_stages(system, table_)) {}
    std::size_t predictions() const override { return kAllPredictions; }
    std::string name() const override { return "offline"; }
    Mat act(const Observation& obs) const override {
        const std::size_t horizon = table_.horizon();
        if (obs.horizon != horizon) throw ContractViolation("offline policy built for a different horizon");
        if (obs.window.size() != horizon - obs.t) {
            throw ContractViolation(fmt::format("offline policy needs all {} remaining disturbances, got {}",
                                                horizon - obs.t, obs.window.size()));
        }
        require_column(obs.x(), a_.rows(), "state");
        Mat v = Mat::zeros(a_.rows(), 1);
        for (std::size_t s = horizon; s-- > obs.t + 1;) {
            v = stages_.g[s] * (v + 2.0 * (table_.P[s + 1] * obs.window[s - obs.t]));
        }
        const Mat& p = table_.P[obs.t + 1];
        return -(stages_.sinv_bt[obs.t] * (p * (a_ * obs.x() + obs.window[0]) + 0.5 * v));
    }

private:
    Mat a_;
    DpTable table_;
    OfflineStages stages_;
};

class OfflineBound final : public Policy {
public:
    OfflineBound(const LqrSystem& system, const DpTable& table, std::span<const Mat> path)
        : a_(system.A()), table_(table), stages_(offline_stages(system, table)), path_(path.begin(), path.end()) {}
    std::size_t predictions() const override { return kAllPredictions; }
    std::string name() const override { return "offline"; }
    Mat act(const Observation& obs) const override {
        if (obs.horizon != table_.horizon() || obs.window.empty()) {
            throw ContractViolation("offline policy used outside the horizon it was solved for");
        }
        if (obs.window[0] != path_[obs.t]) throw ContractViolation("offline policy used on a different disturbance path");
        const Mat& p = table_.P[obs.t + 1];
        return -(stages_.sinv_bt[obs.t] * (p * (a_ * obs.x() + obs.window[0]) + 0.5 * table_.v[obs.t + 1]));
    }

private:
    Mat a_;
    DpTable table_;
    OfflineStages stages_;
    std::vector<Mat> path_;
};

const double kGoldenF = (3.0 - std::sqrt(5.0)) / 2.0;

class Example2Policy final : public Policy {
public:
    std::size_t predictions() const override { return 1; }
    std::string name() const override { return "example2"; }
    bool is_affine() const override { return false; }
    Mat act(const Observation& obs) const override {
        const Mat& x = obs.x();
        if (x.rows() != 1 || x.cols() != 1) throw DimensionError("example2 policy is scalar, got state " + x.shape());
        double w = 0.0;
        if (!obs.window.empty()) {
            if (obs.window[0].size() != 1) throw DimensionError("example2 policy is scalar");
            w = obs.window[0][0];
        }
        return Mat::scalar(example2_control(x[0] + w));
    }
};

}  // namespace

double DpTable::value(const Mat& x0) const { return quad_form(x0, P.front()) + dot(v.front(), x0) + q.front(); }

DpTable dp_table(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& terminal, std::size_t horizon) {
    const std::size_t n = a.rows();
    if (terminal.rows() != n || terminal.cols() != n) throw DimensionError("terminal weight has shape " + terminal.shape());
    DpTable table;
    table.P.assign(horizon + 1, terminal);
    table.H.assign(horizon, Mat::zeros(n, n));
    table.v.assign(horizon + 1, Mat::zeros(n, 1));
    table.q.assign(horizon + 1, 0.0);
    const Mat bt = b.transpose();
    for (std::size_t t = horizon; t-- > 0;) {
        const Mat& next = table.P[t + 1];
        table.H[t] = (b * solve_spd(r + bt * next * b, bt)).symmetrized();
        table.P[t] = riccati_step(a, b, q, r, next);
    }
    return table;
}

DpTable dp_table(const LqrSystem& system, const Mat& terminal) {
    return dp_table(system.A(), system.B(), system.Q(), system.R(), terminal, system.horizon());
}

void fill_offline_terms(const LqrSystem& system, DpTable& table, std::span<const Mat> path) {
    const std::size_t horizon = table.horizon();
    if (path.size() != horizon) {
        throw DimensionError(fmt::format("disturbance path has {} steps, horizon is {}", path.size(), horizon));
    }
    const std::size_t n = system.state_dim();
    const Mat at = system.A().transpose();
    const Mat id = Mat::identity(n);
    table.v[horizon] = Mat::zeros(n, 1);
    table.q[horizon] = 0.0;
    for (std::size_t t = horizon; t-- > 0;) {
        const Mat& w = path[t];
        require_column(w, n, "disturbance");
        const Mat& p = table.P[t + 1];
        const Mat& h = table.H[t];
        const Mat& vn = table.v[t + 1];
        const Mat ph = p * h;
        table.v[t] = at * ((id - ph) * (vn + 2.0 * (p * w)));
        table.q[t] = quad_form(w, p - ph * p) + quad_form(w, id - ph, vn) - 0.25 * quad_form(vn, h) + table.q[t + 1];
    }
}

PolicyPtr classic_lqr(const RiccatiSolution& sol) { return std::make_shared<ClassicLqr>(sol.K); }

PolicyPtr mpc_closed_form(const RiccatiSolution& sol, std::size_t k) {
    if (k == kAllPredictions) throw std::invalid_argument("mpc_closed_form needs a finite k; pass the horizon instead");
    return std::make_shared<MpcClosedForm>(sol, k);
}

PolicyPtr mpc_receding(const LqrSystem& system, std::size_t k, const Mat& terminal) {
    if (k == kAllPredictions) throw std::invalid_argument("mpc_receding needs a finite k; pass the horizon instead");
    return std::make_shared<MpcReceding>(system, k, terminal, std::nullopt);
}

PolicyPtr mpc_receding(const LqrSystem& system, std::size_t k, const Mat& terminal, const Mat& end_terminal) {
    if (k == kAllPredictions) throw std::invalid_argument("mpc_receding needs a finite k; pass the horizon instead");
    return std::make_shared<MpcReceding>(system, k, terminal, end_terminal);
}

PolicyPtr mpc_receding(const LqrSystem& system, const RiccatiSolution& sol, std::size_t k) {
    return mpc_receding(system, k, sol.P);
}

PolicyPtr optimal_stochastic(const RiccatiSolution& sol, ProcessPtr process, std::size_t k) {
    return std::make_shared<OptimalStochastic>(sol, std::move(process), k);
}

OfflineSolution offline_optimal(const LqrSystem& system, std::span<const Mat> path) {
    DpTable table = dp_table(system, system.Qf());
    fill_offline_terms(system, table, path);
    const double cost = table.value(system.x0());
    auto policy = std::make_shared<OfflineBound>(system, table, path);
    return {std::move(policy), std::move(table), cost};
}

PolicyPtr offline_policy(const LqrSystem& system) { return std::make_shared<OfflinePolicy>(system); }

double example2_control(double z) {
    if (z > 1.0) return -z + kGoldenF * (z - 1.0);
    if (z < -1.0) return -z + kGoldenF * (z + 1.0);
    return -z;
}

PolicyPtr example2_policy() { return std::make_shared<Example2Policy>(); }

double Example2Dp::g(std::size_t t, double x) const {
    if (t >= a.size()) return 0.0;
    return a[t] * x * x + 2.0 * b[t] * std::abs(x) + c[t];
}

Example2Dp example2_exact_dp(std::size_t horizon) {
    if (horizon == 0) throw std::invalid_argument("example2_exact_dp needs T >= 1");
    Example2Dp dp;
    dp.a.assign(horizon, 0.5);
    dp.b.assign(horizon, 0.5);
    dp.c.assign(horizon, 0.5);
    for (std::size_t t = horizon - 1; t > 0; --t) {
        const double a = dp.a[t];
        const double b = dp.b[t];
        dp.a[t - 1] = (a + 1.0) / (a + 2.0);
        dp.b[t - 1] = (a + b + 1.0) / (a + 2.0);
        dp.c[t - 1] = dp.c[t] + (a + 1.0 + 2.0 * b - b * b) / (a + 2.0);
    }
    return dp;
}

}  // namespace predlqr
