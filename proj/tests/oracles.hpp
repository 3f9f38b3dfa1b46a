#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's numerical kernels; matrices are plain nested vectors so a bug in
// Mat cannot hide itself.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "predlqr/matlin.hpp"
#include "predlqr/system.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline const double kGoldenP = (1.0 + std::sqrt(5.0)) / 2.0;
inline const double kGoldenF = (3.0 - std::sqrt(5.0)) / 2.0;

inline Dense to_dense(const predlqr::Mat& m) {
    Dense d(m.rows(), Vec(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
    return d;
}

inline predlqr::Mat from_dense(const Dense& d) {
    predlqr::Mat m(d.size(), d.empty() ? 0 : d[0].size());
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d[i].size(); ++j) m(i, j) = d[i][j];
    return m;
}

inline Vec to_vec(const predlqr::Mat& column) { return {column.data().begin(), column.data().end()}; }

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, Vec(c, 0.0)); }

inline Dense eye(std::size_t n) {
    Dense d = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) d[i][i] = 1.0;
    return d;
}

inline Dense naive_matmul(const Dense& a, const Dense& b) {
    const std::size_t n = a.size(), m = b.size(), p = b[0].size();
    Dense c = zeros(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += a[i][k] * b[k][j];
            c[i][j] = s;
        }
    return c;
}

inline Dense transpose(const Dense& a) {
    Dense t = zeros(a[0].size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
    return t;
}

inline Dense add(Dense a, const Dense& b, double scale = 1.0) {
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += scale * b[i][j];
    return a;
}

inline Vec matvec(const Dense& a, const Vec& x) {
    Vec y(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
    return y;
}

inline double dotv(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double quad(const Vec& x, const Dense& m) { return dotv(x, matvec(m, x)); }

// Gaussian elimination with partial pivoting; columns of rhs solved together.
inline Dense gauss_solve(Dense a, Dense rhs) {
    const std::size_t n = a.size();
    const std::size_t m = rhs[0].size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-300) throw std::runtime_error("singular system in oracle");
        std::swap(a[piv], a[col]);
        std::swap(rhs[piv], rhs[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            for (std::size_t c = 0; c < m; ++c) rhs[r][c] -= f * rhs[col][c];
        }
    }
    Dense x = zeros(n, m);
    for (std::size_t c = 0; c < m; ++c)
        for (std::size_t r = n; r-- > 0;) {
            double s = rhs[r][c];
            for (std::size_t j = r + 1; j < n; ++j) s -= a[r][j] * x[j][c];
            x[r][c] = s / a[r][r];
        }
    return x;
}

inline Vec gauss_solve(const Dense& a, const Vec& b) {
    Dense rhs(b.size(), Vec(1));
    for (std::size_t i = 0; i < b.size(); ++i) rhs[i][0] = b[i];
    const Dense x = gauss_solve(a, rhs);
    Vec out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = x[i][0];
    return out;
}

inline Dense inverse(const Dense& a) { return gauss_solve(a, eye(a.size())); }

// Largest eigenvalue of the symmetric 2x2 [[a, b], [b, c]] from the
// characteristic polynomial.
inline double sym2_max_eigenvalue(double a, double b, double c) {
    const double tr = a + c;
    const double det = a * c - b * b;
    return 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
}

inline predlqr::Mat random_mat(std::mt19937_64& gen, std::size_t r, std::size_t c, double lo = -1.0,
                               double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    predlqr::Mat m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = dist(gen);
    return m;
}

// G'G + shift I.
inline predlqr::Mat random_spd(std::mt19937_64& gen, std::size_t n, double shift = 1.0) {
    const Dense g = to_dense(random_mat(gen, n, n));
    Dense m = naive_matmul(transpose(g), g);
    for (std::size_t i = 0; i < n; ++i) m[i][i] += shift;
    return from_dense(m);
}

// Q + A'PA - A'PB (R + B'PB)^{-1} B'PA with an explicit inverse.
inline Dense riccati_map(const Dense& a, const Dense& b, const Dense& q, const Dense& r, const Dense& p) {
    const Dense at = transpose(a), bt = transpose(b);
    const Dense pa = naive_matmul(p, a);
    const Dense bpa = naive_matmul(bt, pa);
    const Dense s = add(r, naive_matmul(bt, naive_matmul(p, b)));
    const Dense gain = naive_matmul(inverse(s), bpa);
    Dense out = add(q, naive_matmul(at, pa));
    out = add(out, naive_matmul(transpose(bpa), gain), -1.0);
    // Exact arithmetic keeps P symmetric; in floating point the skew part is
    // not damped by the closed loop, so drop it each step.
    Dense sym = add(out, transpose(out));
    for (auto& row : sym)
        for (double& v : row) v *= 0.5;
    return sym;
}

inline Dense dare_fixed_point(const Dense& a, const Dense& b, const Dense& q, const Dense& r,
                              std::size_t iterations) {
    Dense p = q;
    for (std::size_t i = 0; i < iterations; ++i) p = riccati_map(a, b, q, r, p);
    return p;
}

// Fibonacci with f(1) = f(2) = 1.
inline double fib(std::size_t n) {
    double a = 1.0, b = 1.0;
    for (std::size_t i = 2; i < n; ++i) {
        const double c = a + b;
        a = b;
        b = c;
    }
    return n <= 2 ? 1.0 : b;
}

// States of x_{t+1} = A x_t + B u_t + w_t.
inline std::vector<Vec> resimulate(const Dense& a, const Dense& b, Vec x0, const std::vector<Vec>& controls,
                                   const std::vector<Vec>& disturbances) {
    std::vector<Vec> xs{x0};
    for (std::size_t t = 0; t < controls.size(); ++t) {
        Vec next = matvec(a, xs.back());
        const Vec bu = matvec(b, controls[t]);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += bu[i] + disturbances[t][i];
        xs.push_back(next);
    }
    return xs;
}

// Term-by-term cost accumulation.
inline double accumulate_cost(const Dense& q, const Dense& r, const Dense& qf, const std::vector<Vec>& states,
                              const std::vector<Vec>& controls) {
    double j = 0.0;
    for (std::size_t t = 0; t < controls.size(); ++t) j += quad(states[t], q) + quad(controls[t], r);
    return j + quad(states.back(), qf);
}

// Jointly optimal controls for a finite family of weighted disturbance paths
// where the control at step t may depend only on info(t, path). Each distinct
// information key gets one decision vector; the expected cost is a convex
// quadratic in all decisions, solved from its normal equations. One path with
// a single key per step is the plain stacked least-squares problem.
struct TreeQpResult {
    double value = 0.0;
    std::map<std::pair<std::size_t, Vec>, Vec> controls;  // (t, info) -> u_t
};

template <class InfoFn>
TreeQpResult tree_qp(const predlqr::LqrSystem& system, const std::vector<std::pair<std::vector<Vec>, double>>& paths,
                     InfoFn info) {
    const Dense a = to_dense(system.A()), b = to_dense(system.B());
    const Dense q = to_dense(system.Q()), r = to_dense(system.R()), qf = to_dense(system.Qf());
    const Vec x0 = to_vec(system.x0());
    const std::size_t n = a.size(), d = b[0].size(), horizon = system.horizon();

    std::map<std::pair<std::size_t, Vec>, std::size_t> index;
    for (const auto& [path, p] : paths)
        for (std::size_t t = 0; t < horizon; ++t) index.emplace(std::make_pair(t, info(t, path)), index.size());
    const std::size_t nv = index.size() * d;

    Dense hess = zeros(nv, nv);
    Vec grad(nv, 0.0);
    double constant = 0.0;
    for (const auto& [path, prob] : paths) {
        std::vector<std::size_t> slot(horizon);
        for (std::size_t t = 0; t < horizon; ++t) slot[t] = index.at({t, info(t, path)}) * d;
        // x_t = G_t U + c_t
        Dense g = zeros(n, nv);
        Vec c = x0;
        auto charge = [&](const Dense& weight) {
            const Dense wg = naive_matmul(weight, g);
            const Dense gtwg = naive_matmul(transpose(g), wg);
            hess = add(hess, gtwg, prob);
            const Vec wc = matvec(weight, c);
            const Vec gtwc = matvec(transpose(g), wc);
            for (std::size_t i = 0; i < nv; ++i) grad[i] += prob * gtwc[i];
            constant += prob * dotv(c, wc);
        };
        for (std::size_t t = 0; t < horizon; ++t) {
            charge(q);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) hess[slot[t] + i][slot[t] + j] += prob * r[i][j];
            Dense next = naive_matmul(a, g);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) next[i][slot[t] + j] += b[i][j];
            g = next;
            Vec cn = matvec(a, c);
            for (std::size_t i = 0; i < n; ++i) cn[i] += path[t][i];
            c = cn;
        }
        charge(qf);
    }
    Vec neg(nv);
    for (std::size_t i = 0; i < nv; ++i) neg[i] = -grad[i];
    const Vec u = gauss_solve(hess, neg);

    TreeQpResult out;
    out.value = constant + dotv(grad, u);
    for (const auto& [key, idx] : index) out.controls[key] = Vec(u.begin() + idx * d, u.begin() + (idx + 1) * d);
    return out;
}

inline double stacked_optimal_cost(const predlqr::LqrSystem& system, const std::vector<Vec>& path) {
    return tree_qp(system, {{path, 1.0}}, [](std::size_t t, const std::vector<Vec>&) { return Vec{double(t)}; })
        .value;
}

// Information available with k predictions: w_0..w_{min(t+k, T)-1}, flattened.
inline auto prediction_info(std::size_t k, std::size_t horizon) {
    return [k, horizon](std::size_t t, const std::vector<Vec>& path) {
        Vec key;
        for (std::size_t s = 0; s < std::min(t + k, horizon); ++s) key.insert(key.end(), path[s].begin(), path[s].end());
        return key;
    };
}

// Scalar i.i.d. regret of MPC_k against the offline optimum with Qf = P:
// sum_{i=k}^{T-1} (T - i) F^{2i} P^2 H W.
inline double scalar_regret(double f, double p, double h, double w, std::size_t k, std::size_t horizon) {
    double s = 0.0;
    for (std::size_t i = k; i < horizon; ++i) s += double(horizon - i) * std::pow(f, 2.0 * double(i)) * p * p * h * w;
    return s;
}

// Expected optimal cost with k predictions for scalar i.i.d. noise and Qf = P
// by the telescoping recursion
// E[q_t] = Tr((P - sum_{i < min(k, T-t)} P F^i H F^i P) W) + E[q_{t+1}], E[q_T] = 0.
inline double telescoped_expected_cost(double f, double p, double h, double w, double x0, std::size_t k,
                                       std::size_t horizon) {
    double eq = 0.0;
    for (std::size_t t = horizon; t-- > 0;) {
        double reduction = 0.0;
        for (std::size_t i = 0; i < std::min(k, horizon - t); ++i) reduction += p * std::pow(f, 2.0 * double(i)) * h * p;
        eq += (p - reduction) * w;
    }
    return x0 * p * x0 + eq;
}

}  // namespace oracle
