#include "predlqr/matlin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <fmt/format.h>

namespace predlqr {

NotPositiveDefinite::NotPositiveDefinite(std::size_t pivot, double value)
    : std::runtime_error(fmt::format(
          "matrix is not positive definite: pivot {} has value {:.6g}", pivot, value)),
      pivot_(pivot) {}

namespace {

void check_finite(std::span<const double> data) {
    for (double v : data) {
        if (!std::isfinite(v)) throw std::domain_error("matrix entry is not finite");
    }
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape(), b.shape()));
    }
}

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) throw DimensionError("matrix dimensions must be positive");
}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw DimensionError("matrix dimensions must be positive");
    if (data_.size() != rows * cols) {
        throw DimensionError(fmt::format("matrix data has {} entries, expected {}x{}", data_.size(), rows, cols));
    }
    check_finite(data_);
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
    if (rows_ == 0 || cols_ == 0) throw DimensionError("matrix dimensions must be positive");
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
        if (row.size() != cols_) throw DimensionError("ragged matrix literal");
        data_.insert(data_.end(), row.begin(), row.end());
    }
    check_finite(data_);
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::diag(std::span<const double> values) {
    Mat m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    check_finite(m.data());
    return m;
}

Mat Mat::diag(std::initializer_list<double> values) {
    return diag(std::span<const double>(values.begin(), values.size()));
}

Mat Mat::column(std::span<const double> values) {
    return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

Mat Mat::column(std::initializer_list<double> values) {
    return column(std::span<const double>(values.begin(), values.size()));
}

std::string Mat::shape() const { return fmt::format("{}x{}", rows_, cols_); }

Mat Mat::transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double Mat::trace() const {
    if (!is_square()) throw DimensionError("trace of non-square matrix " + shape());
    double s = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) s += (*this)(i, i);
    return s;
}

double Mat::frobenius_norm() const {
    // Scaled by the largest entry so large finite matrices do not overflow.
    const double m = max_abs();
    if (m == 0.0 || !std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : data_) s += (v / m) * (v / m);
    return m * std::sqrt(s);
}

double Mat::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Mat::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Mat Mat::symmetrized() const {
    if (!is_square()) throw DimensionError("symmetrize of non-square matrix " + shape());
    Mat s(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) s(i, j) = 0.5 * ((*this)(i, j) + (*this)(j, i));
    return s;
}

double Mat::asymmetry() const {
    if (!is_square()) throw DimensionError("asymmetry of non-square matrix " + shape());
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = i + 1; j < cols_; ++j) m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
    return m;
}

Mat Mat::col(std::size_t c) const {
    Mat v(rows_, 1);
    for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
    return v;
}

Mat& Mat::operator+=(const Mat& other) {
    require_same_shape(*this, other, "add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Mat& Mat::operator-=(const Mat& other) {
    require_same_shape(*this, other, "subtract");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Mat& Mat::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Mat operator+(Mat a, const Mat& b) { return a += b; }
Mat operator-(Mat a, const Mat& b) { return a -= b; }
Mat operator-(Mat a) { return a *= -1.0; }
Mat operator*(Mat a, double s) { return a *= s; }
Mat operator*(double s, Mat a) { return a *= s; }
Mat operator*(const Mat& a, const Mat& b) { return matmul(a, b); }

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError(fmt::format("matmul: inner dimensions differ ({} times {})", a.shape(), b.shape()));
    }
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

double dot(const Mat& x, const Mat& y) {
    if (x.size() != y.size()) throw DimensionError("dot: size mismatch " + x.shape() + " vs " + y.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(const Mat& x) { return x.frobenius_norm(); }

double quad_form(const Mat& x, const Mat& m, const Mat& y) {
    if (x.cols() != 1 || y.cols() != 1 || m.rows() != x.rows() || m.cols() != y.rows()) {
        throw DimensionError(fmt::format("quad_form: {}' {} {}", x.shape(), m.shape(), y.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) row += m(i, j) * y[j];
        s += x[i] * row;
    }
    return s;
}

double quad_form(const Mat& x, const Mat& m) { return quad_form(x, m, x); }

Mat cholesky(const Mat& m) {
    if (!m.is_square()) throw DimensionError("cholesky of non-square matrix " + m.shape());
    const double scale = std::max(1.0, m.max_abs());
    if (m.asymmetry() > 1e-10 * scale) {
        throw DimensionError(fmt::format("cholesky: matrix is not symmetric (asymmetry {:.3g})", m.asymmetry()));
    }
    const std::size_t n = m.rows();
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) throw NotPositiveDefinite(j, d);
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Mat solve_spd(const Mat& m, const Mat& rhs) {
    if (rhs.rows() != m.rows()) {
        throw DimensionError(fmt::format("solve_spd: lhs {} incompatible with rhs {}", m.shape(), rhs.shape()));
    }
    const Mat l = cholesky(m);
    const std::size_t n = m.rows();
    Mat x = rhs;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
            x(ii, c) = s / l(ii, ii);
        }
    }
    return x;
}

Mat power(const Mat& m, std::size_t exponent) {
    if (!m.is_square()) throw DimensionError("power of non-square matrix " + m.shape());
    Mat result = Mat::identity(m.rows());
    Mat base = m;
    while (exponent > 0) {
        if (exponent & 1U) result = result * base;
        exponent >>= 1U;
        if (exponent > 0) base = base * base;
    }
    return result;
}

namespace {

// Householder reduction to upper Hessenberg form (in place).
void to_hessenberg(Mat& a) {
    const std::size_t n = a.rows();
    if (n < 3) return;
    std::vector<double> v(n);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double alpha = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
        alpha = std::sqrt(alpha);
        if (alpha == 0.0) continue;
        if (a(k + 1, k) > 0) alpha = -alpha;
        std::fill(v.begin(), v.end(), 0.0);
        for (std::size_t i = k + 1; i < n; ++i) v[i] = a(i, k);
        v[k + 1] -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 == 0.0) continue;
        // a <- (I - 2vv'/v'v) a
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
            s *= 2.0 / vnorm2;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
        }
        // a <- a (I - 2vv'/v'v)
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
            s *= 2.0 / vnorm2;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
        }
    }
}

double sign_of(double magnitude, double sign) { return sign >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

// Francis double-shift QR on an upper Hessenberg matrix; returns the
// magnitudes of all eigenvalues. Adapted from the classic EISPACK hqr.
std::vector<double> hessenberg_eigen_magnitudes(Mat a) {
    const int n = static_cast<int>(a.rows());
    std::vector<double> mags(static_cast<std::size_t>(n), 0.0);
    const double eps = std::numeric_limits<double>::epsilon();
    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

    auto at = [&a](int i, int j) -> double& { return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)); };
    auto put = [&mags](int i, double v) { mags[static_cast<std::size_t>(i)] = std::abs(v); };

    int nn = n - 1;
    double t = 0.0;
    double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l > 0; --l) {
                s = std::abs(at(l - 1, l - 1)) + std::abs(at(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(at(l, l - 1)) <= eps * s) {
                    at(l, l - 1) = 0.0;
                    break;
                }
            }
            x = at(nn, nn);
            if (l == nn) {
                put(nn--, x + t);
            } else {
                y = at(nn - 1, nn - 1);
                w = at(nn, nn - 1) * at(nn - 1, nn);
                if (l == nn - 1) {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_of(z, p);
                        put(nn - 1, x + z);
                        put(nn, x + z);
                        if (z != 0.0) put(nn, x - w / z);
                    } else {
                        const double mag = std::hypot(x + p, z);
                        mags[static_cast<std::size_t>(nn)] = mag;
                        mags[static_cast<std::size_t>(nn - 1)] = mag;
                    }
                    nn -= 2;
                } else {
                    if (its == 60) throw std::runtime_error("eigenvalue iteration did not converge");
                    if (its == 10 || its == 20 || its == 40) {
                        t += x;
                        for (int i = 0; i <= nn; ++i) at(i, i) -= x;
                        s = std::abs(at(nn, nn - 1)) + std::abs(at(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m = nn - 2;
                    for (; m >= l; --m) {
                        z = at(m, m);
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / at(m + 1, m) + at(m, m + 1);
                        q = at(m + 1, m + 1) - z - r - s;
                        r = at(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(at(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v = std::abs(p) * (std::abs(at(m - 1, m - 1)) + std::abs(z) + std::abs(at(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    for (int i = m; i < nn - 1; ++i) {
                        at(i + 2, i) = 0.0;
                        if (i != m) at(i + 2, i - 1) = 0.0;
                    }
                    for (int k = m; k < nn; ++k) {
                        if (k != m) {
                            p = at(k, k - 1);
                            q = at(k + 1, k - 1);
                            r = 0.0;
                            if (k + 1 != nn) r = at(k + 2, k - 1);
                            if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
                            if (k == m) {
                                if (l != m) at(k, k - 1) = -at(k, k - 1);
                            } else {
                                at(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for (int j = k; j <= nn; ++j) {
                                p = at(k, j) + q * at(k + 1, j);
                                if (k + 1 != nn) {
                                    p += r * at(k + 2, j);
                                    at(k + 2, j) -= p * z;
                                }
                                at(k + 1, j) -= p * y;
                                at(k, j) -= p * x;
                            }
                            const int mmin = nn < k + 3 ? nn : k + 3;
                            for (int i = l; i <= mmin; ++i) {
                                p = x * at(i, k) + y * at(i, k + 1);
                                if (k + 1 != nn) {
                                    p += z * at(i, k + 2);
                                    at(i, k + 2) -= p * r;
                                }
                                at(i, k + 1) -= p * q;
                                at(i, k) -= p;
                            }
                        }
                    }
                }
            }
        } while (l + 1 < nn);
    }
    return mags;
}

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

}  // namespace

std::vector<double> eigenvalue_magnitudes(const Mat& m) {
    if (!m.is_square()) throw DimensionError("eigenvalues of non-square matrix " + m.shape());
    Mat h = m;
    to_hessenberg(h);
    return hessenberg_eigen_magnitudes(std::move(h));
}

double spectral_radius(const Mat& m) {
    if (!m.is_square()) throw DimensionError("spectral_radius of non-square matrix " + m.shape());
    const std::size_t n = m.rows();
    if (n == 1) return std::abs(m(0, 0));
    const double scale = m.frobenius_norm();
    if (scale == 0.0) return 0.0;

    constexpr int kStarts = 3;
    constexpr int kMaxIterations = 10'000;
    std::uint64_t state = 0x5eed5eedULL;
    double best = 0.0;
    for (int start = 0; start < kStarts; ++start) {
        Mat v(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = static_cast<double>(splitmix(state) >> 11U) * 0x1.0p-53 - 0.5;
        }
        v *= 1.0 / norm2(v);
        bool converged = false;
        double rayleigh = 0.0;
        for (int it = 0; it < kMaxIterations; ++it) {
            Mat mv = m * v;
            const double len = norm2(mv);
            if (len <= 1e-300) {  // m^j v vanished: the start lies in a nilpotent part
                rayleigh = 0.0;
                converged = true;
                break;
            }
            rayleigh = dot(v, mv);
            Mat residual = mv - rayleigh * v;
            if (norm2(residual) <= 1e-12 * scale) {
                converged = true;
                break;
            }
            v = mv * (1.0 / len);
        }
        if (!converged) {
            const auto mags = eigenvalue_magnitudes(m);
            return *std::max_element(mags.begin(), mags.end());
        }
        best = std::max(best, std::abs(rayleigh));
    }
    return best;
}

double spectral_norm(const Mat& m) {
    const Mat gram = m.transpose() * m;
    return std::sqrt(spectral_radius(gram));
}

}  // namespace predlqr
