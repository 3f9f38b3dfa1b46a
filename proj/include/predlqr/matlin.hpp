#pragma once

// Small dense row-major matrix kernel. Matrices in this library are tiny
// (n <= 8), so everything is value-semantic and allocation is not a concern.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace predlqr {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NotPositiveDefinite : public std::runtime_error {
public:
    NotPositiveDefinite(std::size_t pivot, double value);
    [[nodiscard]] std::size_t pivot() const noexcept { return pivot_; }

private:
    std::size_t pivot_;
};

class Mat {
public:
    Mat(std::size_t rows, std::size_t cols);  // zero-filled
    Mat(std::size_t rows, std::size_t cols, std::vector<double> data);
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    static Mat zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
    static Mat identity(std::size_t n);
    static Mat diag(std::span<const double> values);
    static Mat diag(std::initializer_list<double> values);
    static Mat column(std::span<const double> values);
    static Mat column(std::initializer_list<double> values);
    static Mat scalar(double value) { return {1, 1, {value}}; }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool is_square() const noexcept { return rows_ == cols_; }
    [[nodiscard]] std::string shape() const;

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    // Flat access; convenient for column vectors.
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    [[nodiscard]] Mat transpose() const;
    [[nodiscard]] double trace() const;
    [[nodiscard]] double frobenius_norm() const;
    [[nodiscard]] double max_abs() const;
    [[nodiscard]] bool all_finite() const;
    [[nodiscard]] Mat symmetrized() const;
    [[nodiscard]] double asymmetry() const;  // max |m(i,j) - m(j,i)|
    [[nodiscard]] Mat col(std::size_t c) const;

    Mat& operator+=(const Mat& other);
    Mat& operator-=(const Mat& other);
    Mat& operator*=(double s);

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

Mat operator+(Mat a, const Mat& b);
Mat operator-(Mat a, const Mat& b);
Mat operator-(Mat a);
Mat operator*(Mat a, double s);
Mat operator*(double s, Mat a);
Mat operator*(const Mat& a, const Mat& b);

Mat matmul(const Mat& a, const Mat& b);

// x' M y for column vectors x, y.
double quad_form(const Mat& x, const Mat& m, const Mat& y);
double quad_form(const Mat& x, const Mat& m);
double dot(const Mat& x, const Mat& y);
double norm2(const Mat& x);  // Euclidean norm of the flattened entries

/// Solves m * X = rhs for symmetric positive definite m by Cholesky
/// factorization. Symmetry is checked to 1e-10 (scaled by the largest entry);
/// a non-positive pivot raises NotPositiveDefinite naming the pivot index.
Mat solve_spd(const Mat& m, const Mat& rhs);

/// Cholesky factor L with m = L L'. Same checks as solve_spd.
Mat cholesky(const Mat& m);

/// Spectral radius. Power iteration from three fixed pseudo-random starts;
/// if the Rayleigh quotient does not settle (complex or sign-paired dominant
/// eigenvalues, slow separation) the eigenvalues are computed by shifted QR
/// on the Hessenberg form with deflation.
double spectral_radius(const Mat& m);

/// All eigenvalue magnitudes via Hessenberg QR, unsorted.
std::vector<double> eigenvalue_magnitudes(const Mat& m);

/// Largest singular value, sqrt(rho(m' m)).
double spectral_norm(const Mat& m);

Mat power(const Mat& m, std::size_t exponent);

}  // namespace predlqr
