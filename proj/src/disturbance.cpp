#include "predlqr/disturbance.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "predlqr/random.hpp"

namespace predlqr {

std::vector<Atom> DisturbanceProcess::branches(std::span<const Mat> /*prefix*/) const {
    throw UnsupportedOperation(kind() + " has no finite support to enumerate");
}

namespace {

// Lower-triangular L with m = L L' for symmetric PSD m; zero pivots give zero
// columns.
Mat psd_factor(const Mat& m) {
    if (!m.is_square()) throw DimensionError("covariance must be square, got " + m.shape());
    const double scale = std::max(1.0, m.max_abs());
    if (m.asymmetry() > 1e-10 * scale) throw std::invalid_argument("covariance is not symmetric");
    const std::size_t n = m.rows();
    Mat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d < -1e-10 * scale) throw NotPositiveDefinite(j, d);
        if (d <= 1e-14 * scale) continue;
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

void require_prefix_dims(std::span<const Mat> prefix, std::size_t n) {
    for (const Mat& w : prefix) {
        if (w.rows() != n || w.cols() != 1) throw DimensionError("disturbance prefix entry has shape " + w.shape());
    }
}

std::vector<Atom> shifted(const std::vector<Atom>& atoms, const Mat& offset) {
    std::vector<Atom> out;
    out.reserve(atoms.size());
    for (const Atom& a : atoms) out.push_back({a.value + offset, a.probability});
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// IidZeroMean

IidZeroMean::IidZeroMean(Shape shape, Mat covariance, double scale)
    : shape_(shape), covariance_(std::move(covariance)), factor_(psd_factor(covariance_)), scale_(scale) {}

IidZeroMean IidZeroMean::gaussian(Mat covariance) {
    return {Shape::Gaussian, std::move(covariance), 0.0};
}

IidZeroMean IidZeroMean::rademacher(std::size_t dim, double scale) {
    if (!(scale >= 0.0)) throw std::invalid_argument("rademacher scale must be non-negative");
    return {Shape::Rademacher, Mat::identity(dim) * (scale * scale), scale};
}

IidZeroMean IidZeroMean::uniform(std::size_t dim, double half_width) {
    if (!(half_width >= 0.0)) throw std::invalid_argument("uniform half-width must be non-negative");
    return {Shape::Uniform, Mat::identity(dim) * (half_width * half_width / 3.0), half_width};
}

IidZeroMean IidZeroMean::atoms(std::vector<Atom> atoms) {
    if (atoms.empty()) throw std::invalid_argument("atom list is empty");
    const std::size_t n = atoms.front().value.rows();
    Mat mean(n, 1);
    Mat cov(n, n);
    double total = 0.0;
    for (const Atom& a : atoms) {
        if (a.value.rows() != n || a.value.cols() != 1) throw DimensionError("atom has shape " + a.value.shape());
        if (!(a.probability >= 0.0)) throw std::invalid_argument("atom probability must be non-negative");
        total += a.probability;
        mean += a.value * a.probability;
        cov += (a.value * a.value.transpose()) * a.probability;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument(fmt::format("atom probabilities sum to {:.17g}, not 1", total));
    }
    if (mean.max_abs() > 1e-12 * std::max(1.0, cov.max_abs())) {
        throw std::invalid_argument("atoms do not have zero mean");
    }
    IidZeroMean p(Shape::Atoms, cov.symmetrized(), 0.0);
    p.atoms_ = std::move(atoms);
    return p;
}

std::string IidZeroMean::kind() const {
    switch (shape_) {
        case Shape::Gaussian: return "iid_gaussian";
        case Shape::Rademacher: return "iid_rademacher";
        case Shape::Uniform: return "iid_uniform";
        case Shape::Atoms: return "iid_atoms";
    }
    return "iid";
}

Mat IidZeroMean::sample_step(std::uint64_t seed, std::size_t t) const {
    const std::size_t n = dim();
    Mat w(n, 1);
    switch (shape_) {
        case Shape::Gaussian: {
            Mat z(n, 1);
            for (std::size_t i = 0; i < n; ++i) z[i] = rng::normal(seed, t, i);
            w = factor_ * z;
            break;
        }
        case Shape::Rademacher:
            for (std::size_t i = 0; i < n; ++i) w[i] = rng::coin(seed, t, i) ? scale_ : -scale_;
            break;
        case Shape::Uniform:
            for (std::size_t i = 0; i < n; ++i) w[i] = (2.0 * rng::uniform(seed, t, i, 5) - 1.0) * scale_;
            break;
        case Shape::Atoms: {
            const double u = rng::uniform(seed, t, 0, 4);
            double cumulative = 0.0;
            for (const Atom& a : atoms_) {
                cumulative += a.probability;
                if (u <= cumulative) return a.value;
            }
            return atoms_.back().value;
        }
    }
    return w;
}

std::vector<Mat> IidZeroMean::sample_path(std::uint64_t seed, std::size_t horizon) const {
    if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
    std::vector<Mat> path;
    path.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) path.push_back(sample_step(seed, t));
    return path;
}

Mat IidZeroMean::conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    if (t_prime < prefix.size()) return prefix[t_prime];
    return Mat(dim(), 1);
}

std::optional<double> IidZeroMean::support_bound() const {
    switch (shape_) {
        case Shape::Gaussian: return std::nullopt;
        case Shape::Rademacher:
        case Shape::Uniform: return scale_ * std::sqrt(static_cast<double>(dim()));
        case Shape::Atoms: {
            double r = 0.0;
            for (const Atom& a : atoms_) r = std::max(r, norm2(a.value));
            return r;
        }
    }
    return std::nullopt;
}

std::optional<double> IidZeroMean::correlation_bound() const { return covariance_.trace(); }

bool IidZeroMean::has_finite_support() const {
    return shape_ == Shape::Rademacher || shape_ == Shape::Atoms;
}

std::vector<Atom> IidZeroMean::step_atoms() const {
    if (shape_ == Shape::Atoms) return atoms_;
    if (shape_ != Shape::Rademacher) throw UnsupportedOperation(kind() + " has no finite support to enumerate");
    const std::size_t n = dim();
    if (n > 20) throw UnsupportedOperation("rademacher enumeration limited to 20 coordinates");
    const std::size_t count = std::size_t{1} << n;
    std::vector<Atom> out;
    out.reserve(count);
    for (std::size_t mask = 0; mask < count; ++mask) {
        Mat w(n, 1);
        for (std::size_t i = 0; i < n; ++i) w[i] = ((mask >> i) & 1U) ? scale_ : -scale_;
        out.push_back({w, 1.0 / static_cast<double>(count)});
    }
    return out;
}

std::vector<Atom> IidZeroMean::branches(std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    return step_atoms();
}

// ---------------------------------------------------------------------------
// Ar1Process

Ar1Process::Ar1Process(Mat phi, IidZeroMean innovation, std::optional<Mat> initial)
    : phi_(std::move(phi)), innovation_(std::move(innovation)), initial_(initial.value_or(Mat(phi_.rows(), 1))) {
    if (!phi_.is_square() || phi_.rows() != innovation_.dim()) {
        throw DimensionError("ar1: Phi " + phi_.shape() + " incompatible with innovation dimension");
    }
    if (initial_.rows() != phi_.rows() || initial_.cols() != 1) {
        throw DimensionError("ar1: initial value has shape " + initial_.shape());
    }
    if (spectral_radius(phi_) >= 1.0) throw std::invalid_argument("ar1: Phi must have spectral radius below 1");
}

std::vector<Mat> Ar1Process::sample_path(std::uint64_t seed, std::size_t horizon) const {
    if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
    std::vector<Mat> path;
    path.reserve(horizon);
    path.push_back(initial_ + innovation_.sample_step(seed, 0));
    for (std::size_t t = 1; t < horizon; ++t) path.push_back(phi_ * path.back() + innovation_.sample_step(seed, t));
    return path;
}

Mat Ar1Process::conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    if (t_prime < prefix.size()) return prefix[t_prime];
    if (prefix.empty()) return power(phi_, t_prime) * initial_;
    const std::size_t t = prefix.size() - 1;
    return power(phi_, t_prime - t) * prefix.back();
}

std::vector<Atom> Ar1Process::branches(std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    const Mat center = prefix.empty() ? initial_ : phi_ * prefix.back();
    return shifted(innovation_.step_atoms(), center);
}

// ---------------------------------------------------------------------------
// SignCoupled

SignCoupled::SignCoupled(Mat w) : w_(std::move(w)) {
    if (w_.cols() != 1) throw DimensionError("sign_coupled: w must be a column vector, got " + w_.shape());
}

std::vector<Mat> SignCoupled::sample_path(std::uint64_t seed, std::size_t horizon) const {
    if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
    const Mat w = rng::coin(seed, 0, 0) ? w_ : -w_;
    return std::vector<Mat>(horizon, w);
}

Mat SignCoupled::conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    if (prefix.empty()) return Mat(dim(), 1);
    if (t_prime < prefix.size()) return prefix[t_prime];
    return prefix.front();
}

std::vector<Atom> SignCoupled::branches(std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    if (prefix.empty()) return {{w_, 0.5}, {-w_, 0.5}};
    return {{prefix.front(), 1.0}};
}

// ---------------------------------------------------------------------------
// TrackingResidual

TrackingResidual::TrackingResidual(Mat a, std::vector<Mat> desired, IidZeroMean noise)
    : a_(std::move(a)), noise_(std::move(noise)) {
    if (!a_.is_square() || a_.rows() != noise_.dim()) throw DimensionError("tracking_residual: A/noise mismatch");
    if (desired.size() < 2) throw std::invalid_argument("tracking_residual: need at least two desired states");
    for (const Mat& d : desired) {
        if (d.rows() != a_.rows() || d.cols() != 1) throw DimensionError("desired state has shape " + d.shape());
    }
    drift_.reserve(desired.size() - 1);
    for (std::size_t t = 0; t + 1 < desired.size(); ++t) drift_.push_back(a_ * desired[t] - desired[t + 1]);
}

const Mat& TrackingResidual::drift(std::size_t t) const {
    if (t >= drift_.size()) {
        throw std::out_of_range(fmt::format("tracking_residual: step {} beyond horizon {}", t, drift_.size()));
    }
    return drift_[t];
}

std::vector<Mat> TrackingResidual::reduce(std::span<const Mat> raw_noise) const {
    if (raw_noise.size() > drift_.size()) throw std::out_of_range("tracking_residual: noise path longer than horizon");
    std::vector<Mat> out;
    out.reserve(raw_noise.size());
    for (std::size_t t = 0; t < raw_noise.size(); ++t) out.push_back(raw_noise[t] + drift_[t]);
    return out;
}

std::vector<Mat> TrackingResidual::sample_path(std::uint64_t seed, std::size_t horizon) const {
    if (horizon == 0) throw std::invalid_argument("horizon must be at least 1");
    if (horizon > drift_.size()) throw std::out_of_range("tracking_residual: horizon beyond desired trajectory");
    std::vector<Mat> path;
    path.reserve(horizon);
    for (std::size_t t = 0; t < horizon; ++t) path.push_back(noise_.sample_step(seed, t) + drift_[t]);
    return path;
}

Mat TrackingResidual::conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    if (t_prime < prefix.size()) return prefix[t_prime];
    return drift(t_prime);
}

std::optional<double> TrackingResidual::correlation_bound() const {
    double m = 0.0;
    for (const Mat& d : drift_) m = std::max(m, dot(d, d));
    return m + noise_.covariance().trace();
}

std::vector<Atom> TrackingResidual::branches(std::span<const Mat> prefix) const {
    require_prefix_dims(prefix, dim());
    return shifted(noise_.step_atoms(), drift(prefix.size()));
}

// ---------------------------------------------------------------------------
// BoxAdversarial

BoxAdversarial::BoxAdversarial(std::size_t dim, double radius) : dim_(dim), radius_(radius) {
    if (dim == 0) throw DimensionError("box dimension must be positive");
    if (!(radius >= 0.0)) throw std::invalid_argument("box radius must be non-negative");
}

std::vector<Mat> BoxAdversarial::sample_path(std::uint64_t /*seed*/, std::size_t /*horizon*/) const {
    throw UnsupportedOperation("box_adversarial paths are chosen by the evaluator, not sampled");
}

Mat BoxAdversarial::conditional_mean(std::size_t /*t_prime*/, std::span<const Mat> /*prefix*/) const {
    throw UnsupportedOperation("box_adversarial has no conditional mean");
}

std::optional<double> BoxAdversarial::support_bound() const {
    return radius_ * std::sqrt(static_cast<double>(dim_));
}

std::vector<Mat> BoxAdversarial::vertices() const {
    if (dim_ > 20) throw UnsupportedOperation("box vertex enumeration limited to 20 coordinates");
    const std::size_t count = std::size_t{1} << dim_;
    std::vector<Mat> out;
    out.reserve(count);
    for (std::size_t mask = 0; mask < count; ++mask) {
        Mat v(dim_, 1);
        for (std::size_t i = 0; i < dim_; ++i) v[i] = ((mask >> i) & 1U) ? radius_ : -radius_;
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------

Mat cross_correlation_estimates(const DisturbanceProcess& process, std::size_t seed_count, std::size_t horizon,
                                std::uint64_t base_seed) {
    if (!process.is_stochastic()) throw UnsupportedOperation("cross-correlation of an adversarial process");
    if (seed_count == 0 || horizon == 0) throw std::invalid_argument("need at least one seed and one step");
    Mat sums(horizon, horizon);
    for (std::size_t s = 0; s < seed_count; ++s) {
        const auto path = process.sample_path(rng::trial_seed(base_seed, s), horizon);
        for (std::size_t i = 0; i < horizon; ++i)
            for (std::size_t j = 0; j < horizon; ++j) sums(i, j) += dot(path[i], path[j]);
    }
    return sums * (1.0 / static_cast<double>(seed_count));
}

double empirical_cross_correlation(const DisturbanceProcess& process, std::size_t seed_count, std::size_t horizon,
                                   std::uint64_t base_seed) {
    const Mat est = cross_correlation_estimates(process, seed_count, horizon, base_seed);
    double m = est(0, 0);
    for (double v : est.data()) m = std::max(m, v);
    return m;
}

}  // namespace predlqr
