#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "predlqr/matlin.hpp"

namespace predlqr {

class UnsupportedOperation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// One outcome of a finitely supported step distribution.
struct Atom {
    Mat value;
    double probability;
};

/// Contract for a disturbance sequence {w_t}. Stochastic processes sample
/// paths and expose conditional means E[w_t' | w_0..w_t]; bounded processes
/// expose sup ||w||; finitely supported ones enumerate the conditional
/// distribution of the next disturbance given the realized prefix.
class DisturbanceProcess {
public:
    virtual ~DisturbanceProcess() = default;

    [[nodiscard]] virtual std::size_t dim() const = 0;
    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual bool is_stochastic() const { return true; }

    /// Deterministic in (seed, T); path(seed, T) is a prefix of path(seed, T')
    /// for T' > T.
    [[nodiscard]] virtual std::vector<Mat> sample_path(std::uint64_t seed, std::size_t horizon) const = 0;

    /// mu_{t'|t} with t = prefix.size() - 1. An empty prefix gives the prior
    /// mean; for t' <= t the observed value is returned.
    [[nodiscard]] virtual Mat conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const = 0;

    [[nodiscard]] virtual std::optional<double> support_bound() const { return std::nullopt; }
    [[nodiscard]] virtual std::optional<double> correlation_bound() const { return std::nullopt; }

    [[nodiscard]] virtual bool has_finite_support() const { return false; }
    /// Distribution of w_{prefix.size()} given the prefix.
    [[nodiscard]] virtual std::vector<Atom> branches(std::span<const Mat> prefix) const;
};

using ProcessPtr = std::shared_ptr<const DisturbanceProcess>;

/// i.i.d. zero-mean disturbances: Gaussian with covariance W, Rademacher per
/// coordinate, uniform on a box, or explicit zero-mean atoms.
class IidZeroMean final : public DisturbanceProcess {
public:
    enum class Shape { Gaussian, Rademacher, Uniform, Atoms };

    static IidZeroMean gaussian(Mat covariance);
    static IidZeroMean rademacher(std::size_t dim, double scale = 1.0);
    static IidZeroMean uniform(std::size_t dim, double half_width);
    static IidZeroMean atoms(std::vector<Atom> atoms);

    [[nodiscard]] std::size_t dim() const override { return covariance_.rows(); }
    [[nodiscard]] std::string kind() const override;
    [[nodiscard]] Shape shape() const { return shape_; }
    [[nodiscard]] const Mat& covariance() const { return covariance_; }

    [[nodiscard]] Mat sample_step(std::uint64_t seed, std::size_t t) const;
    [[nodiscard]] std::vector<Mat> sample_path(std::uint64_t seed, std::size_t horizon) const override;
    [[nodiscard]] Mat conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const override;
    [[nodiscard]] std::optional<double> support_bound() const override;
    [[nodiscard]] std::optional<double> correlation_bound() const override;
    [[nodiscard]] bool has_finite_support() const override;
    [[nodiscard]] std::vector<Atom> branches(std::span<const Mat> prefix) const override;

    /// Atoms of a single step (finite-support shapes only).
    [[nodiscard]] std::vector<Atom> step_atoms() const;

private:
    IidZeroMean(Shape shape, Mat covariance, double scale);

    Shape shape_;
    Mat covariance_;
    Mat factor_;         // covariance = factor * factor'
    double scale_ = 0;   // Rademacher amplitude or uniform half-width
    std::vector<Atom> atoms_;
};

/// w_0 = initial + e_0, w_{t+1} = Phi w_t + e_{t+1} with i.i.d. innovations.
class Ar1Process final : public DisturbanceProcess {
public:
    Ar1Process(Mat phi, IidZeroMean innovation, std::optional<Mat> initial = std::nullopt);

    [[nodiscard]] std::size_t dim() const override { return phi_.rows(); }
    [[nodiscard]] std::string kind() const override { return "ar1"; }
    [[nodiscard]] const Mat& phi() const { return phi_; }
    [[nodiscard]] const IidZeroMean& innovation() const { return innovation_; }

    [[nodiscard]] std::vector<Mat> sample_path(std::uint64_t seed, std::size_t horizon) const override;
    [[nodiscard]] Mat conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const override;
    [[nodiscard]] bool has_finite_support() const override { return innovation_.has_finite_support(); }
    [[nodiscard]] std::vector<Atom> branches(std::span<const Mat> prefix) const override;

private:
    Mat phi_;
    IidZeroMean innovation_;
    Mat initial_;
};

/// A single fair coin decides the whole path: all w_t = w or all w_t = -w.
class SignCoupled final : public DisturbanceProcess {
public:
    explicit SignCoupled(Mat w);

    [[nodiscard]] std::size_t dim() const override { return w_.rows(); }
    [[nodiscard]] std::string kind() const override { return "sign_coupled"; }

    [[nodiscard]] std::vector<Mat> sample_path(std::uint64_t seed, std::size_t horizon) const override;
    [[nodiscard]] Mat conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const override;
    [[nodiscard]] std::optional<double> support_bound() const override { return norm2(w_); }
    [[nodiscard]] std::optional<double> correlation_bound() const override { return dot(w_, w_); }
    [[nodiscard]] bool has_finite_support() const override { return true; }
    [[nodiscard]] std::vector<Atom> branches(std::span<const Mat> prefix) const override;

private:
    Mat w_;
};

/// Disturbance of a tracking problem after shifting to error coordinates:
/// w_t = noise_t + A d_t - d_{t+1}. Defined for t < desired.size() - 1.
class TrackingResidual final : public DisturbanceProcess {
public:
    TrackingResidual(Mat a, std::vector<Mat> desired, IidZeroMean noise);

    [[nodiscard]] std::size_t dim() const override { return a_.rows(); }
    [[nodiscard]] std::string kind() const override { return "tracking_residual"; }
    [[nodiscard]] std::size_t max_horizon() const { return drift_.size(); }
    /// Deterministic part A d_t - d_{t+1}.
    [[nodiscard]] const Mat& drift(std::size_t t) const;
    [[nodiscard]] const IidZeroMean& noise() const { return noise_; }

    /// Reduced disturbances for a given raw noise path.
    [[nodiscard]] std::vector<Mat> reduce(std::span<const Mat> raw_noise) const;

    [[nodiscard]] std::vector<Mat> sample_path(std::uint64_t seed, std::size_t horizon) const override;
    [[nodiscard]] Mat conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const override;
    [[nodiscard]] std::optional<double> correlation_bound() const override;
    [[nodiscard]] bool has_finite_support() const override { return noise_.has_finite_support(); }
    [[nodiscard]] std::vector<Atom> branches(std::span<const Mat> prefix) const override;

private:
    Mat a_;
    std::vector<Mat> drift_;
    IidZeroMean noise_;
};

/// Adversarial disturbances from the box [-r, r]^n. No sampling: worst cases
/// are found by the evaluator.
class BoxAdversarial final : public DisturbanceProcess {
public:
    BoxAdversarial(std::size_t dim, double radius);

    [[nodiscard]] std::size_t dim() const override { return dim_; }
    [[nodiscard]] std::string kind() const override { return "box_adversarial"; }
    [[nodiscard]] bool is_stochastic() const override { return false; }
    [[nodiscard]] double radius() const { return radius_; }

    [[nodiscard]] std::vector<Mat> sample_path(std::uint64_t seed, std::size_t horizon) const override;
    [[nodiscard]] Mat conditional_mean(std::size_t t_prime, std::span<const Mat> prefix) const override;
    [[nodiscard]] std::optional<double> support_bound() const override;
    [[nodiscard]] std::vector<Mat> vertices() const;

private:
    std::size_t dim_;
    double radius_;
};

/// Monte Carlo estimates of E[w_t' w_t'] for all pairs t, t' < T (a T x T
/// matrix), averaged over seeds 0..seed_count-1 derived from `base_seed`.
Mat cross_correlation_estimates(const DisturbanceProcess& process, std::size_t seed_count, std::size_t horizon,
                                std::uint64_t base_seed = 0);

/// Largest entry of cross_correlation_estimates.
double empirical_cross_correlation(const DisturbanceProcess& process, std::size_t seed_count, std::size_t horizon,
                                   std::uint64_t base_seed = 0);

}  // namespace predlqr
