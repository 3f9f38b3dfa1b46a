#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "predlqr/riccati.hpp"

using predlqr::Mat;

namespace {

const Mat kDoubleIntA{{1, 1}, {0, 1}};
const Mat kDoubleIntB{{0}, {1}};

// Random stabilizable instance: B has full row rank so any A is stabilizable.
struct Instance {
    Mat a, b, q, r;
};

Instance random_instance(std::mt19937_64& gen, std::size_t n) {
    Mat b = oracle::random_mat(gen, n, n) + 2.0 * Mat::identity(n);
    return {oracle::random_mat(gen, n, n, -1.2, 1.2), b, oracle::random_spd(gen, n, 0.5), oracle::random_spd(gen, n, 0.5)};
}

}  // namespace

TEST(SolveDare, GoldenScalar) {
    const auto sol = predlqr::solve_dare(Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{1}});
    EXPECT_NEAR(sol.P(0, 0), oracle::kGoldenP, 1e-9);
    EXPECT_NEAR(sol.F(0, 0), oracle::kGoldenF, 1e-9);
    EXPECT_NEAR(sol.H(0, 0), oracle::kGoldenF, 1e-9);
    EXPECT_NEAR(sol.K(0, 0), oracle::kGoldenP - 1.0, 1e-9);
    EXPECT_NEAR(sol.lambda, 0.5 * (1.0 + oracle::kGoldenF), 1e-9);
}

TEST(SolveDare, ZeroDynamicsGivesQ) {
    const Mat q = Mat::identity(2);
    const auto sol = predlqr::solve_dare(Mat::zeros(2, 2), Mat::identity(2), q, Mat::identity(2));
    EXPECT_EQ(sol.P, q);
    EXPECT_LE(sol.K.max_abs(), 1e-15);
    EXPECT_LE(sol.F.max_abs(), 1e-15);
}

TEST(SolveDare, ZeroDynamicsRandomQ) {
    std::mt19937_64 gen(21);
    const Mat q = oracle::random_spd(gen, 3);
    const auto sol = predlqr::solve_dare(Mat::zeros(3, 3), oracle::random_mat(gen, 3, 2), q, Mat::identity(2));
    EXPECT_LE((sol.P - q).max_abs(), 1e-12);
}

TEST(SolveDare, DoubleIntegratorFixture) {
    // Long fixed-point iteration with explicit inverses.
    const auto ref = oracle::dare_fixed_point(oracle::to_dense(kDoubleIntA), oracle::to_dense(kDoubleIntB),
                                              oracle::eye(2), oracle::eye(1), 2000);
    const auto sol = predlqr::solve_dare(kDoubleIntA, kDoubleIntB, Mat::identity(2), Mat::identity(1));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(sol.P(i, j), ref[i][j], 1e-9);
    // Recorded fixture.
    EXPECT_NEAR(sol.P(0, 0), 2.947122966707, 1e-9);
    EXPECT_NEAR(sol.P(0, 1), 2.369205407092, 1e-9);
    EXPECT_NEAR(sol.P(1, 1), 4.613134260996, 1e-9);
}

TEST(SolveDare, Invariants) {
    std::mt19937_64 gen(22);
    for (std::size_t n : {1U, 2U, 3U, 4U}) {
        for (int rep = 0; rep < 5; ++rep) {
            const auto inst = random_instance(gen, n);
            const auto sol = predlqr::solve_dare(inst.a, inst.b, inst.q, inst.r);
            EXPECT_LE(sol.P.asymmetry(), 1e-9);
            for (std::size_t i = 0; i < n; ++i) EXPECT_GE(sol.P(i, i), -1e-9);
            EXPECT_LT(sol.rho_F, 1.0);
            EXPECT_DOUBLE_EQ(sol.lambda, 0.5 * (1.0 + sol.rho_F));
            EXPECT_LE((sol.F - (inst.a - inst.b * sol.K)).max_abs(), 1e-10);
            EXPECT_LE((inst.a - sol.H * sol.P * inst.a - sol.F).max_abs(), 1e-9 * std::max(1.0, sol.P.max_abs()));
            const Mat again = predlqr::riccati_step(inst.a, inst.b, inst.q, inst.r, sol.P);
            EXPECT_LE(predlqr::spectral_norm(again - sol.P), 10.0 * 1e-12 * std::max(1.0, sol.P.frobenius_norm()));
        }
    }
}

TEST(SolveDare, AgreesWithOracleOnRandomInstances) {
    std::mt19937_64 gen(23);
    for (int rep = 0; rep < 5; ++rep) {
        const auto inst = random_instance(gen, 3);
        const auto sol = predlqr::solve_dare(inst.a, inst.b, inst.q, inst.r);
        const auto ref = oracle::dare_fixed_point(oracle::to_dense(inst.a), oracle::to_dense(inst.b),
                                                  oracle::to_dense(inst.q), oracle::to_dense(inst.r), 3000);
        EXPECT_LE((sol.P - oracle::from_dense(ref)).max_abs(), 1e-8 * std::max(1.0, sol.P.max_abs()));
    }
}

TEST(SolveDare, UnstabilizableDoesNotConverge) {
    // Unstable mode 2 that B cannot reach.
    predlqr::DareOptions opts;
    opts.max_iter = 500;
    EXPECT_THROW((void)predlqr::solve_dare(Mat{{2, 0}, {0, 0.5}}, Mat{{0}, {1}}, Mat::identity(2), Mat{{1}}, opts),
                 predlqr::DareNotConverged);
}

TEST(SolveDare, UndetectableModeIsUnstable) {
    // Q does not see the unstable mode: iteration stays at P = 0, K = 0.
    EXPECT_THROW((void)predlqr::solve_dare(Mat{{2}}, Mat{{1}}, Mat{{0}}, Mat{{1}}), predlqr::ClosedLoopUnstable);
}

TEST(SolveDare, DimensionMismatch) {
    EXPECT_THROW((void)predlqr::solve_dare(Mat::identity(2), Mat{{1}}, Mat::identity(2), Mat{{1}}),
                 predlqr::DimensionError);
}

TEST(GelfandProfile, GoldenPowers) {
    const auto sol = predlqr::solve_dare(Mat{{1}}, Mat{{1}}, Mat{{1}}, Mat{{1}});
    const auto prof = predlqr::gelfand_profile(sol, 3);
    ASSERT_EQ(prof.size(), 4U);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(prof[k], std::pow(oracle::kGoldenF, double(k)), 1e-9);
    EXPECT_NEAR(prof[3], 0.055728, 1e-6);
}

TEST(GelfandProfile, ZeroClosedLoop) {
    const auto sol = predlqr::solve_dare(Mat::zeros(2, 2), Mat::identity(2), Mat::identity(2), Mat::identity(2));
    const auto prof = predlqr::gelfand_profile(sol, 4);
    EXPECT_DOUBLE_EQ(prof[0], 1.0);
    for (std::size_t k = 1; k < prof.size(); ++k) EXPECT_EQ(prof[k], 0.0);
}

TEST(GelfandProfile, DoubleIntegratorDecaysAtLambda) {
    const auto sol = predlqr::solve_dare(kDoubleIntA, kDoubleIntB, Mat::identity(2), Mat::identity(1));
    const auto prof = predlqr::gelfand_profile(sol, 60);
    // Complex eigenvalues make single-step ratios oscillate; the envelope
    // ||F^k|| <= c lambda^k holds with c read off the first few powers.
    double c = 0.0;
    for (std::size_t k = 0; k <= 10; ++k) c = std::max(c, prof[k] / std::pow(sol.lambda, double(k)));
    for (std::size_t k = 11; k <= 60; ++k) EXPECT_LE(prof[k], c * std::pow(sol.lambda, double(k))) << "k=" << k;
    // Gelfand: ||F^k||^{1/k} -> rho(F).
    EXPECT_NEAR(std::pow(prof[60], 1.0 / 60.0), sol.rho_F, 0.05);
}

TEST(GelfandProfile, Submultiplicative) {
    std::mt19937_64 gen(24);
    const auto inst = random_instance(gen, 3);
    const auto sol = predlqr::solve_dare(inst.a, inst.b, inst.q, inst.r);
    const auto prof = predlqr::gelfand_profile(sol, 12);
    for (std::size_t i = 0; i <= 6; ++i)
        for (std::size_t j = 0; j <= 6; ++j) EXPECT_LE(prof[i + j], prof[i] * prof[j] + 1e-9);
}
