#include "avbai/confseq.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace avbai;

TEST(Confseq, HandEvaluatedBoundary) {
    EXPECT_NEAR(boundary(1, 1, 0.5, 1), std::sqrt(4 * std::log(1 + std::sqrt(2.0))), 1e-12);
    EXPECT_NEAR(boundary(1, 1, 0.5, 1), 1.8776, 1e-3);
    EXPECT_NEAR(boundary(1, 1, 0.1, 1), std::sqrt(4 * std::log(1 + std::sqrt(2.0) / 0.2)), 1e-12);
    EXPECT_NEAR(boundary(1, 1, 0.1, 1), 2.8902, 1e-3);
}

TEST(Confseq, BoundaryDecaysInTime) {
    for (double x : {0.1, 0.5, 2.0}) {
        const double b2 = boundary(1e2, x, 0.1, 0.06);
        const double b4 = boundary(1e4, x, 0.1, 0.06);
        const double b6 = boundary(1e6, x, 0.1, 0.06);
        EXPECT_GT(b2, b4);
        EXPECT_GT(b4, b6);
        EXPECT_LT(b6, 0.01);
    }
}

TEST(Confseq, BoundaryRejectsBadArguments) {
    EXPECT_THROW(boundary(0.5, 1, 0.1, 0.06), std::invalid_argument);
    EXPECT_THROW(boundary(10, 0, 0.1, 0.06), std::invalid_argument);
}

TEST(Confseq, LowerBound) {
    EXPECT_LT(lower_bound(0.0, 0.3, 50, 0.1, 0.06), 0.0);
    EXPECT_EQ(lower_bound(0.4, 0.0, 50, 0.1, 0.06), -std::numeric_limits<double>::infinity());
    // Independent evaluation of the mixture boundary at t = 1e4, x = 0.5.
    const double t = 1e4, x = 0.5, rho = 0.06, alpha = 0.1;
    const double l = std::sqrt((2 * (t * x * x * rho * rho + 1) / (t * x * x * rho * rho)) *
                               std::log(1 + std::sqrt(t * x * x * rho * rho + 1) / (2 * alpha)) / t);
    EXPECT_NEAR(lower_bound(0.1, 0.5, 10000, alpha, rho), 0.1 - 0.5 * l, 1e-14);
}

TEST(Confseq, SelectRho) {
    EXPECT_NEAR(select_rho(0.1, 1), 1.7461, 1e-4);
    EXPECT_NEAR(select_rho(0.1, 400) / select_rho(0.1, 1600), 2.0, 1e-12);
    EXPECT_NEAR(select_rho(0.1, 847), 0.06, 1e-4);
    EXPECT_THROW(select_rho(0.6, 10), std::invalid_argument);
    EXPECT_THROW(select_rho(0.1, 0.5), std::invalid_argument);
}

TEST(Confseq, NonPositiveBoundsKeepTheSet) {
    ConfidenceSet cs(3);
    EXPECT_EQ(cs.update({-1.0, 0.0, -0.2}, 500, 100), 0u);
    EXPECT_EQ(cs.size(), 3u);
}

TEST(Confseq, EliminationIsPermanent) {
    ConfidenceSet cs(3);
    EXPECT_EQ(cs.update({0.1, -0.5, -0.2}, 150, 100), 1u);
    EXPECT_FALSE(cs.contains(0));
    EXPECT_EQ(*cs.elimination_time(0), 150u);
    cs.update({-3.0, -0.5, -0.2}, 151, 100);
    EXPECT_FALSE(cs.contains(0));
    EXPECT_DOUBLE_EQ(cs.latest_bounds()[0], 0.1);
    EXPECT_EQ(cs.members(), (std::vector<std::size_t>{1, 2}));
}

TEST(Confseq, NoRemovalBeforeBurnIn) {
    ConfidenceSet cs(2);
    EXPECT_EQ(cs.update({5.0, 5.0}, 99, 100), 0u);
    EXPECT_EQ(cs.size(), 2u);
    EXPECT_EQ(cs.update({5.0, -1.0}, 100, 100), 1u);
}

TEST(Confseq, ArgminUsesLatestBounds) {
    ConfidenceSet cs(3);
    cs.update({0.2, 0.3, 0.05}, 200, 100);
    EXPECT_EQ(cs.size(), 0u);
    EXPECT_EQ(cs.argmin_bound(), 2u);
    EXPECT_THROW(cs.update({0.0}, 201, 100), std::invalid_argument);
}
