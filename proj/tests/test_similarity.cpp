#include <gtest/gtest.h>

#include "encaudit/similarity.hpp"
#include "support.hpp"

using namespace encaudit;
using namespace testing_support;

TEST(CenterColumns, TwoByTwoExample) {
    FeatureMatrix x(2, 2);
    x << 1, 0, 0, 1;
    FeatureMatrix expected(2, 2);
    expected << 0.5, -0.5, -0.5, 0.5;
    EXPECT_EQ(center_columns(x), expected);
}

TEST(CenterColumns, ZeroIsFixedPoint) {
    const FeatureMatrix z = FeatureMatrix::Zero(4, 3);
    EXPECT_EQ(center_columns(z), z);
}

TEST(CenterColumns, RandomColumnMeansVanish) {
    Rng rng(11);
    const auto x = random_matrix(rng, 100, 16);
    const auto c = center_columns(x);
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
        double mean = 0;
        for (Eigen::Index i = 0; i < c.rows(); ++i) mean += c(i, j);
        EXPECT_LE(std::abs(mean / 100), 1e-12);
    }
}

TEST(CenterColumns, Idempotent) {
    Rng rng(12);
    const auto c = center_columns(random_matrix(rng, 30, 5));
    EXPECT_LE((center_columns(c) - c).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinearCka, SelfSimilarityIsOne) {
    Rng rng(13);
    const auto x = random_matrix(rng, 40, 6);
    EXPECT_NEAR(linear_cka(x, x), 1.0, 1e-12);
}

TEST(LinearCka, OrthogonalAndScalingInvariance) {
    Rng rng(14);
    const auto x = random_matrix(rng, 100, 16);
    const auto q = random_orthogonal(rng, 16);
    EXPECT_NEAR(linear_cka(x, x * q), 1.0, 1e-9);
    EXPECT_NEAR(linear_cka(x, -2.0 * x), 1.0, 1e-9);
}

TEST(LinearCka, MatchesHsicOracle) {
    Rng rng(15);
    for (int i = 0; i < 50; ++i) {
        const auto x = random_matrix(rng, 100, 16);
        const auto y = random_matrix(rng, 100, 16);
        EXPECT_NEAR(linear_cka(x, y), hsic_cka(x, y), 1e-6);
    }
}

TEST(LinearCka, DifferentWidthsMatchOracle) {
    Rng rng(16);
    const auto x = random_matrix(rng, 60, 4);
    const auto y = random_matrix(rng, 60, 9);
    EXPECT_NEAR(linear_cka(x, y), hsic_cka(x, y), 1e-9);
}

TEST(LinearCka, SymmetricAndBounded) {
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        const auto x = random_matrix(rng, 20, 5);
        const auto y = random_matrix(rng, 20, 7);
        const double a = linear_cka(x, y), b = linear_cka(y, x);
        EXPECT_NEAR(a, b, 1e-9);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(LinearCka, RowCountMismatchIsShapeError) {
    Rng rng(18);
    EXPECT_THROW(linear_cka(random_matrix(rng, 10, 3), random_matrix(rng, 11, 3)), ShapeMismatch);
}

TEST(LinearCka, SingleRowIsInvalidInput) {
    Rng rng(19);
    EXPECT_THROW(linear_cka(random_matrix(rng, 1, 3), random_matrix(rng, 1, 3)), InvalidInput);
}

TEST(LinearCka, InvariantUnderTransformsOfBothSides) {
    Rng rng(24);
    for (int i = 0; i < 20; ++i) {
        const auto x = random_matrix(rng, 30, 6);
        const auto y = random_matrix(rng, 30, 6);
        const auto q1 = random_orthogonal(rng, 6);
        const auto q2 = random_orthogonal(rng, 6);
        EXPECT_NEAR(linear_cka(x * q1 * 3.5, y * q2 * -0.25), linear_cka(x, y), 1e-9);
    }
}

TEST(LinearCka, ConstantColumnsAreDegenerate) {
    Rng rng(20);
    const FeatureMatrix c = FeatureMatrix::Constant(10, 3, 2.5);
    EXPECT_THROW(linear_cka(c, random_matrix(rng, 10, 3)), DegenerateInput);
    EXPECT_THROW(linear_cka(random_matrix(rng, 10, 3), c), DegenerateInput);
}

TEST(LinearCka, NonFiniteIsInvalidInput) {
    Rng rng(21);
    auto x = random_matrix(rng, 10, 3);
    x(2, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(linear_cka(x, random_matrix(rng, 10, 3)), InvalidInput);
}

TEST(CkaDistance, ZeroForIdenticalAndRotated) {
    Rng rng(22);
    const auto x = random_matrix(rng, 50, 8);
    EXPECT_EQ(cka_distance(x, x), 0.0);
    EXPECT_NEAR(cka_distance(x, x * random_orthogonal(rng, 8)), 0.0, 1e-9);
}

TEST(CkaDistance, IndependentGaussiansMatchOracle) {
    Rng rng(23);
    const auto x = random_matrix(rng, 1000, 8);
    const auto y = random_matrix(rng, 1000, 8);
    const double d = cka_distance(x, y);
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_NEAR(d, 1.0 - hsic_cka(x, y), 1e-6);
}
