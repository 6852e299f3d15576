#pragma once

// Linear Centered Kernel Alignment.
//
// For column-centered X (N x d1) and Y (N x d2):
//
//   CKA(X, Y) = ||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F)
//
// which equals HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)) for the linear Gram
// matrices K = X X^T, L = Y Y^T. Everything runs in double precision.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "encaudit/errors.hpp"

namespace encaudit {

// Rows are examples, columns are features.
using FeatureMatrix = Eigen::MatrixXd;

namespace detail {

inline void require_finite(const FeatureMatrix& x, const char* name) {
    if (!x.allFinite()) throw InvalidInput(std::string(name) + " contains non-finite values");
}

inline void require_shape(const FeatureMatrix& x, const char* name) {
    if (x.rows() < 2 || x.cols() < 1)
        throw InvalidInput(std::string(name) + " must have at least 2 rows and 1 column, got " +
                           std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
}

}  // namespace detail

inline FeatureMatrix center_columns(const FeatureMatrix& x) {
    detail::require_finite(x, "feature matrix");
    if (x.rows() == 0) return x;
    const Eigen::RowVectorXd mean = x.colwise().mean();
    return x.rowwise() - mean;
}

// Tolerance on overshooting [0, 1] that is attributed to rounding.
inline constexpr double kCkaClampTolerance = 1e-9;

inline double linear_cka(const FeatureMatrix& x, const FeatureMatrix& y) {
    detail::require_shape(x, "X");
    detail::require_shape(y, "Y");
    if (x.rows() != y.rows())
        throw ShapeMismatch("row counts differ: " + std::to_string(x.rows()) + " vs " +
                            std::to_string(y.rows()));

    const FeatureMatrix xc = center_columns(x);
    const FeatureMatrix yc = center_columns(y);

    // A constant operand centers to (numerically) zero. Compare against the
    // uncentered scale so residues from the mean subtraction do not pass.
    auto degenerate = [](const FeatureMatrix& centered, const FeatureMatrix& raw) {
        const double c = centered.norm();
        return c == 0.0 || c <= 1e-12 * raw.norm();
    };
    if (degenerate(xc, x)) throw DegenerateInput("X has zero variance after centering");
    if (degenerate(yc, y)) throw DegenerateInput("Y has zero variance after centering");

    const double cross = (yc.transpose() * xc).squaredNorm();
    const double xx = (xc.transpose() * xc).norm();
    const double yy = (yc.transpose() * yc).norm();
    const double value = cross / (xx * yy);

    if (!std::isfinite(value)) throw InternalError("CKA evaluated to a non-finite value");
    if (value < 0.0) {
        if (value < -kCkaClampTolerance)
            throw InternalError("CKA below 0 beyond rounding: " + std::to_string(value));
        return 0.0;
    }
    if (value > 1.0) {
        if (value > 1.0 + kCkaClampTolerance)
            throw InternalError("CKA above 1 beyond rounding: " + std::to_string(value));
        return 1.0;
    }
    return value;
}

inline double cka_distance(const FeatureMatrix& x, const FeatureMatrix& y) {
    return 1.0 - linear_cka(x, y);
}

}  // namespace encaudit
