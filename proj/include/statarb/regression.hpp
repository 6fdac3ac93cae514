#pragma once

// Rolling-window APT regressions: R_t = alpha + beta^T F_t + dI_t.

#include "statarb/core.hpp"

#include <cmath>
#include <string>

namespace statarb::regression {

struct FactorModel {
    double alpha = 0.0;  ///< per-day intercept
    Vector betas;
    Vector residuals;
};

inline constexpr double kMaxCondition = 1e10;

/// Least squares with intercept via the normal equations. Columns are
/// equilibrated before the condition check so the guard is scale-free.
inline FactorModel fit_ols(const Vector& y, const Matrix& x) {
    const Eigen::Index r = x.rows();
    const Eigen::Index w = x.cols();
    if (y.size() != w) throw ContractError("fit_ols: y and X disagree on window length");
    if (w <= r + 1)
        throw InsufficientWindowError("fit_ols: window " + std::to_string(w) + " <= r + 1 = " +
                                      std::to_string(r + 1));

    Matrix a(w, r + 1);
    a.col(0).setOnes();
    a.rightCols(r) = x.transpose();

    Vector scale = a.colwise().norm().transpose();
    for (Eigen::Index j = 0; j <= r; ++j)
        if (!(scale(j) > 0.0)) throw DegenerateError("fit_ols: singular design (zero factor column)");
    const Matrix as = a * scale.cwiseInverse().asDiagonal();
    const Matrix gram = as.transpose() * as;

    const Eigen::SelfAdjointEigenSolver<Matrix> spectrum(gram, Eigen::EigenvaluesOnly);
    const double lo = spectrum.eigenvalues().minCoeff();
    const double hi = spectrum.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition)
        throw DegenerateError("fit_ols: singular design (condition " + std::to_string(hi / lo) + ")");

    const Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) throw DegenerateError("fit_ols: singular design");
    const Vector coef = llt.solve(as.transpose() * y).cwiseQuotient(scale);

    FactorModel m;
    m.alpha = coef(0);
    m.betas = coef.tail(r);
    m.residuals = y - a * coef;
    return m;
}

/// I_k = sum_{j <= k} dI_j.
inline Vector cumulative_residuals(const Vector& residuals) {
    Vector out(residuals.size());
    double acc = 0.0;
    for (Eigen::Index k = 0; k < residuals.size(); ++k) out(k) = (acc += residuals(k));
    return out;
}

}  // namespace statarb::regression
