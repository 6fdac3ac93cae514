#pragma once

// Factor providers: PCA eigenportfolios of standardised returns, existing index
// funds, and artificial sector funds.

#include "statarb/core.hpp"
#include "statarb/marketdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace statarb::factors {

struct Standardization {
    Vector means;
    Vector stds;
};

struct EigenDecomposition {
    Vector eigenvalues;   ///< descending
    Matrix eigenvectors;  ///< column i pairs with eigenvalues[i]
};

enum class Provider { Pca, ExistingEtf, SectorEtf, Lstm };

inline const char* to_string(Provider p) {
    switch (p) {
        case Provider::Pca: return "pca";
        case Provider::ExistingEtf: return "existing_etf";
        case Provider::SectorEtf: return "sector_etf";
        case Provider::Lstm: return "lstm";
    }
    return "?";
}

inline Provider parse_provider(const std::string& s) {
    if (s == "pca") return Provider::Pca;
    if (s == "existing_etf") return Provider::ExistingEtf;
    if (s == "sector_etf") return Provider::SectorEtf;
    if (s == "lstm") return Provider::Lstm;
    throw ConfigError("unknown factors.provider '" + s + "'");
}

struct FactorSet {
    Provider provider = Provider::Pca;
    std::vector<std::string> names;
    Matrix factor_returns;  ///< r x n
    /// r x k money weights of the traded instruments behind each factor
    /// (k = d stocks for PCA, k = r funds for index providers).
    Matrix component_weights;

    std::size_t r() const { return static_cast<std::size_t>(factor_returns.rows()); }
};

/// Y_i = (R_i - mean_i) / std_i with the n-1 sample std.
inline std::pair<Matrix, Standardization> standardize(const Matrix& returns,
                                                      std::span<const std::string> names = {}) {
    const Eigen::Index d = returns.rows();
    const Eigen::Index n = returns.cols();
    if (n < 2) throw InsufficientWindowError("standardize: need at least two observations");
    Standardization st{Vector(d), Vector(d)};
    Matrix y(d, n);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double m = returns.row(i).mean();
        const double var = (returns.row(i).array() - m).square().sum() / static_cast<double>(n - 1);
        const double sd = std::sqrt(var);
        if (!(sd > 0.0)) {
            const std::string who = names.empty() ? "row " + std::to_string(i)
                                                  : names[static_cast<std::size_t>(i)];
            throw DegenerateError("standardize: zero-variance stock " + who);
        }
        st.means(i) = m;
        st.stds(i) = sd;
        y.row(i) = (returns.row(i).array() - m) / sd;
    }
    return {std::move(y), std::move(st)};
}

inline std::pair<Matrix, Standardization> standardize(const ReturnsPanel& panel) {
    return standardize(panel.returns, panel.tickers);
}

/// Sigma = Y Y^T / (n - 1) for standardised rows.
inline Matrix correlation_matrix(const Matrix& y) {
    if (y.cols() <= y.rows())
        throw InsufficientWindowError("correlation_matrix: window of " + std::to_string(y.cols()) +
                                      " days does not exceed " + std::to_string(y.rows()) + " stocks");
    Matrix c = (y * y.transpose()) / static_cast<double>(y.cols() - 1);
    return 0.5 * (c + c.transpose());
}

/// Cyclic Jacobi rotations for a symmetric matrix. Eigenvalues are sorted
/// descending; each eigenvector is oriented so its coordinates sum to >= 0
/// (ties broken by a positive first nonzero coordinate).
inline EigenDecomposition symmetric_eigen(const Matrix& m) {
    if (m.rows() != m.cols()) throw ContractError("symmetric_eigen: matrix not square");
    const Eigen::Index d = m.rows();
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ContractError("symmetric_eigen: matrix not symmetric");

    Matrix a = 0.5 * (m + m.transpose());
    Matrix v = Matrix::Identity(d, d);
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < d; ++p)
            for (Eigen::Index q = p + 1; q < d; ++q) off += a(p, q) * a(p, q);
        if (off <= 1e-30 * scale * scale) break;

        for (Eigen::Index p = 0; p < d; ++p) {
            for (Eigen::Index q = p + 1; q < d; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < d; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

    EigenDecomposition out{Vector(d), Matrix(d, d)};
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        out.eigenvalues(k) = a(src, src);
        Vector f = v.col(src).normalized();
        const double sum = f.sum();
        bool flip = sum < -1e-12;
        if (std::abs(sum) <= 1e-12) {
            for (Eigen::Index j = 0; j < d; ++j)
                if (std::abs(f(j)) > 1e-12) {
                    flip = f(j) < 0.0;
                    break;
                }
        }
        out.eigenvectors.col(k) = flip ? Vector(-f) : f;
    }
    return out;
}

/// Clamps eigenvalues in (-1e-10, 0) to zero; anything more negative is an error.
inline void clamp_spectrum(EigenDecomposition& dec) {
    for (Eigen::Index i = 0; i < dec.eigenvalues.size(); ++i) {
        double& l = dec.eigenvalues(i);
        if (l < -1e-10) throw DegenerateError("negative eigenvalue " + std::to_string(l) + " in correlation matrix");
        if (l < 0.0) l = 0.0;
    }
}

inline double explained_fraction(const Vector& eigenvalues, std::size_t k) {
    const auto d = static_cast<std::size_t>(eigenvalues.size());
    if (k < 1 || k > d) throw ContractError("explained_fraction: k out of range");
    const double total = eigenvalues.sum();
    const double head = eigenvalues.head(static_cast<Eigen::Index>(k)).sum();
    return std::clamp(head / total, 0.0, 1.0);
}

struct FixedCount {
    std::size_t r;
};
struct VarianceTarget {
    double alpha;
};
using RSelection = std::variant<FixedCount, VarianceTarget>;

inline std::size_t select_r(const Vector& eigenvalues, const RSelection& mode) {
    const auto d = static_cast<std::size_t>(eigenvalues.size());
    if (const auto* fixed = std::get_if<FixedCount>(&mode)) {
        if (fixed->r < 1 || fixed->r > d) throw ConfigError("fixed r outside [1, d]");
        return fixed->r;
    }
    const double alpha = std::get<VarianceTarget>(mode).alpha;
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("variance target must lie in (0, 1]");
    for (std::size_t k = 1; k <= d; ++k)
        if (explained_fraction(eigenvalues, k) >= alpha - 1e-15) return k;
    return d;
}

/// Eigenportfolio weights Q[i][k] = f_i^(k) / std_k and factor returns F = Q R.
inline FactorSet eigenportfolio_factors(const Standardization& st, const EigenDecomposition& dec,
                                        std::size_t r, const Matrix& returns) {
    const auto d = st.stds.size();
    if (r < 1 || r > static_cast<std::size_t>(d)) throw ContractError("eigenportfolio_factors: r out of range");
    if (returns.rows() != d) throw ContractError("eigenportfolio_factors: returns have wrong row count");
    FactorSet fs;
    fs.provider = Provider::Pca;
    const auto rr = static_cast<Eigen::Index>(r);
    fs.component_weights = dec.eigenvectors.leftCols(rr).transpose();
    for (Eigen::Index k = 0; k < d; ++k) fs.component_weights.col(k) /= st.stds(k);
    fs.factor_returns = fs.component_weights * returns;
    for (std::size_t i = 0; i < r; ++i) fs.names.push_back("PC" + std::to_string(i + 1));
    return fs;
}

struct PcaFit {
    Standardization standardization;
    EigenDecomposition decomposition;
    std::size_t r = 0;
    Matrix weights;  ///< r x d eigenportfolio weights
};

/// Standardise -> correlate -> decompose -> pick r, on one fitting window.
inline PcaFit fit_pca(const Matrix& window_returns, const RSelection& mode,
                      std::span<const std::string> names = {}) {
    auto [y, st] = standardize(window_returns, names);
    auto dec = symmetric_eigen(correlation_matrix(y));
    clamp_spectrum(dec);
    PcaFit fit;
    fit.r = select_r(dec.eigenvalues, mode);
    fit.weights = dec.eigenvectors.leftCols(static_cast<Eigen::Index>(fit.r)).transpose();
    for (Eigen::Index k = 0; k < fit.weights.cols(); ++k) fit.weights.col(k) /= st.stds(k);
    fit.standardization = std::move(st);
    fit.decomposition = std::move(dec);
    return fit;
}

/// Funds as factors: one tradable instrument per factor, so component weights are the identity.
inline FactorSet index_factor_set(const Matrix& fund_returns, Provider provider,
                                  std::vector<std::string> names = {}) {
    if (fund_returns.rows() < 1) throw ContractError("index_factor_set: need at least one fund");
    if (provider != Provider::ExistingEtf && provider != Provider::SectorEtf)
        throw ContractError("index_factor_set: provider must be an index provider");
    FactorSet fs;
    fs.provider = provider;
    fs.factor_returns = fund_returns;
    fs.component_weights = Matrix::Identity(fund_returns.rows(), fund_returns.rows());
    if (names.empty())
        for (Eigen::Index j = 0; j < fund_returns.rows(); ++j) names.push_back("F" + std::to_string(j + 1));
    fs.names = std::move(names);
    return fs;
}

/// Rows of `funds` re-indexed onto the panel's dates; any missing date is an alignment error.
inline Matrix align_to_panel(const ReturnsPanel& panel, const ReturnsPanel& funds) {
    Matrix out(static_cast<Eigen::Index>(funds.d()), static_cast<Eigen::Index>(panel.n()));
    std::size_t pos = 0;
    for (std::size_t t = 0; t < panel.n(); ++t) {
        while (pos < funds.n() && funds.dates[pos] < panel.dates[t]) ++pos;
        if (pos == funds.n() || funds.dates[pos] != panel.dates[t])
            throw DataError("fund returns missing date " + format_date(panel.dates[t]));
        const Date prev_panel = t == 0 ? panel.base_date : panel.dates[t - 1];
        const Date prev_fund = pos == 0 ? funds.base_date : funds.dates[pos - 1];
        if (prev_panel != prev_fund)
            throw DataError("fund returns not aligned at " + format_date(panel.dates[t]));
        out.col(static_cast<Eigen::Index>(t)) = funds.returns.col(static_cast<Eigen::Index>(pos));
    }
    return out;
}

/// Equal-weight artificial sector funds built from the universe's own members.
/// Row order follows sector_labels(); sectors without members are skipped.
inline ReturnsPanel equal_weight_sector_funds(const ReturnsPanel& panel, const Universe& universe) {
    ReturnsPanel out;
    out.base_date = panel.base_date;
    out.dates = panel.dates;
    std::vector<Vector> rows;
    for (const auto& label : sector_labels()) {
        if (label == "other") continue;
        std::vector<Eigen::Index> members;
        for (std::size_t i = 0; i < panel.d(); ++i) {
            const auto it = universe.sector_of.find(panel.tickers[i]);
            if (it != universe.sector_of.end() && it->second == label)
                members.push_back(static_cast<Eigen::Index>(i));
        }
        if (members.empty()) continue;
        Vector row = Vector::Zero(static_cast<Eigen::Index>(panel.n()));
        for (auto i : members) row += panel.returns.row(i).transpose();
        rows.push_back(row / static_cast<double>(members.size()));
        out.tickers.push_back(label);
    }
    out.returns.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(panel.n()));
    for (std::size_t j = 0; j < rows.size(); ++j) out.returns.row(static_cast<Eigen::Index>(j)) = rows[j].transpose();
    return out;
}

}  // namespace statarb::factors
