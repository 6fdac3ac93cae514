#pragma once

// Ornstein-Uhlenbeck modelling of the cumulative idiosyncratic residual:
// AR(1) estimation, the AR(1) -> OU parameter map, s-scores, exact simulation
// and ACF/PACF diagnostics.

#include "statarb/core.hpp"
#include "statarb/stats.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace statarb::ou {

struct Ar1Fit {
    double phi0 = 0.0;
    double phi1 = 0.0;
    double resid_var = 0.0;  ///< sample variance of the one-step errors
};

struct OuParams {
    double kappa = 0.0;     ///< reversion speed, 1/year
    double mu = 0.0;        ///< long-run mean
    double sigma = 0.0;     ///< volatility, 1/sqrt(year)
    double sigma_eq = 0.0;  ///< equilibrium std, sigma / sqrt(2 kappa)

    static OuParams make(double kappa, double mu, double sigma) {
        return OuParams{kappa, mu, sigma, sigma / std::sqrt(2.0 * kappa)};
    }
};

enum class Estimator {
    YuleWalker,  ///< lag-1 sample autocorrelation (default)
    Ols,         ///< least squares of I_k on I_{k-1}; sensitivity checks only
};

inline constexpr std::size_t kMinAr1Window = 30;

namespace detail {

inline double residual_variance(std::span<const double> x, double phi0, double phi1) {
    std::vector<double> z(x.size() - 1);
    for (std::size_t k = 1; k < x.size(); ++k) z[k - 1] = x[k] - phi0 - phi1 * x[k - 1];
    return stats::sample_variance(z);
}

}  // namespace detail

/// Fits X_k = phi0 + phi1 X_{k-1} + zeta_k.
///
/// Yule-Walker: phi1 = gamma(1)/gamma(0) with mean-centred autocovariances
/// (both normalised by W), phi0 = mean * (1 - phi1).
inline Ar1Fit fit_ar1(std::span<const double> x, Estimator estimator = Estimator::YuleWalker) {
    const std::size_t w = x.size();
    if (w < kMinAr1Window)
        throw ContractError("fit_ar1: window of " + std::to_string(w) + " < " +
                            std::to_string(kMinAr1Window));

    Ar1Fit fit;
    if (estimator == Estimator::YuleWalker) {
        const double m = stats::mean(x);
        double g0 = 0.0, g1 = 0.0;
        for (std::size_t k = 0; k < w; ++k) {
            const double c = x[k] - m;
            g0 += c * c;
            if (k > 0) g1 += c * (x[k - 1] - m);
        }
        if (!(g0 > 0.0)) throw DegenerateError("fit_ar1: zero-variance series");
        fit.phi1 = g1 / g0;
        fit.phi0 = m * (1.0 - fit.phi1);
    } else {
        const auto lagged = x.first(w - 1);
        const auto lead = x.subspan(1);
        const double mx = stats::mean(lagged);
        const double my = stats::mean(lead);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k + 1 < w; ++k) {
            sxx += (lagged[k] - mx) * (lagged[k] - mx);
            sxy += (lagged[k] - mx) * (lead[k] - my);
        }
        if (!(sxx > 0.0)) throw DegenerateError("fit_ar1: zero-variance series");
        fit.phi1 = sxy / sxx;
        fit.phi0 = my - fit.phi1 * mx;
    }
    fit.resid_var = detail::residual_variance(x, fit.phi0, fit.phi1);
    return fit;
}

/// Exact-discretisation inverse: kappa = -ln(phi1)/dt, mu = phi0/(1-phi1),
/// sigma = sqrt(resid_var * 2 kappa / (1 - phi1^2)).
inline OuParams ar1_to_ou(const Ar1Fit& fit, double dt = kDt) {
    if (!(fit.phi1 > 0.0 && fit.phi1 < 1.0))
        throw NonMeanRevertingError("ar1_to_ou: phi1 = " + std::to_string(fit.phi1) +
                                    " outside (0, 1)");
    const double kappa = -std::log(fit.phi1) / dt;
    const double mu = fit.phi0 / (1.0 - fit.phi1);
    const double sigma = std::sqrt(fit.resid_var * 2.0 * kappa / (1.0 - fit.phi1 * fit.phi1));
    return OuParams::make(kappa, mu, sigma);
}

/// Normalised deviation G = (I - mu) / sigma_eq.
inline double s_score(double i_now, const OuParams& p) { return (i_now - p.mu) / p.sigma_eq; }

/// Trading days needed for a 1/e correction: 252 / kappa.
inline double mean_reversion_days(const OuParams& p) {
    if (!(p.kappa > 0.0)) throw ContractError("mean_reversion_days: kappa must be positive");
    return kTradingDaysPerYear / p.kappa;
}

/// Exact OU transition X_{t+dt} = mu + (X_t - mu) e^{-kappa dt} + sigma_eq sqrt(1 - e^{-2 kappa dt}) Z.
/// Returns n_steps + 1 values, the first being x0.
inline std::vector<double> simulate_ou(const OuParams& p, double x0, std::size_t n_steps, double dt,
                                       std::uint64_t seed) {
    if (n_steps < 1) throw ContractError("simulate_ou: n_steps must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double decay = std::exp(-p.kappa * dt);
    const double sigma_eq = p.sigma / std::sqrt(2.0 * p.kappa);
    const double shock = sigma_eq * std::sqrt(1.0 - decay * decay);
    std::vector<double> path(n_steps + 1);
    path[0] = x0;
    for (std::size_t t = 1; t <= n_steps; ++t)
        path[t] = p.mu + (path[t - 1] - p.mu) * decay + shock * normal(rng);
    return path;
}

struct Correlogram {
    std::vector<double> acf;   ///< acf[0] = 1
    std::vector<double> pacf;  ///< pacf[0] = 1 by convention, pacf[j] partial autocorrelation at lag j
};

/// Sample ACF (gamma(j)/gamma(0)) and PACF via the Durbin-Levinson recursion.
inline Correlogram acf_pacf(std::span<const double> x, std::size_t max_lag) {
    const std::size_t w = x.size();
    if (2 * max_lag >= w) throw ContractError("acf_pacf: max_lag must be < W/2");
    const double m = stats::mean(x);
    std::vector<double> gamma(max_lag + 1, 0.0);
    for (std::size_t j = 0; j <= max_lag; ++j)
        for (std::size_t k = j; k < w; ++k) gamma[j] += (x[k] - m) * (x[k - j] - m);
    if (!(gamma[0] > 0.0)) throw DegenerateError("acf_pacf: zero-variance series");

    Correlogram out;
    out.acf.resize(max_lag + 1);
    for (std::size_t j = 0; j <= max_lag; ++j) out.acf[j] = gamma[j] / gamma[0];

    out.pacf.assign(max_lag + 1, 0.0);
    out.pacf[0] = 1.0;
    std::vector<double> phi, prev;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double num = out.acf[k], den = 1.0;
        for (std::size_t j = 1; j < k; ++j) {
            num -= prev[j - 1] * out.acf[k - j];
            den -= prev[j - 1] * out.acf[j];
        }
        const double pkk = num / den;
        phi.assign(k, 0.0);
        for (std::size_t j = 1; j < k; ++j) phi[j - 1] = prev[j - 1] - pkk * prev[k - j - 1];
        phi[k - 1] = pkk;
        out.pacf[k] = pkk;
        prev = phi;
    }
    return out;
}

/// Stock-day eligibility: 0 < phi1 < 1 and kappa > min_kappa.
/// Returns nullopt for degenerate or slowly reverting series.
inline std::optional<OuParams> estimate_eligible(std::span<const double> cumulative,
                                                 double min_kappa = 4.0,
                                                 Estimator estimator = Estimator::YuleWalker,
                                                 double dt = kDt) {
    try {
        const OuParams p = ar1_to_ou(fit_ar1(cumulative, estimator), dt);
        if (!(p.kappa > min_kappa) || !(p.sigma_eq > 0.0) || !std::isfinite(p.sigma_eq))
            return std::nullopt;
        return p;
    } catch (const DegenerateError&) {
        return std::nullopt;
    } catch (const NonMeanRevertingError&) {
        return std::nullopt;
    }
}

}  // namespace statarb::ou
