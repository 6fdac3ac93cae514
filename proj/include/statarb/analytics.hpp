#pragma once

// Sharpe ratios per year and group, and the threshold grid search.

#include "statarb/backtest.hpp"
#include "statarb/core.hpp"
#include "statarb/marketdata.hpp"
#include "statarb/signals.hpp"
#include "statarb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace statarb::analytics {

/// S = (252 mean - r_f) / (sqrt(252) sigma), sigma with n - 1.
/// sigma = 0: 0 when the numerator is 0, otherwise +-inf by its sign.
/// nullopt for fewer than two returns.
inline std::optional<double> annualized_sharpe(std::span<const double> daily_returns, double risk_free) {
    if (daily_returns.size() < 2) return std::nullopt;
    const bool constant = std::all_of(daily_returns.begin(), daily_returns.end(),
                                      [&](double r) { return r == daily_returns.front(); });
    if (constant) {
        // evaluated directly: the mean of equal values can be off by an ulp
        double numerator = kTradingDaysPerYear * daily_returns.front() - risk_free;
        if (std::abs(numerator) <= 1e-12 * std::max(std::abs(risk_free), kTradingDaysPerYear * std::abs(daily_returns.front())))
            numerator = 0.0;
        if (numerator == 0.0) return 0.0;
        return numerator > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    const double numerator = kTradingDaysPerYear * stats::mean(daily_returns) - risk_free;
    return numerator / (std::sqrt(kTradingDaysPerYear) * stats::sample_std(daily_returns));
}

/// Starting capital plus compounded trading profits, the curve whose daily
/// returns feed the Sharpe ratio. A group that never trades is flat.
inline std::vector<double> trading_curve(std::span<const double> pnl, double initial) {
    std::vector<double> out(pnl.size());
    for (std::size_t k = 0; k < pnl.size(); ++k) out[k] = initial + pnl[k];
    return out;
}

/// Recovers the compounded profits from an equity curve, pnl_k = E_k - E0 e^{r k dt}.
/// Values within `tol` of zero are snapped to zero to absorb output rounding.
inline std::vector<double> pnl_from_equity(std::span<const double> equity, double initial, double risk_free,
                                           double dt, double tol = 0.0) {
    std::vector<double> out(equity.size());
    for (std::size_t k = 0; k < equity.size(); ++k) {
        out[k] = equity[k] - initial * std::exp(risk_free * dt * static_cast<double>(k));
        if (std::abs(out[k]) <= tol) out[k] = 0.0;
    }
    return out;
}

/// Simple daily returns of the trading curve, grouped by calendar year of the
/// day they end on. The first day has no predecessor and yields no return.
inline std::map<int, std::vector<double>> yearly_returns(const std::vector<Date>& dates, std::span<const double> curve) {
    std::map<int, std::vector<double>> out;
    for (std::size_t k = 1; k < curve.size(); ++k) out[year_of(dates[k])].push_back(curve[k] / curve[k - 1] - 1.0);
    return out;
}

struct SharpeRow {
    int year = 0;
    std::string group;
    std::optional<double> sharpe;
};

inline constexpr const char* kPortfolioGroup = "PORTFOLIO";

/// Rows for every year and for each of the 14 sectors, "other", and PORTFOLIO.
/// PORTFOLIO uses the aggregate curve; sectors use their own sub-portfolio
/// scaled by its starting capital. Sectors without members have a flat curve.
inline std::vector<SharpeRow> sector_report(const backtest::BacktestResult& r) {
    std::vector<SharpeRow> rows;
    if (r.dates.empty()) return rows;
    const auto portfolio = yearly_returns(r.dates, trading_curve(r.pnl, r.initial_equity));
    std::map<std::string, std::map<int, std::vector<double>>> per_sector;
    for (const auto& label : sector_labels()) {
        const auto it = r.sectors.find(label);
        if (it != r.sectors.end())
            per_sector[label] = yearly_returns(r.dates, trading_curve(it->second.pnl, 1.0));
        else
            per_sector[label] = yearly_returns(r.dates, std::vector<double>(r.dates.size(), 1.0));
    }
    for (const auto& [year, rets] : portfolio) {
        for (const auto& label : sector_labels())
            rows.push_back({year, label, annualized_sharpe(per_sector[label][year], r.risk_free)});
        rows.push_back({year, kPortfolioGroup, annualized_sharpe(rets, r.risk_free)});
    }
    return rows;
}

/// Unweighted mean of kappa over eligible stock-days, per sector.
inline std::map<std::string, double> mean_kappa_by_sector(const backtest::ScoreTable& table,
                                                          const std::vector<std::string>& tickers,
                                                          const Universe* universe) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < table.d; ++i) {
        std::string sector = "other";
        if (universe) {
            const auto it = universe->sector_of.find(tickers[i]);
            if (it != universe->sector_of.end()) sector = it->second;
        }
        for (std::size_t k = 0; k < table.days(); ++k) {
            const auto& s = table.at(i, k);
            if (!s.eligible) continue;
            acc[sector].first += s.ou.kappa;
            ++acc[sector].second;
        }
    }
    std::map<std::string, double> out;
    for (const auto& [sector, a] : acc) out[sector] = a.first / static_cast<double>(a.second);
    return out;
}

// ---------------------------------------------------------------------------
// Grid search

struct GridAxis {
    double start = 0.0;
    double stop = 0.0;
    double step = 0.1;

    /// start, start + step, ..., stop (inclusive within half a step).
    std::vector<double> values() const {
        if (!(step > 0.0)) throw ConfigError("grid step must be > 0");
        if (stop < start) throw ConfigError("grid range must satisfy start <= stop");
        const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 0.5)) + 1;
        std::vector<double> out(count);
        for (std::size_t k = 0; k < count; ++k) out[k] = start + step * static_cast<double>(k);
        return out;
    }
};

struct GridResult {
    std::vector<double> open_axis;
    std::vector<double> close_axis;
    std::vector<double> profit;  ///< row-major, open x close: E_T - E0
    std::vector<bool> bankrupt;
    std::size_t best = 0;

    double at(std::size_t o, std::size_t c) const { return profit[o * close_axis.size() + c]; }
};

/// One backtest per (open, close) pair with symmetric thresholds, all sharing
/// the precomputed scores. Bankruptcy scores -E0; ties keep the first cell.
inline GridResult grid_search(const ReturnsPanel& panel, const backtest::Instruments& instruments,
                              const backtest::ScoreTable& table, const GridAxis& open, const GridAxis& close,
                              const backtest::SimConfig& cfg, const Universe* universe = nullptr,
                              std::size_t threads = 1) {
    GridResult g;
    g.open_axis = open.values();
    g.close_axis = close.values();
    const std::size_t cells = g.open_axis.size() * g.close_axis.size();
    g.profit.assign(cells, 0.0);
    std::vector<char> bankrupt(cells, 0);
    backtest::parallel_for(cells, threads, [&](std::size_t cell) {
        const auto th = signals::Thresholds::symmetric(g.open_axis[cell / g.close_axis.size()],
                                                       g.close_axis[cell % g.close_axis.size()]);
        try {
            const auto res = backtest::simulate(panel, instruments, table, th, cfg, universe);
            g.profit[cell] = res.equity.back() - cfg.initial_equity;
        } catch (const BankruptcyError&) {
            g.profit[cell] = -cfg.initial_equity;
            bankrupt[cell] = 1;
        }
    });
    g.bankrupt.assign(bankrupt.begin(), bankrupt.end());
    for (std::size_t cell = 1; cell < cells; ++cell)
        if (g.profit[cell] > g.profit[g.best]) g.best = cell;
    return g;
}

}  // namespace statarb::analytics
