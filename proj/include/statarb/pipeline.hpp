#pragma once

// Turns a RunConfig into a panel, a replication provider and a trading range,
// and writes the run's CSV outputs.

#include "statarb/analytics.hpp"
#include "statarb/backtest.hpp"
#include "statarb/config.hpp"
#include "statarb/csv.hpp"
#include "statarb/marketdata.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace statarb {

struct Prepared {
    ReturnsPanel panel;
    std::optional<Universe> universe;
    std::unique_ptr<backtest::ReplicationProvider> provider;
    std::size_t begin = 0;  ///< first trading column
    std::size_t end = 0;    ///< last trading column

    const Universe* universe_ptr() const { return universe ? &*universe : nullptr; }
};

/// Loads stocks (and funds) on one common calendar.
inline std::pair<ReturnsPanel, std::optional<ReturnsPanel>> load_market(const RunConfig& c,
                                                                        const std::optional<Universe>& universe) {
    if (c.prices.empty()) throw ConfigError("data.prices is required");
    if (!std::filesystem::exists(c.prices)) throw ConfigError("price data not found: " + c.prices);
    PriceTable stocks = universe ? load_prices(c.prices, universe->tickers) : load_prices(c.prices);
    stocks = drop_sparse_tickers(stocks);
    std::vector<std::string> order;
    if (universe) {
        for (const auto& t : universe->tickers)
            if (stocks.count(t)) order.push_back(t);
    } else {
        for (const auto& [t, _] : stocks) order.push_back(t);
    }
    if (order.size() < 2) throw DataError("fewer than two stocks with sufficient price coverage");

    if (c.funds.empty()) return {compute_returns(stocks, order), std::nullopt};

    if (!std::filesystem::exists(c.funds)) throw ConfigError("fund data not found: " + c.funds);
    const PriceTable funds = load_prices(c.funds);
    PriceTable joint = stocks;
    std::vector<std::string> all = order;
    for (const auto& [t, series] : funds) {
        if (joint.count(t)) throw DataError("fund '" + t + "' clashes with a stock ticker");
        joint.emplace(t, series);
        all.push_back(t);
    }
    const ReturnsPanel both = compute_returns(joint, all);
    ReturnsPanel s, f;
    s.base_date = f.base_date = both.base_date;
    s.dates = f.dates = both.dates;
    s.tickers.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(order.size()));
    f.tickers.assign(all.begin() + static_cast<std::ptrdiff_t>(order.size()), all.end());
    s.returns = both.returns.topRows(static_cast<Eigen::Index>(order.size()));
    f.returns = both.returns.bottomRows(static_cast<Eigen::Index>(f.tickers.size()));
    return {std::move(s), std::move(f)};
}

inline std::size_t column_at_or_after(const ReturnsPanel& p, Date d) {
    const auto it = std::lower_bound(p.dates.begin(), p.dates.end(), d);
    if (it == p.dates.end()) throw ConfigError("date " + format_date(d) + " is after the last data day");
    return static_cast<std::size_t>(it - p.dates.begin());
}

inline std::size_t column_at_or_before(const ReturnsPanel& p, Date d) {
    const auto it = std::upper_bound(p.dates.begin(), p.dates.end(), d);
    if (it == p.dates.begin()) throw ConfigError("date " + format_date(d) + " is before the first data day");
    return static_cast<std::size_t>(it - p.dates.begin()) - 1;
}

/// Earliest trading column each provider can serve.
inline std::size_t provider_lookback(const RunConfig& c) {
    const std::size_t residual = c.sim.residual_window - 1;
    switch (c.provider) {
        case factors::Provider::Pca: return std::max(residual, c.pca.fit_window);
        case factors::Provider::Lstm: return std::max({residual, c.lstm.warmup, c.lstm.train_days});
        default: return residual;
    }
}

inline Prepared prepare(const RunConfig& c, std::size_t threads = 1) {
    c.sim.validate();
    Prepared out;
    if (!c.universe.empty()) out.universe = load_universe(c.universe);
    auto [panel, funds] = load_market(c, out.universe);
    out.panel = std::move(panel);
    const auto& p = out.panel;

    out.end = c.trade_end ? column_at_or_before(p, *c.trade_end) : p.n() - 1;
    out.begin = c.trade_begin ? column_at_or_after(p, *c.trade_begin) : provider_lookback(c);
    if (out.begin > out.end || out.end >= p.n())
        throw ConfigError("empty trading range: need more than " + std::to_string(provider_lookback(c)) +
                          " days of data before trading");
    if (out.begin < provider_lookback(c) && c.provider != factors::Provider::Lstm)
        throw ConfigError("insufficient lookback: trading starts at day " + std::to_string(out.begin) +
                          ", provider needs " + std::to_string(provider_lookback(c)));

    const std::size_t w = c.sim.residual_window;
    switch (c.provider) {
        case factors::Provider::Pca:
            out.provider = backtest::make_pca_provider(p, out.begin, out.end, c.pca, w);
            break;
        case factors::Provider::ExistingEtf:
            if (!funds) throw ConfigError("factors.provider = existing_etf needs data.funds");
            out.provider = backtest::make_index_provider(p, funds->returns, funds->tickers, c.provider, w);
            break;
        case factors::Provider::SectorEtf:
            if (funds) {
                out.provider = backtest::make_index_provider(p, funds->returns, funds->tickers, c.provider, w);
            } else {
                if (!out.universe) throw ConfigError("factors.provider = sector_etf needs data.funds or data.universe");
                const auto sf = factors::equal_weight_sector_funds(p, *out.universe);
                if (sf.d() == 0) throw ConfigError("no sector in the universe has members");
                out.provider = backtest::make_index_provider(p, sf.returns, sf.tickers, c.provider, w);
            }
            break;
        case factors::Provider::Lstm: {
            auto opt = c.lstm;
            opt.threads = threads;
            opt.train.seed = derive_seed(c.seed, 7);
            out.provider = backtest::make_lstm_provider(p, out.begin, out.end, opt, w);
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Writers

inline void write_equity(std::ostream& out, const backtest::BacktestResult& r) {
    out << "date,E,C\n";
    for (std::size_t k = 0; k < r.dates.size(); ++k)
        out << format_date(r.dates[k]) << ',' << csv::num(r.equity[k]) << ',' << csv::num(r.cash[k]) << '\n';
}

inline void write_trades(std::ostream& out, const backtest::BacktestResult& r) {
    out << "ticker,open_date,close_date,direction,lambda,qm,stock_return,hedge_pnl,profit,forced\n";
    for (const auto& t : r.trades)
        out << t.ticker << ',' << format_date(t.open_date) << ',' << format_date(t.close_date) << ','
            << (t.direction > 0 ? "long" : "short") << ',' << csv::num(t.lambda) << ',' << csv::num(t.qm) << ','
            << csv::num(t.stock_return) << ',' << csv::num(t.hedge_pnl) << ',' << csv::num(t.profit) << ','
            << (t.forced ? 1 : 0) << '\n';
}

inline void write_sectors(std::ostream& out, const backtest::BacktestResult& r) {
    out << "date,sector,relE,relC\n";
    for (std::size_t k = 0; k < r.dates.size(); ++k)
        for (const auto& [name, sc] : r.sectors)
            out << format_date(r.dates[k]) << ',' << name << ',' << csv::num(sc.equity[k]) << ','
                << csv::num(sc.cash[k]) << '\n';
}

inline void write_sharpe(std::ostream& out, const std::vector<analytics::SharpeRow>& rows) {
    out << "year,group,S\n";
    for (const auto& row : rows)
        out << row.year << ',' << row.group << ',' << (row.sharpe ? csv::num(*row.sharpe) : "undefined") << '\n';
}

inline void write_signals(std::ostream& out, const backtest::BacktestResult& r) {
    out << "date,ticker,g,action\n";
    for (const auto& e : r.signal_log)
        out << format_date(e.date) << ',' << e.ticker << ',' << csv::num(e.g) << ',' << signals::to_string(e.action)
            << '\n';
}

inline void write_grid(std::ostream& out, const analytics::GridResult& g) {
    out << "open,close,profit,best\n";
    for (std::size_t o = 0; o < g.open_axis.size(); ++o)
        for (std::size_t c = 0; c < g.close_axis.size(); ++c) {
            const std::size_t cell = o * g.close_axis.size() + c;
            out << csv::num(g.open_axis[o]) << ',' << csv::num(g.close_axis[c]) << ',' << csv::num(g.profit[cell])
                << ',' << (cell == g.best ? 1 : 0) << '\n';
        }
}

}  // namespace statarb
