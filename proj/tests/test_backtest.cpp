#include "support.hpp"

#include <gtest/gtest.h>

using namespace statarb;
using namespace statarb::backtest;
using statarb::signals::Thresholds;
namespace ts = testing_support;

namespace {

/// One stock, one hedge instrument, scripted s-scores.
struct Scripted {
    ReturnsPanel panel;
    Instruments hedge;
    ScoreTable table;
};

Scripted scripted(const std::vector<double>& g, const std::vector<double>& stock, const std::vector<double>& fund,
                  double weight, std::size_t begin = 0) {
    const auto n = static_cast<Eigen::Index>(stock.size());
    Matrix r(1, n), f(1, n);
    for (Eigen::Index t = 0; t < n; ++t) {
        r(0, t) = stock[static_cast<std::size_t>(t)];
        f(0, t) = fund[static_cast<std::size_t>(t)];
    }
    Scripted s{ts::make_panel(r), {{"F"}, f}, {}};
    s.table.begin = begin;
    s.table.end = stock.size() - 1;
    s.table.d = 1;
    for (std::size_t k = 0; k < s.table.days(); ++k) {
        DayScore d;
        d.eligible = !std::isnan(g[k]);
        d.g = g[k];
        s.table.scores.push_back(d);
        s.table.weights.push_back(Vector::Constant(1, weight));
    }
    return s;
}

SimConfig plain(double cost, double rf) {
    SimConfig c;
    c.cost = cost;
    c.risk_free = rf;
    c.freeze_days = 0;
    c.residual_window = 30;
    return c;
}

/// Independent provider that never has a model.
class Nothing final : public ReplicationProvider {
public:
    explicit Nothing(const ReturnsPanel& p) : inst_(stock_instruments(p)) {}
    const Instruments& instruments() const override { return inst_; }
    std::optional<Hedge> hedge(std::size_t, std::size_t) const override { return std::nullopt; }
    factors::Provider kind() const override { return factors::Provider::Pca; }

private:
    Instruments inst_;
};

}  // namespace

TEST(ScaleFactor, Examples) {
    EXPECT_NEAR(scale_factor(100.0, 60, 2.0), 3.3333333333, 1e-9);
    EXPECT_DOUBLE_EQ(scale_factor(42.0, 1, 1.0), 42.0);
    EXPECT_THROW(scale_factor(0.0, 60, 2.0), BankruptcyError);
    EXPECT_THROW(scale_factor(-1.0, 60, 2.0), BankruptcyError);
}

TEST(TradeProfit, Examples) {
    const auto c0 = plain(0.0, 0.0);
    EXPECT_EQ(trade_profit(1, 3.0, TradeLegs::from_returns(0.0, 1.0, 0.0), 0.1, c0), 0.0);
    EXPECT_NEAR(trade_profit(1, 3.0, TradeLegs::from_returns(0.1, 1.0, 0.0), 0.1, c0), 0.3, 1e-15);
    const auto c1 = plain(0.001, 0.0);
    EXPECT_NEAR(trade_profit(1, 3.0, TradeLegs::from_returns(0.0, 1.0, 0.0), 0.1, c1), -0.004 * 3.0, 1e-15);
}

TEST(TradeProfit, VerbatimFormula) {
    const auto c = plain(0.001, 0.015);
    const double lam = 3.3, ri = 0.04, q = 0.8, rm = 0.03, dt = 20.0 / 252.0;
    for (int s : {1, -1}) {
        const double e = std::exp(0.015 * dt);
        const double expected =
            lam * (s * (ri - q * rm) - s * e * (1 - q) -
                   0.001 * (e * std::abs(1 + q) + std::abs((1 + ri) + q * (1 + rm))));
        EXPECT_NEAR(trade_profit(s, lam, TradeLegs::from_returns(ri, q, rm), dt, c), expected, 1e-14);
    }
    auto nofin = c;
    nofin.financing_term = false;
    const double e = std::exp(0.015 * dt);
    EXPECT_NEAR(trade_profit(1, lam, TradeLegs::from_returns(ri, q, rm), dt, nofin),
                lam * ((ri - q * rm) - 0.001 * (e * (1 + q) + (1 + ri) + q * (1 + rm))), 1e-14);
}

TEST(TradeProfit, MarketNeutralIdentity) {
    // perfect hedge, Q = 1, no costs or rates: nothing gained or lost either way
    const auto c = plain(0.0, 0.0);
    for (double move : {-0.2, 0.0, 0.35}) {
        EXPECT_NEAR(trade_profit(1, 2.0, TradeLegs::from_returns(move, 1.0, move), 0.2, c), 0.0, 1e-15);
        EXPECT_NEAR(trade_profit(-1, 2.0, TradeLegs::from_returns(move, 1.0, move), 0.2, c), 0.0, 1e-15);
    }
}

TEST(Simulation, NoEligibleStocksGrowsAtRiskFree) {
    const auto market = generate_synthetic_market(ts::market_config(20.0, 0.3, 1, 5, 300));
    const Nothing provider(market.panel);
    const auto cfg = plain(0.001, 0.015);
    const auto r = run_backtest(market.panel, provider, 119, 299, Thresholds{}, cfg);
    EXPECT_TRUE(r.trades.empty());
    const double T = 180 * kDt;
    EXPECT_NEAR(r.equity.back(), 100.0 * std::exp(0.015 * T), 1e-10);
    EXPECT_NEAR(r.cash.back(), r.equity.back(), 1e-10);
    EXPECT_EQ(r.equity.front(), 100.0);
}

TEST(Simulation, SingleTradeHandComputed) {
    // long opens on day 1 (g < -1.25), closes on day 3 (g > -0.5)
    const std::vector<double> g{0.0, -2.0, -1.0, 0.0, 0.0, 0.0};
    const std::vector<double> stock{0.0, 0.01, 0.02, -0.01, 0.03, 0.0};
    const std::vector<double> fund{0.0, 0.02, 0.01, 0.005, -0.01, 0.0};
    const auto s = scripted(g, stock, fund, 0.9);
    const auto cfg = plain(0.001, 0.02);
    const auto r = simulate(s.panel, s.hedge, s.table, Thresholds{}, cfg);

    ASSERT_EQ(r.trades.size(), 1u);
    const auto& tr = r.trades[0];
    EXPECT_EQ(tr.t_open, 1u);
    EXPECT_EQ(tr.t_close, 3u);
    const double ri = (1.02) * (0.99) - 1.0;
    const double rm = (1.01) * (1.005) - 1.0;
    EXPECT_NEAR(tr.stock_return, ri, 1e-15);
    EXPECT_NEAR(tr.hedge_pnl, 0.9 * rm, 1e-15);
    const double lam = 2.0 / 1.0 * 100.0;  // N = 1 stock
    const double held = 2 * kDt;
    const double e = std::exp(0.02 * held);
    const double P = lam * ((ri - 0.9 * rm) - e * (1 - 0.9) -
                            0.001 * (e * 1.9 + std::abs((1 + ri) + 0.9 * (1 + rm))));
    EXPECT_NEAR(tr.profit, P, 1e-12);
    const double grow = std::exp(0.02 * kDt);
    const double E3 = 100.0 * std::pow(grow, 3) + P;
    EXPECT_NEAR(r.equity[3], E3, 1e-10);
    EXPECT_NEAR(r.equity.back(), E3 * grow * grow, 1e-10);
    // cash: pays the financing of 1 - Q and the opening fee, gets everything back at close
    const double out = lam * ((1 - 0.9) + 0.001 * 1.9);
    EXPECT_NEAR(r.cash[1], 100.0 * grow - out, 1e-10);
    EXPECT_NEAR(r.cash.back(), r.equity.back(), 1e-10);
    EXPECT_NEAR(ledger_conservation_gap(r), 0.0, 1e-10);
}

TEST(Simulation, LambdaUsesPriorDayEquity) {
    // two consecutive trades; the second opens the day the first closes
    const std::vector<double> g{-2.0, 0.0, 2.0, 0.0, 0.0};
    const std::vector<double> stock{0.0, 0.05, 0.0, 0.0, 0.0};
    const std::vector<double> fund(5, 0.0);
    auto s = scripted(g, stock, fund, 1.0);
    const auto cfg = plain(0.0, 0.0);
    const auto r = simulate(s.panel, s.hedge, s.table, Thresholds::symmetric(1.25, 0.5), cfg);
    ASSERT_EQ(r.trades.size(), 2u);
    EXPECT_DOUBLE_EQ(r.trades[0].lambda, 200.0);
    EXPECT_DOUBLE_EQ(r.trades[1].lambda, r.equity[1] * 2.0);
}

TEST(Simulation, FreezeAndForcedClose) {
    std::vector<double> g(200);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = k % 2 ? 0.0 : -2.0;  // open, close, open, ...
    g[199] = -2.0;
    const auto s = scripted(g, std::vector<double>(200, 0.001), std::vector<double>(200, 0.0), 1.0);
    auto cfg = plain(0.001, 0.01);
    cfg.freeze_days = 60;
    const auto r = simulate(s.panel, s.hedge, s.table, Thresholds{}, cfg);
    ASSERT_FALSE(r.trades.empty());
    for (const auto& t : r.trades) EXPECT_GE(199 - t.t_open, 60u) << "open inside freeze window";
    EXPECT_EQ(r.open_at_end, 0u);

    // a position still open when trading ends is force-closed on the last day
    std::vector<double> hold(100, -1.0);
    hold[10] = -2.0;
    const auto h = scripted(hold, std::vector<double>(100, 0.001), std::vector<double>(100, 0.0), 1.0);
    const auto rh = simulate(h.panel, h.hedge, h.table, Thresholds{}, cfg);
    ASSERT_EQ(rh.trades.size(), 1u);
    EXPECT_TRUE(rh.trades[0].forced);
    EXPECT_EQ(rh.trades[0].t_close, 99u);
    EXPECT_NEAR(rh.cash.back(), rh.equity.back(), 1e-10);
}

TEST(Simulation, NoOpensDuringFreeze) {
    std::vector<double> g(150, 0.0);
    for (std::size_t k = 100; k < 150; ++k) g[k] = -3.0;  // signals only inside the last 60 days
    const auto s = scripted(g, std::vector<double>(150, 0.0), std::vector<double>(150, 0.0), 1.0);
    auto cfg = plain(0.001, 0.01);
    cfg.freeze_days = 60;
    EXPECT_TRUE(simulate(s.panel, s.hedge, s.table, Thresholds{}, cfg).trades.empty());
    cfg.freeze_days = 40;
    EXPECT_FALSE(simulate(s.panel, s.hedge, s.table, Thresholds{}, cfg).trades.empty());
}

TEST(Simulation, PerfectReplicationNeverTrades) {
    auto c = ts::market_config(20.0, 0.0, 2, 6, 400);
    c.factor_vols = {0.2};
    const auto m = generate_synthetic_market(c);
    const auto provider =
        make_index_provider(m.panel, m.factor_returns, {"F"}, factors::Provider::ExistingEtf, 120);
    const auto r = run_backtest(m.panel, *provider, 119, 399, Thresholds{}, plain(0.001, 0.015));
    EXPECT_TRUE(r.trades.empty());
}

TEST(Simulation, StrongReversionTradesMoreThanWeak) {
    const auto strong = generate_synthetic_market(ts::market_config(20.0, 0.5, 3, 20, 756));
    const auto weak = generate_synthetic_market(ts::market_config(2.0, 0.5, 3, 20, 756));
    PcaOptions opt;
    opt.selection = factors::FixedCount{3};
    SimConfig cfg;
    cfg.risk_free = 0.015;
    const auto ps = make_pca_provider(strong.panel, 252, 755, opt, 120);
    const auto pw = make_pca_provider(weak.panel, 252, 755, opt, 120);
    const auto rs = run_backtest(strong.panel, *ps, 252, 755, Thresholds{}, cfg);
    const auto rw = run_backtest(weak.panel, *pw, 252, 755, Thresholds{}, cfg);
    EXPECT_GT(rs.trades.size(), rw.trades.size());
}

TEST(Simulation, DeterministicAndConserving) {
    const auto m = generate_synthetic_market(ts::market_config(20.0, 0.5, 4, 15, 600));
    PcaOptions opt;
    opt.selection = factors::FixedCount{3};
    SimConfig cfg;
    const auto p = make_pca_provider(m.panel, 252, 599, opt, 120);
    const auto a = run_backtest(m.panel, *p, 252, 599, Thresholds{}, cfg, &m.universe);
    const auto b = run_backtest(m.panel, *p, 252, 599, Thresholds{}, cfg, &m.universe, 3);
    ASSERT_EQ(a.trades.size(), b.trades.size());
    EXPECT_EQ(a.equity, b.equity);
    EXPECT_EQ(a.cash, b.cash);
    EXPECT_GT(a.trades.size(), 0u);
    EXPECT_NEAR(ledger_conservation_gap(a), 0.0, 1e-8);
    EXPECT_NEAR(a.cash.back(), a.equity.back(), 1e-8);
    EXPECT_EQ(a.open_at_end, 0u);
    for (const auto& t : a.trades) {
        EXPECT_GT(t.t_close, t.t_open);
        EXPECT_LT(t.t_open, 599u - 60u + 1u);
    }
}

TEST(Simulation, SectorCurvesSumToPortfolio) {
    auto c = ts::market_config(20.0, 0.5, 5, 12, 600);
    c.sectors = {"BANKS", "MEDIA", "FUELS"};
    const auto m = generate_synthetic_market(c);
    PcaOptions opt;
    opt.selection = factors::FixedCount{2};
    const auto p = make_pca_provider(m.panel, 252, 599, opt, 120);
    const auto r = run_backtest(m.panel, *p, 252, 599, Thresholds{}, SimConfig{}, &m.universe);
    ASSERT_EQ(r.sectors.size(), 3u);
    for (std::size_t k = 0; k < r.dates.size(); k += 37) {
        double e = 0.0, cash = 0.0;
        for (const auto& [_, sc] : r.sectors) {
            e += sc.equity[k] * sc.initial_capital;
            cash += sc.cash[k] * sc.initial_capital;
        }
        EXPECT_NEAR(e, r.equity[k], 1e-9);
        EXPECT_NEAR(cash, r.cash[k], 1e-9);
    }
}

TEST(Simulation, InsufficientLookbackIsConfigError) {
    const auto m = generate_synthetic_market(ts::market_config(20.0, 0.5, 6, 5, 300));
    const Nothing provider(m.panel);
    EXPECT_THROW(precompute_scores(m.panel, provider, 50, 299, SimConfig{}), ConfigError);
    PcaOptions opt;
    EXPECT_THROW(make_pca_provider(m.panel, 100, 299, opt, 120), ConfigError);
}

TEST(Simulation, BankruptcyHalts) {
    // a huge adverse move on a levered long wipes out the account
    const std::vector<double> g{-2.0, -2.0, 0.0, -2.0, 0.0};
    const std::vector<double> stock{0.0, -0.9, 0.0, 0.0, 0.0};
    const auto s = scripted(g, stock, std::vector<double>(5, 0.0), 0.0);
    auto cfg = plain(0.0, 0.0);
    cfg.leverage = 2.0;
    EXPECT_THROW(simulate(s.panel, s.hedge, s.table, Thresholds{}, cfg), BankruptcyError);
}
