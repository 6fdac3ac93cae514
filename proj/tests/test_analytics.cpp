#include "support.hpp"

#include <gtest/gtest.h>

using namespace statarb;
using namespace statarb::analytics;
using statarb::signals::Thresholds;
namespace ts = testing_support;
namespace bt = statarb::backtest;

namespace {

double oracle_sharpe(const std::vector<double>& r, double rf) {
    double m = 0.0;
    for (double x : r) m += x;
    m /= static_cast<double>(r.size());
    double ss = 0.0;
    for (double x : r) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
    return (252.0 * m - rf) / (std::sqrt(252.0) * sd);
}

struct Fixture {
    SyntheticMarket market;
    std::unique_ptr<bt::FactorRegressionProvider> provider;
    bt::ScoreTable table;
};

Fixture fixture(std::uint64_t seed, double kappa = 20.0) {
    auto c = ts::market_config(kappa, 0.5, seed, 12, 600);
    c.sectors = {"BANKS", "MEDIA"};
    Fixture f{generate_synthetic_market(c), nullptr, {}};
    bt::PcaOptions opt;
    opt.selection = factors::FixedCount{2};
    f.provider = bt::make_pca_provider(f.market.panel, 252, 599, opt, 120);
    f.table = bt::precompute_scores(f.market.panel, *f.provider, 252, 599, bt::SimConfig{});
    return f;
}

}  // namespace

TEST(Sharpe, MatchesOracle) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0005, 0.01);
    std::vector<double> r(250);
    for (auto& x : r) x = n(rng);
    EXPECT_NEAR(*annualized_sharpe(r, 0.015), oracle_sharpe(r, 0.015), 1e-12);
}

TEST(Sharpe, DegenerateCases) {
    EXPECT_EQ(*annualized_sharpe(std::vector<double>(100, 0.015 / 252.0), 0.015), 0.0);
    EXPECT_EQ(*annualized_sharpe(std::vector<double>(100, 0.0), 0.005), -INFINITY);
    EXPECT_EQ(*annualized_sharpe(std::vector<double>(100, 0.001), 0.005), INFINITY);
    EXPECT_FALSE(annualized_sharpe(std::vector<double>(1, 0.01), 0.0).has_value());
    EXPECT_FALSE(annualized_sharpe(std::vector<double>{}, 0.0).has_value());
}

TEST(Sharpe, InvariantToInitialEquity) {
    const auto f = fixture(21);
    bt::SimConfig a;
    auto b = a;
    b.initial_equity = 1000.0;
    const auto ra = bt::simulate(f.market.panel, f.provider->instruments(), f.table, Thresholds{}, a);
    const auto rb = bt::simulate(f.market.panel, f.provider->instruments(), f.table, Thresholds{}, b);
    ASSERT_GT(ra.trades.size(), 0u);
    const auto sa = sector_report(ra), sb = sector_report(rb);
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        ASSERT_EQ(sa[i].sharpe.has_value(), sb[i].sharpe.has_value());
        if (!sa[i].sharpe || std::isinf(*sa[i].sharpe)) {
            EXPECT_EQ(sa[i].sharpe, sb[i].sharpe);
            continue;
        }
        EXPECT_NEAR(*sa[i].sharpe, *sb[i].sharpe, 1e-9 * std::max(1.0, std::abs(*sa[i].sharpe)));
    }
}

TEST(YearlyReturns, SplitsByEndingYear) {
    const std::vector<Date> dates{parse_date("2019-12-30"), parse_date("2019-12-31"), parse_date("2020-01-02"),
                                  parse_date("2020-01-03")};
    const std::vector<double> curve{100, 101, 100, 102};
    const auto y = yearly_returns(dates, curve);
    ASSERT_EQ(y.size(), 2u);
    EXPECT_EQ(y.at(2019).size(), 1u);
    EXPECT_NEAR(y.at(2019)[0], 0.01, 1e-15);
    EXPECT_NEAR(y.at(2020)[0], 100.0 / 101.0 - 1.0, 1e-15);
    EXPECT_NEAR(y.at(2020)[1], 0.02, 1e-15);
}

TEST(PnlFromEquity, InvertsRiskFreeGrowth) {
    std::vector<double> e(10);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = 100.0 * std::exp(0.02 * kDt * static_cast<double>(k));
    e[7] += 3.0;
    const auto p = pnl_from_equity(e, 100.0, 0.02, kDt, 1e-6);
    for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(p[k], k == 7 ? 3.0 : 0.0, 1e-12);
}

TEST(SectorReport, NoTradeSectorsAndPortfolioRow) {
    const auto f = fixture(22);
    const auto r = bt::simulate(f.market.panel, f.provider->instruments(), f.table, Thresholds{}, bt::SimConfig{},
                                &f.market.universe);
    const auto rows = sector_report(r);
    const auto& labels = sector_labels();
    ASSERT_EQ(rows.size() % (labels.size() + 1), 0u);
    std::map<int, std::vector<double>> expected_portfolio;
    for (std::size_t k = 1; k < r.dates.size(); ++k)
        expected_portfolio[year_of(r.dates[k])].push_back((r.initial_equity + r.pnl[k]) /
                                                              (r.initial_equity + r.pnl[k - 1]) -
                                                          1.0);
    for (const auto& row : rows) {
        if (row.group == kPortfolioGroup) {
            EXPECT_NEAR(*row.sharpe, oracle_sharpe(expected_portfolio.at(row.year), 0.015), 1e-9);
        } else if (row.group != "BANKS" && row.group != "MEDIA") {
            EXPECT_EQ(*row.sharpe, -INFINITY) << row.group;
        }
    }
}

TEST(SectorReport, TwoSectorToyOracle) {
    // stock 0 (BANKS) trades once, stock 1 (MEDIA) never
    const std::vector<double> g{0.0, -2.0, 0.0, 0.0, 0.0, 0.0};
    Matrix r = Matrix::Zero(2, 6);
    r(0, 2) = 0.03;
    Matrix fund = Matrix::Zero(1, 6);
    const auto panel = ts::make_panel(r);
    bt::ScoreTable table;
    table.begin = 0;
    table.end = 5;
    table.d = 2;
    for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t i = 0; i < 2; ++i) {
            bt::DayScore s;
            s.eligible = i == 0;
            s.g = i == 0 ? g[k] : 0.0;
            table.scores.push_back(s);
            table.weights.push_back(i == 0 ? Vector::Constant(1, 1.0) : Vector());
        }
    Universe u;
    u.tickers = panel.tickers;
    u.sector_of = {{"T0", "BANKS"}, {"T1", "MEDIA"}};
    bt::SimConfig cfg;
    cfg.freeze_days = 0;
    cfg.risk_free = 0.01;
    const auto res = bt::simulate(panel, {{"F"}, fund}, table, Thresholds{}, cfg, &u);
    ASSERT_EQ(res.trades.size(), 1u);
    const double P = res.trades[0].profit;
    // BANKS holds half the capital
    const auto& banks = res.sectors.at("BANKS");
    EXPECT_DOUBLE_EQ(banks.initial_capital, 50.0);
    std::vector<double> curve(6, 1.0);
    for (std::size_t k = 2; k < 6; ++k) curve[k] = 1.0 + P / 50.0 * std::exp(0.01 * kDt * static_cast<double>(k - 2));
    std::vector<double> rets;
    for (std::size_t k = 1; k < 6; ++k) rets.push_back(curve[k] / curve[k - 1] - 1.0);
    for (const auto& row : sector_report(res)) {
        if (row.group == "BANKS") {
            EXPECT_NEAR(*row.sharpe, oracle_sharpe(rets, 0.01), 1e-9);
        }
        if (row.group == "MEDIA") {
            EXPECT_EQ(*row.sharpe, -INFINITY);
        }
    }
}

TEST(MeanKappa, UnweightedAverage) {
    bt::ScoreTable t;
    t.begin = 0;
    t.end = 1;
    t.d = 2;
    t.scores.resize(4);
    t.scores[0] = {true, 0.0, ou::OuParams::make(10, 0, 1)};
    t.scores[1] = {true, 0.0, ou::OuParams::make(30, 0, 1)};
    t.scores[2] = {true, 0.0, ou::OuParams::make(20, 0, 1)};
    t.scores[3] = {false, 0.0, ou::OuParams::make(999, 0, 1)};
    Universe u;
    u.sector_of = {{"A", "BANKS"}, {"B", "MEDIA"}};
    const auto m = mean_kappa_by_sector(t, {"A", "B"}, &u);
    EXPECT_DOUBLE_EQ(m.at("BANKS"), 15.0);
    EXPECT_DOUBLE_EQ(m.at("MEDIA"), 30.0);
}

TEST(GridAxis, Values) {
    const auto v = GridAxis{1.1, 2.1, 0.1}.values();
    ASSERT_EQ(v.size(), 11u);
    EXPECT_NEAR(v.back(), 2.1, 1e-12);
    EXPECT_EQ(GridAxis({-2.0, -1.0, 0.1}).values().size(), 11u);
    EXPECT_THROW(GridAxis({1.0, 0.0, 0.1}).values(), ConfigError);
    EXPECT_THROW(GridAxis({0.0, 1.0, 0.0}).values(), ConfigError);
}

TEST(GridSearch, SingleCellEqualsDirectRun) {
    const auto f = fixture(23);
    const bt::SimConfig cfg;
    const auto g = grid_search(f.market.panel, f.provider->instruments(), f.table, {1.3, 1.3, 0.1}, {-0.4, -0.4, 0.1},
                               cfg);
    const auto r = bt::simulate(f.market.panel, f.provider->instruments(), f.table, Thresholds::symmetric(1.3, -0.4),
                                cfg);
    ASSERT_EQ(g.profit.size(), 1u);
    EXPECT_EQ(g.profit[0], r.equity.back() - 100.0);
}

TEST(GridSearch, ParallelMatchesSerialAndPicksArgmax) {
    const auto f = fixture(24);
    const bt::SimConfig cfg;
    const GridAxis open{1.1, 1.6, 0.25}, close{-1.0, 0.5, 0.5};
    const auto a = grid_search(f.market.panel, f.provider->instruments(), f.table, open, close, cfg, nullptr, 1);
    const auto b = grid_search(f.market.panel, f.provider->instruments(), f.table, open, close, cfg, nullptr, 4);
    EXPECT_EQ(a.profit, b.profit);
    EXPECT_EQ(a.best, b.best);
    for (std::size_t c = 0; c < a.profit.size(); ++c) EXPECT_LE(a.profit[c], a.profit[a.best]);
    for (std::size_t c = 0; c < a.best; ++c) EXPECT_LT(a.profit[c], a.profit[a.best]);
}

TEST(GridSearch, NoSignalsGivesUniformRiskFreeProfit) {
    auto f = fixture(25);
    for (auto& s : f.table.scores) s.eligible = false;
    const bt::SimConfig cfg;
    const auto g = grid_search(f.market.panel, f.provider->instruments(), f.table, {1.1, 1.5, 0.1}, {-1.0, 0.0, 0.5},
                               cfg);
    const double expected = 100.0 * std::exp(0.015 * kDt * 347.0) - 100.0;
    for (double p : g.profit) EXPECT_NEAR(p, expected, 1e-10);
    EXPECT_EQ(g.best, 0u);  // all tied: first cell
}
