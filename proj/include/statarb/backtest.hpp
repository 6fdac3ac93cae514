#pragma once

// Day-by-day simulation of one independent trader per stock: replicate,
// score the cumulative residual, trade the pair with frozen entry weights,
// and account equity (profits at close) and cash (every money flow).

#include "statarb/core.hpp"
#include "statarb/factors.hpp"
#include "statarb/lstm.hpp"
#include "statarb/marketdata.hpp"
#include "statarb/ou.hpp"
#include "statarb/regression.hpp"
#include "statarb/signals.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace statarb::backtest {

struct SimConfig {
    double cost = 0.001;           ///< per transaction leg, fraction of traded value
    double risk_free = 0.015;      ///< per year, applied to owned and owed money
    double initial_equity = 100.0;
    double leverage = 2.0;
    std::size_t universe_size = 0;  ///< N in Lambda = leverage/N * E; 0 -> number of stocks
    std::size_t freeze_days = 60;
    std::size_t residual_window = 120;
    double min_kappa = 4.0;
    double dt = kDt;
    bool financing_term = true;  ///< keep the -s e^{r dt}(1 - Q) term of the profit formula
    ou::Estimator estimator = ou::Estimator::YuleWalker;

    void validate() const {
        if (cost < 0.0) throw ConfigError("sim.cost must be >= 0");
        if (!(initial_equity > 0.0)) throw ConfigError("sim.initial_equity must be > 0");
        if (!(leverage > 0.0)) throw ConfigError("sim.leverage must be > 0");
        if (residual_window < ou::kMinAr1Window) throw ConfigError("sim.residual_window must be >= 30");
    }
};

// ---------------------------------------------------------------------------
// Replication providers

/// Tradable instruments of the hedge leg, aligned with the panel's columns.
struct Instruments {
    std::vector<std::string> names;
    Matrix returns;  ///< k x n
};

/// Per stock and day: the residual window and the money weights of the
/// replicating portfolio over the provider's instruments.
struct Hedge {
    Vector residuals;
    Vector weights;
    double target_scale = 0.0;  ///< norm of the demeaned target returns; flags perfect fits
};

class ReplicationProvider {
public:
    virtual ~ReplicationProvider() = default;
    virtual const Instruments& instruments() const = 0;
    /// nullopt when the stock cannot be modelled on day t.
    virtual std::optional<Hedge> hedge(std::size_t stock, std::size_t t) const = 0;
    virtual factors::Provider kind() const = 0;
};

/// A factor set valid for days [begin, end).
struct FactorBlock {
    std::size_t begin = 0;
    std::size_t end = 0;
    factors::FactorSet factors;
};

/// Daily OLS of each stock on the factor set of the block containing the day.
class FactorRegressionProvider final : public ReplicationProvider {
public:
    FactorRegressionProvider(const ReturnsPanel& panel, std::vector<FactorBlock> blocks, Instruments instruments,
                             std::size_t window)
        : panel_(panel), blocks_(std::move(blocks)), instruments_(std::move(instruments)), window_(window) {
        if (blocks_.empty()) throw ContractError("FactorRegressionProvider: no factor blocks");
        for (const auto& b : blocks_)
            if (b.factors.component_weights.cols() != instruments_.returns.rows())
                throw ContractError("FactorRegressionProvider: weights do not match instruments");
    }

    const Instruments& instruments() const override { return instruments_; }
    factors::Provider kind() const override { return blocks_.front().factors.provider; }
    const std::vector<FactorBlock>& blocks() const { return blocks_; }

    std::optional<Hedge> hedge(std::size_t stock, std::size_t t) const override {
        if (t + 1 < window_) return std::nullopt;
        const auto it = std::find_if(blocks_.begin(), blocks_.end(),
                                     [t](const FactorBlock& b) { return t >= b.begin && t < b.end; });
        if (it == blocks_.end()) return std::nullopt;
        const auto w = static_cast<Eigen::Index>(window_);
        const auto start = static_cast<Eigen::Index>(t + 1 - window_);
        const Vector y = panel_.returns.row(static_cast<Eigen::Index>(stock)).segment(start, w).transpose();
        const Matrix x = it->factors.factor_returns.middleCols(start, w);
        try {
            auto model = regression::fit_ols(y, x);
            Hedge h;
            h.residuals = std::move(model.residuals);
            h.weights = it->factors.component_weights.transpose() * model.betas;
            h.target_scale = (y.array() - y.mean()).matrix().norm();
            return h;
        } catch (const DegenerateError&) {
            return std::nullopt;
        }
    }

private:
    const ReturnsPanel& panel_;
    std::vector<FactorBlock> blocks_;
    Instruments instruments_;
    std::size_t window_;
};

inline Instruments stock_instruments(const ReturnsPanel& panel) { return {panel.tickers, panel.returns}; }

struct PcaOptions {
    factors::RSelection selection = factors::FixedCount{15};
    std::size_t fit_window = 252;
    std::size_t refit_every = 252;
};

/// Eigenportfolios refitted every `refit_every` days on the preceding `fit_window` days.
inline std::unique_ptr<FactorRegressionProvider> make_pca_provider(const ReturnsPanel& panel, std::size_t trade_begin,
                                                                   std::size_t trade_end, const PcaOptions& opt,
                                                                   std::size_t window) {
    if (trade_begin < opt.fit_window)
        throw ConfigError("pca provider: " + std::to_string(trade_begin) + " days of history before trading < " +
                          std::to_string(opt.fit_window) + "-day fitting window");
    std::vector<FactorBlock> blocks;
    for (std::size_t b = trade_begin; b <= trade_end; b += opt.refit_every) {
        const auto fit = factors::fit_pca(
            panel.returns.middleCols(static_cast<Eigen::Index>(b - opt.fit_window),
                                     static_cast<Eigen::Index>(opt.fit_window)),
            opt.selection, panel.tickers);
        auto fs = factors::eigenportfolio_factors(fit.standardization, fit.decomposition, fit.r, panel.returns);
        blocks.push_back({b, std::min(b + opt.refit_every, trade_end + 1), std::move(fs)});
    }
    return std::make_unique<FactorRegressionProvider>(panel, std::move(blocks), stock_instruments(panel), window);
}

/// Funds (existing ETFs or sector funds) as the factor set for the whole panel.
inline std::unique_ptr<FactorRegressionProvider> make_index_provider(const ReturnsPanel& panel, const Matrix& fund_returns,
                                                                     std::vector<std::string> fund_names,
                                                                     factors::Provider kind, std::size_t window) {
    if (fund_returns.cols() != static_cast<Eigen::Index>(panel.n()))
        throw DataError("index provider: fund returns not aligned with the panel");
    auto fs = factors::index_factor_set(fund_returns, kind, fund_names);
    Instruments inst{fs.names, fund_returns};
    std::vector<FactorBlock> blocks{{0, panel.n(), std::move(fs)}};
    return std::make_unique<FactorRegressionProvider>(panel, std::move(blocks), std::move(inst), window);
}

struct LstmOptions {
    lstm::TrainConfig train;
    std::size_t train_days = 756;  ///< three years of history per retrain
    std::size_t refit_every = 252;
    std::size_t warmup = 120;
    std::size_t threads = 1;
};

/// Time-varying betas from one stacked LSTM per stock, retrained every
/// `refit_every` days and primed on `warmup` days before each block.
class LstmProvider final : public ReplicationProvider {
public:
    struct Block {
        std::size_t begin = 0;   ///< first trading day served
        std::size_t end = 0;     ///< one past the last
        std::size_t first = 0;   ///< first column with betas (begin - warmup)
        std::vector<Matrix> betas;  ///< per stock, (d-1) x (end - first)
        std::vector<std::vector<double>> loss_traces;
    };

    LstmProvider(const ReturnsPanel& panel, std::vector<Block> blocks, std::size_t window)
        : panel_(panel), blocks_(std::move(blocks)), instruments_(stock_instruments(panel)), window_(window) {}

    const Instruments& instruments() const override { return instruments_; }
    factors::Provider kind() const override { return factors::Provider::Lstm; }
    const std::vector<Block>& blocks() const { return blocks_; }

    std::optional<Hedge> hedge(std::size_t stock, std::size_t t) const override {
        const auto it = std::find_if(blocks_.begin(), blocks_.end(),
                                     [t](const Block& b) { return t >= b.begin && t < b.end; });
        if (it == blocks_.end() || t + 1 < it->first + window_) return std::nullopt;
        const Matrix& betas = it->betas[stock];
        const auto d = static_cast<Eigen::Index>(panel_.d());
        const auto i = static_cast<Eigen::Index>(stock);
        Hedge h;
        h.residuals.resize(static_cast<Eigen::Index>(window_));
        Vector y(static_cast<Eigen::Index>(window_));
        for (std::size_t k = 0; k < window_; ++k) {
            const auto col = static_cast<Eigen::Index>(t + 1 - window_ + k);
            const auto bcol = static_cast<Eigen::Index>(t + 1 - window_ + k - it->first);
            double fitted = 0.0;
            for (Eigen::Index j = 0, row = 0; j < d; ++j) {
                if (j == i) continue;
                fitted += betas(row++, bcol) * panel_.returns(j, col);
            }
            y(static_cast<Eigen::Index>(k)) = panel_.returns(i, col);
            h.residuals(static_cast<Eigen::Index>(k)) = panel_.returns(i, col) - fitted;
        }
        h.weights = Vector::Zero(d);
        const auto bcol = static_cast<Eigen::Index>(t - it->first);
        for (Eigen::Index j = 0, row = 0; j < d; ++j) {
            if (j == i) continue;
            h.weights(j) = betas(row++, bcol);
        }
        h.target_scale = (y.array() - y.mean()).matrix().norm();
        return h;
    }

private:
    const ReturnsPanel& panel_;
    std::vector<Block> blocks_;
    Instruments instruments_;
    std::size_t window_;
};

/// Runs `work(k)` for k in [0, count) over `threads` workers; each k writes only its own slot.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& work) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t k = 0; k < count; ++k) work(k);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < count; k += threads) work(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::unique_ptr<LstmProvider> make_lstm_provider(const ReturnsPanel& panel, std::size_t trade_begin,
                                                        std::size_t trade_end, const LstmOptions& opt,
                                                        std::size_t window) {
    if (trade_begin < opt.warmup) throw ConfigError("lstm provider: no room for the warm-up before trading");
    if (opt.warmup + 1 < window) throw ConfigError("lstm provider: warm-up shorter than the residual window");
    std::vector<LstmProvider::Block> blocks;
    for (std::size_t b = trade_begin, k = 0; b <= trade_end; b += opt.refit_every, ++k) {
        LstmProvider::Block block;
        block.begin = b;
        block.end = std::min(b + opt.refit_every, trade_end + 1);
        block.first = b - opt.warmup;
        const std::size_t train_begin = b > opt.train_days ? b - opt.train_days : 0;
        block.betas.resize(panel.d());
        block.loss_traces.resize(panel.d());
        parallel_for(panel.d(), opt.threads, [&](std::size_t i) {
            auto cfg = opt.train;
            cfg.seed = derive_seed(opt.train.seed, k * 1000003 + i);
            auto trained = lstm::train(lstm::explanatory_inputs(panel, i, train_begin, b),
                                       panel.returns.row(static_cast<Eigen::Index>(i))
                                           .segment(static_cast<Eigen::Index>(train_begin),
                                                    static_cast<Eigen::Index>(b - train_begin))
                                           .transpose(),
                                       cfg);
            const Matrix x = lstm::explanatory_inputs(panel, i, block.first, block.end);
            lstm::Carry carry = lstm::Carry::zeros(trained.model.hidden());
            block.betas[i] = lstm::forward_betas(trained.model, x, carry);
            block.loss_traces[i] = std::move(trained.loss_trace);
        });
        blocks.push_back(std::move(block));
    }
    return std::make_unique<LstmProvider>(panel, std::move(blocks), window);
}

// ---------------------------------------------------------------------------
// Scores

struct DayScore {
    bool eligible = false;
    double g = 0.0;
    ou::OuParams ou;
};

/// Scores and hedge weights for every stock and trading day; independent of thresholds.
struct ScoreTable {
    std::size_t begin = 0;  ///< first trading column
    std::size_t end = 0;    ///< last trading column (inclusive)
    std::size_t d = 0;
    std::vector<DayScore> scores;  ///< [k * d + i]
    std::vector<Vector> weights;   ///< [k * d + i], empty when ineligible

    std::size_t days() const { return end - begin + 1; }
    const DayScore& at(std::size_t i, std::size_t k) const { return scores[k * d + i]; }
    const Vector& weights_at(std::size_t i, std::size_t k) const { return weights[k * d + i]; }
};

/// Cumulative residual, OU fit at the end of the window, and s-score at I_now = I_W.
inline DayScore score_hedge(const Hedge& h, const SimConfig& cfg) {
    DayScore s;
    if (!(h.residuals.norm() > 1e-9 * h.target_scale)) return s;
    const Vector cum = regression::cumulative_residuals(h.residuals);
    const auto p = ou::estimate_eligible(std::span<const double>(cum.data(), static_cast<std::size_t>(cum.size())),
                                         cfg.min_kappa, cfg.estimator, cfg.dt);
    if (!p) return s;
    s.eligible = true;
    s.ou = *p;
    s.g = ou::s_score(cum(cum.size() - 1), *p);
    return s;
}

inline ScoreTable precompute_scores(const ReturnsPanel& panel, const ReplicationProvider& provider,
                                    std::size_t begin, std::size_t end, const SimConfig& cfg,
                                    std::size_t threads = 1) {
    if (end >= panel.n() || begin > end) throw ConfigError("trading range outside the panel");
    if (begin + 1 < cfg.residual_window)
        throw ConfigError("insufficient lookback: trading starts at column " + std::to_string(begin) +
                          " but the residual window needs " + std::to_string(cfg.residual_window) + " days");
    ScoreTable table;
    table.begin = begin;
    table.end = end;
    table.d = panel.d();
    table.scores.resize(table.days() * table.d);
    table.weights.resize(table.days() * table.d);
    parallel_for(table.d, threads, [&](std::size_t i) {
        for (std::size_t k = 0; k < table.days(); ++k) {
            const auto h = provider.hedge(i, begin + k);
            if (!h) continue;
            auto s = score_hedge(*h, cfg);
            if (s.eligible) table.weights[k * table.d + i] = h->weights;
            table.scores[k * table.d + i] = s;
        }
    });
    return table;
}

// ---------------------------------------------------------------------------
// Accounting

/// Lambda_t = leverage / N * E_t.
inline double scale_factor(double equity, std::size_t universe_size, double leverage) {
    if (!(equity > 0.0)) throw BankruptcyError("equity " + std::to_string(equity) + " <= 0; trading halted");
    return leverage / static_cast<double>(universe_size) * equity;
}

/// Returns of both legs over the holding period. hedge_pnl is Q^M R^M, the
/// value change of the replicating portfolio per unit of the main stock.
struct TradeLegs {
    double stock_return = 0.0;
    double qm = 0.0;
    double hedge_pnl = 0.0;

    static TradeLegs from_returns(double r_i, double qm, double r_m) { return {r_i, qm, qm * r_m}; }
};

/// P = Lambda [ s (R_i - Q R_M) - s e^{r dt}(1 - Q) - c (e^{r dt}|1 + Q| + |(1 + R_i) + Q(1 + R_M)|) ],
/// s = +1 long / -1 short, dt the holding time in years.
inline double trade_profit(int direction, double lambda, const TradeLegs& legs, double years, const SimConfig& cfg) {
    const double s = direction > 0 ? 1.0 : -1.0;
    const double grow = std::exp(cfg.risk_free * years);
    const double q = legs.qm;
    const double financing = cfg.financing_term ? s * grow * (1.0 - q) : 0.0;
    const double fees = cfg.cost * (grow * std::abs(1.0 + q) + std::abs(1.0 + legs.stock_return + q + legs.hedge_pnl));
    return lambda * (s * (legs.stock_return - legs.hedge_pnl) - financing - fees);
}

/// Cash paid when the pair is opened: financing of the unhedged amount plus the opening fee.
inline double opening_outflow(int direction, double lambda, double qm, const SimConfig& cfg) {
    const double s = direction > 0 ? 1.0 : -1.0;
    return lambda * ((cfg.financing_term ? s * (1.0 - qm) : 0.0) + cfg.cost * std::abs(1.0 + qm));
}

struct OpenPosition {
    std::size_t stock = 0;
    int direction = 0;
    std::size_t t_open = 0;  ///< column index
    double lambda = 0.0;
    double qm = 0.0;
    Vector weights;  ///< frozen money weights over instruments
};

struct TradeRecord {
    std::string ticker;
    Date open_date{};
    Date close_date{};
    std::size_t t_open = 0;
    std::size_t t_close = 0;
    int direction = 0;
    double lambda = 0.0;
    double qm = 0.0;
    double stock_return = 0.0;
    double hedge_pnl = 0.0;
    double profit = 0.0;
    bool forced = false;
};

struct SignalEvent {
    std::string ticker;
    Date date{};
    double g = 0.0;
    signals::Action action = signals::Action::Hold;
};

struct SectorCurve {
    double initial_capital = 0.0;
    std::size_t members = 0;
    std::vector<double> equity;  ///< relative to initial_capital
    std::vector<double> cash;
    std::vector<double> pnl;     ///< compounded closed-trade profits, relative
};

struct BacktestResult {
    std::vector<Date> dates;
    std::vector<double> equity;
    std::vector<double> cash;
    std::vector<double> pnl;  ///< closed-trade profits compounded at r_f; E = E0 e^{rt} + pnl
    std::vector<TradeRecord> trades;
    std::vector<SignalEvent> signal_log;
    std::map<std::string, SectorCurve> sectors;
    std::size_t open_at_end = 0;
    double initial_equity = 0.0;
    double risk_free = 0.0;
    double dt = kDt;

    double years(std::size_t k) const { return static_cast<double>(k) * dt; }
};

/// Running product of (1 + r) per instrument, so gross(t0 -> t1) = cum[t1] / cum[t0].
inline Matrix cumulative_growth(const Matrix& returns) {
    Matrix cum(returns.rows(), returns.cols());
    for (Eigen::Index i = 0; i < returns.rows(); ++i) {
        double acc = 1.0;
        for (Eigen::Index t = 0; t < returns.cols(); ++t) cum(i, t) = (acc *= 1.0 + returns(i, t));
    }
    return cum;
}

/// The day loop over a precomputed score table.
class Simulation {
public:
    Simulation(const ReturnsPanel& panel, const Instruments& instruments, const ScoreTable& table,
               const signals::Thresholds& thresholds, const SimConfig& cfg, const Universe* universe = nullptr)
        : panel_(panel), table_(table), th_(thresholds), cfg_(cfg),
          stock_growth_(cumulative_growth(panel.returns)), hedge_growth_(cumulative_growth(instruments.returns)),
          state_(panel.d(), signals::PositionState::Flat), open_(panel.d()) {
        cfg_.validate();
        thresholds.validate();
        if (cfg_.universe_size == 0) cfg_.universe_size = panel.d();
        result_.initial_equity = cfg_.initial_equity;
        result_.risk_free = cfg_.risk_free;
        result_.dt = cfg_.dt;
        sector_of_.resize(panel.d(), "other");
        if (universe)
            for (std::size_t i = 0; i < panel.d(); ++i) {
                const auto it = universe->sector_of.find(panel.tickers[i]);
                if (it != universe->sector_of.end()) sector_of_[i] = it->second;
            }
        for (std::size_t i = 0; i < panel.d(); ++i) {
            auto& sc = result_.sectors[sector_of_[i]];
            ++sc.members;
        }
        for (auto& [_, sc] : result_.sectors)
            sc.initial_capital =
                cfg_.initial_equity * static_cast<double>(sc.members) / static_cast<double>(cfg_.universe_size);
    }

    /// Advances one trading day (k-th day of the table).
    void step_day(std::size_t k) {
        const std::size_t t = table_.begin + k;
        const bool last = t == table_.end;
        const bool frozen = table_.end - t < cfg_.freeze_days;
        const double grow = std::exp(cfg_.risk_free * cfg_.dt);

        const double prev_equity = k == 0 ? cfg_.initial_equity : result_.equity.back();
        const double prev_cash = k == 0 ? cfg_.initial_equity : result_.cash.back();
        const double lambda = scale_factor(prev_equity, cfg_.universe_size, cfg_.leverage);

        double equity = k == 0 ? prev_equity : prev_equity * grow;
        double cash = k == 0 ? prev_cash : prev_cash * grow;
        double pnl = k == 0 ? 0.0 : result_.pnl.back() * grow;
        std::map<std::string, std::pair<double, double>> sector_flows;  // (profit, cash flow)

        for (std::size_t i = 0; i < panel_.d(); ++i) {
            const DayScore& s = table_.at(i, k);
            signals::Action action = signals::Action::Hold;
            if (last) {
                if (state_[i] == signals::PositionState::Long) action = signals::Action::CloseLong;
                if (state_[i] == signals::PositionState::Short) action = signals::Action::CloseShort;
            } else if (s.eligible) {
                action = signals::decide(s.g, state_[i], th_);
                if (frozen && (action == signals::Action::OpenLong || action == signals::Action::OpenShort))
                    action = signals::Action::Hold;
            }
            if (action == signals::Action::Hold) continue;

            const auto next = signals::apply(action, state_[i]);
            result_.signal_log.push_back({panel_.tickers[i], panel_.dates[t], s.g, action});
            if (next != signals::PositionState::Flat) {
                OpenPosition pos;
                pos.stock = i;
                pos.direction = next == signals::PositionState::Long ? 1 : -1;
                pos.t_open = t;
                pos.lambda = lambda;
                pos.weights = table_.weights_at(i, k);
                pos.qm = pos.weights.sum();
                const double out = opening_outflow(pos.direction, lambda, pos.qm, cfg_);
                cash -= out;
                sector_flows[sector_of_[i]].second -= out;
                open_[i] = std::move(pos);
            } else {
                if (!open_[i]) throw ContractError("ledger: close without an open position");
                const auto rec = close(*open_[i], t, last);
                const double years = cfg_.dt * static_cast<double>(t - rec.t_open);
                const double inflow = rec.profit + opening_outflow(rec.direction, rec.lambda, rec.qm, cfg_) *
                                                       std::exp(cfg_.risk_free * years);
                equity += rec.profit;
                pnl += rec.profit;
                cash += inflow;
                sector_flows[sector_of_[i]].first += rec.profit;
                sector_flows[sector_of_[i]].second += inflow;
                result_.trades.push_back(rec);
                open_[i].reset();
            }
            state_[i] = next;
        }

        result_.dates.push_back(panel_.dates[t]);
        result_.equity.push_back(equity);
        result_.cash.push_back(cash);
        result_.pnl.push_back(pnl);
        for (auto& [name, sc] : result_.sectors) {
            const auto f = sector_flows.find(name);
            const double profit = f == sector_flows.end() ? 0.0 : f->second.first;
            const double flow = f == sector_flows.end() ? 0.0 : f->second.second;
            const double pe = sc.equity.empty() ? 1.0 : sc.equity.back() * grow;
            const double pc = sc.cash.empty() ? 1.0 : sc.cash.back() * grow;
            const double pp = sc.pnl.empty() ? 0.0 : sc.pnl.back() * grow;
            sc.equity.push_back(pe + profit / sc.initial_capital);
            sc.pnl.push_back(pp + profit / sc.initial_capital);
            sc.cash.push_back(pc + flow / sc.initial_capital);
        }
    }

    BacktestResult run() {
        for (std::size_t k = 0; k < table_.days(); ++k) step_day(k);
        result_.open_at_end = static_cast<std::size_t>(
            std::count_if(open_.begin(), open_.end(), [](const auto& p) { return p.has_value(); }));
        return std::move(result_);
    }

private:
    TradeRecord close(const OpenPosition& pos, std::size_t t, bool forced) const {
        const auto i = static_cast<Eigen::Index>(pos.stock);
        const auto t0 = static_cast<Eigen::Index>(pos.t_open);
        const auto t1 = static_cast<Eigen::Index>(t);
        TradeRecord rec;
        rec.ticker = panel_.tickers[pos.stock];
        rec.open_date = panel_.dates[pos.t_open];
        rec.close_date = panel_.dates[t];
        rec.t_open = pos.t_open;
        rec.t_close = t;
        rec.direction = pos.direction;
        rec.lambda = pos.lambda;
        rec.qm = pos.qm;
        rec.stock_return = stock_growth_(i, t1) / stock_growth_(i, t0) - 1.0;
        double pnl = 0.0;
        for (Eigen::Index j = 0; j < pos.weights.size(); ++j)
            if (pos.weights(j) != 0.0) pnl += pos.weights(j) * (hedge_growth_(j, t1) / hedge_growth_(j, t0) - 1.0);
        rec.hedge_pnl = pnl;
        rec.forced = forced;
        rec.profit = trade_profit(pos.direction, pos.lambda, {rec.stock_return, rec.qm, rec.hedge_pnl},
                                  cfg_.dt * static_cast<double>(t - pos.t_open), cfg_);
        return rec;
    }

    const ReturnsPanel& panel_;
    const ScoreTable& table_;
    signals::Thresholds th_;
    SimConfig cfg_;
    Matrix stock_growth_;
    Matrix hedge_growth_;
    std::vector<signals::PositionState> state_;
    std::vector<std::optional<OpenPosition>> open_;
    std::vector<std::string> sector_of_;
    BacktestResult result_;
};

inline BacktestResult simulate(const ReturnsPanel& panel, const Instruments& instruments, const ScoreTable& table,
                               const signals::Thresholds& thresholds, const SimConfig& cfg,
                               const Universe* universe = nullptr) {
    return Simulation(panel, instruments, table, thresholds, cfg, universe).run();
}

inline BacktestResult run_backtest(const ReturnsPanel& panel, const ReplicationProvider& provider,
                                   std::size_t begin, std::size_t end, const signals::Thresholds& thresholds,
                                   const SimConfig& cfg, const Universe* universe = nullptr,
                                   std::size_t threads = 1) {
    const auto table = precompute_scores(panel, provider, begin, end, cfg, threads);
    return simulate(panel, provider.instruments(), table, thresholds, cfg, universe);
}

/// E_T - E0 e^{r T} - sum_trades P e^{r (T - t_close)}; zero up to rounding.
inline double ledger_conservation_gap(const BacktestResult& r) {
    if (r.equity.empty()) return 0.0;
    const std::size_t last = r.equity.size() - 1;
    double expected = r.initial_equity * std::exp(r.risk_free * r.years(last));
    for (const auto& tr : r.trades) {
        const auto k = static_cast<std::size_t>(std::lower_bound(r.dates.begin(), r.dates.end(), tr.close_date) -
                                                r.dates.begin());
        expected += tr.profit * std::exp(r.risk_free * r.years(last - k));
    }
    return r.equity.back() - expected;
}

}  // namespace statarb::backtest
