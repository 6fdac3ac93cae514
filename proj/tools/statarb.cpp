// statarb command-line driver.

#include "statarb/statarb.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace statarb;

namespace {

struct Options {
    std::string config;
    std::string out;
    std::size_t threads = 1;
    std::optional<std::uint64_t> seed;
};

RunConfig load(const Options& o) {
    RunConfig c = load_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.synth.seed = *o.seed;
        c.entries["seed"] = std::to_string(*o.seed);
    }
    if (!o.out.empty()) c.output_dir = o.out;
    else if (const char* env = std::getenv("STATARB_OUTPUT_DIR")) c.output_dir = env;
    fs::create_directories(c.output_dir);
    return c;
}

std::ofstream open_out(const RunConfig& c, const std::string& name) {
    const auto path = fs::path(c.output_dir) / name;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

void write_manifest(const RunConfig& c, const std::string& command) {
    auto out = open_out(c, "manifest.txt");
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
    out << "command=" << command << "\nconfig_hash=" << hash << "\nseed=" << c.seed << "\nversion=" << kVersion
        << "\neigen=" << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
}

std::string sharpe_summary(const std::vector<analytics::SharpeRow>& rows) {
    std::ostringstream s;
    for (const auto& r : rows)
        if (r.group == analytics::kPortfolioGroup)
            s << ' ' << r.year << ':' << (r.sharpe ? csv::num(*r.sharpe) : "undefined");
    return s.str();
}

int cmd_backtest(const Options& o) {
    const auto c = load(o);
    const auto prep = prepare(c, o.threads);
    const auto result = backtest::run_backtest(prep.panel, *prep.provider, prep.begin, prep.end,
                                               c.effective_thresholds(), c.sim, prep.universe_ptr(), o.threads);
    const auto rows = analytics::sector_report(result);
    auto eq = open_out(c, "equity.csv");
    write_equity(eq, result);
    auto tr = open_out(c, "trades.csv");
    write_trades(tr, result);
    auto se = open_out(c, "sectors.csv");
    write_sectors(se, result);
    auto sh = open_out(c, "sharpe.csv");
    write_sharpe(sh, rows);
    auto sg = open_out(c, "signals.csv");
    write_signals(sg, result);
    write_manifest(c, "backtest");
    std::cout << "E_T=" << csv::num(result.equity.back()) << " C_T=" << csv::num(result.cash.back())
              << " trades=" << result.trades.size() << " sharpe" << sharpe_summary(rows) << '\n';
    return 0;
}

int cmd_gridsearch(const Options& o) {
    const auto c = load(o);
    const auto prep = prepare(c, o.threads);
    const auto table = backtest::precompute_scores(prep.panel, *prep.provider, prep.begin, prep.end, c.sim, o.threads);
    const auto grid = analytics::grid_search(prep.panel, prep.provider->instruments(), table, c.grid_open,
                                             c.grid_close, c.sim, prep.universe_ptr(), o.threads);
    auto out = open_out(c, "grid.csv");
    write_grid(out, grid);
    write_manifest(c, "gridsearch");
    const std::size_t nc = grid.close_axis.size();
    std::cout << "best open=" << csv::num(grid.open_axis[grid.best / nc])
              << " close=" << csv::num(grid.close_axis[grid.best % nc]) << " profit=" << csv::num(grid.profit[grid.best])
              << " cells=" << grid.profit.size() << '\n';
    return 0;
}

int cmd_synth(const Options& o) {
    const auto c = load(o);
    const auto m = generate_synthetic_market(c.synth);
    const fs::path root(c.output_dir);
    fs::create_directories(root / "prices");
    fs::create_directories(root / "truth");
    const auto prices = to_price_table(m.panel, 100.0);
    for (std::size_t i = 0; i < m.panel.d(); ++i) {
        const auto& t = m.panel.tickers[i];
        std::ofstream p(root / "prices" / (t + ".csv"));
        write_prices(p, PriceTable{{t, prices.at(t)}});
        std::ofstream tr(root / "truth" / (t + ".csv"));
        tr << "date,I_value\n";
        for (std::size_t k = 0; k <= m.panel.n(); ++k)
            tr << format_date(k == 0 ? m.panel.base_date : m.panel.dates[k - 1]) << ','
               << csv::exact(m.idio_paths(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) << '\n';
    }
    auto u = open_out(c, "universe.csv");
    u << "ticker,sector\n";
    for (const auto& t : m.universe.tickers) u << t << ',' << m.universe.sector_of.at(t) << '\n';
    write_manifest(c, "synth");
    std::cout << "wrote " << m.panel.d() << " price files and " << m.panel.d() << " truth files to "
              << c.output_dir << '\n';
    return 0;
}

int cmd_train_lstm(const Options& o) {
    const auto c = load(o);
    std::optional<Universe> universe;
    if (!c.universe.empty()) universe = load_universe(c.universe);
    const auto panel = load_market(c, universe).first;
    const std::string target = c.lstm_target.empty() ? panel.tickers.front() : c.lstm_target;
    const std::size_t end = c.trade_begin ? column_at_or_after(panel, *c.trade_begin) : panel.n();
    const std::size_t begin = end > c.lstm.train_days ? end - c.lstm.train_days : 0;
    auto cfg = c.lstm.train;
    cfg.seed = derive_seed(c.seed, 7);
    const auto result = lstm::train(panel, target, begin, end, cfg);
    auto ck = open_out(c, "lstm_" + target + ".ckpt");
    lstm::save_checkpoint(ck, result.model);
    auto tr = open_out(c, "lstm_" + target + "_loss.csv");
    tr << "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) tr << e << ',' << csv::num(result.loss_trace[e]) << '\n';
    write_manifest(c, "train-lstm");
    std::cout << "trained " << target << " on " << end - begin << " days";
    if (!result.loss_trace.empty())
        std::cout << ": loss " << csv::num(result.loss_trace.front()) << " -> " << csv::num(result.loss_trace.back());
    const auto i = panel.index_of(target);
    const Matrix betas = lstm::forward_betas(result.model, lstm::explanatory_inputs(panel, i, begin, end));
    std::cout << ", saturated betas " << csv::num(lstm::saturation_fraction(betas)) << '\n';
    if (result.loss_never_decreased) std::clog << "warning: training loss never decreased\n";
    return 0;
}

/// Recomputes sharpe.csv from the equity.csv and sectors.csv of an earlier run.
int cmd_report(const Options& o) {
    const auto c = load(o);
    backtest::BacktestResult r;
    r.initial_equity = c.sim.initial_equity;
    r.risk_free = c.sim.risk_free;
    r.dt = c.sim.dt;
    const auto read_rows = [&](const std::string& name) {
        const auto path = fs::path(c.output_dir) / name;
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path.string() + " (run backtest first)");
        std::vector<std::vector<std::string>> rows;
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line))
            if (!csv::trim(line).empty()) rows.push_back(csv::split(line));
        return rows;
    };
    std::size_t lineno = 1;
    for (const auto& row : read_rows("equity.csv")) {
        ++lineno;
        if (row.size() != 3) throw ParseError("expected date,E,C", lineno);
        r.dates.push_back(parse_date(row[0], lineno));
        r.equity.push_back(csv::parse_double(row[1], lineno));
        r.cash.push_back(csv::parse_double(row[2], lineno));
    }
    lineno = 1;
    for (const auto& row : read_rows("sectors.csv")) {
        ++lineno;
        if (row.size() != 4) throw ParseError("expected date,sector,relE,relC", lineno);
        auto& sc = r.sectors[row[1]];
        sc.equity.push_back(csv::parse_double(row[2], lineno));
        sc.cash.push_back(csv::parse_double(row[3], lineno));
    }
    // CSVs carry ten significant digits, so profits below that resolution read as zero.
    r.pnl = analytics::pnl_from_equity(r.equity, r.initial_equity, r.risk_free, r.dt, 1e-8 * r.initial_equity);
    for (auto& [_, sc] : r.sectors) sc.pnl = analytics::pnl_from_equity(sc.equity, 1.0, r.risk_free, r.dt, 1e-8);
    const auto rows = analytics::sector_report(r);
    auto sh = open_out(c, "sharpe.csv");
    write_sharpe(sh, rows);
    for (const auto& row : rows)
        std::cout << row.year << ' ' << row.group << ' ' << (row.sharpe ? csv::num(*row.sharpe) : "undefined") << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Statistical-arbitrage backtesting engine"};
    app.require_subcommand(1);
    Options o;
    const auto add = [&](const std::string& name, const std::string& help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "configuration file")->required();
        sub->add_option("--out", o.out, "output directory (overrides output.dir)");
        sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; },
                                                "seed override");
        return sub;
    };
    auto* backtest_cmd = add("backtest", "run one backtest and write equity, trades, sectors and sharpe CSVs");
    auto* grid_cmd = add("gridsearch", "threshold grid search over the optimisation interval");
    auto* synth_cmd = add("synth", "generate a synthetic market with known OU residuals");
    auto* train_cmd = add("train-lstm", "train one stock's LSTM and write a checkpoint");
    auto* report_cmd = add("report", "recompute Sharpe tables from a previous backtest's outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (backtest_cmd->parsed()) return cmd_backtest(o);
        if (grid_cmd->parsed()) return cmd_gridsearch(o);
        if (synth_cmd->parsed()) return cmd_synth(o);
        if (train_cmd->parsed()) return cmd_train_lstm(o);
        if (report_cmd->parsed()) return cmd_report(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InsufficientWindowError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
