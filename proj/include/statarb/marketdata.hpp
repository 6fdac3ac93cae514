#pragma once

// Price ingestion, alignment into a returns panel, and synthetic markets.

#include "statarb/core.hpp"
#include "statarb/csv.hpp"
#include "statarb/ou.hpp"
#include "statarb/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace statarb {

using Date = std::chrono::sys_days;

inline Date parse_date(const std::string& s, std::size_t line = 0) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream in(s);
    in >> y >> dash1 >> m >> dash2 >> d;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!in || dash1 != '-' || dash2 != '-' || !in.eof() || !ymd.ok())
        throw ParseError("bad ISO-8601 date '" + s + "'", line);
    return Date{ymd};
}

inline std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

inline int year_of(Date date) { return static_cast<int>(std::chrono::year_month_day{date}.year()); }

inline Date next_weekday(Date date) {
    do {
        date += std::chrono::days{1};
    } while (std::chrono::weekday{date} == std::chrono::Saturday ||
             std::chrono::weekday{date} == std::chrono::Sunday);
    return date;
}

struct Bar {
    Date date;
    double adj_close = 0.0;
};

using PriceSeries = std::vector<Bar>;
using PriceTable = std::map<std::string, PriceSeries>;

/// Daily simple returns, d stocks x n days. dates[j] is the day return j is
/// realised on (close of dates[j-1], or base_date for j = 0, to close of dates[j]).
struct ReturnsPanel {
    std::vector<std::string> tickers;
    Date base_date{};
    std::vector<Date> dates;
    Matrix returns;

    std::size_t d() const { return tickers.size(); }
    std::size_t n() const { return dates.size(); }

    std::size_t index_of(const std::string& ticker) const {
        const auto it = std::find(tickers.begin(), tickers.end(), ticker);
        if (it == tickers.end()) throw DataError("unknown ticker '" + ticker + "'");
        return static_cast<std::size_t>(it - tickers.begin());
    }

    /// Columns [begin, end) as a new panel.
    ReturnsPanel slice(std::size_t begin, std::size_t end) const {
        if (begin >= end || end > n()) throw ContractError("ReturnsPanel::slice: bad range");
        ReturnsPanel out;
        out.tickers = tickers;
        out.base_date = begin == 0 ? base_date : dates[begin - 1];
        out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin),
                         dates.begin() + static_cast<std::ptrdiff_t>(end));
        out.returns = returns.middleCols(static_cast<Eigen::Index>(begin),
                                         static_cast<Eigen::Index>(end - begin));
        return out;
    }
};

/// Parses `ticker,date,adj_close` rows. An empty `tickers` keeps every ticker.
inline PriceTable parse_prices(std::istream& in, const std::vector<std::string>& tickers = {}) {
    const std::set<std::string> wanted(tickers.begin(), tickers.end());
    PriceTable table;
    std::map<std::string, std::set<Date>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        const auto cells = csv::split(line);
        if (lineno == 1 && !cells.empty() && cells[0] == "ticker") continue;
        if (cells.size() != 3) throw ParseError("expected ticker,date,adj_close", lineno);
        if (!wanted.empty() && !wanted.count(cells[0])) continue;
        const Date date = parse_date(cells[1], lineno);
        const double px = csv::parse_double(cells[2], lineno);
        if (!(px > 0.0) || !std::isfinite(px)) throw ParseError("non-positive price", lineno);
        if (!seen[cells[0]].insert(date).second)
            throw ParseError("duplicate row for " + cells[0] + " on " + cells[1], lineno);
        table[cells[0]].push_back({date, px});
    }
    for (const auto& t : tickers)
        if (!table.count(t)) throw DataError("missing ticker '" + t + "'");
    for (auto& [_, series] : table)
        std::sort(series.begin(), series.end(),
                  [](const Bar& a, const Bar& b) { return a.date < b.date; });
    return table;
}

/// A single CSV, or a directory whose *.csv files are read in name order.
inline PriceTable load_prices(const std::string& path, const std::vector<std::string>& tickers = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path)) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open price file " + path);
        return parse_prices(in, tickers);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .csv files in " + path);
    PriceTable table;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw DataError("cannot open price file " + f.string());
        try {
            for (auto& [ticker, series] : parse_prices(in)) {
                if (table.count(ticker)) throw DataError("ticker '" + ticker + "' appears in several files");
                table.emplace(ticker, std::move(series));
            }
        } catch (const ParseError& e) {
            throw DataError(f.filename().string() + ": " + e.what());
        }
    }
    if (!tickers.empty()) {
        PriceTable picked;
        for (const auto& t : tickers) {
            const auto it = table.find(t);
            if (it == table.end()) throw DataError("missing ticker '" + t + "'");
            picked.emplace(t, std::move(it->second));
        }
        return picked;
    }
    return table;
}

inline void write_prices(std::ostream& out, const PriceTable& table) {
    out << "ticker,date,adj_close\n";
    for (const auto& [ticker, series] : table)
        for (const auto& bar : series)
            out << ticker << ',' << format_date(bar.date) << ',' << csv::exact(bar.adj_close) << '\n';
}

/// Drops tickers observed on fewer than `min_coverage` of all dates seen in the table.
inline PriceTable drop_sparse_tickers(const PriceTable& table, double min_coverage = 0.95) {
    std::set<Date> all;
    for (const auto& [_, series] : table)
        for (const auto& bar : series) all.insert(bar.date);
    PriceTable out;
    for (const auto& [ticker, series] : table)
        if (static_cast<double>(series.size()) >= min_coverage * static_cast<double>(all.size()))
            out.emplace(ticker, series);
    return out;
}

/// Aligns on the intersection of dates and takes simple returns
/// (S[t+1] - S[t]) / S[t]. `order` fixes the row order (defaults to the map order).
inline ReturnsPanel compute_returns(const PriceTable& prices, std::vector<std::string> order = {}) {
    if (order.empty())
        for (const auto& [ticker, _] : prices) order.push_back(ticker);
    if (order.empty()) throw DataError("compute_returns: no price series");

    std::vector<Date> common;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto it = prices.find(order[k]);
        if (it == prices.end()) throw DataError("missing ticker '" + order[k] + "'");
        std::vector<Date> ds;
        for (const auto& bar : it->second) ds.push_back(bar.date);
        if (k == 0) {
            common = ds;
        } else {
            std::vector<Date> merged;
            std::set_intersection(common.begin(), common.end(), ds.begin(), ds.end(),
                                  std::back_inserter(merged));
            common.swap(merged);
        }
    }
    if (common.size() < 2) throw DataError("alignment: fewer than two common dates");

    ReturnsPanel panel;
    panel.tickers = order;
    panel.base_date = common.front();
    panel.dates.assign(common.begin() + 1, common.end());
    const auto n = static_cast<Eigen::Index>(common.size() - 1);
    panel.returns.resize(static_cast<Eigen::Index>(order.size()), n);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& series = prices.at(order[i]);
        std::size_t pos = 0;
        double prev = 0.0;
        for (std::size_t t = 0; t < common.size(); ++t) {
            while (series[pos].date != common[t]) ++pos;
            const double px = series[pos].adj_close;
            if (t > 0) panel.returns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t - 1)) =
                           (px - prev) / prev;
            prev = px;
        }
    }
    return panel;
}

/// Value of one currency unit compounded through `returns`; length len+1, starts at 1.
inline std::vector<double> relative_price(std::span<const double> returns) {
    std::vector<double> out(returns.size() + 1);
    out[0] = 1.0;
    for (std::size_t t = 0; t < returns.size(); ++t) {
        if (!(returns[t] > -1.0)) throw DataError("relative_price: return <= -1");
        out[t + 1] = out[t] * (1.0 + returns[t]);
    }
    return out;
}

/// Inverse of compute_returns up to the price level: each series starts at `start_price`.
inline PriceTable to_price_table(const ReturnsPanel& panel, double start_price = 1.0) {
    PriceTable table;
    for (std::size_t i = 0; i < panel.d(); ++i) {
        const Vector row = panel.returns.row(static_cast<Eigen::Index>(i));
        const auto rel = relative_price(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
        auto& series = table[panel.tickers[i]];
        series.push_back({panel.base_date, start_price});
        for (std::size_t t = 0; t < panel.n(); ++t) series.push_back({panel.dates[t], start_price * rel[t + 1]});
    }
    return table;
}

struct SummaryStats {
    double mean = 0.0;
    double std = 0.0;
    std::optional<double> rel_std;  ///< std / mean; empty when mean == 0
};

inline SummaryStats summary_stats(std::span<const double> xs) {
    if (xs.size() < 2) throw ContractError("summary_stats: need at least two observations");
    SummaryStats s;
    s.mean = stats::mean(xs);
    s.std = stats::sample_std(xs);
    if (s.mean != 0.0) s.rel_std = s.std / s.mean;
    return s;
}

// ---------------------------------------------------------------------------
// Universe and sector labels

inline const std::vector<std::string>& sector_labels() {
    static const std::vector<std::string> labels{
        "ARCHT", "BANKS", "CHEM",   "CLOTHES", "ENERGY", "FOOD",     "FUELS",
        "GAMES", "INFRMTCS", "MEDIA", "MINING", "MOTO",  "PHARMA", "REAL EST", "other"};
    return labels;
}

struct Universe {
    std::vector<std::string> tickers;
    std::map<std::string, std::string> sector_of;

    const std::string& sector(const std::string& ticker) const {
        const auto it = sector_of.find(ticker);
        if (it == sector_of.end()) throw DataError("ticker '" + ticker + "' has no sector");
        return it->second;
    }
};

inline std::string canonical_sector(std::string label) {
    std::replace(label.begin(), label.end(), '_', ' ');
    for (const auto& known : sector_labels()) {
        if (known.size() != label.size()) continue;
        if (std::equal(known.begin(), known.end(), label.begin(),
                       [](char a, char b) { return std::toupper(a) == std::toupper(b); }))
            return known;
    }
    throw DataError("unknown sector label '" + label + "'");
}

/// `ticker,sector` rows.
inline Universe parse_universe(std::istream& in) {
    Universe u;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        const auto cells = csv::split(line);
        if (lineno == 1 && !cells.empty() && cells[0] == "ticker") continue;
        if (cells.size() != 2) throw ParseError("expected ticker,sector", lineno);
        if (u.sector_of.count(cells[0])) throw ParseError("duplicate ticker " + cells[0], lineno);
        u.tickers.push_back(cells[0]);
        u.sector_of[cells[0]] = canonical_sector(cells[1]);
    }
    return u;
}

inline Universe load_universe(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open universe file " + path);
    return parse_universe(in);
}

// ---------------------------------------------------------------------------
// Synthetic markets

struct SyntheticMarketConfig {
    std::size_t d = 10;
    std::size_t n = 756;
    std::vector<double> factor_vols{0.2};  ///< annualised factor volatilities
    Matrix betas;                          ///< d x r; empty -> drawn U(0.5, 1.5)
    double alpha = 0.0;                    ///< per year, common to all stocks
    std::vector<ou::OuParams> idio_ou;     ///< one per stock, or one broadcast to all
    double gbm_drift = 0.05;               ///< per year
    std::uint64_t seed = 1;
    Date start_date = parse_date("2015-01-02");
    std::vector<std::string> sectors;      ///< optional labels, cycled over stocks
};

struct SyntheticMarket {
    ReturnsPanel panel;
    Matrix factor_returns;  ///< r x n
    Matrix betas;           ///< d x r
    Matrix idio_paths;      ///< d x (n+1) OU levels, column 0 at base_date
    Universe universe;
};

inline void validate(const SyntheticMarketConfig& cfg) {
    if (cfg.d < 2 || cfg.n < 2) throw ConfigError("synthetic market needs d >= 2 and n >= 2");
    if (cfg.factor_vols.empty()) throw ConfigError("synthetic market needs at least one factor");
    for (double v : cfg.factor_vols)
        if (!(v > 0.0)) throw ConfigError("factor vols must be positive");
    if (cfg.idio_ou.size() != 1 && cfg.idio_ou.size() != cfg.d)
        throw ConfigError("idio_ou must hold one entry or one per stock");
    for (const auto& p : cfg.idio_ou)
        if (!(p.kappa > 0.0) || !(p.sigma >= 0.0)) throw ConfigError("idiosyncratic OU needs kappa > 0, sigma >= 0");
    if (cfg.betas.size() != 0 &&
        (cfg.betas.rows() != static_cast<Eigen::Index>(cfg.d) ||
         cfg.betas.cols() != static_cast<Eigen::Index>(cfg.factor_vols.size())))
        throw ConfigError("betas must be d x r");
}

/// Stock return = alpha dt + sum_j beta_ij F_j + dI, F_j a GBM simple return and
/// I an exactly discretised OU path started at its mean.
inline SyntheticMarket generate_synthetic_market(const SyntheticMarketConfig& cfg) {
    validate(cfg);
    const auto d = static_cast<Eigen::Index>(cfg.d);
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const auto r = static_cast<Eigen::Index>(cfg.factor_vols.size());

    SyntheticMarket m;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);

    m.factor_returns.resize(r, n);
    for (Eigen::Index t = 0; t < n; ++t)
        for (Eigen::Index j = 0; j < r; ++j) {
            const double v = cfg.factor_vols[static_cast<std::size_t>(j)];
            m.factor_returns(j, t) =
                std::expm1((cfg.gbm_drift - 0.5 * v * v) * kDt + v * std::sqrt(kDt) * normal(rng));
        }

    if (cfg.betas.size() != 0) {
        m.betas = cfg.betas;
    } else {
        std::uniform_real_distribution<double> unif(0.5, 1.5);
        m.betas.resize(d, r);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < r; ++j) m.betas(i, j) = unif(rng);
    }

    m.idio_paths.resize(d, n + 1);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto& p = cfg.idio_ou.size() == 1 ? cfg.idio_ou.front() : cfg.idio_ou[static_cast<std::size_t>(i)];
        const auto path = ou::simulate_ou(p, p.mu, cfg.n, kDt, derive_seed(cfg.seed, 1 + static_cast<std::uint64_t>(i)));
        for (Eigen::Index t = 0; t <= n; ++t) m.idio_paths(i, t) = path[static_cast<std::size_t>(t)];
    }

    auto& panel = m.panel;
    for (std::size_t i = 0; i < cfg.d; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "S%03zu", i);
        panel.tickers.emplace_back(name);
    }
    panel.base_date = cfg.start_date;
    Date day = cfg.start_date;
    for (std::size_t t = 0; t < cfg.n; ++t) panel.dates.push_back(day = next_weekday(day));

    panel.returns = m.betas * m.factor_returns;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index t = 0; t < n; ++t) {
            panel.returns(i, t) += cfg.alpha * kDt + (m.idio_paths(i, t + 1) - m.idio_paths(i, t));
            if (!(panel.returns(i, t) > -1.0))
                throw ConfigError("synthetic market produced a return <= -1; reduce volatilities");
        }

    for (std::size_t i = 0; i < cfg.d; ++i) {
        m.universe.tickers.push_back(panel.tickers[i]);
        m.universe.sector_of[panel.tickers[i]] =
            cfg.sectors.empty() ? std::string("other") : canonical_sector(cfg.sectors[i % cfg.sectors.size()]);
    }
    return m;
}

/// Ground truth as `ticker,date,I_value`.
inline void write_truth(std::ostream& out, const SyntheticMarket& m) {
    out << "ticker,date,I_value\n";
    for (std::size_t i = 0; i < m.panel.d(); ++i)
        for (std::size_t t = 0; t <= m.panel.n(); ++t)
            out << m.panel.tickers[i] << ',' << format_date(t == 0 ? m.panel.base_date : m.panel.dates[t - 1])
                << ',' << csv::exact(m.idio_paths(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)))
                << '\n';
}

}  // namespace statarb
