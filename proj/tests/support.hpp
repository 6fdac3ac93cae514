#pragma once

#include "statarb/statarb.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing_support {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("statarb_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// Panel with `d` stocks on a weekday calendar starting 2015-01-02.
inline statarb::ReturnsPanel make_panel(const statarb::Matrix& returns) {
    statarb::ReturnsPanel p;
    for (Eigen::Index i = 0; i < returns.rows(); ++i) p.tickers.push_back("T" + std::to_string(i));
    p.base_date = statarb::parse_date("2015-01-02");
    statarb::Date day = p.base_date;
    for (Eigen::Index t = 0; t < returns.cols(); ++t) p.dates.push_back(day = statarb::next_weekday(day));
    p.returns = returns;
    return p;
}

inline statarb::Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    statarb::Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
    return m;
}

/// The market used by the backtest and acceptance tests: a few GBM factors
/// plus one OU idiosyncratic component per stock.
inline statarb::SyntheticMarketConfig market_config(double kappa, double sigma, std::uint64_t seed,
                                                    std::size_t d = 20, std::size_t n = 756) {
    statarb::SyntheticMarketConfig c;
    c.d = d;
    c.n = n;
    c.factor_vols = {0.25, 0.15, 0.10};
    c.idio_ou = {statarb::ou::OuParams::make(kappa, 0.0, sigma)};
    c.seed = seed;
    return c;
}

}  // namespace testing_support
