#pragma once

// Run configuration: flat `key = value` text with optional [section] headers
// that prefix the keys below them ("[sim]" then "cost = 0.001" is sim.cost).

#include "statarb/analytics.hpp"
#include "statarb/backtest.hpp"
#include "statarb/core.hpp"
#include "statarb/csv.hpp"
#include "statarb/factors.hpp"
#include "statarb/marketdata.hpp"
#include "statarb/signals.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace statarb {

struct RunConfig {
    std::string prices;    ///< CSV file or directory of CSVs
    std::string funds;     ///< fund prices for the ETF providers
    std::string universe;  ///< ticker,sector file
    factors::Provider provider = factors::Provider::Pca;

    backtest::PcaOptions pca;
    backtest::LstmOptions lstm;
    std::string lstm_target;  ///< stock trained by `train-lstm`; empty -> first ticker
    bool classic_thresholds = false;  ///< base set: classic instead of the provider's optimum
    std::map<std::string, double> threshold_overrides;  ///< open_long, open_short, close_long, close_short
    backtest::SimConfig sim;

    std::optional<Date> trade_begin;
    std::optional<Date> trade_end;

    std::uint64_t seed = 1;
    std::string output_dir = "out";

    analytics::GridAxis grid_open{1.1, 2.1, 0.1};
    analytics::GridAxis grid_close{-2.0, -1.0, 0.1};

    SyntheticMarketConfig synth;

    std::map<std::string, std::string> entries;  ///< every key as given, for the manifest hash

    signals::Thresholds effective_thresholds() const {
        auto th = classic_thresholds ? signals::Thresholds{} : signals::default_thresholds(provider);
        for (const auto& [name, v] : threshold_overrides) {
            if (name == "open_long") th.open_long = v;
            if (name == "open_short") th.open_short = v;
            if (name == "close_long") th.close_long = v;
            if (name == "close_short") th.close_short = v;
        }
        return th;
    }
};

namespace config_detail {

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x < 0 || x != std::floor(x)) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(x);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& cell : csv::split(v)) out.push_back(to_double(key, cell));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

/// `start:stop:step`
inline analytics::GridAxis to_axis(const std::string& key, const std::string& v) {
    const auto parts = csv::split(v, ':');
    if (parts.size() != 3) throw ConfigError(key + ": expected start:stop:step");
    analytics::GridAxis a{to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
    a.values();
    return a;
}

inline Date to_date(const std::string& key, const std::string& v) {
    try {
        return parse_date(v);
    } catch (const Error&) {
        throw ConfigError(key + ": expected YYYY-MM-DD, got '" + v + "'");
    }
}

}  // namespace config_detail

/// Applies one key; unknown keys are errors so typos never pass silently.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& v) {
    using namespace config_detail;
    c.entries[key] = v;
    if (key == "data.prices") c.prices = v;
    else if (key == "data.funds") c.funds = v;
    else if (key == "data.universe") c.universe = v;
    else if (key == "factors.provider") {
        try {
            c.provider = factors::parse_provider(v);
        } catch (const Error& e) {
            throw ConfigError(std::string("factors.provider: ") + e.what());
        }
    } else if (key == "factors.pca.r") c.pca.selection = factors::FixedCount{static_cast<std::size_t>(to_count(key, v))};
    else if (key == "factors.pca.variance_target") c.pca.selection = factors::VarianceTarget{to_double(key, v)};
    else if (key == "factors.pca.window") c.pca.fit_window = to_count(key, v);
    else if (key == "factors.pca.refit_every") c.pca.refit_every = to_count(key, v);
    else if (key == "lstm.hidden") c.lstm.train.hidden = static_cast<Eigen::Index>(to_count(key, v));
    else if (key == "lstm.window") c.lstm.train.window = to_count(key, v);
    else if (key == "lstm.batch") c.lstm.train.batch = to_count(key, v);
    else if (key == "lstm.l1") c.lstm.train.l1_penalty = to_double(key, v);
    else if (key == "lstm.lr") c.lstm.train.adam.lr = to_double(key, v);
    else if (key == "lstm.epochs") c.lstm.train.epochs = to_count(key, v);
    else if (key == "lstm.clip_norm") c.lstm.train.clip_norm = to_double(key, v);
    else if (key == "lstm.train_days") c.lstm.train_days = to_count(key, v);
    else if (key == "lstm.refit_every") c.lstm.refit_every = to_count(key, v);
    else if (key == "lstm.target") c.lstm_target = v;
    else if (key == "lstm.warmup") c.lstm.warmup = to_count(key, v);
    else if (key == "signals.open_long" || key == "signals.open_short" || key == "signals.close_long" ||
             key == "signals.close_short")
        c.threshold_overrides[key.substr(8)] = to_double(key, v);
    else if (key == "signals.preset") {
        if (v == "classic") c.classic_thresholds = true;
        else if (v == "optimal") c.classic_thresholds = false;
        else throw ConfigError("signals.preset: expected classic or optimal");
    } else if (key == "sim.cost") c.sim.cost = to_double(key, v);
    else if (key == "sim.risk_free") c.sim.risk_free = to_double(key, v);
    else if (key == "sim.initial_equity") c.sim.initial_equity = to_double(key, v);
    else if (key == "sim.leverage") c.sim.leverage = to_double(key, v);
    else if (key == "sim.universe_size") c.sim.universe_size = to_count(key, v);
    else if (key == "sim.freeze_days") c.sim.freeze_days = to_count(key, v);
    else if (key == "sim.residual_window") c.sim.residual_window = to_count(key, v);
    else if (key == "sim.min_kappa") c.sim.min_kappa = to_double(key, v);
    else if (key == "sim.financing_term") c.sim.financing_term = to_bool(key, v);
    else if (key == "sim.estimator") {
        if (v == "yule_walker") c.sim.estimator = ou::Estimator::YuleWalker;
        else if (v == "ols") c.sim.estimator = ou::Estimator::Ols;
        else throw ConfigError("sim.estimator: expected yule_walker or ols");
    } else if (key == "dates.trade_begin") c.trade_begin = to_date(key, v);
    else if (key == "dates.trade_end") c.trade_end = to_date(key, v);
    else if (key == "seed") c.seed = to_count(key, v);
    else if (key == "output.dir") c.output_dir = v;
    else if (key == "grid.open") c.grid_open = to_axis(key, v);
    else if (key == "grid.close") c.grid_close = to_axis(key, v);
    else if (key == "synth.d") c.synth.d = to_count(key, v);
    else if (key == "synth.n") c.synth.n = to_count(key, v);
    else if (key == "synth.factor_vols") c.synth.factor_vols = to_list(key, v);
    else if (key == "synth.alpha") c.synth.alpha = to_double(key, v);
    else if (key == "synth.drift") c.synth.gbm_drift = to_double(key, v);
    else if (key == "synth.start_date") c.synth.start_date = to_date(key, v);
    else if (key == "synth.sectors") {
        c.synth.sectors.clear();
        for (const auto& s : csv::split(v)) {
            try {
                c.synth.sectors.push_back(canonical_sector(s));
            } catch (const Error& e) {
                throw ConfigError(std::string("synth.sectors: ") + e.what());
            }
        }
    } else if (key == "synth.kappa" || key == "synth.mu" || key == "synth.sigma") {
        // one value broadcast to all stocks, or a comma list with one per stock
        const auto vals = to_list(key, v);
        if (c.synth.idio_ou.size() < vals.size()) {
            const auto fill = c.synth.idio_ou.empty() ? ou::OuParams::make(20.0, 0.0, 0.2) : c.synth.idio_ou.back();
            c.synth.idio_ou.resize(vals.size(), fill);
        }
        for (std::size_t k = 0; k < c.synth.idio_ou.size(); ++k) {
            auto& p = c.synth.idio_ou[k];
            const double x = vals.size() == 1 ? vals[0] : vals[k];
            const double kappa = key == "synth.kappa" ? x : p.kappa;
            const double mu = key == "synth.mu" ? x : p.mu;
            const double sigma = key == "synth.sigma" ? x : p.sigma;
            if (!(kappa > 0.0)) throw ConfigError("synth.kappa must be > 0");
            p = ou::OuParams::make(kappa, mu, sigma);
        }
    } else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(std::istream& in) {
    RunConfig c;
    c.synth.idio_ou = {ou::OuParams::make(20.0, 0.0, 0.2)};
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t(csv::trim(line));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = std::string(csv::trim(std::string_view(t).substr(1, t.size() - 2)));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key(csv::trim(std::string_view(t).substr(0, eq)));
        const std::string value(csv::trim(std::string_view(t).substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        try {
            apply_config_key(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.synth.seed = c.seed;
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in);
}

/// 64-bit FNV-1a over the sorted `key=value` lines.
inline std::uint64_t config_hash(const RunConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : c.entries)
        for (char ch : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ULL;
        }
    return h;
}

}  // namespace statarb
